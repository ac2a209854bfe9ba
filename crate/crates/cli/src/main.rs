use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use log::info;

use shieldlearn::agent::{parse_qtable, serialize_qtable, AgentConfig, ShieldContext};
use shieldlearn::gridworld::{generate, parse_map, serialize_map, GridworldSpec, Shape, SlipTiers};
use shieldlearn::learning::{make_action_complete, parse_traces, run_ioalergia, CompletionMode, LearnerConfig};
use shieldlearn::mdp::{model_hash, parse_model, serialize_model, DeterministicLabeledMdp};
use shieldlearn::pipeline::{
    episode_rng, evaluate_policy, run_experiment, write_metrics, write_training, ArmSelection, ExperimentConfig, MapSource, Phase,
};
use shieldlearn::shield::{export_prism, parse_shield, serialize_shield, synthesize_shield, SafetyProperty};
use shieldlearn::ActionAlphabet;

const SEED_ENV: &str = "SHIELDLEARN_SEED";

#[derive(Parser)]
#[command(name = "shieldlearn", version, about = "Shielded Q-learning with learned safety MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full train/learn/shield experiment.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a configuration key, e.g. `--set n_iter=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        arm: Option<ArmSelection>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for repetitions (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Write each iteration's new traces under `<out>/traces`.
        #[arg(long)]
        dump_traces: bool,
    },
    /// Learn a deterministic labeled MDP from a trace file.
    LearnMdp {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Action completion; omitted leaves undefined pairs undefined.
        #[arg(long)]
        complete: Option<CompletionMode>,
        /// Comma-separated action alphabet.
        #[arg(long, default_value = "left,right,up,down")]
        actions: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize a shield from an action-complete model.
    Shield {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        lambda: f64,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a greedy Q-table under a shield.
    Eval {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        qtable: PathBuf,
        #[arg(long)]
        shield: PathBuf,
        /// Model the shield was synthesized from; needed unless the shield allows everything.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        t_max: usize,
    },
    /// Export a model in PRISM's MDP language.
    ExportPrism {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a gridworld map.
    GenMap {
        #[arg(long)]
        shape: Shape,
        #[arg(long, default_value_t = 1)]
        size: usize,
        #[arg(long, default_value_t = 0.1)]
        slip_short: f64,
        #[arg(long, default_value_t = 0.25)]
        slip_long: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A failure with its exit code: 1 for bad input, 2 for internal faults.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

fn internal(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_model(path: &Path) -> anyhow::Result<DeterministicLabeledMdp> {
    parse_model(&read(path)?).with_context(|| format!("invalid model {}", path.display()))
}

fn load_map(path: &Path) -> anyhow::Result<GridworldSpec> {
    parse_map(&read(path)?).with_context(|| format!("invalid map {}", path.display()))
}

/// Explicit seed, then the environment, then a fresh random one (logged).
fn resolve_seed(explicit: Option<u64>) -> anyhow::Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v.trim().parse().with_context(|| format!("{SEED_ENV}=`{v}` is not a seed"));
    }
    let s = rand::random();
    info!("no seed given, using {s}");
    Ok(s)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            overrides,
            arm,
            out,
            seed,
            jobs,
            dump_traces,
        } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::parse(&read(p)?).with_context(|| format!("invalid config {}", p.display()))?,
                None => ExperimentConfig::default(),
            };
            for o in &overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not KEY=VALUE"))?;
                cfg.set(k.trim(), v.trim()).map_err(anyhow::Error::from)?;
            }
            if let Some(a) = arm {
                cfg.arms = a;
            }
            cfg.dump_traces |= dump_traces;
            cfg.seed = Some(match seed.or(cfg.seed) {
                Some(s) => s,
                None => resolve_seed(None)?,
            });
            if let MapSource::File(p) = &cfg.map {
                if p.is_relative() {
                    if let Some(dir) = config.as_deref().and_then(Path::parent) {
                        cfg.map = MapSource::File(dir.join(p));
                    }
                }
            }
            cfg.validate().map_err(anyhow::Error::from)?;
            let spec = match &cfg.map {
                MapSource::File(p) => load_map(p)?,
                MapSource::Generated { .. } => cfg.generated_map().map_err(anyhow::Error::from)?.expect("generated"),
            };
            info!("seed {}", cfg.seed.unwrap_or_default());
            let result = run_experiment(&cfg, &spec, jobs).map_err(internal)?;

            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let w = |name: &str, text: &str| write_output(Some(&out.join(name)), text);
            w("config.txt", &cfg.to_text())?;
            w("map.txt", &serialize_map(&spec))?;
            w("metrics.csv", &write_metrics(&result.metrics))?;
            w("training.csv", &write_training(&result.training))?;
            if let Some(first) = result.outputs.first() {
                w("qtable.txt", &serialize_qtable(&first.q))?;
                w("shield.txt", &serialize_shield(&first.shield))?;
                if let Some(m) = &first.model {
                    w("model.txt", &serialize_model(m))?;
                }
            }
            if cfg.dump_traces {
                let dir = out.join("traces");
                fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                for o in &result.outputs {
                    for (i, text) in &o.trace_dumps {
                        let name = format!("rep{}-{}-iter{}.txt", o.repetition, o.arm, i);
                        write_output(Some(&dir.join(name)), text)?;
                    }
                }
            }
            info!("wrote {} metric rows to {}", result.metrics.len(), out.display());
        }
        Command::LearnMdp {
            traces,
            eps,
            complete,
            actions,
            out,
        } => {
            let alphabet = ActionAlphabet::new(actions.split(',').map(|s| s.trim().to_string())).map_err(anyhow::Error::from)?;
            let corpus = parse_traces(&read(&traces)?, &alphabet).with_context(|| format!("invalid traces {}", traces.display()))?;
            let model = run_ioalergia(&corpus, &alphabet, &LearnerConfig { epsilon: eps }).map_err(anyhow::Error::from)?;
            info!("learned {} states from {} traces", model.num_states(), corpus.len());
            let model = match complete {
                Some(mode) => make_action_complete(&model, mode),
                None => model,
            };
            write_output(out.as_deref(), &serialize_model(&model))?;
        }
        Command::Shield {
            model,
            lambda,
            horizon,
            out,
        } => {
            let m = load_model(&model)?;
            let prop = SafetyProperty::avoid_violations(horizon).map_err(anyhow::Error::from)?;
            let shield = synthesize_shield(&m, &prop, lambda).map_err(anyhow::Error::from)?;
            write_output(out.as_deref(), &serialize_shield(&shield))?;
        }
        Command::Eval {
            map,
            qtable,
            shield,
            model,
            episodes,
            seed,
            t_max,
        } => {
            let spec = load_map(&map)?;
            let q = parse_qtable(&read(&qtable)?).with_context(|| format!("invalid Q-table {}", qtable.display()))?;
            let sh = parse_shield(&read(&shield)?).with_context(|| format!("invalid shield {}", shield.display()))?;
            let ctx = match (sh.is_allow_all(), model) {
                (true, None) => ShieldContext::unshielded(),
                (_, Some(p)) => {
                    let m = load_model(&p)?;
                    if !sh.is_allow_all() && model_hash(&m) != sh.model_hash() {
                        return Err(anyhow!("shield was synthesized from model {}, not {}", sh.model_hash(), model_hash(&m)).into());
                    }
                    ShieldContext::new(m, sh)
                }
                (false, None) => return Err(anyhow!("--model is required for a synthesized shield").into()),
            };
            let cfg = AgentConfig {
                t_max,
                ..AgentConfig::default()
            };
            cfg.validate().map_err(anyhow::Error::from)?;
            let seed = resolve_seed(seed)?;
            let s = evaluate_policy(&spec, &q, &ctx, &cfg, episodes, |e| episode_rng(seed, 0, Phase::Eval, 0, e))
                .map_err(internal)?;
            println!(
                "episodes={} return_mean={:.4} violations={} goals={} timeouts={} tracking_misses={} unknown_lookups={}",
                s.episodes, s.return_mean, s.violations, s.goals, s.timeouts, s.tracking_misses, s.unknown_lookups
            );
        }
        Command::ExportPrism { model, out } => {
            let m = load_model(&model)?;
            let prop = SafetyProperty::avoid_violations(1).expect("positive horizon");
            write_output(out.as_deref(), &export_prism(&m, &prop))?;
        }
        Command::GenMap {
            shape,
            size,
            slip_short,
            slip_long,
            out,
        } => {
            let tiers = SlipTiers {
                short: slip_short,
                long: slip_long,
            };
            let spec = generate(shape, size, tiers).map_err(anyhow::Error::from)?;
            write_output(out.as_deref(), &serialize_map(&spec))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(2),
    }
}

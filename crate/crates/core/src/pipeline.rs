//! The iterative train → learn → shield loop, evaluation and metrics.
//!
//! Every episode draws from its own ChaCha8 stream keyed by repetition,
//! phase, iteration and episode, so the shielded and unshielded arms see the
//! same random numbers episode by episode and results do not depend on the
//! number of worker threads.

use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{run_shielded_episode, AgentConfig, AgentError, BootstrapSet, QTable, ShieldContext};
use crate::direction::Direction;
use crate::gridworld::{generate, GridworldSpec, MapError, Pos, Shape, SlipTiers, StepError, Terminal};
use crate::learning::{close_terminal_states, make_action_complete, run_ioalergia, serialize_traces, CompletionMode, LearnError, LearnerConfig};
use crate::mdp::{DeterministicLabeledMdp, ObservationTrace};
use crate::shield::{synthesize_shield, SafetyProperty, Shield, ShieldError, DEFAULT_HORIZON, DEFAULT_LAMBDA};
use crate::text::{content_lines, parse_token, Exact, ParseError};

pub use crate::agent::track_model_state;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("`{0}` must be positive")]
    ZeroCount(&'static str),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Learner(#[from] LearnError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("no seed given")]
    MissingSeed,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    Generated { shape: Shape, size: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    Shielded,
    Unshielded,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Shielded => "shielded",
            Self::Unshielded => "unshielded",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shielded" => Ok(Self::Shielded),
            "unshielded" => Ok(Self::Unshielded),
            other => Err(format!("unknown arm `{other}`")),
        }
    }
}

/// Which arms an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArmSelection {
    Shielded,
    Unshielded,
    Both,
}

impl ArmSelection {
    pub fn arms(self) -> &'static [Arm] {
        match self {
            Self::Shielded => &[Arm::Shielded],
            Self::Unshielded => &[Arm::Unshielded],
            Self::Both => &[Arm::Shielded, Arm::Unshielded],
        }
    }
}

impl FromStr for ArmSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shielded" => Ok(Self::Shielded),
            "unshielded" => Ok(Self::Unshielded),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown arm selection `{other}` (expected shielded, unshielded or both)")),
        }
    }
}

impl fmt::Display for ArmSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Shielded => "shielded",
            Self::Unshielded => "unshielded",
            Self::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub map: MapSource,
    pub slip: SlipTiers,
    pub n_iter: usize,
    pub n_episodes: usize,
    pub n_repetitions: usize,
    pub eval_episodes: usize,
    pub agent: AgentConfig,
    pub learner: LearnerConfig,
    pub lambda: f64,
    pub horizon: usize,
    /// Completion used for every iteration but the last, which always uses
    /// the sink.
    pub completion: CompletionMode,
    pub arms: ArmSelection,
    pub seed: Option<u64>,
    /// Keep each iteration's new traces for offline re-learning.
    pub dump_traces: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            map: MapSource::Generated {
                shape: Shape::Zigzag,
                size: 1,
            },
            slip: SlipTiers::default(),
            n_iter: 30,
            n_episodes: 1000,
            n_repetitions: 30,
            eval_episodes: 1000,
            agent: AgentConfig::default(),
            learner: LearnerConfig::default(),
            lambda: DEFAULT_LAMBDA,
            horizon: DEFAULT_HORIZON,
            completion: CompletionMode::SelfLoop,
            arms: ArmSelection::Both,
            seed: None,
            dump_traces: false,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse().map_err(|e| invalid(key, v, e))
}

impl ExperimentConfig {
    /// Flat `key = value` text; `#` starts a comment line. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (ln, line) in content_lines(text) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ParseError::at_line(ln, "expected `key = value`"))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::Parse(p) => ConfigError::Parse(p),
                other => ConfigError::Parse(ParseError::at_line(ln, other.to_string())),
            })?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "shape" => {
                let shape = v.parse().map_err(|e: MapError| invalid(key, v, e))?;
                let size = match self.map {
                    MapSource::Generated { size, .. } => size,
                    MapSource::File(_) => 1,
                };
                self.map = MapSource::Generated { shape, size };
            }
            "size" => {
                let size = value(key, v)?;
                let shape = match self.map {
                    MapSource::Generated { shape, .. } => shape,
                    MapSource::File(_) => Shape::Zigzag,
                };
                self.map = MapSource::Generated { shape, size };
            }
            "map" => self.map = MapSource::File(PathBuf::from(v)),
            "slip_short" => self.slip.short = value(key, v)?,
            "slip_long" => self.slip.long = value(key, v)?,
            "n_iter" => self.n_iter = value(key, v)?,
            "n_episodes" => self.n_episodes = value(key, v)?,
            "n_repetitions" => self.n_repetitions = value(key, v)?,
            "eval_episodes" => self.eval_episodes = value(key, v)?,
            "alpha" => self.agent.alpha = value(key, v)?,
            "gamma" => self.agent.gamma = value(key, v)?,
            "epsilon0" => self.agent.epsilon0 = value(key, v)?,
            "epsilon_decay" => self.agent.epsilon_decay = value(key, v)?,
            "t_max" => self.agent.t_max = value(key, v)?,
            "bootstrap" => {
                self.agent.bootstrap = match v {
                    "all" => BootstrapSet::All,
                    "allowed" => BootstrapSet::Allowed,
                    _ => return Err(invalid(key, v, "expected all or allowed")),
                }
            }
            "epsilon_alergia" => self.learner.epsilon = value(key, v)?,
            "lambda" => self.lambda = value(key, v)?,
            "horizon" => self.horizon = value(key, v)?,
            "completion" => self.completion = value(key, v)?,
            "arm" => self.arms = value(key, v)?,
            "seed" => self.seed = Some(value(key, v)?),
            "dump_traces" => self.dump_traces = value(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match &self.map {
            MapSource::Generated { shape, size } => {
                writeln!(out, "shape = {shape}\nsize = {size}").unwrap();
            }
            MapSource::File(p) => writeln!(out, "map = {}", p.display()).unwrap(),
        }
        let a = &self.agent;
        let bootstrap = match a.bootstrap {
            BootstrapSet::All => "all",
            BootstrapSet::Allowed => "allowed",
        };
        let lines: [(&str, String); 19] = [
            ("slip_short", Exact(self.slip.short).to_string()),
            ("slip_long", Exact(self.slip.long).to_string()),
            ("n_iter", self.n_iter.to_string()),
            ("n_episodes", self.n_episodes.to_string()),
            ("n_repetitions", self.n_repetitions.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("alpha", Exact(a.alpha).to_string()),
            ("gamma", Exact(a.gamma).to_string()),
            ("epsilon0", Exact(a.epsilon0).to_string()),
            ("epsilon_decay", Exact(a.epsilon_decay).to_string()),
            ("t_max", a.t_max.to_string()),
            ("bootstrap", bootstrap.to_string()),
            ("epsilon_alergia", Exact(self.learner.epsilon).to_string()),
            ("lambda", Exact(self.lambda).to_string()),
            ("horizon", self.horizon.to_string()),
            ("completion", self.completion.to_string()),
            ("arm", self.arms.to_string()),
            ("dump_traces", self.dump_traces.to_string()),
            ("seed", self.seed.map(|s| s.to_string()).unwrap_or_default()),
        ];
        for (k, v) in lines {
            if !v.is_empty() {
                writeln!(out, "{k} = {v}").unwrap();
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, n) in [
            ("n_iter", self.n_iter),
            ("n_episodes", self.n_episodes),
            ("n_repetitions", self.n_repetitions),
            ("eval_episodes", self.eval_episodes),
        ] {
            if n == 0 {
                return Err(ConfigError::ZeroCount(name));
            }
        }
        self.agent.validate()?;
        self.learner.validate()?;
        SafetyProperty::avoid_violations(self.horizon)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(ShieldError::InvalidLambda(self.lambda).into());
        }
        if let MapSource::Generated { shape, size } = self.map {
            generate(shape, size, self.slip)?;
        }
        Ok(())
    }

    /// The generated map; `None` for file-based maps, which the caller loads.
    pub fn generated_map(&self) -> Result<Option<GridworldSpec>, MapError> {
        match self.map {
            MapSource::Generated { shape, size } => generate(shape, size, self.slip).map(Some),
            MapSource::File(_) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train = 0,
    Eval = 1,
}

/// Independent stream for one episode.
pub fn episode_rng(seed: u64, repetition: usize, phase: Phase, iteration: usize, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = ((repetition as u64) << 48) | ((phase as u64) << 46) | ((iteration as u64 & 0xFFFF) << 30) | (episode as u64 & 0x3FFF_FFFF);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub return_mean: f64,
    pub violations: usize,
    pub goals: usize,
    pub timeouts: usize,
    pub tracking_misses: usize,
    pub unknown_lookups: usize,
}

/// Greedy shielded episodes without Q-updates.
pub fn evaluate_policy<R: rand::Rng>(
    spec: &GridworldSpec,
    q: &QTable,
    ctx: &ShieldContext,
    cfg: &AgentConfig,
    episodes: usize,
    mut rng_for: impl FnMut(usize) -> R,
) -> Result<EvalSummary, StepError> {
    let mut q = q.clone();
    let mut s = EvalSummary {
        episodes,
        return_mean: 0.0,
        violations: 0,
        goals: 0,
        timeouts: 0,
        tracking_misses: 0,
        unknown_lookups: 0,
    };
    let mut total = 0.0;
    for e in 0..episodes {
        let out = run_shielded_episode(spec, &mut q, ctx, cfg, 0.0, false, &mut rng_for(e))?;
        total += out.total_reward();
        match out.terminal {
            Some(Terminal::PitFallen) => s.violations += 1,
            Some(Terminal::GoalReached) => s.goals += 1,
            None => s.timeouts += 1,
        }
        s.tracking_misses += out.tracking_misses;
        s.unknown_lookups += out.unknown_lookups;
    }
    s.return_mean = if episodes == 0 { 0.0 } else { total / episodes as f64 };
    Ok(s)
}

/// Evaluation metrics after one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub repetition: usize,
    pub iteration: usize,
    /// Training episodes completed so far.
    pub episodes: usize,
    pub arm: Arm,
    pub return_mean: f64,
    pub violations: usize,
    /// States of the learned model before completion; 0 for the unshielded arm.
    pub mdp_states: usize,
    pub tracking_misses: usize,
}

/// Training-time counters for one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub repetition: usize,
    pub iteration: usize,
    pub arm: Arm,
    pub return_mean: f64,
    pub violations: usize,
    pub tracking_misses: usize,
    pub unknown_lookups: usize,
    pub learner_failed: bool,
}

pub const METRICS_HEADER: &str = "repetition,iteration,episodes,arm,return_mean,violations,mdp_states,tracking_misses";
pub const TRAINING_HEADER: &str = "repetition,iteration,arm,return_mean,violations,tracking_misses,unknown_lookups,learner_failed";

pub fn write_metrics(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.repetition,
            r.iteration,
            r.episodes,
            r.arm,
            Exact(r.return_mean),
            r.violations,
            r.mdp_states,
            r.tracking_misses
        )
        .unwrap();
    }
    out
}

fn csv_body<'a>(text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>, ParseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => return Err(ParseError::at_line(1, format!("expected header `{header}`"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| (ln, l.split(',').collect())))
}

fn check_width(ln: usize, f: &[&str], width: usize) -> Result<(), ParseError> {
    if f.len() == width {
        Ok(())
    } else {
        Err(ParseError::at_line(ln, format!("expected {width} fields, found {}", f.len())))
    }
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>, ParseError> {
    let mut rows = Vec::new();
    for (ln, f) in csv_body(text, METRICS_HEADER)? {
        check_width(ln, &f, 8)?;
        rows.push(MetricsRow {
            repetition: parse_token(f[0], ln, "repetition")?,
            iteration: parse_token(f[1], ln, "iteration")?,
            episodes: parse_token(f[2], ln, "episodes")?,
            arm: parse_token(f[3], ln, "arm")?,
            return_mean: parse_token(f[4], ln, "return_mean")?,
            violations: parse_token(f[5], ln, "violations")?,
            mdp_states: parse_token(f[6], ln, "mdp_states")?,
            tracking_misses: parse_token(f[7], ln, "tracking_misses")?,
        });
    }
    Ok(rows)
}

pub fn write_training(rows: &[TrainingRow]) -> String {
    let mut out = format!("{TRAINING_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.repetition,
            r.iteration,
            r.arm,
            Exact(r.return_mean),
            r.violations,
            r.tracking_misses,
            r.unknown_lookups,
            r.learner_failed
        )
        .unwrap();
    }
    out
}

pub fn read_training(text: &str) -> Result<Vec<TrainingRow>, ParseError> {
    let mut rows = Vec::new();
    for (ln, f) in csv_body(text, TRAINING_HEADER)? {
        check_width(ln, &f, 8)?;
        rows.push(TrainingRow {
            repetition: parse_token(f[0], ln, "repetition")?,
            iteration: parse_token(f[1], ln, "iteration")?,
            arm: parse_token(f[2], ln, "arm")?,
            return_mean: parse_token(f[3], ln, "return_mean")?,
            violations: parse_token(f[4], ln, "violations")?,
            tracking_misses: parse_token(f[5], ln, "tracking_misses")?,
            unknown_lookups: parse_token(f[6], ln, "unknown_lookups")?,
            learner_failed: parse_token(f[7], ln, "learner_failed")?,
        });
    }
    Ok(rows)
}

/// Mutable state of one arm within one repetition.
pub struct ArmState<'a> {
    cfg: &'a ExperimentConfig,
    spec: &'a GridworldSpec,
    seed: u64,
    repetition: usize,
    arm: Arm,
    prop: SafetyProperty,
    q: QTable,
    epsilon: f64,
    traces: Vec<ObservationTrace>,
    ctx: ShieldContext,
    mdp_states: usize,
    new_traces: usize,
}

impl<'a> ArmState<'a> {
    /// Iteration 0: empty trace multiset, the single-state model and the
    /// allow-all shield.
    pub fn new(cfg: &'a ExperimentConfig, spec: &'a GridworldSpec, seed: u64, repetition: usize, arm: Arm) -> Result<Self, ConfigError> {
        let ctx = match arm {
            Arm::Shielded => {
                let m0 = DeterministicLabeledMdp::single_state(Direction::alphabet(), spec.abstract_observation(spec.entry()));
                ShieldContext::new(m0, Shield::allow_all(Direction::alphabet()))
            }
            Arm::Unshielded => ShieldContext::unshielded(),
        };
        Ok(Self {
            cfg,
            spec,
            seed,
            repetition,
            arm,
            prop: SafetyProperty::avoid_violations(cfg.horizon)?,
            q: QTable::new(),
            epsilon: cfg.agent.epsilon0,
            traces: Vec::new(),
            ctx,
            mdp_states: 0,
            new_traces: 0,
        })
    }

    pub fn traces(&self) -> &[ObservationTrace] {
        &self.traces
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn context(&self) -> &ShieldContext {
        &self.ctx
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Traces appended by the most recent iteration.
    pub fn latest_traces(&self) -> &[ObservationTrace] {
        &self.traces[self.traces.len() - self.new_traces..]
    }

    /// Trains with the current shield, evaluates the resulting policy under
    /// that same shield, then relearns model and shield from all traces
    /// (shielded arm only). The row's `mdp_states` is the size of the model
    /// learned in this iteration.
    pub fn run_iteration(&mut self, i: usize) -> Result<(MetricsRow, TrainingRow), StepError> {
        let cfg = self.cfg;
        let spec = self.spec;
        let mut train = TrainingRow {
            repetition: self.repetition,
            iteration: i,
            arm: self.arm,
            return_mean: 0.0,
            violations: 0,
            tracking_misses: 0,
            unknown_lookups: 0,
            learner_failed: false,
        };
        let mut total = 0.0;
        for e in 0..cfg.n_episodes {
            let mut rng = episode_rng(self.seed, self.repetition, Phase::Train, i, e);
            let out = run_shielded_episode(spec, &mut self.q, &self.ctx, &cfg.agent, self.epsilon, true, &mut rng)?;
            self.epsilon *= cfg.agent.epsilon_decay;
            total += out.total_reward();
            train.violations += usize::from(out.violated());
            train.tracking_misses += out.tracking_misses;
            train.unknown_lookups += out.unknown_lookups;
            if self.arm == Arm::Shielded || cfg.dump_traces {
                self.traces.push(out.trace.abstract_with(|p: &Pos| spec.abstract_observation(*p)));
            }
        }
        self.new_traces = if self.arm == Arm::Shielded || cfg.dump_traces { cfg.n_episodes } else { 0 };
        train.return_mean = total / cfg.n_episodes as f64;

        let (rep, seed) = (self.repetition, self.seed);
        let eval = evaluate_policy(spec, &self.q, &self.ctx, &cfg.agent, cfg.eval_episodes, |e| {
            episode_rng(seed, rep, Phase::Eval, i, e)
        })?;

        if self.arm == Arm::Shielded {
            let mode = if i == cfg.n_iter { CompletionMode::Sink } else { cfg.completion };
            match self.relearn(mode) {
                Ok((states, ctx)) => {
                    self.mdp_states = states;
                    self.ctx = ctx;
                }
                Err(e) => {
                    warn!("repetition {} iteration {i}: keeping previous shield ({e})", self.repetition);
                    train.learner_failed = true;
                }
            }
        }

        debug!(
            "rep {rep} {} iter {i}: eval return {:.2}, {} violations, {} states",
            self.arm, eval.return_mean, eval.violations, self.mdp_states
        );
        let metrics = MetricsRow {
            repetition: rep,
            iteration: i,
            episodes: i * cfg.n_episodes,
            arm: self.arm,
            return_mean: eval.return_mean,
            violations: eval.violations,
            mdp_states: self.mdp_states,
            tracking_misses: eval.tracking_misses,
        };
        Ok((metrics, train))
    }

    fn relearn(&self, mode: CompletionMode) -> Result<(usize, ShieldContext), String> {
        let raw = run_ioalergia(&self.traces, &Direction::alphabet(), &self.cfg.learner).map_err(|e| e.to_string())?;
        let states = raw.num_states();
        let model = match mode {
            CompletionMode::Sink => make_action_complete(&close_terminal_states(&raw, |o| self.prop.is_bad(o)), mode),
            CompletionMode::SelfLoop => make_action_complete(&raw, mode),
        };
        let shield = synthesize_shield(&model, &self.prop, self.cfg.lambda).map_err(|e| e.to_string())?;
        Ok((states, ShieldContext::new(model, shield)))
    }
}

/// Final artifacts of one arm of one repetition.
#[derive(Debug, Clone)]
pub struct ArmOutput {
    pub repetition: usize,
    pub arm: Arm,
    pub q: QTable,
    pub model: Option<DeterministicLabeledMdp>,
    pub shield: Shield,
    /// `(iteration, trace file text)` when trace dumping is enabled.
    pub trace_dumps: Vec<(usize, String)>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub metrics: Vec<MetricsRow>,
    pub training: Vec<TrainingRow>,
    /// Ordered by repetition, then arm.
    pub outputs: Vec<ArmOutput>,
}

fn run_arm(cfg: &ExperimentConfig, spec: &GridworldSpec, seed: u64, rep: usize, arm: Arm) -> Result<(Vec<MetricsRow>, Vec<TrainingRow>, ArmOutput), PipelineError> {
    let mut state = ArmState::new(cfg, spec, seed, rep, arm)?;
    let mut metrics = Vec::with_capacity(cfg.n_iter);
    let mut training = Vec::with_capacity(cfg.n_iter);
    let mut dumps = Vec::new();
    for i in 1..=cfg.n_iter {
        let (m, t) = state.run_iteration(i)?;
        metrics.push(m);
        training.push(t);
        if cfg.dump_traces {
            dumps.push((i, serialize_traces(state.latest_traces(), &Direction::alphabet())));
        }
    }
    let ArmState { q, ctx, .. } = state;
    let output = ArmOutput {
        repetition: rep,
        arm,
        q,
        model: ctx.model().cloned(),
        shield: ctx.shield().clone(),
        trace_dumps: dumps,
    };
    Ok((metrics, training, output))
}

/// Runs every repetition and arm, `jobs` at a time (0 = all cores).
pub fn run_experiment(cfg: &ExperimentConfig, spec: &GridworldSpec, jobs: usize) -> Result<ExperimentResult, PipelineError> {
    cfg.validate()?;
    let seed = cfg.seed.ok_or(ConfigError::MissingSeed)?;
    let tasks: Vec<(usize, Arm)> = (0..cfg.n_repetitions)
        .flat_map(|r| cfg.arms.arms().iter().map(move |a| (r, *a)))
        .collect();
    info!(
        "running {} repetitions x {:?} arms, {} iterations of {} episodes",
        cfg.n_repetitions,
        cfg.arms.arms(),
        cfg.n_iter,
        cfg.n_episodes
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let results: Vec<_> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(rep, arm)| run_arm(cfg, spec, seed, rep, arm))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut metrics = Vec::new();
    let mut training = Vec::new();
    let mut outputs = Vec::new();
    for (m, t, o) in results {
        metrics.extend(m);
        training.extend(t);
        outputs.push(o);
    }
    metrics.sort_by_key(|r| (r.repetition, r.iteration, r.arm));
    training.sort_by_key(|r| (r.repetition, r.iteration, r.arm));
    outputs.sort_by_key(|o| (o.repetition, o.arm));
    Ok(ExperimentResult {
        metrics,
        training,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::parse_map;

    fn small(cfg: &mut ExperimentConfig) {
        cfg.n_iter = 2;
        cfg.n_episodes = 10;
        cfg.n_repetitions = 2;
        cfg.eval_episodes = 5;
        cfg.seed = Some(7);
    }

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = ExperimentConfig::default();
        assert_eq!((c.n_iter, c.n_episodes, c.eval_episodes, c.n_repetitions), (30, 1000, 1000, 30));
        assert_eq!((c.lambda, c.horizon, c.agent.t_max), (0.95, 2, 200));
    }

    #[test]
    fn config_text_round_trips() {
        let mut c = ExperimentConfig::default();
        c.set("shape", "walls").unwrap();
        c.set("size", "3").unwrap();
        c.set("lambda", "0.9").unwrap();
        c.set("seed", "42").unwrap();
        c.set("bootstrap", "allowed").unwrap();
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn config_errors() {
        assert!(matches!(ExperimentConfig::parse("alpha = x\n"), Err(ConfigError::Parse(p)) if p.line == 1));
        assert!(matches!(ExperimentConfig::parse("\nfoo = 1\n"), Err(ConfigError::Parse(p)) if p.line == 2));
        let mut c = ExperimentConfig::default();
        c.n_iter = 0;
        assert!(matches!(c.validate(), Err(ConfigError::ZeroCount("n_iter"))));
    }

    #[test]
    fn row_counts_and_trace_growth() {
        let mut cfg = ExperimentConfig::default();
        small(&mut cfg);
        let spec = cfg.generated_map().unwrap().unwrap();
        let res = run_experiment(&cfg, &spec, 2).unwrap();
        for arm in [Arm::Shielded, Arm::Unshielded] {
            assert_eq!(res.metrics.iter().filter(|r| r.arm == arm).count(), 4);
        }
        assert!(res.metrics.iter().filter(|r| r.arm == Arm::Unshielded).all(|r| r.mdp_states == 0));
        assert!(res.metrics.iter().all(|r| r.violations <= cfg.eval_episodes));

        let mut state = ArmState::new(&cfg, &spec, 7, 0, Arm::Shielded).unwrap();
        assert_eq!(state.context().model().unwrap().num_states(), 1);
        assert!(state.context().shield().is_allow_all());
        state.run_iteration(1).unwrap();
        assert_eq!(state.traces().len(), 10);
        assert!(!state.context().shield().is_allow_all());
        state.run_iteration(2).unwrap();
        assert_eq!(state.traces().len(), 20);
        // The last iteration uses sink completion.
        let model = state.context().model().unwrap();
        assert!(model.is_action_complete());
    }

    #[test]
    fn experiment_is_deterministic_across_thread_counts() {
        let mut cfg = ExperimentConfig::default();
        small(&mut cfg);
        let spec = cfg.generated_map().unwrap().unwrap();
        let a = write_metrics(&run_experiment(&cfg, &spec, 1).unwrap().metrics);
        let b = write_metrics(&run_experiment(&cfg, &spec, 4).unwrap().metrics);
        assert_eq!(a, b);
    }

    #[test]
    fn untrained_agent_on_zigzag_falls() {
        let spec = generate(Shape::Zigzag, 1, SlipTiers::default()).unwrap();
        let s = evaluate_policy(&spec, &QTable::new(), &ShieldContext::unshielded(), &AgentConfig::default(), 200, |e| {
            episode_rng(1, 0, Phase::Eval, 0, e)
        })
        .unwrap();
        assert_eq!(s.violations + s.goals + s.timeouts, 200);
        assert!(s.return_mean < -50.0, "{}", s.return_mean);
    }

    #[test]
    fn converged_agent_on_trivial_map() {
        let spec = parse_map("2 1\nE G\n").unwrap();
        let mut q = QTable::new();
        q.set(spec.entry(), Direction::Right, 99.5);
        let s = evaluate_policy(&spec, &q, &ShieldContext::unshielded(), &AgentConfig::default(), 50, |e| {
            episode_rng(1, 0, Phase::Eval, 0, e)
        })
        .unwrap();
        assert_eq!((s.return_mean, s.violations, s.goals), (99.5, 0, 50));
    }

    #[test]
    fn metrics_csv_round_trips() {
        assert_eq!(write_metrics(&[]), format!("{METRICS_HEADER}\n"));
        let rows: Vec<MetricsRow> = (0..4)
            .map(|i| MetricsRow {
                repetition: i / 2,
                iteration: i % 2 + 1,
                episodes: 500 * (i % 2 + 1),
                arm: if i % 2 == 0 { Arm::Shielded } else { Arm::Unshielded },
                return_mean: -12.345 + i as f64 / 3.0,
                violations: i,
                mdp_states: 3 * i,
                tracking_misses: 0,
            })
            .collect();
        let text = write_metrics(&rows);
        assert_eq!(text.lines().count(), 5);
        assert_eq!(read_metrics(&text).unwrap(), rows);
        assert!(read_metrics("bad header\n").is_err());
    }

    #[test]
    fn streams_are_distinct() {
        use rand::Rng;
        let a: u64 = episode_rng(1, 0, Phase::Train, 1, 0).gen();
        let b: u64 = episode_rng(1, 0, Phase::Train, 1, 1).gen();
        let c: u64 = episode_rng(1, 0, Phase::Eval, 1, 0).gen();
        let d: u64 = episode_rng(1, 1, Phase::Train, 1, 0).gen();
        let again: u64 = episode_rng(1, 0, Phase::Train, 1, 0).gen();
        assert_eq!(a, again);
        assert!(a != b && a != c && a != d);
    }
}

mod common;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shieldlearn::gridworld::{generate, Shape, SlipTiers};
use shieldlearn::learning::{make_action_complete, run_ioalergia, CompletionMode, LearnerConfig};
use shieldlearn::mdp::parse_model;
use shieldlearn::pipeline::{run_experiment, track_model_state, Arm, ExperimentConfig, MapSource};
use shieldlearn::Direction;

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.map = MapSource::Generated {
        shape: Shape::Zigzag,
        size: 1,
    };
    cfg.n_iter = 3;
    cfg.n_episodes = 40;
    cfg.n_repetitions = 2;
    cfg.eval_episodes = 20;
    cfg.seed = Some(5);
    cfg
}

#[test]
fn first_iteration_evaluates_both_arms_alike() {
    let cfg = small_config();
    let spec = generate(Shape::Zigzag, 1, SlipTiers::default()).unwrap();
    let res = run_experiment(&cfg, &spec, 0).unwrap();
    for rep in 0..cfg.n_repetitions {
        let row = |arm| res.metrics.iter().find(|r| r.repetition == rep && r.iteration == 1 && r.arm == arm).unwrap();
        let (s, u) = (row(Arm::Shielded), row(Arm::Unshielded));
        assert_eq!((s.return_mean, s.violations), (u.return_mean, u.violations));
        assert!(s.mdp_states > 0);
    }
    assert_eq!(res.outputs.len(), 4);
    let shielded = res.outputs.iter().find(|o| o.arm == Arm::Shielded).unwrap();
    let final_model = shielded.model.as_ref().unwrap();
    assert!(final_model.is_action_complete());
    assert_eq!(shielded.shield.num_states(), Some(final_model.num_states()));
}

#[test]
fn tracking_rarely_misses_on_a_well_learned_model() {
    let truth = parse_model(
        "actions left right
initial 0
state 0 x{}
state 1 y{}
state 2 z{PD}
trans 0 left 1:0.6 2:0.4
trans 0 right 0:1.0
trans 1 left 0:0.5 2:0.5
trans 1 right 1:0.9 2:0.1
trans 2 left 0:1.0
trans 2 right 1:0.7 0:0.3
",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let traces = common::sample_traces(&truth, 10_000, 8, &mut rng);
    let learned = run_ioalergia(&traces, truth.actions(), &LearnerConfig::default()).unwrap();
    let model = make_action_complete(&learned, CompletionMode::SelfLoop);

    let (mut steps, mut misses) = (0usize, 0usize);
    for _ in 0..2000 {
        let mut s_true = truth.initial();
        let mut s = model.initial();
        for _ in 0..10 {
            let dir = *[Direction::Left, Direction::Right].choose(&mut rng).unwrap();
            s_true = *truth.transition(s_true, dir.action_id()).unwrap().sample(&mut rng);
            let (next, miss) = track_model_state(&model, s, dir, truth.label(s_true));
            s = next;
            steps += 1;
            misses += usize::from(miss);
        }
    }
    assert!((misses as f64) < 0.01 * steps as f64, "{misses} misses in {steps} steps");
}

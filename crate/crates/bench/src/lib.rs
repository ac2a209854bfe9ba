//! Fixtures shared by the benchmarks.

use shieldlearn::agent::ShieldContext;
use shieldlearn::gridworld::{generate, GridworldSpec, Shape, SlipTiers};
use shieldlearn::learning::{make_action_complete, run_ioalergia, CompletionMode, LearnerConfig};
use shieldlearn::pipeline::{Arm, ArmState, ExperimentConfig};
use shieldlearn::shield::{synthesize_shield, SafetyProperty};
use shieldlearn::{Direction, DeterministicLabeledMdp, ObservationTrace};

pub struct Fixture {
    pub spec: GridworldSpec,
    pub traces: Vec<ObservationTrace>,
    pub model: DeterministicLabeledMdp,
    pub ctx: ShieldContext,
}

/// Traces from `episodes` unshielded training episodes on a zigzag map of
/// the given size, plus the model and shield learned from them.
pub fn fixture(size: usize, episodes: usize) -> Fixture {
    let spec = generate(Shape::Zigzag, size, SlipTiers::default()).expect("valid size");
    let mut cfg = ExperimentConfig::default();
    cfg.n_episodes = episodes;
    cfg.n_iter = 1;
    let mut arm = ArmState::new(&cfg, &spec, 7, 0, Arm::Shielded).expect("valid config");
    arm.run_iteration(1).expect("episode runs");
    let traces = arm.traces().to_vec();
    let raw = run_ioalergia(&traces, &Direction::alphabet(), &LearnerConfig::default()).expect("traces are consistent");
    let model = make_action_complete(&raw, CompletionMode::Sink);
    let shield = synthesize_shield(&model, &SafetyProperty::avoid_violations(2).unwrap(), 0.95).expect("complete model");
    Fixture {
        spec,
        traces,
        ctx: ShieldContext::new(model.clone(), shield),
        model,
    }
}

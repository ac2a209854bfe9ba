//! Passive learning of deterministic labeled MDPs (IOAlergia) and the
//! action-completion passes applied before shield synthesis.

mod alergia;
mod fpta;
mod trace_file;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mdp::{ActionId, DeterministicLabeledMdp, Distribution, Mdp, Observation, StateId};

pub use alergia::run_ioalergia;
pub use fpta::{compatible, hoeffding_compatible, Edge, EdgeKey, IoFpta, IoFptaNode, NodeId};
pub use trace_file::{parse_traces, serialize_traces};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("no traces to learn from")]
    EmptyTraceSet,
    #[error("trace {trace} starts with {found}, expected {expected}")]
    InconsistentInitialObservation {
        trace: usize,
        expected: Observation,
        found: Observation,
    },
    #[error("trace {trace} uses action {action} outside the alphabet")]
    UnknownAction { trace: usize, action: ActionId },
    #[error("epsilon must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// Significance level of the compatibility test.
    pub epsilon: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self { epsilon: 0.05 }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.epsilon > 0.0 && self.epsilon <= 1.0 {
            Ok(())
        } else {
            Err(LearnError::InvalidEpsilon(self.epsilon))
        }
    }
}

/// How undefined `(state, action)` pairs are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompletionMode {
    /// Stay in the same state: the action is assumed not to change safety.
    SelfLoop,
    /// Move to a fresh violating sink.
    Sink,
}

impl fmt::Display for CompletionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SelfLoop => "self_loop",
            Self::Sink => "sink",
        })
    }
}

impl FromStr for CompletionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "self_loop" => Ok(Self::SelfLoop),
            "sink" => Ok(Self::Sink),
            other => Err(format!("unknown completion mode `{other}` (expected self_loop or sink)")),
        }
    }
}

/// Defines a transition for every `(state, action)` pair over the model's
/// alphabet. A complete model is returned unchanged, so both modes are
/// idempotent. The sink, when added, is the last state, carries
/// [`Observation::sink`] and loops on every action.
pub fn make_action_complete(m: &DeterministicLabeledMdp, mode: CompletionMode) -> DeterministicLabeledMdp {
    if m.is_action_complete() {
        return m.clone();
    }
    let (base, mut labels) = m.clone().into_parts();
    let (actions, initial, mut rows) = base.into_parts();
    let sink = StateId(rows.len() as u32);
    for (s, row) in rows.iter_mut().enumerate() {
        for a in actions.ids() {
            row.entry(a).or_insert_with(|| match mode {
                CompletionMode::SelfLoop => Distribution::point(StateId(s as u32)),
                CompletionMode::Sink => Distribution::point(sink),
            });
        }
    }
    if mode == CompletionMode::Sink {
        rows.push(actions.ids().map(|a| (a, Distribution::point(sink))).collect::<BTreeMap<_, _>>());
        labels.push(Observation::sink());
    }
    let base = Mdp::new(actions, initial, rows).expect("completion keeps the model well-formed");
    DeterministicLabeledMdp::new(base, labels).expect("one label per state")
}

/// Gives every state without any observed action a self-loop on all
/// actions, unless `bad` holds for its label. Applied before sink completion.
pub fn close_terminal_states(m: &DeterministicLabeledMdp, bad: impl Fn(&Observation) -> bool) -> DeterministicLabeledMdp {
    let (base, labels) = m.clone().into_parts();
    let (actions, initial, mut rows) = base.into_parts();
    for (s, row) in rows.iter_mut().enumerate() {
        if row.is_empty() && !bad(&labels[s]) {
            *row = actions.ids().map(|a| (a, Distribution::point(StateId(s as u32)))).collect();
        }
    }
    let base = Mdp::new(actions, initial, rows).expect("self-loops keep the model well-formed");
    DeterministicLabeledMdp::new(base, labels).expect("one label per state")
}

//! Probabilistic model types shared by every stage: distributions, MDPs,
//! deterministic labeled MDPs and traces.

mod distribution;
mod model_file;
mod observation;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use distribution::{validate_distribution, Distribution, DistributionError, PROB_TOLERANCE};
pub use model_file::{model_hash, parse_model, serialize_model};
pub use observation::{Observation, PitFlags, Special};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub u16);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model has no states")]
    NoStates,
    #[error("initial state {0} is not a state of the model")]
    UnknownInitial(StateId),
    #[error("state {state} has a transition to unknown state {target}")]
    UnknownTarget { state: StateId, target: StateId },
    #[error("action id {0} is outside the action alphabet")]
    UnknownAction(ActionId),
    #[error("action {action} is not available in state {state}")]
    ActionUnavailable { state: StateId, action: ActionId },
    #[error("state {0} is not a state of the model")]
    UnknownState(StateId),
    #[error("expected {expected} labels, got {actual}")]
    LabelCount { expected: usize, actual: usize },
    #[error("duplicate action name `{0}`")]
    DuplicateActionName(String),
    #[error("invalid distribution for state {state}, action {action}: {source}")]
    Distribution {
        state: StateId,
        action: ActionId,
        source: DistributionError,
    },
}

/// Registry mapping opaque action ids to readable names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionAlphabet {
    names: Vec<String>,
}

impl ActionAlphabet {
    pub fn new(names: impl IntoIterator<Item = String>) -> Result<Self, ModelError> {
        let names: Vec<String> = names.into_iter().collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ModelError::DuplicateActionName(n.clone()));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: ActionId) -> &str {
        &self.names[id.index()]
    }

    pub fn id(&self, name: &str) -> Option<ActionId> {
        self.names.iter().position(|n| n == name).map(|i| ActionId(i as u16))
    }

    pub fn ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.names.len()).map(|i| ActionId(i as u16))
    }

    pub fn contains(&self, id: ActionId) -> bool {
        id.index() < self.names.len()
    }
}

/// A finite MDP with a partial transition function: `transition(s, a)` is
/// defined exactly for the available actions `A(s)`.
///
/// States are the contiguous ids `0..num_states()`. Raw learned models may
/// contain states without available actions; shields require an
/// action-complete model (see [`Mdp::is_action_complete`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    actions: ActionAlphabet,
    initial: StateId,
    transitions: Vec<BTreeMap<ActionId, Distribution<StateId>>>,
}

impl Mdp {
    pub fn new(
        actions: ActionAlphabet,
        initial: StateId,
        transitions: Vec<BTreeMap<ActionId, Distribution<StateId>>>,
    ) -> Result<Self, ModelError> {
        if transitions.is_empty() {
            return Err(ModelError::NoStates);
        }
        let n = transitions.len();
        if initial.index() >= n {
            return Err(ModelError::UnknownInitial(initial));
        }
        for (s, row) in transitions.iter().enumerate() {
            let state = StateId(s as u32);
            for (&action, dist) in row {
                if !actions.contains(action) {
                    return Err(ModelError::UnknownAction(action));
                }
                dist.validate()
                    .map_err(|source| ModelError::Distribution { state, action, source })?;
                if let Some(&target) = dist.outcomes().find(|t| t.index() >= n) {
                    return Err(ModelError::UnknownTarget { state, target });
                }
            }
        }
        Ok(Self {
            actions,
            initial,
            transitions,
        })
    }

    pub fn actions(&self) -> &ActionAlphabet {
        &self.actions
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.transitions.len() as u32).map(StateId)
    }

    pub fn transition(&self, s: StateId, a: ActionId) -> Option<&Distribution<StateId>> {
        self.transitions.get(s.index())?.get(&a)
    }

    pub fn available_actions(&self, s: StateId) -> impl Iterator<Item = ActionId> + '_ {
        self.transitions[s.index()].keys().copied()
    }

    pub fn transitions_from(&self, s: StateId) -> &BTreeMap<ActionId, Distribution<StateId>> {
        &self.transitions[s.index()]
    }

    /// True when every state defines a distribution for every action of the alphabet.
    pub fn is_action_complete(&self) -> bool {
        self.transitions.iter().all(|row| row.len() == self.actions.len())
    }

    pub(crate) fn into_parts(self) -> (ActionAlphabet, StateId, Vec<BTreeMap<ActionId, Distribution<StateId>>>) {
        (self.actions, self.initial, self.transitions)
    }
}

/// One place where determinism fails: two successors of `(state, action)`
/// share `label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterminismViolation {
    pub state: StateId,
    pub action: ActionId,
    pub label: Observation,
}

/// An MDP whose states carry observations such that, for every state and
/// action, positive-probability successors have pairwise distinct labels.
///
/// Construction only checks structure; [`DeterministicLabeledMdp::check_determinism`]
/// reports label clashes.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicLabeledMdp {
    base: Mdp,
    labels: Vec<Observation>,
}

impl DeterministicLabeledMdp {
    pub fn new(base: Mdp, labels: Vec<Observation>) -> Result<Self, ModelError> {
        if labels.len() != base.num_states() {
            return Err(ModelError::LabelCount {
                expected: base.num_states(),
                actual: labels.len(),
            });
        }
        Ok(Self { base, labels })
    }

    /// A single state labeled `label` with a self-loop on every action.
    pub fn single_state(actions: ActionAlphabet, label: Observation) -> Self {
        let row = actions.ids().map(|a| (a, Distribution::point(StateId(0)))).collect();
        let base = Mdp::new(actions, StateId(0), vec![row]).expect("self-loop model is valid");
        Self {
            base,
            labels: vec![label],
        }
    }

    pub fn mdp(&self) -> &Mdp {
        &self.base
    }

    pub fn label(&self, s: StateId) -> &Observation {
        &self.labels[s.index()]
    }

    pub fn labels(&self) -> &[Observation] {
        &self.labels
    }

    pub fn actions(&self) -> &ActionAlphabet {
        self.base.actions()
    }

    pub fn initial(&self) -> StateId {
        self.base.initial()
    }

    pub fn num_states(&self) -> usize {
        self.base.num_states()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        self.base.states()
    }

    pub fn transition(&self, s: StateId, a: ActionId) -> Option<&Distribution<StateId>> {
        self.base.transition(s, a)
    }

    pub fn is_action_complete(&self) -> bool {
        self.base.is_action_complete()
    }

    pub fn has_label(&self, o: &Observation) -> bool {
        self.labels.contains(o)
    }

    /// Lists every `(state, action, label)` where two distinct
    /// positive-probability successors share a label. Empty means deterministic.
    pub fn check_determinism(&self) -> Vec<DeterminismViolation> {
        let mut violations = Vec::new();
        for s in self.states() {
            for (&action, dist) in self.base.transitions_from(s) {
                let mut seen: Vec<&Observation> = Vec::with_capacity(dist.len());
                let mut reported: Vec<&Observation> = Vec::new();
                for target in dist.outcomes() {
                    let label = self.label(*target);
                    if seen.contains(&label) {
                        if !reported.contains(&label) {
                            reported.push(label);
                            violations.push(DeterminismViolation {
                                state: s,
                                action,
                                label: *label,
                            });
                        }
                    } else {
                        seen.push(label);
                    }
                }
            }
        }
        violations
    }

    /// The successor of `s` under `a` labeled `o`, or `None` when no
    /// positive-probability successor carries that label.
    pub fn successor_by_label(&self, s: StateId, a: ActionId, o: &Observation) -> Result<Option<StateId>, ModelError> {
        if s.index() >= self.num_states() {
            return Err(ModelError::UnknownState(s));
        }
        let dist = self
            .transition(s, a)
            .ok_or(ModelError::ActionUnavailable { state: s, action: a })?;
        Ok(dist.outcomes().copied().find(|t| self.label(*t) == o))
    }

    pub(crate) fn into_parts(self) -> (Mdp, Vec<Observation>) {
        (self.base, self.labels)
    }
}

/// One step of a reward trace: the action taken, the reward gained and the
/// state reached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardStep<S> {
    pub action: ActionId,
    pub reward: f64,
    pub next: S,
}

/// An episode log `s0 a1 r1 s1 ... an rn sn` over concrete states `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTrace<S> {
    pub initial: S,
    pub steps: Vec<RewardStep<S>>,
}

impl<S> RewardTrace<S> {
    pub fn new(initial: S) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted sum of rewards.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Drops rewards and maps every concrete state through `abstraction`.
    pub fn abstract_with(&self, mut abstraction: impl FnMut(&S) -> Observation) -> ObservationTrace {
        ObservationTrace {
            initial: abstraction(&self.initial),
            steps: self
                .steps
                .iter()
                .map(|s| (s.action, abstraction(&s.next)))
                .collect(),
        }
    }
}

/// `o0 a1 o1 ... an on`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationTrace {
    pub initial: Observation,
    pub steps: Vec<(ActionId, Observation)>,
}

impl ObservationTrace {
    pub fn new(initial: Observation) -> Self {
        Self {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

//! Shielded reinforcement learning in slippery gridworlds.
//!
//! The workbench trains a tabular Q-learning agent, records the abstract
//! traces it produces, learns a deterministic labeled MDP from them with
//! IOAlergia and synthesizes a bounded-horizon safety shield from that model.
//! The shield restricts the agent in the next iteration.

pub mod agent;
pub mod direction;
pub mod gridworld;
pub mod learning;
pub mod shield;
pub mod mdp;
pub mod pipeline;
mod text;

pub use direction::Direction;
pub use mdp::{
    ActionAlphabet, ActionId, DeterministicLabeledMdp, Distribution, Mdp, Observation, ObservationTrace, RewardTrace,
    StateId,
};
pub use text::ParseError;

//! Tabular Q-learning restricted to shield-allowed actions.

use std::collections::{HashMap, HashSet};
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::direction::Direction;
use crate::gridworld::{GridworldSpec, Pos, StepError, Terminal};
use crate::mdp::{DeterministicLabeledMdp, Observation, RewardStep, RewardTrace, StateId};
use crate::shield::Shield;
use crate::text::{content_lines, parse_token, Exact, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("t_max must be positive")]
    ZeroHorizon,
}

/// Which actions the bootstrap `max` ranges over in the update target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BootstrapSet {
    /// Every action, as in the unconstrained update rule.
    All,
    /// Only the actions the shield allows in the next state.
    Allowed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon0: f64,
    /// Multiplied into the exploration rate after every training episode.
    pub epsilon_decay: f64,
    pub t_max: usize,
    pub bootstrap: BootstrapSet,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.9,
            epsilon0: 0.4,
            epsilon_decay: 0.9999,
            t_max: 200,
            bootstrap: BootstrapSet::All,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let check = |name, value: f64, ok: bool, range| {
            if ok {
                Ok(())
            } else {
                Err(AgentError::OutOfRange { name, value, range })
            }
        };
        check("alpha", self.alpha, self.alpha > 0.0 && self.alpha <= 1.0, "(0, 1]")?;
        check("gamma", self.gamma, (0.0..=1.0).contains(&self.gamma), "[0, 1]")?;
        check("epsilon0", self.epsilon0, (0.0..=1.0).contains(&self.epsilon0), "[0, 1]")?;
        check(
            "epsilon_decay",
            self.epsilon_decay,
            self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0,
            "(0, 1]",
        )?;
        if self.t_max == 0 {
            return Err(AgentError::ZeroHorizon);
        }
        Ok(())
    }
}

/// Q-values over concrete positions; absent entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    q: HashMap<(Pos, Direction), f64>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, s: Pos, a: Direction) -> f64 {
        self.q.get(&(s, a)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, s: Pos, a: Direction, value: f64) {
        self.q.insert((s, a), value);
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn max_over(&self, s: Pos, actions: &[Direction]) -> f64 {
        actions
            .iter()
            .map(|a| self.get(s, *a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Entries in canonical order: by `y`, then `x`, then action.
    pub fn entries(&self) -> Vec<(Pos, Direction, f64)> {
        let mut v: Vec<_> = self.q.iter().map(|(&(p, a), &q)| (p, a, q)).collect();
        v.sort_by_key(|(p, a, _)| (p.y, p.x, *a));
        v
    }
}

/// `x y action value` per line.
pub fn serialize_qtable(q: &QTable) -> String {
    let mut out = String::new();
    for (p, a, v) in q.entries() {
        writeln!(out, "{} {} {} {}", p.x, p.y, a, Exact(v)).unwrap();
    }
    out
}

pub fn parse_qtable(text: &str) -> Result<QTable, ParseError> {
    let mut q = QTable::new();
    for (ln, line) in content_lines(text) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(ParseError::at_line(ln, "expected `x y action value`"));
        }
        let pos = Pos::new(parse_token(f[0], ln, "x")?, parse_token(f[1], ln, "y")?);
        let a: Direction = parse_token(f[2], ln, "action")?;
        let v: f64 = parse_token(f[3], ln, "value")?;
        if !v.is_finite() {
            return Err(ParseError::at_line(ln, "Q-values must be finite"));
        }
        q.set(pos, a, v);
    }
    Ok(q)
}

/// One temporal-difference step. `next` is `None` when the step ended the
/// episode, in which case the bootstrap term is 0; otherwise it carries the
/// next position and the actions the `max` ranges over.
pub fn q_update(q: &mut QTable, s: Pos, a: Direction, r: f64, next: Option<(Pos, &[Direction])>, cfg: &AgentConfig) {
    let bootstrap = next.map_or(0.0, |(p, actions)| q.max_over(p, actions));
    let old = q.get(s, a);
    q.set(s, a, (1.0 - cfg.alpha) * old + cfg.alpha * (r + cfg.gamma * bootstrap));
}

/// ε-greedy over `allowed`, breaking argmax ties uniformly at random.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: Pos, allowed: &[Direction], epsilon: f64, rng: &mut R) -> Direction {
    assert!(!allowed.is_empty(), "shield allowed no action");
    if rng.gen::<f64>() < epsilon {
        return *allowed.choose(rng).expect("non-empty");
    }
    let best = q.max_over(s, allowed);
    let ties: Vec<Direction> = allowed.iter().copied().filter(|a| q.get(s, *a) == best).collect();
    *ties.choose(rng).expect("the maximum is attained")
}

/// A learned model with its shield, prepared for tracking during episodes.
#[derive(Debug, Clone)]
pub struct ShieldContext {
    shield: Shield,
    model: Option<DeterministicLabeledMdp>,
    known: HashSet<Observation>,
}

impl ShieldContext {
    pub fn new(model: DeterministicLabeledMdp, shield: Shield) -> Self {
        let known = model.labels().iter().copied().collect();
        Self {
            shield,
            model: Some(model),
            known,
        }
    }

    /// No model and no restrictions.
    pub fn unshielded() -> Self {
        Self {
            shield: Shield::allow_all(Direction::alphabet()),
            model: None,
            known: HashSet::new(),
        }
    }

    pub fn shield(&self) -> &Shield {
        &self.shield
    }

    pub fn model(&self) -> Option<&DeterministicLabeledMdp> {
        self.model.as_ref()
    }

    /// Allowed actions for tracked state `s` under observation `o`, and
    /// whether the lookup fell back to allow-all because `o` labels no state.
    fn allowed(&self, s: StateId, o: &Observation) -> (Vec<Direction>, bool) {
        if self.model.is_none() {
            return (Direction::ALL.to_vec(), false);
        }
        if !self.known.contains(o) {
            return (Direction::ALL.to_vec(), true);
        }
        match self.shield.allowed_actions(s) {
            Ok(ids) => (ids.into_iter().filter_map(Direction::from_action_id).collect(), false),
            Err(_) => (Direction::ALL.to_vec(), true),
        }
    }
}

/// Follows the observed label from `current`; on a miss stays put.
pub fn track_model_state(
    model: &DeterministicLabeledMdp,
    current: StateId,
    a: Direction,
    observed: &Observation,
) -> (StateId, bool) {
    match model.successor_by_label(current, a.action_id(), observed) {
        Ok(Some(next)) => (next, false),
        _ => (current, true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trace: RewardTrace<Pos>,
    pub terminal: Option<Terminal>,
    pub tracking_misses: usize,
    pub unknown_lookups: usize,
}

impl EpisodeOutcome {
    pub fn total_reward(&self) -> f64 {
        self.trace.total_reward()
    }

    pub fn violated(&self) -> bool {
        self.terminal == Some(Terminal::PitFallen)
    }
}

/// One episode: the environment and the tracked model state advance in
/// lockstep; actions are chosen among those the shield allows for the
/// tracked state. With `learn` unset the Q-table is left untouched.
pub fn run_shielded_episode<R: Rng + ?Sized>(
    spec: &GridworldSpec,
    q: &mut QTable,
    ctx: &ShieldContext,
    cfg: &AgentConfig,
    epsilon: f64,
    learn: bool,
    rng: &mut R,
) -> Result<EpisodeOutcome, StepError> {
    let mut env = spec.reset();
    let mut tracked = ctx.model.as_ref().map_or(StateId(0), |m| m.initial());
    let mut trace = RewardTrace::new(env.pos);
    let mut terminal = None;
    let mut tracking_misses = 0;
    let mut unknown_lookups = 0;

    let mut obs = spec.abstract_observation(env.pos);
    let (mut allowed, mut unknown) = ctx.allowed(tracked, &obs);
    for _ in 0..cfg.t_max {
        unknown_lookups += usize::from(unknown);
        let a = select_action(q, env.pos, &allowed, epsilon, rng);
        let step = spec.step(env, a, rng)?;
        obs = spec.abstract_observation(step.next.pos);
        if let Some(model) = &ctx.model {
            let (next, miss) = track_model_state(model, tracked, a, &obs);
            tracked = next;
            tracking_misses += usize::from(miss);
        }
        (allowed, unknown) = ctx.allowed(tracked, &obs);
        if learn {
            let next = match (step.terminal, cfg.bootstrap) {
                (Some(_), _) => None,
                (None, BootstrapSet::All) => Some((step.next.pos, &Direction::ALL[..])),
                (None, BootstrapSet::Allowed) => Some((step.next.pos, &allowed[..])),
            };
            q_update(q, env.pos, a, step.reward, next, cfg);
        }
        trace.steps.push(RewardStep {
            action: a.action_id(),
            reward: step.reward,
            next: step.next.pos,
        });
        env = step.next;
        if step.terminal.is_some() {
            terminal = step.terminal;
            break;
        }
    }
    Ok(EpisodeOutcome {
        trace,
        terminal,
        tracking_misses,
        unknown_lookups,
    })
}

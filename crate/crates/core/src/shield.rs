//! Bounded-horizon probabilistic shields.
//!
//! `val(s, a, h)` is the maximal probability of avoiding bad states for `h`
//! steps when `a` is executed first in `s`; `optval(s, h)` is the best `val`
//! over all actions. An action is blocked when `val < λ · optval`.

use std::fmt;
use std::fmt::Write;
use std::sync::Arc;

use thiserror::Error;

use crate::mdp::{model_hash, ActionAlphabet, ActionId, DeterministicLabeledMdp, Observation, StateId};
use crate::text::{content_lines, parse_token, Exact, ParseError};

pub const DEFAULT_LAMBDA: f64 = 0.95;
pub const DEFAULT_HORIZON: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShieldError {
    #[error("model is not action-complete: state {state} lacks action {action}")]
    NotActionComplete { state: StateId, action: ActionId },
    #[error("state {0} is not covered by the shield")]
    UnknownState(StateId),
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("horizon must be at least 1")]
    InvalidHorizon,
}

/// `G(¬bad)` restricted to a finite horizon.
#[derive(Clone)]
pub struct SafetyProperty {
    bad: Arc<dyn Fn(&Observation) -> bool + Send + Sync>,
    horizon: usize,
}

impl fmt::Debug for SafetyProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SafetyProperty").field("horizon", &self.horizon).finish_non_exhaustive()
    }
}

impl SafetyProperty {
    pub fn new(horizon: usize, bad: impl Fn(&Observation) -> bool + Send + Sync + 'static) -> Result<Self, ShieldError> {
        if horizon == 0 {
            return Err(ShieldError::InvalidHorizon);
        }
        Ok(Self {
            bad: Arc::new(bad),
            horizon,
        })
    }

    /// Avoid observations flagged as violations (pits and the completion sink).
    pub fn avoid_violations(horizon: usize) -> Result<Self, ShieldError> {
        Self::new(horizon, Observation::is_violation)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_bad(&self, o: &Observation) -> bool {
        (self.bad)(o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyValues {
    /// `state_values[k][s]` for `k` in `0..=h`.
    state_values: Vec<Vec<f64>>,
    /// `action_values[s][a]` realizing `val(s, a, h)`.
    action_values: Vec<Vec<f64>>,
}

impl SafetyValues {
    pub fn horizon(&self) -> usize {
        self.state_values.len() - 1
    }

    pub fn state_value(&self, s: StateId, k: usize) -> f64 {
        self.state_values[k][s.index()]
    }

    pub fn action_value(&self, s: StateId, a: ActionId) -> f64 {
        self.action_values[s.index()][a.index()]
    }

    pub fn action_values(&self, s: StateId) -> &[f64] {
        &self.action_values[s.index()]
    }

    pub fn optval(&self, s: StateId) -> f64 {
        self.action_values[s.index()].iter().copied().fold(0.0, f64::max)
    }
}

fn check_complete(m: &DeterministicLabeledMdp) -> Result<(), ShieldError> {
    for s in m.states() {
        if let Some(action) = m.actions().ids().find(|a| m.transition(s, *a).is_none()) {
            return Err(ShieldError::NotActionComplete { state: s, action });
        }
    }
    Ok(())
}

/// Finite-horizon value iteration: exactly `h` sweeps over the model.
pub fn bounded_safety_values(m: &DeterministicLabeledMdp, prop: &SafetyProperty) -> Result<SafetyValues, ShieldError> {
    check_complete(m)?;
    let h = prop.horizon();
    let bad: Vec<bool> = m.labels().iter().map(|o| prop.is_bad(o)).collect();
    let q = |s: StateId, a: ActionId, v: &[f64]| -> f64 {
        if bad[s.index()] {
            return 0.0;
        }
        m.transition(s, a)
            .expect("checked complete")
            .iter()
            .map(|(t, p)| p * v[t.index()])
            .sum()
    };
    let mut state_values = vec![bad.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect::<Vec<f64>>()];
    for k in 1..=h {
        let prev = &state_values[k - 1];
        let next = m
            .states()
            .map(|s| m.actions().ids().map(|a| q(s, a, prev)).fold(0.0, f64::max))
            .collect();
        state_values.push(next);
    }
    let action_values = m
        .states()
        .map(|s| m.actions().ids().map(|a| q(s, a, &state_values[h - 1])).collect())
        .collect();
    Ok(SafetyValues {
        state_values,
        action_values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShieldEntry {
    pub allowed: Vec<ActionId>,
    pub optval: f64,
    /// `val(s, a, h)` indexed by action.
    pub values: Vec<f64>,
}

/// Maps every model state to its non-empty set of allowed actions.
#[derive(Debug, Clone, PartialEq)]
pub struct Shield {
    actions: ActionAlphabet,
    lambda: f64,
    horizon: usize,
    model_hash: String,
    /// `None` for the allow-all shield, which accepts any state id.
    entries: Option<Vec<ShieldEntry>>,
}

impl Shield {
    /// The trivial shield that never blocks.
    pub fn allow_all(actions: ActionAlphabet) -> Self {
        Self {
            actions,
            lambda: 0.0,
            horizon: 0,
            model_hash: String::new(),
            entries: None,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn model_hash(&self) -> &str {
        &self.model_hash
    }

    pub fn actions(&self) -> &ActionAlphabet {
        &self.actions
    }

    pub fn is_allow_all(&self) -> bool {
        self.entries.is_none()
    }

    pub fn entries(&self) -> Option<&[ShieldEntry]> {
        self.entries.as_deref()
    }

    pub fn num_states(&self) -> Option<usize> {
        self.entries.as_ref().map(Vec::len)
    }

    pub fn allowed_actions(&self, s: StateId) -> Result<Vec<ActionId>, ShieldError> {
        match &self.entries {
            None => Ok(self.actions.ids().collect()),
            Some(entries) => entries
                .get(s.index())
                .map(|e| e.allowed.clone())
                .ok_or(ShieldError::UnknownState(s)),
        }
    }

    pub fn is_allowed(&self, s: StateId, a: ActionId) -> Result<bool, ShieldError> {
        match &self.entries {
            None => Ok(self.actions.contains(a)),
            Some(entries) => entries
                .get(s.index())
                .map(|e| e.allowed.contains(&a))
                .ok_or(ShieldError::UnknownState(s)),
        }
    }
}

/// Actions whose value clears `λ · optval`; never empty since the maximizer
/// qualifies for any `λ ≤ 1`.
pub fn allowed_by_threshold(values: &[f64], lambda: f64) -> Vec<ActionId> {
    let optval = values.iter().copied().fold(0.0, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= lambda * optval)
        .map(|(i, _)| ActionId(i as u16))
        .collect()
}

pub fn synthesize_shield(m: &DeterministicLabeledMdp, prop: &SafetyProperty, lambda: f64) -> Result<Shield, ShieldError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ShieldError::InvalidLambda(lambda));
    }
    let values = bounded_safety_values(m, prop)?;
    let entries = m
        .states()
        .map(|s| {
            let vals = values.action_values(s).to_vec();
            ShieldEntry {
                allowed: allowed_by_threshold(&vals, lambda),
                optval: values.optval(s),
                values: vals,
            }
        })
        .collect();
    Ok(Shield {
        actions: m.actions().clone(),
        lambda,
        horizon: prop.horizon(),
        model_hash: model_hash(m),
        entries: Some(entries),
    })
}

/// ```text
/// lambda 0.95
/// horizon 2
/// model 3f2a9c0b1d4e5f60
/// actions left right up down
/// 0 : left up : 1.0 : 1.0 0.9 1.0 0.5
/// ```
///
/// Each state line is `id : allowed : optval : val(a) for every action`.
/// The allow-all shield is written as a single `allow_all` line after the
/// `actions` header.
pub fn serialize_shield(shield: &Shield) -> String {
    let mut out = String::new();
    let names: Vec<&str> = shield.actions.ids().map(|a| shield.actions.name(a)).collect();
    let Some(entries) = &shield.entries else {
        writeln!(out, "actions {}", names.join(" ")).unwrap();
        out.push_str("allow_all\n");
        return out;
    };
    writeln!(out, "lambda {}", Exact(shield.lambda)).unwrap();
    writeln!(out, "horizon {}", shield.horizon).unwrap();
    writeln!(out, "model {}", shield.model_hash).unwrap();
    writeln!(out, "actions {}", names.join(" ")).unwrap();
    for (s, e) in entries.iter().enumerate() {
        let allowed: Vec<&str> = e.allowed.iter().map(|a| shield.actions.name(*a)).collect();
        let vals: Vec<String> = e.values.iter().map(|v| Exact(*v).to_string()).collect();
        writeln!(out, "{s} : {} : {} : {}", allowed.join(" "), Exact(e.optval), vals.join(" ")).unwrap();
    }
    out
}

pub fn parse_shield(text: &str) -> Result<Shield, ParseError> {
    let mut lambda = None;
    let mut horizon = None;
    let mut hash = None;
    let mut actions: Option<ActionAlphabet> = None;
    let mut entries = Vec::new();
    let mut allow_all = false;
    let mut last = 0;
    for (ln, line) in content_lines(text) {
        last = ln;
        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        match head {
            "lambda" => lambda = Some(parse_token::<f64>(rest.trim(), ln, "lambda")?),
            "horizon" => horizon = Some(parse_token::<usize>(rest.trim(), ln, "horizon")?),
            "model" => hash = Some(rest.trim().to_string()),
            "actions" => {
                actions = Some(
                    ActionAlphabet::new(rest.split_whitespace().map(str::to_string))
                        .map_err(|e| ParseError::at_line(ln, e.to_string()))?,
                )
            }
            "allow_all" => allow_all = true,
            _ => {
                let alphabet = actions
                    .as_ref()
                    .ok_or_else(|| ParseError::at_line(ln, "state line before `actions`"))?;
                entries.push(parse_entry(line, ln, entries.len(), alphabet)?);
            }
        }
    }
    let actions = actions.ok_or_else(|| ParseError::at_line(last, "missing `actions` line"))?;
    if allow_all {
        return Ok(Shield::allow_all(actions));
    }
    let missing = |what: &str| ParseError::at_line(last, format!("missing `{what}` line"));
    Ok(Shield {
        actions,
        lambda: lambda.ok_or_else(|| missing("lambda"))?,
        horizon: horizon.ok_or_else(|| missing("horizon"))?,
        model_hash: hash.ok_or_else(|| missing("model"))?,
        entries: Some(entries),
    })
}

fn parse_entry(line: &str, ln: usize, expected: usize, alphabet: &ActionAlphabet) -> Result<ShieldEntry, ParseError> {
    let fields: Vec<&str> = line.split(':').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(ParseError::at_line(ln, "expected `state : allowed : optval : values`"));
    }
    let s: usize = parse_token(fields[0], ln, "state id")?;
    if s != expected {
        return Err(ParseError::at_line(ln, format!("expected state {expected}, found {s}")));
    }
    let allowed = fields[1]
        .split_whitespace()
        .map(|n| {
            alphabet
                .id(n)
                .ok_or_else(|| ParseError::at_line(ln, format!("unknown action `{n}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if allowed.is_empty() {
        return Err(ParseError::at_line(ln, "allowed set is empty"));
    }
    let values = fields[3]
        .split_whitespace()
        .map(|v| parse_token::<f64>(v, ln, "value"))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != alphabet.len() {
        return Err(ParseError::at_line(ln, format!("expected {} values", alphabet.len())));
    }
    Ok(ShieldEntry {
        allowed,
        optval: parse_token(fields[2], ln, "optval")?,
        values,
    })
}

/// PRISM `mdp` module with a single state variable `s` and a `violation`
/// label over the bad states.
pub fn export_prism(m: &DeterministicLabeledMdp, prop: &SafetyProperty) -> String {
    let mut out = String::from("mdp\n\nmodule learned\n");
    let n = m.num_states();
    writeln!(out, "  s : [0..{}] init {};", n - 1, m.initial()).unwrap();
    for s in m.states() {
        writeln!(out, "  // {s}: {}", m.label(s)).unwrap();
        for (a, dist) in m.mdp().transitions_from(s) {
            let updates: Vec<String> = dist.iter().map(|(t, p)| format!("{}:(s'={t})", Exact(p))).collect();
            writeln!(out, "  [{}] s={s} -> {};", m.actions().name(*a), updates.join(" + ")).unwrap();
        }
    }
    out.push_str("endmodule\n\n");
    let bad: Vec<String> = m
        .states()
        .filter(|s| prop.is_bad(m.label(*s)))
        .map(|s| format!("s={s}"))
        .collect();
    let expr = if bad.is_empty() { "false".to_string() } else { bad.join(" | ") };
    writeln!(out, "label \"violation\" = {expr};").unwrap();
    out
}

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use shieldlearn::gridworld::{GridworldSpec, Tile, TileKind};
use shieldlearn::mdp::PitFlags;
use shieldlearn::{ActionAlphabet, Direction, ActionId, DeterministicLabeledMdp, Distribution, Mdp, Observation, ObservationTrace, StateId};

pub fn alphabet(k: usize) -> ActionAlphabet {
    ActionAlphabet::new((0..k).map(|i| format!("a{i}"))).unwrap()
}

/// A label drawn from a small pool so that distinct states often share one.
pub fn random_label<R: Rng>(rng: &mut R, violation_rate: f64) -> Observation {
    let terrain = *b"abcd".choose(rng).unwrap() as char;
    let pits = Direction::ALL
        .into_iter()
        .filter(|_| rng.gen_bool(0.25))
        .collect::<PitFlags>();
    if rng.gen_bool(violation_rate) {
        Observation::violation(terrain, pits)
    } else {
        Observation::new(terrain, pits)
    }
}

/// Random deterministic labeled MDP. Every `(state, action)` pair is defined
/// when `complete`; otherwise each pair is present with probability 0.7.
pub fn random_model<R: Rng>(rng: &mut R, max_states: usize, max_actions: usize, complete: bool) -> DeterministicLabeledMdp {
    let n = rng.gen_range(1..=max_states);
    let k = rng.gen_range(1..=max_actions);
    let labels: Vec<Observation> = (0..n).map(|_| random_label(rng, 0.2)).collect();
    let rows = (0..n)
        .map(|_| {
            let mut row = BTreeMap::new();
            for a in 0..k {
                if !complete && !rng.gen_bool(0.7) {
                    continue;
                }
                row.insert(ActionId(a as u16), random_successors(rng, &labels));
            }
            row
        })
        .collect();
    let base = Mdp::new(alphabet(k), StateId(rng.gen_range(0..n) as u32), rows).unwrap();
    DeterministicLabeledMdp::new(base, labels).unwrap()
}

/// Up to three successors with pairwise distinct labels and random weights.
fn random_successors<R: Rng>(rng: &mut R, labels: &[Observation]) -> Distribution<StateId> {
    let mut targets: Vec<StateId> = Vec::new();
    for _ in 0..rng.gen_range(1..=3) {
        let t = rng.gen_range(0..labels.len());
        if targets.iter().all(|u| labels[u.index()] != labels[t]) {
            targets.push(StateId(t as u32));
        }
    }
    Distribution::from_counts(targets.into_iter().map(|t| (t, rng.gen_range(1..=20u64)))).unwrap()
}

/// Samples a trace of at most `max_len` steps under uniformly random
/// actions, stopping early in states without actions or in violations.
pub fn sample_trace<R: Rng>(m: &DeterministicLabeledMdp, max_len: usize, rng: &mut R) -> ObservationTrace {
    let mut s = m.initial();
    let mut trace = ObservationTrace::new(*m.label(s));
    for _ in 0..max_len {
        let actions: Vec<ActionId> = m.mdp().available_actions(s).collect();
        if actions.is_empty() || m.label(s).is_violation() {
            break;
        }
        let a = *actions.choose(rng).unwrap();
        s = *m.transition(s, a).unwrap().sample(rng);
        trace.steps.push((a, *m.label(s)));
    }
    trace
}

pub fn sample_traces<R: Rng>(m: &DeterministicLabeledMdp, count: usize, max_len: usize, rng: &mut R) -> Vec<ObservationTrace> {
    (0..count)
        .map(|_| {
            let len = rng.gen_range(0..=max_len);
            sample_trace(m, len, rng)
        })
        .collect()
}

/// Random valid map with one entry and one goal.
pub fn random_map<R: Rng>(rng: &mut R) -> GridworldSpec {
    let (w, h) = (rng.gen_range(2..7), rng.gen_range(1..6));
    let cells = w * h;
    let entry = rng.gen_range(0..cells);
    let goal = (entry + rng.gen_range(1..cells)) % cells;
    let tiles = (0..cells)
        .map(|i| {
            if i == entry {
                return Tile::new('E', TileKind::Entry);
            }
            if i == goal {
                return Tile::new('G', TileKind::Goal);
            }
            let kind = match rng.gen_range(0..10) {
                0 => TileKind::Pit,
                1 => TileKind::Wall,
                2 => TileKind::IntermediateGoal,
                _ => TileKind::Floor,
            };
            let mut tile = Tile::new(*b"abcxyz".choose(rng).unwrap() as char, kind);
            if kind != TileKind::Wall && rng.gen_bool(0.3) {
                tile = tile.with_slip(Direction::ALL[rng.gen_range(0..4)], rng.gen_range(0.01..0.5));
            }
            tile
        })
        .collect();
    GridworldSpec::new(w, h, tiles).unwrap()
}

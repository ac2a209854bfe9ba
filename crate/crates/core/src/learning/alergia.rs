//! Red-blue state merging over the prefix tree.

use std::collections::{BTreeMap, BTreeSet};

use log::debug;

use super::fpta::{compatible_in, IoFpta, IoFptaNode, NodeId};
use super::{LearnError, LearnerConfig};
use crate::mdp::{ActionAlphabet, DeterministicLabeledMdp, Distribution, Mdp, ObservationTrace, StateId};

/// Learns a deterministic labeled MDP from `traces`.
///
/// Blue nodes are visited in shortlex order of their prefix-tree access
/// string; each is merged into the first compatible red node (in promotion
/// order) or promoted. Red nodes become the states, numbered in promotion
/// order, so the initial state is always `0`.
pub fn run_ioalergia(
    traces: &[ObservationTrace],
    actions: &ActionAlphabet,
    config: &LearnerConfig,
) -> Result<DeterministicLabeledMdp, LearnError> {
    config.validate()?;
    for (index, t) in traces.iter().enumerate() {
        if let Some(&(a, _)) = t.steps.iter().find(|(a, _)| !actions.contains(*a)) {
            return Err(LearnError::UnknownAction { trace: index, action: a });
        }
    }
    let tree = IoFpta::build(traces)?;
    let mut hyp = tree.nodes;
    let n = hyp.len();
    let eps = config.epsilon;

    let mut parent = vec![NodeId::MAX; n];
    for (p, node) in hyp.iter().enumerate() {
        for (_, e) in &node.children {
            parent[e.target as usize] = p as NodeId;
        }
    }
    let mut is_red = vec![false; n];
    let mut red: Vec<NodeId> = vec![IoFpta::ROOT];
    is_red[0] = true;
    let mut blue: BTreeSet<NodeId> = hyp[0].children.iter().map(|(_, e)| e.target).collect();

    while let Some(b) = blue.pop_first() {
        match red.iter().copied().find(|&r| compatible_in(&hyp, r, &hyp, b, eps)) {
            Some(r) => {
                let p = parent[b as usize] as usize;
                let edge = hyp[p]
                    .children
                    .iter_mut()
                    .find(|(_, e)| e.target == b)
                    .expect("blue node hangs below its parent");
                edge.1.target = r;
                fold(&mut hyp, &mut parent, &is_red, &mut blue, r, b);
            }
            None => {
                is_red[b as usize] = true;
                red.push(b);
                blue.extend(hyp[b as usize].children.iter().map(|(_, e)| e.target));
            }
        }
    }
    debug!("ioalergia: {} tree nodes, {} states", n, red.len());

    let mut state_of = vec![u32::MAX; n];
    for (i, &r) in red.iter().enumerate() {
        state_of[r as usize] = i as u32;
    }
    let mut rows = Vec::with_capacity(red.len());
    let mut labels = Vec::with_capacity(red.len());
    for &r in &red {
        let node = &hyp[r as usize];
        labels.push(node.label);
        let mut row = BTreeMap::new();
        for a in node.actions() {
            let counts = node
                .children
                .iter()
                .filter(|((b, _), _)| *b == a)
                .map(|(_, e)| (StateId(state_of[e.target as usize]), e.count));
            let dist = Distribution::from_counts(counts).expect("edges have positive counts");
            row.insert(a, dist);
        }
        rows.push(row);
    }
    let base = Mdp::new(actions.clone(), StateId(0), rows).expect("learned structure is well-formed");
    Ok(DeterministicLabeledMdp::new(base, labels).expect("one label per state"))
}

/// Adds the subtree below `b` into the hypothesis rooted at `r`.
fn fold(
    hyp: &mut [IoFptaNode],
    parent: &mut [NodeId],
    is_red: &[bool],
    blue: &mut BTreeSet<NodeId>,
    r: NodeId,
    b: NodeId,
) {
    let mut stack = vec![(r, b)];
    while let Some((x, y)) = stack.pop() {
        let children = std::mem::take(&mut hyp[y as usize].children);
        for (key, e) in children {
            match hyp[x as usize].add_edge(key, e.target, e.count) {
                Some(existing) => stack.push((existing, e.target)),
                None => {
                    parent[e.target as usize] = x;
                    if is_red[x as usize] {
                        blue.insert(e.target);
                    }
                }
            }
        }
    }
}

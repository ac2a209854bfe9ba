//! Input/output frequency prefix tree and the compatibility test.

use std::collections::VecDeque;

use crate::mdp::{ActionId, Observation, ObservationTrace};

use super::LearnError;

pub type NodeId = u32;

/// Outgoing edge keyed by `(action, observation)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub target: NodeId,
    pub count: u64,
}

pub type EdgeKey = (ActionId, Observation);

#[derive(Debug, Clone, PartialEq)]
pub struct IoFptaNode {
    pub label: Observation,
    /// Sorted by key; every count is positive.
    pub children: Vec<(EdgeKey, Edge)>,
}

impl IoFptaNode {
    fn new(label: Observation) -> Self {
        Self {
            label,
            children: Vec::new(),
        }
    }

    pub fn child(&self, key: &EdgeKey) -> Option<Edge> {
        self.children
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| self.children[i].1)
    }

    /// `(observation, count)` pairs for one action.
    pub fn freq(&self, a: ActionId) -> impl Iterator<Item = (Observation, u64)> + '_ {
        let start = self.children.partition_point(|((b, _), _)| *b < a);
        self.children[start..]
            .iter()
            .take_while(move |((b, _), _)| *b == a)
            .map(|((_, o), e)| (*o, e.count))
    }

    /// Distinct actions with at least one continuation, ascending.
    pub fn actions(&self) -> impl Iterator<Item = ActionId> + '_ {
        let mut last = None;
        self.children.iter().filter_map(move |((a, _), _)| {
            if last == Some(*a) {
                None
            } else {
                last = Some(*a);
                Some(*a)
            }
        })
    }

    /// Adds `count` to the edge `key`, creating it towards `target` if absent.
    /// Returns the existing target when the edge was already present.
    pub(crate) fn add_edge(&mut self, key: EdgeKey, target: NodeId, count: u64) -> Option<NodeId> {
        match self.children.binary_search_by(|(k, _)| k.cmp(&key)) {
            Ok(i) => {
                self.children[i].1.count += count;
                Some(self.children[i].1.target)
            }
            Err(i) => {
                self.children.insert(i, (key, Edge { target, count }));
                None
            }
        }
    }
}

/// Prefix tree over observation traces. Node ids follow the shortlex order of
/// the access strings, so the root is `0` and a smaller id means a shorter
/// (or lexicographically smaller) prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct IoFpta {
    pub(crate) nodes: Vec<IoFptaNode>,
}

impl IoFpta {
    pub const ROOT: NodeId = 0;

    pub fn build(traces: &[ObservationTrace]) -> Result<Self, LearnError> {
        let first = traces.first().ok_or(LearnError::EmptyTraceSet)?;
        let mut nodes = vec![IoFptaNode::new(first.initial)];
        for (index, trace) in traces.iter().enumerate() {
            if trace.initial != first.initial {
                return Err(LearnError::InconsistentInitialObservation {
                    trace: index,
                    expected: first.initial,
                    found: trace.initial,
                });
            }
            let mut cur = 0usize;
            for &(a, o) in &trace.steps {
                let fresh = nodes.len() as NodeId;
                cur = match nodes[cur].add_edge((a, o), fresh, 1) {
                    Some(t) => t as usize,
                    None => {
                        nodes.push(IoFptaNode::new(o));
                        fresh as usize
                    }
                };
            }
        }
        Ok(Self { nodes: renumber_shortlex(nodes) })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &IoFptaNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[IoFptaNode] {
        &self.nodes
    }
}

fn renumber_shortlex(nodes: Vec<IoFptaNode>) -> Vec<IoFptaNode> {
    let mut new_id = vec![0 as NodeId; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut queue = VecDeque::from([0usize]);
    while let Some(n) = queue.pop_front() {
        new_id[n] = order.len() as NodeId;
        order.push(n);
        // Children are kept sorted by key, so BFS visits prefixes in shortlex order.
        queue.extend(nodes[n].children.iter().map(|(_, e)| e.target as usize));
    }
    let mut slots: Vec<Option<IoFptaNode>> = nodes.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|old| {
            let mut node = slots[old].take().expect("each node is visited once");
            for (_, e) in &mut node.children {
                e.target = new_id[e.target as usize];
            }
            node
        })
        .collect()
}

/// Hoeffding-bound test on two empirical distributions over observations.
///
/// `f1` and `f2` are `(observation, count)` pairs for the same action; an
/// empty side is trivially compatible.
pub fn hoeffding_compatible(f1: &[(Observation, u64)], f2: &[(Observation, u64)], eps: f64) -> bool {
    let n1: u64 = f1.iter().map(|(_, c)| c).sum();
    let n2: u64 = f2.iter().map(|(_, c)| c).sum();
    if n1 == 0 || n2 == 0 {
        return true;
    }
    let (n1, n2) = (n1 as f64, n2 as f64);
    let bound = ((1.0 / n1).sqrt() + (1.0 / n2).sqrt()) * (0.5 * (2.0 / eps).ln()).sqrt();
    let count = |f: &[(Observation, u64)], o: &Observation| {
        f.iter().find(|(p, _)| p == o).map_or(0, |(_, c)| *c) as f64
    };
    f1.iter()
        .chain(f2)
        .all(|(o, _)| (count(f1, o) / n1 - count(f2, o) / n2).abs() < bound)
}

/// Recursive compatibility of node `a` in `left` with node `b` in `right`:
/// equal labels, Hoeffding-compatible successor frequencies for every action,
/// and compatible successors for every shared `(action, observation)` edge.
///
/// `right` must be acyclic below `b` (an untouched subtree), which bounds the
/// recursion; `left` may contain cycles.
pub(crate) fn compatible_in(left: &[IoFptaNode], a: NodeId, right: &[IoFptaNode], b: NodeId, eps: f64) -> bool {
    let mut stack = vec![(a, b)];
    let mut f1 = Vec::new();
    let mut f2 = Vec::new();
    while let Some((x, y)) = stack.pop() {
        let (nx, ny) = (&left[x as usize], &right[y as usize]);
        if nx.label != ny.label {
            return false;
        }
        for act in ny.actions() {
            f1.clear();
            f1.extend(nx.freq(act));
            f2.clear();
            f2.extend(ny.freq(act));
            if !hoeffding_compatible(&f1, &f2, eps) {
                return false;
            }
        }
        for (key, ey) in &ny.children {
            if let Some(ex) = nx.child(key) {
                stack.push((ex.target, ey.target));
            }
        }
    }
    true
}

/// [`compatible_in`] on two nodes of the same tree.
pub fn compatible(tree: &IoFpta, a: NodeId, b: NodeId, eps: f64) -> bool {
    compatible_in(&tree.nodes, a, &tree.nodes, b, eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::PitFlags;

    fn obs(t: char) -> Observation {
        Observation::new(t, PitFlags::EMPTY)
    }

    fn trace(init: char, steps: &[(u16, char)]) -> ObservationTrace {
        ObservationTrace {
            initial: obs(init),
            steps: steps.iter().map(|&(a, o)| (ActionId(a), obs(o))).collect(),
        }
    }

    #[test]
    fn shared_prefix_counts_twice() {
        let t = trace('a', &[(0, 'b')]);
        let tree = IoFpta::build(&[t.clone(), t]).unwrap();
        assert_eq!(tree.len(), 2);
        let root = tree.node(IoFpta::ROOT);
        assert_eq!(root.label, obs('a'));
        assert_eq!(root.freq(ActionId(0)).collect::<Vec<_>>(), vec![(obs('b'), 2)]);
    }

    #[test]
    fn branching_creates_two_children() {
        let tree = IoFpta::build(&[trace('a', &[(0, 'b')]), trace('a', &[(0, 'c')])]).unwrap();
        let root = tree.node(IoFpta::ROOT);
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.freq(ActionId(0)).collect::<Vec<_>>(), vec![(obs('b'), 1), (obs('c'), 1)]);
    }

    #[test]
    fn ids_follow_shortlex_order() {
        let tree = IoFpta::build(&[
            trace('a', &[(1, 'z'), (0, 'q')]),
            trace('a', &[(0, 'y'), (1, 'r')]),
            trace('a', &[(0, 'x')]),
        ])
        .unwrap();
        let labels: String = tree.nodes().iter().map(|n| n.label.terrain).collect();
        assert_eq!(labels, "axyzrq");
    }

    #[test]
    fn inconsistent_initial_is_rejected() {
        let err = IoFpta::build(&[trace('a', &[]), trace('b', &[])]).unwrap_err();
        assert_eq!(
            err,
            LearnError::InconsistentInitialObservation {
                trace: 1,
                expected: obs('a'),
                found: obs('b')
            }
        );
        assert_eq!(IoFpta::build(&[]).unwrap_err(), LearnError::EmptyTraceSet);
    }

    #[test]
    fn hoeffding_reference_values() {
        let a = |n| vec![(obs('A'), n)];
        let b = |n| vec![(obs('B'), n)];
        assert!(!hoeffding_compatible(&a(1000), &b(1000), 0.05));
        assert!(!hoeffding_compatible(&a(10), &b(10), 0.05));
        assert!(hoeffding_compatible(&a(2), &b(2), 0.05));
        assert!(hoeffding_compatible(&a(7), &a(3), 0.05));
        assert!(hoeffding_compatible(&[], &b(5), 0.05));
        // (2/sqrt(1000)) * sqrt(0.5 ln 40) = 0.0859
        let mixed = vec![(obs('A'), 540), (obs('B'), 460)];
        let even = vec![(obs('A'), 500), (obs('B'), 500)];
        assert!(hoeffding_compatible(&mixed, &even, 0.05));
        let skewed = vec![(obs('A'), 590), (obs('B'), 410)];
        assert!(!hoeffding_compatible(&skewed, &even, 0.05));
    }

    #[test]
    fn compatibility_of_leaves_and_labels() {
        let tree = IoFpta::build(&[trace('a', &[(0, 'b'), (0, 'b')]), trace('a', &[(1, 'c')])]).unwrap();
        // nodes: 0=a, 1=b (via 0), 2=c (via 1), 3=b (leaf)
        assert!(compatible(&tree, 1, 3, 0.05));
        assert!(!compatible(&tree, 1, 2, 0.05));
    }
}

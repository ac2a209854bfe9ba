mod common;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldlearn::learning::{hoeffding_compatible, run_ioalergia, IoFpta, LearnerConfig};
use shieldlearn::mdp::PitFlags;
use shieldlearn::shield::{bounded_safety_values, SafetyProperty};
use shieldlearn::{ActionId, DeterministicLabeledMdp, Direction, Observation, ObservationTrace, StateId};

/// Best probability of avoiding violations for `k` more steps, by plain
/// recursion over every path.
fn stay_safe(m: &DeterministicLabeledMdp, s: StateId, k: usize) -> f64 {
    if m.label(s).is_violation() {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    m.actions()
        .ids()
        .map(|a| step_safe(m, s, a, k))
        .fold(0.0, f64::max)
}

fn step_safe(m: &DeterministicLabeledMdp, s: StateId, a: ActionId, k: usize) -> f64 {
    if m.label(s).is_violation() {
        return 0.0;
    }
    m.transition(s, a)
        .unwrap()
        .iter()
        .map(|(t, p)| p * stay_safe(m, *t, k - 1))
        .sum()
}

#[test]
fn safety_values_match_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5afe);
    for _ in 0..100 {
        let m = common::random_model(&mut rng, 10, 3, true);
        for h in 1..=3 {
            let values = bounded_safety_values(&m, &SafetyProperty::avoid_violations(h).unwrap()).unwrap();
            for s in m.states() {
                for a in m.actions().ids() {
                    let want = step_safe(&m, s, a, h);
                    assert!((values.action_value(s, a) - want).abs() <= 1e-9, "h={h} s={s} a={a}");
                }
                assert!((values.optval(s) - stay_safe(&m, s, h)).abs() <= 1e-9);
            }
        }
    }
}

/// Draws a fresh label each time, so every prefix-tree node is unique.
struct Labels(usize);

impl Labels {
    fn fresh(&mut self) -> Observation {
        const TERRAIN: &[u8] = b"abcdfhijklmnopqrstuvwxyz0123456789";
        let i = self.0;
        self.0 += 1;
        let pits = Direction::ALL
            .into_iter()
            .filter(|d| (i / TERRAIN.len()) & (1 << d.index()) != 0)
            .collect::<PitFlags>();
        Observation::new(TERRAIN[i % TERRAIN.len()] as char, pits)
    }
}

type Prefix = Vec<(ActionId, Observation)>;

#[test]
fn unmergeable_traces_learn_the_normalized_prefix_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let actions = common::alphabet(rng.gen_range(1..=3));
        let mut labels = Labels(0);
        let root = labels.fresh();
        let mut child: HashMap<(Prefix, ActionId, usize), Observation> = HashMap::new();
        let traces: Vec<ObservationTrace> = (0..rng.gen_range(1..=50))
            .map(|_| {
                let mut t = ObservationTrace::new(root);
                for _ in 0..rng.gen_range(0..=4) {
                    let a = *actions.ids().collect::<Vec<_>>().choose(&mut rng).unwrap();
                    let branch = rng.gen_range(0..2);
                    let o = *child.entry((t.steps.clone(), a, branch)).or_insert_with(|| labels.fresh());
                    t.steps.push((a, o));
                }
                t
            })
            .collect();

        let mut tally: BTreeMap<Prefix, BTreeMap<ActionId, BTreeMap<Observation, u64>>> = BTreeMap::new();
        tally.entry(Vec::new()).or_default();
        for t in &traces {
            for i in 0..t.steps.len() {
                let (a, o) = t.steps[i];
                *tally.entry(t.steps[..i].to_vec()).or_default().entry(a).or_default().entry(o).or_default() += 1;
                tally.entry(t.steps[..=i].to_vec()).or_default();
            }
        }

        let m = run_ioalergia(&traces, &actions, &LearnerConfig { epsilon: 0.05 }).unwrap();
        assert_eq!(m.num_states(), tally.len());
        for (prefix, out) in &tally {
            let mut s = m.initial();
            for (a, o) in prefix {
                s = m.successor_by_label(s, *a, o).unwrap().unwrap();
            }
            assert_eq!(m.mdp().transitions_from(s).len(), out.len());
            for (a, counts) in out {
                let total: u64 = counts.values().sum();
                let dist = m.transition(s, *a).unwrap();
                assert_eq!(dist.len(), counts.len());
                for (o, c) in counts {
                    let t = m.successor_by_label(s, *a, o).unwrap().unwrap();
                    assert!((dist.probability(&t) - *c as f64 / total as f64).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn root_counts_match_first_step_tally() {
    let m = shieldlearn::mdp::parse_model(
        "actions a b
initial 0
state 0 x{}
state 1 y{}
state 2 z{PD}
trans 0 a 1:0.3 2:0.7
trans 0 b 0:0.5 1:0.5
trans 1 a 0:1.0
trans 1 b 2:1.0
trans 2 a 0:0.2 1:0.8
trans 2 b 2:1.0
",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let traces: Vec<ObservationTrace> = (0..1000).map(|_| common::sample_trace(&m, 5, &mut rng)).collect();
    let mut first: BTreeMap<(ActionId, Observation), u64> = BTreeMap::new();
    for t in &traces {
        *first.entry(t.steps[0]).or_default() += 1;
    }
    let tree = IoFpta::build(&traces).unwrap();
    let root = tree.node(IoFpta::ROOT);
    let mut counted: BTreeMap<(ActionId, Observation), u64> = BTreeMap::new();
    for a in root.actions() {
        for (o, c) in root.freq(a) {
            counted.insert((a, o), c);
        }
    }
    assert_eq!(counted, first);
    assert_eq!(counted.values().sum::<u64>(), 1000);
}

#[test]
fn hoeffding_test_matches_the_closed_form_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let obs: Vec<Observation> = "a{} b{} c{PL}".split(' ').map(|s| s.parse().unwrap()).collect();
    for _ in 0..2000 {
        let eps: f64 = rng.gen_range(0.001..1.0);
        let f1: Vec<(Observation, u64)> = obs.iter().map(|o| (*o, rng.gen_range(0..30))).collect();
        let f2: Vec<(Observation, u64)> = obs.iter().map(|o| (*o, rng.gen_range(0..30))).collect();
        let n1: u64 = f1.iter().map(|x| x.1).sum();
        let n2: u64 = f2.iter().map(|x| x.1).sum();
        let want = n1 == 0
            || n2 == 0
            || f1.iter().zip(&f2).all(|(a, b)| {
                let diff = (a.1 as f64 / n1 as f64 - b.1 as f64 / n2 as f64).abs();
                let bound = ((1.0 / n1 as f64).sqrt() + (1.0 / n2 as f64).sqrt()) * (0.5 * (2.0 / eps).ln()).sqrt();
                diff < bound
            });
        assert_eq!(hoeffding_compatible(&f1, &f2, eps), want);
    }
}

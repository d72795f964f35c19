//! Seeded generators and independent reference computations shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use massynth_core::format::ModelFile;
use massynth_core::pctl::{Bound, Comparator, PathFormula, StateFormula};
use massynth_core::{ActionId, ActionKind, Mdp, RawMdp, StateId, Team};
use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn load_model(rel: &str) -> (ModelFile, Team) {
    let text = std::fs::read_to_string(repo_path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
    let file = ModelFile::from_json(&text).unwrap();
    let team = file.to_team().unwrap();
    (file, team)
}

pub const CORPUS: &[&str] = &[
    "models/example1.json",
    "models/rendezvous.json",
    "models/coin.json",
    "crates/cli/tests/data/lossy.json",
    "crates/cli/tests/data/disjoint.json",
];

/// Probabilities with small integer weights over up to `max_support`
/// distinct successors among `0..n`.
pub fn random_distribution(rng: &mut impl Rng, n: usize, max_support: usize) -> Vec<(usize, f64)> {
    let mut targets: Vec<usize> = (0..n).collect();
    targets.shuffle(rng);
    let k = rng.random_range(1..=max_support.min(n));
    let weights: Vec<u32> = (0..k).map(|_| rng.random_range(1..=9)).collect();
    let total: u32 = weights.iter().sum();
    targets[..k]
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| (t, w as f64 / total as f64))
        .collect()
}

/// Random MDP over states `s0..s(n-1)` and independent actions `labels`;
/// every state enables between 1 and `max_actions` of them.
pub fn random_mdp(rng: &mut impl Rng, n: usize, labels: &[&str], max_actions: usize) -> Mdp {
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut raw = RawMdp::new(&states[0]).states(states.iter().map(String::as_str));
    for l in labels {
        raw = raw.action(l, ActionKind::Independent);
    }
    for s in &states {
        let k = rng.random_range(1..=max_actions.min(labels.len()));
        let mut chosen = labels.to_vec();
        chosen.shuffle(rng);
        for a in &chosen[..k] {
            for (t, p) in random_distribution(rng, n, 3) {
                raw = raw.transition(s, a, &states[t], p);
            }
        }
    }
    raw.build().unwrap()
}

/// Random boolean combination of action atoms.
pub fn random_state_formula(rng: &mut impl Rng, atoms: &[&str], depth: usize) -> StateFormula {
    let leaf = depth == 0 || rng.random_bool(0.4);
    if leaf {
        return if rng.random_bool(0.1) {
            StateFormula::True
        } else {
            StateFormula::atom(atoms.choose(rng).unwrap())
        };
    }
    match rng.random_range(0..3) {
        0 => StateFormula::not(random_state_formula(rng, atoms, depth - 1)),
        1 => StateFormula::and(
            random_state_formula(rng, atoms, depth - 1),
            random_state_formula(rng, atoms, depth - 1),
        ),
        _ => StateFormula::not(StateFormula::and(
            StateFormula::not(random_state_formula(rng, atoms, depth - 1)),
            StateFormula::not(random_state_formula(rng, atoms, depth - 1)),
        )),
    }
}

/// Truth of a formula without probability operators, from the model alone.
pub fn holds_plain(model: &Mdp, s: StateId, f: &StateFormula) -> bool {
    match f {
        StateFormula::True => true,
        StateFormula::Action(label) => model.action_id(label).is_some_and(|a| model.is_enabled(s, a)),
        StateFormula::Not(inner) => !holds_plain(model, s, inner),
        StateFormula::And(l, r) => holds_plain(model, s, l) && holds_plain(model, s, r),
        StateFormula::Prob { .. } => panic!("nested probability operator in a reference check"),
    }
}

pub fn plain_mask(model: &Mdp, f: &StateFormula) -> Vec<bool> {
    model.state_ids().map(|s| holds_plain(model, s, f)).collect()
}

/// Dense chain: `rows[s]` lists `(successor, probability)`.
pub type Chain = Vec<Vec<(usize, f64)>>;

pub fn chain_under(model: &Mdp, policy: &[ActionId]) -> Chain {
    model
        .state_ids()
        .map(|s| {
            model
                .distribution(s, policy[s.0])
                .expect("policy picks enabled actions")
                .support()
                .iter()
                .map(|&(t, p)| (t.0, p))
                .collect()
        })
        .collect()
}

pub fn reachable(chain: &Chain, start: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        for &(t, p) in &chain[s] {
            if p > 0.0 && seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    seen
}

/// Probability of `left U<=k right` (or `X right` when `next`) in a chain,
/// for every start state. Unbounded until is solved as a linear system over
/// the states that can reach `right` through `left`.
pub fn chain_path_prob(chain: &Chain, left: &[bool], right: &[bool], bound: Option<u64>, next: bool) -> Vec<f64> {
    let n = chain.len();
    let step = |x: &[f64], s: usize| chain[s].iter().map(|&(t, p)| p * x[t]).sum::<f64>();
    if next {
        let goal: Vec<f64> = right.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
        return (0..n).map(|s| step(&goal, s)).collect();
    }
    if let Some(k) = bound {
        let mut x: Vec<f64> = right.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
        for _ in 0..k {
            x = (0..n)
                .map(|s| {
                    if right[s] {
                        1.0
                    } else if left[s] {
                        step(&x, s)
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        return x;
    }
    // backward reachability of `right` through `left`
    let mut can = right.to_vec();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !can[s] && left[s] && chain[s].iter().any(|&(t, p)| p > 0.0 && can[t]) {
                can[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&s| can[s] && !right[s]).collect();
    let index = |s: usize| free.iter().position(|&f| f == s);
    let m = free.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (i, &s) in free.iter().enumerate() {
        for &(t, p) in &chain[s] {
            if right[t] {
                b[i] += p;
            } else if let Some(j) = index(t) {
                a[(i, j)] -= p;
            }
        }
    }
    let sol = if m == 0 {
        DVector::zeros(0)
    } else {
        a.lu().solve(&b).expect("absorbing system is nonsingular")
    };
    (0..n)
        .map(|s| {
            if right[s] {
                1.0
            } else {
                index(s).map_or(0.0, |i| sol[i])
            }
        })
        .collect()
}

/// Value of a core probability operator's path formula at `start` in the
/// chain induced by `policy`. Sub-formulas must be plain.
pub fn policy_path_prob(model: &Mdp, policy: &[ActionId], start: StateId, path: &PathFormula) -> f64 {
    let chain = chain_under(model, policy);
    let n = model.num_states();
    match path {
        PathFormula::Next(body) => chain_path_prob(&chain, &vec![true; n], &plain_mask(model, body), None, true)[start.0],
        PathFormula::Until { left, bound, right } => chain_path_prob(
            &chain,
            &plain_mask(model, left),
            &plain_mask(model, right),
            bound.steps(),
            false,
        )[start.0],
        other => panic!("derived operator {other} in a reference check"),
    }
}

/// Threshold comparison with the same tie snapping as the library, written
/// out independently.
pub fn within(cmp: Comparator, value: f64, p: f64) -> bool {
    let v = if (value - p).abs() <= 1e-9 { p } else { value };
    match cmp {
        Comparator::Ge => v >= p,
        Comparator::Gt => v > p,
        Comparator::Le => v <= p,
        Comparator::Lt => v < p,
    }
}

/// All stationary deterministic policies of `model` (one action per state),
/// in odometer order.
pub fn all_policies(model: &Mdp) -> impl Iterator<Item = Vec<ActionId>> + '_ {
    let arity: Vec<usize> = model.state_ids().map(|s| model.choices(s).len()).collect();
    let mut digits = vec![0usize; arity.len()];
    let mut done = arity.contains(&0);
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let current = digits
            .iter()
            .enumerate()
            .map(|(s, &d)| model.choices(StateId(s))[d].action)
            .collect();
        let mut i = 0;
        loop {
            if i == digits.len() {
                done = true;
                break;
            }
            digits[i] += 1;
            if digits[i] < arity[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        Some(current)
    })
}

pub fn policy_count(model: &Mdp) -> f64 {
    model.state_ids().map(|s| model.choices(s).len() as f64).product()
}

pub fn bound_of(k: Option<u64>) -> Bound {
    k.map_or(Bound::Unbounded, Bound::Steps)
}

//! Shared fixtures for the criterion benches.

use massynth_core::synthesis::PathTarget;
use massynth_core::{ActionKind, Bound, Mdp, RawMdp, StateFormula, Team};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` agents on a line of `w` regions; neighbours share handshake `h{i}`
/// enabled in the last region, so the whole team forms one chain of
/// dependencies.
pub fn line_team(n: usize, w: usize) -> Team {
    let states: Vec<String> = (0..w).map(|i| format!("r{i}")).collect();
    let members = (1..=n)
        .map(|i| {
            let (right, stay) = (format!("x{i}_right"), format!("x{i}_stay"));
            let shared: Vec<String> = [i.checked_sub(1).filter(|&j| j >= 1), (i < n).then_some(i)]
                .into_iter()
                .flatten()
                .map(|j| format!("h{j}"))
                .collect();
            let mut raw = RawMdp::new(&states[0])
                .states(states.iter().map(String::as_str))
                .action(&right, ActionKind::Independent)
                .action(&stay, ActionKind::Independent);
            for h in &shared {
                raw = raw.action(h, ActionKind::Handshake);
            }
            for (k, s) in states.iter().enumerate() {
                raw = raw.transition(s, &stay, s, 1.0);
                if k + 1 < w {
                    raw = raw
                        .transition(s, &right, &states[k + 1], 0.9)
                        .transition(s, &right, s, 0.1);
                }
            }
            for h in &shared {
                raw = raw.transition(&states[w - 1], h, &states[w - 1], 1.0);
            }
            (format!("x{i}"), raw.build().expect("valid agent"), StateFormula::True)
        })
        .collect();
    Team::new(members).expect("valid team")
}

/// Random MDP with `n` states, two or three actions per state and up to
/// four distinct successors per action.
pub fn random_mdp(n: usize, seed: u64) -> Mdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut raw = RawMdp::new(&states[0]).states(states.iter().map(String::as_str));
    for a in ["a", "b", "c"] {
        raw = raw.action(a, ActionKind::Independent);
    }
    for s in &states {
        let k = rng.random_range(2..=3);
        for a in &["a", "b", "c"][..k] {
            let support = rng.random_range(1..=4.min(n));
            for t in rand::seq::index::sample(&mut rng, n, support) {
                raw = raw.transition(s, a, &states[t], 1.0 / support as f64);
            }
        }
    }
    raw.build().expect("valid random model")
}

/// Reach the last tenth of the states, avoiding nothing.
pub fn reach_tail(n: usize, bound: Bound) -> PathTarget {
    PathTarget::Until {
        left: vec![true; n],
        right: (0..n).map(|i| i >= n - n / 10 - 1).collect(),
        bound,
    }
}

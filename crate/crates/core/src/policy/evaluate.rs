//! Exact path-formula probabilities on the chain induced by a (partial)
//! stationary policy.

use std::collections::VecDeque;

use crate::mdp::{ActionId, Mdp, StateId};
use crate::pctl::Bound;
use crate::synthesis::PathTarget;

/// Probability of `target` from `start` when `choice` fixes one action per
/// state. Every state reachable from `start` must have a choice. The second
/// component is the residual of the linear solve for unbounded until.
pub fn path_probability(
    model: &Mdp,
    choice: &[Option<ActionId>],
    start: StateId,
    target: &PathTarget,
) -> (f64, Option<f64>) {
    let row = |s: StateId| {
        let a = choice[s.0].expect("reachable state without a choice");
        model.distribution(s, a).expect("chosen action is enabled")
    };
    match target {
        PathTarget::Next(goal) => (row(start).mass_where(|t| goal[t.0]), None),
        PathTarget::Until {
            left,
            right,
            bound: Bound::Steps(k),
        } => {
            let reach = reachable(model, choice, start);
            let mut x: Vec<f64> = right.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
            for _ in 0..*k {
                let mut next = x.clone();
                for &s in &reach {
                    if !right[s.0] && left[s.0] {
                        next[s.0] = row(s).expect(&x);
                    }
                }
                x = next;
            }
            (x[start.0].clamp(0.0, 1.0), None)
        }
        PathTarget::Until {
            left,
            right,
            bound: Bound::Unbounded,
        } => unbounded(model, choice, start, left, right),
    }
}

fn reachable(model: &Mdp, choice: &[Option<ActionId>], start: StateId) -> Vec<StateId> {
    let mut seen = vec![false; model.num_states()];
    seen[start.0] = true;
    let mut order = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        let a = choice[s.0].expect("reachable state without a choice");
        for &(t, _) in model.distribution(s, a).expect("enabled").support() {
            if !seen[t.0] {
                seen[t.0] = true;
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    order
}

fn unbounded(
    model: &Mdp,
    choice: &[Option<ActionId>],
    start: StateId,
    left: &[bool],
    right: &[bool],
) -> (f64, Option<f64>) {
    let reach = reachable(model, choice, start);
    let n = model.num_states();
    let mut in_reach = vec![false; n];
    for s in &reach {
        in_reach[s.0] = true;
    }
    let row = |s: StateId| model.distribution(s, choice[s.0].unwrap()).unwrap();
    // states with positive probability: backward closure of `right`
    let mut positive: Vec<bool> = (0..n).map(|i| in_reach[i] && right[i]).collect();
    loop {
        let mut changed = false;
        for &s in &reach {
            if positive[s.0] || !left[s.0] {
                continue;
            }
            if row(s).support().iter().any(|(t, _)| positive[t.0]) {
                positive[s.0] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    if right[start.0] {
        return (1.0, Some(0.0));
    }
    if !positive[start.0] {
        return (0.0, Some(0.0));
    }
    let unknown: Vec<StateId> = reach
        .iter()
        .copied()
        .filter(|s| positive[s.0] && !right[s.0])
        .collect();
    let mut index = vec![usize::MAX; n];
    for (i, s) in unknown.iter().enumerate() {
        index[s.0] = i;
    }
    let m = unknown.len();
    // (I - P) x = b
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        for &(t, p) in row(s).support() {
            if right[t.0] {
                b[i] += p;
            } else if index[t.0] != usize::MAX {
                a[i][index[t.0]] -= p;
            }
        }
    }
    let x = solve_dense(a.clone(), b.clone());
    let residual = (0..m)
        .map(|i| ((0..m).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i]).abs())
        .fold(0.0, f64::max);
    (x[index[start.0]].clamp(0.0, 1.0), Some(residual))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let m = b.len();
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let d = a[col][col];
        for row in col + 1..m {
            let f = a[row][col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionKind::Independent, RawMdp};

    #[test]
    fn chain_values() {
        // s0 -a-> {s0: 0.5, g: 0.3, x: 0.2}
        let m = RawMdp::new("s0")
            .states(["s0", "g", "x"])
            .action("a", Independent)
            .action("e", Independent)
            .transition("s0", "a", "s0", 0.5)
            .transition("s0", "a", "g", 0.3)
            .transition("s0", "a", "x", 0.2)
            .transition("g", "e", "g", 1.0)
            .transition("x", "e", "x", 1.0)
            .build()
            .unwrap();
        let choice = vec![Some(ActionId(0)), Some(ActionId(1)), Some(ActionId(1))];
        let left = vec![true, true, true];
        let right = vec![false, true, false];
        let (v, r) = path_probability(
            &m,
            &choice,
            StateId(0),
            &PathTarget::Until {
                left: left.clone(),
                right: right.clone(),
                bound: Bound::Unbounded,
            },
        );
        assert!((v - 0.6).abs() < 1e-12);
        assert!(r.unwrap() < 1e-12);
        let (v, _) = path_probability(
            &m,
            &choice,
            StateId(0),
            &PathTarget::Until {
                left,
                right: right.clone(),
                bound: Bound::Steps(2),
            },
        );
        assert!((v - 0.45).abs() < 1e-12);
        let (v, _) = path_probability(&m, &choice, StateId(0), &PathTarget::Next(right));
        assert!((v - 0.3).abs() < 1e-12);
    }
}

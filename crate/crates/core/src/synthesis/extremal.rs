//! Extremal probabilities by value iteration.

use rayon::prelude::*;

use super::qualitative::{prob0_max, prob0_min, prob1_max, prob1_min};
use super::{Convergence, ExtremalResult, Objective, SatSet, UntilPartition, TIE_TOLERANCE};
use crate::mdp::{ActionId, Choice, Mdp};

/// Models at least this large are swept in parallel.
const PARALLEL_SWEEP: usize = 4096;

impl Objective {
    fn pick(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Objective::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Objective::Min => values.fold(f64::INFINITY, f64::min),
        }
    }

    fn attains(self, q: f64, best: f64) -> bool {
        match self {
            Objective::Max => q >= best - TIE_TOLERANCE,
            Objective::Min => q <= best + TIE_TOLERANCE,
        }
    }
}

fn choice_sums(choices: &[Choice], x: &[f64]) -> Vec<f64> {
    choices.iter().map(|c| c.dist.expect(x).min(1.0)).collect()
}

/// Actions whose one-step value ties the best one. Measured against the best
/// choice rather than the state value, which after an early stop of value
/// iteration can trail it by up to the convergence threshold.
fn witnesses_from(model: &Mdp, objective: Objective, choice_values: &[Vec<f64>]) -> Vec<Vec<ActionId>> {
    model
        .state_ids()
        .map(|s| {
            let best = objective.pick(choice_values[s.0].iter().copied());
            model
                .choices(s)
                .iter()
                .zip(&choice_values[s.0])
                .filter(|(_, q)| objective.attains(**q, best))
                .map(|(c, _)| c.action)
                .collect()
        })
        .collect()
}

/// Per-choice sums `Σ δ(s,α,·) x` for states in `free`; states outside it get
/// `fixed` for every choice.
fn all_choice_values(model: &Mdp, x: &[f64], free: &[bool], fixed: &[f64]) -> Vec<Vec<f64>> {
    model
        .state_ids()
        .map(|s| {
            let cs = model.choices(s);
            if free[s.0] {
                choice_sums(cs, x)
            } else {
                vec![fixed[s.0]; cs.len()]
            }
        })
        .collect()
}

/// One Jacobi sweep over the states in `free`. Returns the new vector and
/// the sup-norm change.
fn sweep(model: &Mdp, objective: Objective, x: &[f64], free: &[bool]) -> (Vec<f64>, f64) {
    let update = |i: usize| -> f64 {
        if free[i] {
            objective.pick(
                model
                    .choices(crate::mdp::StateId(i))
                    .iter()
                    .map(|c| c.dist.expect(x).min(1.0)),
            )
        } else {
            x[i]
        }
    };
    let next: Vec<f64> = if x.len() >= PARALLEL_SWEEP {
        (0..x.len()).into_par_iter().map(update).collect()
    } else {
        (0..x.len()).map(update).collect()
    };
    let residual = next
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (next, residual)
}

/// `max`/`min` over actions of the one-step probability of entering `target`.
pub fn prob_next_extremal(model: &Mdp, target: &SatSet, objective: Objective) -> ExtremalResult {
    let x: Vec<f64> = model
        .state_ids()
        .map(|s| if target.contains(s) { 1.0 } else { 0.0 })
        .collect();
    let everywhere = vec![true; model.num_states()];
    let choice_values = all_choice_values(model, &x, &everywhere, &x);
    let values: Vec<f64> = choice_values
        .iter()
        .map(|qs| objective.pick(qs.iter().copied()))
        .collect();
    let witnesses = witnesses_from(model, objective, &choice_values);
    ExtremalResult {
        objective,
        values,
        witnesses,
        choice_values,
        convergence: None,
    }
}

/// `k`-step until probabilities by `k` sweeps of the recursion
/// `x_i(s) = opt_α Σ δ(s,α,s') x_{i-1}(s')` on the remaining states.
pub fn prob_bounded_until_extremal(
    model: &Mdp,
    part: &UntilPartition,
    k: u64,
    objective: Objective,
) -> ExtremalResult {
    let rem = part.rem_mask();
    let base: Vec<f64> = part.yes_mask().iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    let mut x = base.clone();
    let mut previous = x.clone();
    for _ in 0..k {
        previous = x.clone();
        x = sweep(model, objective, &x, &rem).0;
    }
    let choice_values = if k == 0 {
        all_choice_values(model, &base, &vec![false; rem.len()], &base)
    } else {
        all_choice_values(model, &previous, &rem, &base)
    };
    let witnesses = witnesses_from(model, objective, &choice_values);
    ExtremalResult {
        objective,
        values: x,
        witnesses,
        choice_values,
        convergence: None,
    }
}

/// Unbounded until: 0/1 precomputation, then sweeps from 0 until the
/// sup-norm change drops below `epsilon` or `max_iters` is reached.
pub fn prob_unbounded_until_extremal(
    model: &Mdp,
    part: &UntilPartition,
    objective: Objective,
    epsilon: f64,
    max_iters: u64,
) -> ExtremalResult {
    let yes = part.yes_mask();
    let rem = part.rem_mask();
    let (zero, one) = match objective {
        Objective::Max => (prob0_max(model, &yes, &rem), prob1_max(model, &yes, &rem)),
        Objective::Min => (prob0_min(model, &yes, &rem), prob1_min(model, &yes, &rem)),
    };
    let free: Vec<bool> = (0..rem.len()).map(|i| rem[i] && !zero[i] && !one[i]).collect();
    let mut x: Vec<f64> = one.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    let mut iterations = 0;
    let mut residual = 0.0;
    let mut converged = !free.iter().any(|&f| f);
    while !converged && iterations < max_iters {
        let (next, r) = sweep(model, objective, &x, &free);
        x = next;
        residual = r;
        iterations += 1;
        converged = r < epsilon;
    }
    let fixed: Vec<f64> = x.clone();
    let base_yes: Vec<f64> = yes.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    // choice values everywhere except the original yes/no states
    let choice_values: Vec<Vec<f64>> = model
        .state_ids()
        .map(|s| {
            let cs = model.choices(s);
            if rem[s.0] {
                choice_sums(cs, &x)
            } else {
                vec![base_yes[s.0].max(fixed[s.0]); cs.len()]
            }
        })
        .collect();
    let witnesses = witnesses_from(model, objective, &choice_values);
    ExtremalResult {
        objective,
        values: x,
        witnesses,
        choice_values,
        convergence: Some(Convergence {
            iterations,
            residual,
            converged,
        }),
    }
}

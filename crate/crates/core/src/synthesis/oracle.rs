//! Exhaustive evaluation of small instances, used to cross-check value
//! iteration.
//!
//! [`brute_force_extremal`] unrolls the tree of finite histories, lets the
//! controller pick an action at every history, and decides each branch by
//! reading the path formula off the explicit path. History-dependent choice
//! is needed: for bounded until the best stationary policy can be strictly
//! worse than the optimum. [`stationary_extremal`] restricts to stationary
//! policies and is exact for next and a one-sided bound for bounded until.

use super::{ExtremalResult, Objective, PathTarget, SynthesisError, TIE_TOLERANCE};
use crate::mdp::{ActionId, Mdp, StateId};
use crate::pctl::Bound;

pub const ORACLE_MAX_STATES: usize = 8;
pub const ORACLE_MAX_ACTIONS: usize = 3;
pub const ORACLE_MAX_STEPS: u64 = 6;

fn check_size(model: &Mdp, target: &PathTarget) -> Result<u64, SynthesisError> {
    if model.num_states() > ORACLE_MAX_STATES {
        return Err(SynthesisError::TooLarge(format!("{} states", model.num_states())));
    }
    if let Some(s) = model
        .state_ids()
        .find(|&s| model.choices(s).len() > ORACLE_MAX_ACTIONS)
    {
        return Err(SynthesisError::TooLarge(format!(
            "{} actions at {}",
            model.choices(s).len(),
            model.state_label(s)
        )));
    }
    match target {
        PathTarget::Next(_) => Ok(1),
        PathTarget::Until {
            bound: Bound::Steps(k),
            ..
        } if *k <= ORACLE_MAX_STEPS => Ok(*k),
        PathTarget::Until {
            bound: Bound::Steps(k),
            ..
        } => Err(SynthesisError::TooLarge(format!("bound {k}"))),
        PathTarget::Until {
            bound: Bound::Unbounded,
            ..
        } => Err(SynthesisError::TooLarge("unbounded until".into())),
    }
}

fn optimum(objective: Objective, qs: &[f64]) -> f64 {
    match objective {
        Objective::Max => qs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Objective::Min => qs.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

fn history_value(model: &Mdp, target: &PathTarget, objective: Objective, path: &mut Vec<StateId>) -> f64 {
    if let Some(b) = target.decided(path) {
        return if b { 1.0 } else { 0.0 };
    }
    let qs: Vec<f64> = choice_values(model, target, objective, path);
    optimum(objective, &qs)
}

fn choice_values(model: &Mdp, target: &PathTarget, objective: Objective, path: &mut Vec<StateId>) -> Vec<f64> {
    let last = *path.last().expect("nonempty path");
    model
        .choices(last)
        .iter()
        .map(|c| {
            let mut total = 0.0;
            for &(t, p) in c.dist.support() {
                path.push(t);
                total += p * history_value(model, target, objective, path);
                path.pop();
            }
            total
        })
        .collect()
}

/// Optimum over all (history-dependent) policies, per start state.
pub fn brute_force_extremal(
    model: &Mdp,
    target: &PathTarget,
    objective: Objective,
) -> Result<ExtremalResult, SynthesisError> {
    check_size(model, target)?;
    let mut values = Vec::with_capacity(model.num_states());
    let mut witnesses = Vec::with_capacity(model.num_states());
    let mut all_q = Vec::with_capacity(model.num_states());
    for s in model.state_ids() {
        let mut path = vec![s];
        let (v, q) = match target.decided(&path) {
            Some(b) => {
                let v = if b { 1.0 } else { 0.0 };
                (v, vec![v; model.choices(s).len()])
            }
            None => {
                let q = choice_values(model, target, objective, &mut path);
                (optimum(objective, &q), q)
            }
        };
        let w: Vec<ActionId> = model
            .choices(s)
            .iter()
            .zip(&q)
            .filter(|(_, &x)| (x - v).abs() <= TIE_TOLERANCE)
            .map(|(c, _)| c.action)
            .collect();
        values.push(v);
        witnesses.push(w);
        all_q.push(q);
    }
    Ok(ExtremalResult {
        objective,
        values,
        witnesses,
        choice_values: all_q,
        convergence: None,
    })
}

/// Probability of the path formula from `start` in the chain induced by a
/// stationary policy, by summing over explicit paths.
fn policy_value(model: &Mdp, target: &PathTarget, policy: &[usize], path: &mut Vec<StateId>, mass: f64) -> f64 {
    if let Some(b) = target.decided(path) {
        return if b { mass } else { 0.0 };
    }
    let last = *path.last().expect("nonempty path");
    let choice = &model.choices(last)[policy[last.0]];
    let mut total = 0.0;
    for &(t, p) in choice.dist.support() {
        path.push(t);
        total += policy_value(model, target, policy, path, mass * p);
        path.pop();
    }
    total
}

/// Optimum over stationary deterministic policies only, per start state.
pub fn stationary_extremal(
    model: &Mdp,
    target: &PathTarget,
    objective: Objective,
) -> Result<Vec<f64>, SynthesisError> {
    check_size(model, target)?;
    let arity: Vec<usize> = model.state_ids().map(|s| model.choices(s).len()).collect();
    let mut policy = vec![0usize; arity.len()];
    let mut best = vec![
        match objective {
            Objective::Max => f64::NEG_INFINITY,
            Objective::Min => f64::INFINITY,
        };
        arity.len()
    ];
    loop {
        for s in model.state_ids() {
            let v = policy_value(model, target, &policy, &mut vec![s], 1.0);
            best[s.0] = optimum(objective, &[best[s.0], v]);
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == policy.len() {
                return Ok(best);
            }
            policy[i] += 1;
            if policy[i] < arity[i] {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
    }
}

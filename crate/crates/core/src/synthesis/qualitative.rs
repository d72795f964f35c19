//! Graph-based 0/1 precomputation for unbounded until.
//!
//! All functions take `yes`/`rem` masks of an until partition and return
//! state masks.

use crate::mdp::{Choice, Mdp};

fn fixpoint(model: &Mdp, init: Vec<bool>, rem: &[bool], mut add: impl FnMut(&[Choice], &[bool]) -> bool) -> Vec<bool> {
    let mut set = init;
    loop {
        let mut changed = false;
        for s in model.state_ids() {
            if set[s.0] || !rem[s.0] {
                continue;
            }
            if add(model.choices(s), &set) {
                set[s.0] = true;
                changed = true;
            }
        }
        if !changed {
            return set;
        }
    }
}

fn hits(c: &Choice, set: &[bool]) -> bool {
    c.dist.support().iter().any(|(t, _)| set[t.0])
}

/// States where the maximal probability is 0.
pub fn prob0_max(model: &Mdp, yes: &[bool], rem: &[bool]) -> Vec<bool> {
    let reach = fixpoint(model, yes.to_vec(), rem, |cs, set| cs.iter().any(|c| hits(c, set)));
    reach.iter().map(|r| !r).collect()
}

/// States where the minimal probability is 0: some policy avoids `yes` surely.
pub fn prob0_min(model: &Mdp, yes: &[bool], rem: &[bool]) -> Vec<bool> {
    let forced = fixpoint(model, yes.to_vec(), rem, |cs, set| cs.iter().all(|c| hits(c, set)));
    forced.iter().map(|r| !r).collect()
}

/// States where the maximal probability is 1.
pub fn prob1_max(model: &Mdp, yes: &[bool], rem: &[bool]) -> Vec<bool> {
    let zero = prob0_max(model, yes, rem);
    let mut u: Vec<bool> = zero.iter().map(|z| !z).collect();
    loop {
        let inside = u.clone();
        let rem_inside: Vec<bool> = rem.iter().zip(&inside).map(|(a, b)| *a && *b).collect();
        let r = fixpoint(model, yes.to_vec(), &rem_inside, |cs, set| {
            cs.iter().any(|c| {
                c.dist.support().iter().all(|(t, _)| inside[t.0]) && hits(c, set)
            })
        });
        if r == u {
            return u;
        }
        u = r;
    }
}

/// States where the minimal probability is 1: no policy can reach a
/// minimal-zero state with positive probability.
pub fn prob1_min(model: &Mdp, yes: &[bool], rem: &[bool]) -> Vec<bool> {
    let zero = prob0_min(model, yes, rem);
    let escape = fixpoint(model, zero, rem, |cs, set| cs.iter().any(|c| hits(c, set)));
    escape.iter().map(|r| !r).collect()
}

//! Monte Carlo runs of Markov chains.
//!
//! Trial `i` of a run with seed `s` draws from ChaCha8 seeded with
//! `seed_from_u64(s)` on stream `i`, so any trial can be replayed alone and
//! the result does not depend on how trials are spread over threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{ActionId, Dtmc, FinitePath, StateId};
use crate::synthesis::PathTarget;

/// Traces kept in a report.
pub const SAMPLE_TRACES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("max_steps must be at least 1")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(trials: usize, max_steps: usize, seed: u64) -> Result<Self, SimError> {
        if trials == 0 {
            return Err(SimError::NoTrials);
        }
        if max_steps == 0 {
            return Err(SimError::NoSteps);
        }
        Ok(Self {
            trials,
            max_steps,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub estimate: f64,
    /// `sqrt(p(1-p)/n)`.
    pub stderr: f64,
    pub trials: usize,
    /// Some trial ended at `max_steps` without deciding the formula; the
    /// estimate is then a lower bound.
    pub truncated: bool,
    /// The first few sampled paths.
    pub samples: Vec<FinitePath>,
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn step(d: &Dtmc, s: StateId, rng: &mut impl Rng) -> StateId {
    let support = d.row(s).support();
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(t, p) in support {
        acc += p;
        if u < acc {
            return t;
        }
    }
    support.last().expect("rows are nonempty").0
}

/// Samples `max_steps` transitions from `start`.
pub fn simulate_path(d: &Dtmc, start: StateId, max_steps: usize, rng: &mut impl Rng) -> FinitePath {
    let mut path = FinitePath::start(start);
    for _ in 0..max_steps {
        let next = step(d, path.last(), rng);
        path.push(None, next);
    }
    path
}

/// Samples until the formula is decided or `max_steps` is reached.
fn run_trial(d: &Dtmc, target: &PathTarget, max_steps: usize, rng: &mut impl Rng) -> (Option<bool>, FinitePath) {
    let mut path = FinitePath::start(d.initial());
    loop {
        if let Some(b) = target.decided(&path.states) {
            return (Some(b), path);
        }
        if path.len() == max_steps {
            return (None, path);
        }
        let next = step(d, path.last(), rng);
        path.push(None, next);
    }
}

/// Fraction of sampled paths from the chain's initial state satisfying the
/// path formula.
pub fn estimate_path_prob(d: &Dtmc, target: &PathTarget, cfg: &SimConfig) -> SimReport {
    let outcomes: Vec<(Option<bool>, Option<FinitePath>)> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, i as u64);
            let (verdict, path) = run_trial(d, target, cfg.max_steps, &mut rng);
            (verdict, (i < SAMPLE_TRACES).then_some(path))
        })
        .collect();
    let hits = outcomes.iter().filter(|(v, _)| *v == Some(true)).count();
    let truncated = outcomes.iter().any(|(v, _)| v.is_none());
    let n = cfg.trials as f64;
    let estimate = hits as f64 / n;
    SimReport {
        estimate,
        stderr: (estimate * (1.0 - estimate) / n).sqrt(),
        trials: cfg.trials,
        truncated,
        samples: outcomes.into_iter().filter_map(|(_, p)| p).collect(),
    }
}

/// One line per step: `step<TAB>state<TAB>action`, the action column empty
/// where the path records none.
pub fn format_trace(
    path: &FinitePath,
    state_label: impl Fn(StateId) -> String,
    action_label: impl Fn(ActionId) -> String,
) -> String {
    let mut out = String::new();
    for k in 0..=path.len() {
        let s = path.state_at(k).expect("within path");
        let a = path.actions.get(k).copied().flatten().map(&action_label).unwrap_or_default();
        out.push_str(&format!("{k}\t{}\t{a}\n", state_label(s)));
    }
    out
}

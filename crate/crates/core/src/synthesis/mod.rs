//! PCTL model checking and controller synthesis on an MDP.
//!
//! `P⋈p[ψ]` is reduced to an extremal probability. In existential mode a
//! state satisfies the operator when *some* policy meets the bound (lower
//! bounds use the maximum, upper bounds the minimum); in universal mode every
//! policy has to (lower bounds use the minimum, upper bounds the maximum).

mod extremal;
mod oracle;
pub mod qualitative;

use std::collections::BTreeSet;

use thiserror::Error;

pub use extremal::{prob_bounded_until_extremal, prob_next_extremal, prob_unbounded_until_extremal};
pub use oracle::{brute_force_extremal, stationary_extremal, ORACLE_MAX_ACTIONS, ORACLE_MAX_STATES, ORACLE_MAX_STEPS};

use crate::mdp::{ActionId, Mdp, StateId};
use crate::pctl::{rewrite_derived, Bound, Comparator, PathFormula, StateFormula};

/// Absolute tolerance used for argmax/argmin sets and threshold ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Some policy meets the bound.
    #[default]
    Existential,
    /// Every policy meets the bound.
    Universal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Max,
    Min,
}

impl Objective {
    /// Extremum deciding `P⋈p` under `mode`.
    pub fn for_operator(mode: ThresholdMode, cmp: Comparator) -> Self {
        match (mode, cmp.is_lower_bound()) {
            (ThresholdMode::Existential, true) | (ThresholdMode::Universal, false) => Objective::Max,
            (ThresholdMode::Existential, false) | (ThresholdMode::Universal, true) => Objective::Min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub mode: ThresholdMode,
    /// Sup-norm stopping tolerance for unbounded until.
    pub epsilon: f64,
    pub max_iters: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            mode: ThresholdMode::Existential,
            epsilon: 1e-8,
            max_iters: 1_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("instance too large for exhaustive evaluation: {0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatSet {
    pub formula: StateFormula,
    pub states: BTreeSet<StateId>,
}

impl SatSet {
    pub fn contains(&self, s: StateId) -> bool {
        self.states.contains(&s)
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for s in &self.states {
            m[s.0] = true;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UntilClass {
    Yes,
    No,
    Rem,
}

/// Split of the state space for `φ1 U φ2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UntilPartition {
    class: Vec<UntilClass>,
}

impl UntilPartition {
    pub fn new(left: &[bool], right: &[bool]) -> Self {
        let class = left
            .iter()
            .zip(right)
            .map(|(&l, &r)| match (l, r) {
                (_, true) => UntilClass::Yes,
                (false, false) => UntilClass::No,
                (true, false) => UntilClass::Rem,
            })
            .collect();
        Self { class }
    }

    pub fn from_sat(model: &Mdp, left: &SatSet, right: &SatSet) -> Self {
        let n = model.num_states();
        Self::new(&left.mask(n), &right.mask(n))
    }

    pub fn class(&self, s: StateId) -> UntilClass {
        self.class[s.0]
    }

    fn members(&self, c: UntilClass) -> Vec<StateId> {
        (0..self.class.len())
            .filter(|&i| self.class[i] == c)
            .map(StateId)
            .collect()
    }

    pub fn yes(&self) -> Vec<StateId> {
        self.members(UntilClass::Yes)
    }

    pub fn no(&self) -> Vec<StateId> {
        self.members(UntilClass::No)
    }

    pub fn rem(&self) -> Vec<StateId> {
        self.members(UntilClass::Rem)
    }

    pub fn yes_mask(&self) -> Vec<bool> {
        self.class.iter().map(|&c| c == UntilClass::Yes).collect()
    }

    pub fn rem_mask(&self) -> Vec<bool> {
        self.class.iter().map(|&c| c == UntilClass::Rem).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub iterations: u64,
    /// Sup-norm change of the last sweep.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalResult {
    pub objective: Objective,
    pub values: Vec<f64>,
    /// Actions attaining the extremum at each state, within [`TIE_TOLERANCE`].
    pub witnesses: Vec<Vec<ActionId>>,
    /// Per-state, per-choice probabilities (choice order of the model).
    pub choice_values: Vec<Vec<f64>>,
    /// Present for unbounded until.
    pub convergence: Option<Convergence>,
}

impl ExtremalResult {
    pub fn value(&self, s: StateId) -> f64 {
        self.values[s.0]
    }
}

/// A path formula with its state subformulas resolved to masks.
#[derive(Debug, Clone, PartialEq)]
pub enum PathTarget {
    Next(Vec<bool>),
    Until {
        left: Vec<bool>,
        right: Vec<bool>,
        bound: Bound,
    },
}

impl PathTarget {
    /// Resolves a core path formula on `model`.
    pub fn resolve(model: &Mdp, path: &PathFormula, config: &SynthesisConfig) -> Self {
        let n = model.num_states();
        match path {
            PathFormula::Next(body) => PathTarget::Next(sat_states(model, body, config).mask(n)),
            PathFormula::Until { left, bound, right } => PathTarget::Until {
                left: sat_states(model, left, config).mask(n),
                right: sat_states(model, right, config).mask(n),
                bound: *bound,
            },
            PathFormula::Eventually { .. } | PathFormula::Always { .. } => {
                let wrapped = rewrite_derived(&StateFormula::prob(Comparator::Ge, 0.0, path.clone()));
                match wrapped {
                    StateFormula::Prob { path, .. } => Self::resolve(model, &path, config),
                    _ => unreachable!("rewrite keeps the operator"),
                }
            }
        }
    }

    /// Truth of the path formula on every path extending `prefix`, if the
    /// prefix already fixes it.
    pub fn decided(&self, prefix: &[StateId]) -> Option<bool> {
        match self {
            PathTarget::Next(goal) => prefix.get(1).map(|s| goal[s.0]),
            PathTarget::Until { left, right, bound } => {
                let k = bound.steps().map(|k| k as usize);
                for (i, s) in prefix.iter().enumerate() {
                    if k.is_some_and(|k| i > k) {
                        return Some(false);
                    }
                    if right[s.0] {
                        return Some(true);
                    }
                    if !left[s.0] {
                        return Some(false);
                    }
                }
                k.is_some_and(|k| prefix.len() > k).then_some(false)
            }
        }
    }

    /// Extremal probabilities of this target.
    pub fn extremal(&self, model: &Mdp, objective: Objective, config: &SynthesisConfig) -> ExtremalResult {
        match self {
            PathTarget::Next(target) => {
                let sat = SatSet {
                    formula: StateFormula::True,
                    states: (0..target.len()).filter(|&i| target[i]).map(StateId).collect(),
                };
                prob_next_extremal(model, &sat, objective)
            }
            PathTarget::Until { left, right, bound } => {
                let part = UntilPartition::new(left, right);
                match bound {
                    Bound::Steps(k) => prob_bounded_until_extremal(model, &part, *k, objective),
                    Bound::Unbounded => prob_unbounded_until_extremal(
                        model,
                        &part,
                        objective,
                        config.epsilon,
                        config.max_iters,
                    ),
                }
            }
        }
    }
}

/// `value ⋈ p` after snapping values within [`TIE_TOLERANCE`] of `p` onto it.
pub fn meets(cmp: Comparator, value: f64, p: f64) -> bool {
    let v = if (value - p).abs() <= TIE_TOLERANCE { p } else { value };
    cmp.holds(v, p)
}

/// Outcome of checking one probability operator.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorCheck {
    pub sat: SatSet,
    pub extremal: ExtremalResult,
}

/// States satisfying `P⋈p[ψ]` under `config.mode`.
pub fn check_prob_operator(
    model: &Mdp,
    cmp: Comparator,
    p: f64,
    path: &PathFormula,
    config: &SynthesisConfig,
) -> OperatorCheck {
    let target = PathTarget::resolve(model, path, config);
    let r = check_resolved(model, cmp, p, &target, config);
    OperatorCheck {
        sat: SatSet {
            formula: StateFormula::prob(cmp, p, path.clone()),
            states: r.sat,
        },
        extremal: r.extremal,
    }
}

/// Result of checking a probability bound against a resolved target.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedCheck {
    pub sat: BTreeSet<StateId>,
    pub extremal: ExtremalResult,
}

/// As [`check_prob_operator`], with sub-formulas already resolved.
pub fn check_resolved(
    model: &Mdp,
    cmp: Comparator,
    p: f64,
    target: &PathTarget,
    config: &SynthesisConfig,
) -> ResolvedCheck {
    let objective = Objective::for_operator(config.mode, cmp);
    let extremal = target.extremal(model, objective, config);
    let sat = model
        .state_ids()
        .filter(|s| meets(cmp, extremal.values[s.0], p))
        .collect();
    ResolvedCheck { sat, extremal }
}

/// Satisfaction set of a state formula. Derived operators are rewritten
/// first; nested probability operators are resolved bottom-up.
pub fn sat_states(model: &Mdp, formula: &StateFormula, config: &SynthesisConfig) -> SatSet {
    let core = rewrite_derived(formula);
    let states = sat_core(model, &core, config);
    SatSet {
        formula: core,
        states,
    }
}

fn sat_core(model: &Mdp, f: &StateFormula, config: &SynthesisConfig) -> BTreeSet<StateId> {
    match f {
        StateFormula::True => model.state_ids().collect(),
        StateFormula::Action(label) => match model.action_id(label) {
            Some(a) => model.state_ids().filter(|&s| model.is_enabled(s, a)).collect(),
            None => BTreeSet::new(),
        },
        StateFormula::Not(inner) => {
            let sat = sat_core(model, inner, config);
            model.state_ids().filter(|s| !sat.contains(s)).collect()
        }
        StateFormula::And(l, r) => {
            let left = sat_core(model, l, config);
            let right = sat_core(model, r, config);
            left.intersection(&right).copied().collect()
        }
        StateFormula::Prob {
            cmp,
            threshold,
            path,
        } => check_prob_operator(model, *cmp, *threshold, path, config).sat.states,
    }
}

/// Per-state actions surviving elimination for `P⋈p[ψ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllowedActions {
    pub per_state: Vec<Vec<ActionId>>,
    pub check: OperatorCheck,
}

impl AllowedActions {
    pub fn allowed(&self, s: StateId) -> &[ActionId] {
        &self.per_state[s.0]
    }
}

/// Keeps the actions whose one-step value (the inner sum of the final
/// iteration) meets the bound. States outside the satisfaction set keep
/// nothing.
pub fn synthesize_allowed_actions(
    model: &Mdp,
    cmp: Comparator,
    p: f64,
    path: &PathFormula,
    config: &SynthesisConfig,
) -> AllowedActions {
    let check = check_prob_operator(model, cmp, p, path, config);
    let per_state = model
        .state_ids()
        .map(|s| {
            if !check.sat.contains(s) {
                return Vec::new();
            }
            model
                .choices(s)
                .iter()
                .zip(&check.extremal.choice_values[s.0])
                .filter(|(_, q)| meets(cmp, **q, p))
                .map(|(c, _)| c.action)
                .collect()
        })
        .collect();
    AllowedActions { per_state, check }
}

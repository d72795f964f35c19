//! Markov decision processes, Markov chains, paths and stationary policies.
//!
//! States and actions are addressed by dense indices ([`StateId`],
//! [`ActionId`]) assigned in declaration order; labels are kept alongside for
//! reporting and for matching regions across agents.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

/// Absolute tolerance on row sums of probability distributions.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl StateId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether an action has to be executed jointly with other agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Handshake,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub label: String,
    pub kind: ActionKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model has no states")]
    NoStates,
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("duplicate action `{0}`")]
    DuplicateAction(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("duplicate transition ({from}, {action}, {to})")]
    DuplicateTransition {
        from: String,
        action: String,
        to: String,
    },
    #[error("probability {prob} of transition ({from}, {action}, {to}) is outside [0, 1]")]
    InvalidProbability {
        from: String,
        action: String,
        to: String,
        prob: f64,
    },
    #[error("row ({state}, {action}) sums to {sum}, expected 1")]
    RowSum {
        state: String,
        action: String,
        sum: f64,
    },
    #[error("state `{0}` has no available action")]
    Deadlock(String),
    #[error("action `{action}` is not available at state `{state}`")]
    ActionNotAvailable { state: String, action: String },
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("policy covers {got} states, model has {expected}")]
    PolicyArity { expected: usize, got: usize },
}

/// A finite-support probability distribution over states.
///
/// Entries have strictly positive probability, no state appears twice and the
/// probabilities sum to one within [`ROW_SUM_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Vec<(StateId, f64)>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("probability {1} for state {0:?} is outside [0, 1]")]
    OutOfRange(StateId, f64),
    #[error("state {0:?} appears twice")]
    Duplicate(StateId),
    #[error("probabilities sum to {0}")]
    Sum(f64),
}

impl Distribution {
    pub fn new(entries: impl IntoIterator<Item = (StateId, f64)>) -> Result<Self, DistributionError> {
        let mut seen = HashSet::new();
        let mut support = Vec::new();
        let mut sum = 0.0;
        for (s, p) in entries {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(DistributionError::OutOfRange(s, p));
            }
            if !seen.insert(s) {
                return Err(DistributionError::Duplicate(s));
            }
            sum += p;
            if p > 0.0 {
                support.push((s, p));
            }
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(DistributionError::Sum(sum));
        }
        Ok(Self { support })
    }

    pub fn point(s: StateId) -> Self {
        Self {
            support: vec![(s, 1.0)],
        }
    }

    pub fn support(&self) -> &[(StateId, f64)] {
        &self.support
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.support
            .iter()
            .find(|(t, _)| *t == s)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.support.iter().map(|(_, p)| p).sum()
    }

    /// Probability mass assigned to states accepted by `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(StateId) -> bool) -> f64 {
        self.support
            .iter()
            .filter(|(s, _)| pred(*s))
            .map(|(_, p)| p)
            .sum()
    }

    /// Weighted sum of a per-state vector.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.support.iter().map(|(s, p)| p * values[s.0]).sum()
    }
}

/// One enabled action at a state together with its successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub action: ActionId,
    pub dist: Distribution,
}

/// Unvalidated model description, as read from a model file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMdp {
    pub states: Vec<String>,
    pub initial: String,
    pub actions: Vec<(String, ActionKind)>,
    pub transitions: Vec<RawTransition>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTransition {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: f64,
}

impl RawMdp {
    pub fn new(initial: &str) -> Self {
        Self {
            initial: initial.to_owned(),
            ..Self::default()
        }
    }

    pub fn state(mut self, label: &str) -> Self {
        self.states.push(label.to_owned());
        self
    }

    pub fn states<'a>(mut self, labels: impl IntoIterator<Item = &'a str>) -> Self {
        self.states.extend(labels.into_iter().map(str::to_owned));
        self
    }

    pub fn action(mut self, label: &str, kind: ActionKind) -> Self {
        self.actions.push((label.to_owned(), kind));
        self
    }

    pub fn transition(mut self, from: &str, action: &str, to: &str, prob: f64) -> Self {
        self.transitions.push(RawTransition {
            from: from.to_owned(),
            action: action.to_owned(),
            to: to.to_owned(),
            prob,
        });
        self
    }

    pub fn build(&self) -> Result<Mdp, ModelError> {
        build_mdp(self)
    }
}

/// A finite MDP `(S, s0, Act, T)` with every state having at least one
/// enabled action.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    states: Vec<String>,
    initial: StateId,
    actions: Vec<Action>,
    choices: Vec<Vec<Choice>>,
    state_lookup: HashMap<String, StateId>,
    action_lookup: HashMap<String, ActionId>,
}

/// Validates a raw description. Rows are checked, never renormalized.
pub fn build_mdp(raw: &RawMdp) -> Result<Mdp, ModelError> {
    if raw.states.is_empty() {
        return Err(ModelError::NoStates);
    }
    let mut state_lookup = HashMap::new();
    for (i, label) in raw.states.iter().enumerate() {
        if state_lookup.insert(label.clone(), StateId(i)).is_some() {
            return Err(ModelError::DuplicateState(label.clone()));
        }
    }
    let mut action_lookup = HashMap::new();
    let mut actions = Vec::with_capacity(raw.actions.len());
    for (i, (label, kind)) in raw.actions.iter().enumerate() {
        if action_lookup.insert(label.clone(), ActionId(i)).is_some() {
            return Err(ModelError::DuplicateAction(label.clone()));
        }
        actions.push(Action {
            label: label.clone(),
            kind: *kind,
        });
    }
    let initial = *state_lookup
        .get(&raw.initial)
        .ok_or_else(|| ModelError::UnknownState(raw.initial.clone()))?;

    // rows[s][a] = entries in file order
    let mut rows: Vec<Vec<Option<Vec<(StateId, f64)>>>> =
        vec![vec![None; actions.len()]; raw.states.len()];
    for t in &raw.transitions {
        let from = *state_lookup
            .get(&t.from)
            .ok_or_else(|| ModelError::UnknownState(t.from.clone()))?;
        let to = *state_lookup
            .get(&t.to)
            .ok_or_else(|| ModelError::UnknownState(t.to.clone()))?;
        let action = *action_lookup
            .get(&t.action)
            .ok_or_else(|| ModelError::UnknownAction(t.action.clone()))?;
        if !(0.0..=1.0).contains(&t.prob) || t.prob.is_nan() {
            return Err(ModelError::InvalidProbability {
                from: t.from.clone(),
                action: t.action.clone(),
                to: t.to.clone(),
                prob: t.prob,
            });
        }
        let row = rows[from.0][action.0].get_or_insert_with(Vec::new);
        if row.iter().any(|(s, _)| *s == to) {
            return Err(ModelError::DuplicateTransition {
                from: t.from.clone(),
                action: t.action.clone(),
                to: t.to.clone(),
            });
        }
        row.push((to, t.prob));
    }

    let mut choices = Vec::with_capacity(raw.states.len());
    for (s, per_action) in rows.into_iter().enumerate() {
        let mut here = Vec::new();
        for (a, row) in per_action.into_iter().enumerate() {
            let Some(row) = row else { continue };
            let dist = Distribution::new(row).map_err(|e| match e {
                DistributionError::Sum(sum) => ModelError::RowSum {
                    state: raw.states[s].clone(),
                    action: actions[a].label.clone(),
                    sum,
                },
                // range and duplicates were rejected above
                _ => unreachable!("row entries already validated"),
            })?;
            here.push(Choice {
                action: ActionId(a),
                dist,
            });
        }
        if here.is_empty() {
            return Err(ModelError::Deadlock(raw.states[s].clone()));
        }
        choices.push(here);
    }

    Ok(Mdp {
        states: raw.states.clone(),
        initial,
        actions,
        choices,
        state_lookup,
        action_lookup,
    })
}

impl Mdp {
    /// Assembles a model from already-indexed parts. Choices of each state must
    /// be sorted by action index and refer to valid ids.
    pub(crate) fn from_parts(
        states: Vec<String>,
        initial: StateId,
        actions: Vec<Action>,
        choices: Vec<Vec<Choice>>,
    ) -> Result<Self, ModelError> {
        debug_assert_eq!(states.len(), choices.len());
        let mut state_lookup = HashMap::with_capacity(states.len());
        for (i, label) in states.iter().enumerate() {
            if state_lookup.insert(label.clone(), StateId(i)).is_some() {
                return Err(ModelError::DuplicateState(label.clone()));
            }
        }
        let mut action_lookup = HashMap::with_capacity(actions.len());
        for (i, a) in actions.iter().enumerate() {
            if action_lookup.insert(a.label.clone(), ActionId(i)).is_some() {
                return Err(ModelError::DuplicateAction(a.label.clone()));
            }
        }
        for (s, here) in choices.iter().enumerate() {
            if here.is_empty() {
                return Err(ModelError::Deadlock(states[s].clone()));
            }
            for c in here {
                let sum = c.dist.total();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::RowSum {
                        state: states[s].clone(),
                        action: actions[c.action.0].label.clone(),
                        sum,
                    });
                }
            }
        }
        Ok(Self {
            states,
            initial,
            actions,
            choices,
            state_lookup,
            action_lookup,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_ids(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.states.len()).map(StateId)
    }

    pub fn state_label(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn state_labels(&self) -> &[String] {
        &self.states
    }

    pub fn state_id(&self, label: &str) -> Option<StateId> {
        self.state_lookup.get(label).copied()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action(&self, a: ActionId) -> &Action {
        &self.actions[a.0]
    }

    pub fn action_label(&self, a: ActionId) -> &str {
        &self.actions[a.0].label
    }

    pub fn action_id(&self, label: &str) -> Option<ActionId> {
        self.action_lookup.get(label).copied()
    }

    /// Enabled actions with their distributions, in action declaration order.
    pub fn choices(&self, s: StateId) -> &[Choice] {
        &self.choices[s.0]
    }

    pub fn num_choices(&self) -> usize {
        self.choices.iter().map(Vec::len).sum()
    }

    pub fn distribution(&self, s: StateId, a: ActionId) -> Option<&Distribution> {
        self.choices[s.0]
            .iter()
            .find(|c| c.action == a)
            .map(|c| &c.dist)
    }

    pub fn is_enabled(&self, s: StateId, a: ActionId) -> bool {
        self.distribution(s, a).is_some()
    }

    fn check_state(&self, s: StateId) -> Result<(), ModelError> {
        if s.0 < self.states.len() {
            Ok(())
        } else {
            Err(ModelError::StateOutOfRange(s.0))
        }
    }

    /// The action set `A(s)`.
    pub fn available_actions(&self, s: StateId) -> Result<Vec<ActionId>, ModelError> {
        self.check_state(s)?;
        Ok(self.choices[s.0].iter().map(|c| c.action).collect())
    }

    /// `Post(s, a)`: the support of `T(s, a)`.
    pub fn post_states(&self, s: StateId, a: ActionId) -> Result<Vec<StateId>, ModelError> {
        self.check_state(s)?;
        let dist = self
            .distribution(s, a)
            .ok_or_else(|| ModelError::ActionNotAvailable {
                state: self.states[s.0].clone(),
                action: self
                    .actions
                    .get(a.0)
                    .map_or_else(|| format!("#{}", a.0), |x| x.label.clone()),
            })?;
        Ok(dist.support().iter().map(|(t, _)| *t).collect())
    }

    /// Dense state-action matrix: one row per enabled `(s, a)` pair, ordered by
    /// state and then by action declaration order, one column per state.
    pub fn transition_matrix(&self) -> TransitionMatrix {
        let n = self.states.len();
        let mut rows = Vec::with_capacity(self.num_choices());
        let mut values = Vec::with_capacity(self.num_choices());
        for (s, here) in self.choices.iter().enumerate() {
            for c in here {
                let mut row = vec![0.0; n];
                for (t, p) in c.dist.support() {
                    row[t.0] = *p;
                }
                rows.push((StateId(s), c.action));
                values.push(row);
            }
        }
        TransitionMatrix { rows, values }
    }

    /// The chain obtained by fixing `policy(s)` at every state.
    pub fn induce_dtmc(&self, policy: &StationaryPolicy) -> Result<Dtmc, ModelError> {
        if policy.choice.len() != self.states.len() {
            return Err(ModelError::PolicyArity {
                expected: self.states.len(),
                got: policy.choice.len(),
            });
        }
        let mut rows = Vec::with_capacity(self.states.len());
        for (s, &a) in policy.choice.iter().enumerate() {
            let dist = self
                .distribution(StateId(s), a)
                .ok_or_else(|| ModelError::ActionNotAvailable {
                    state: self.states[s].clone(),
                    action: self
                        .actions
                        .get(a.0)
                        .map_or_else(|| format!("#{}", a.0), |x| x.label.clone()),
                })?;
            rows.push(dist.clone());
        }
        Ok(Dtmc {
            states: self.states.clone(),
            initial: self.initial,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub rows: Vec<(StateId, ActionId)>,
    pub values: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), self.values.first().map_or(0, Vec::len))
    }
}

/// A stationary policy, one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StationaryPolicy {
    pub choice: Vec<ActionId>,
}

impl StationaryPolicy {
    pub fn new(choice: Vec<ActionId>) -> Self {
        Self { choice }
    }

    pub fn action_at(&self, s: StateId) -> ActionId {
        self.choice[s.0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dtmc {
    states: Vec<String>,
    initial: StateId,
    rows: Vec<Distribution>,
}

impl Dtmc {
    pub fn new(states: Vec<String>, initial: StateId, rows: Vec<Distribution>) -> Self {
        assert_eq!(states.len(), rows.len(), "one row per state");
        assert!(initial.0 < states.len(), "initial state out of range");
        Self {
            states,
            initial,
            rows,
        }
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn state_label(&self, s: StateId) -> &str {
        &self.states[s.0]
    }

    pub fn row(&self, s: StateId) -> &Distribution {
        &self.rows[s.0]
    }

    pub fn prob(&self, from: StateId, to: StateId) -> f64 {
        self.rows[from.0].prob(to)
    }

    /// `Prob^fin(rho)`: 1 for a single-state path, else the product of the
    /// one-step probabilities along it.
    pub fn finite_path_probability(&self, path: &[StateId]) -> Result<f64, ModelError> {
        for s in path {
            if s.0 >= self.states.len() {
                return Err(ModelError::StateOutOfRange(s.0));
            }
        }
        Ok(path.windows(2).map(|w| self.prob(w[0], w[1])).product())
    }
}

/// A finite path `s0 -a0-> s1 ... s_n`. For chains the actions are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinitePath {
    pub states: Vec<StateId>,
    pub actions: Vec<Option<ActionId>>,
}

impl FinitePath {
    pub fn start(s: StateId) -> Self {
        Self {
            states: vec![s],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Option<ActionId>, s: StateId) {
        self.actions.push(action);
        self.states.push(s);
    }

    /// Number of transitions, `|rho| = n`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn last(&self) -> StateId {
        *self.states.last().expect("paths are nonempty")
    }

    pub fn state_at(&self, k: usize) -> Option<StateId> {
        self.states.get(k).copied()
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActionKind::*;

    fn fork() -> Mdp {
        RawMdp::new("s0")
            .states(["s0", "s1", "s2"])
            .action("a", Independent)
            .action("b", Independent)
            .transition("s0", "a", "s1", 0.8)
            .transition("s0", "a", "s2", 0.2)
            .transition("s0", "b", "s0", 1.0)
            .transition("s1", "a", "s1", 1.0)
            .transition("s2", "b", "s2", 1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn self_loop_is_valid() {
        let m = RawMdp::new("s0")
            .state("s0")
            .action("a", Independent)
            .transition("s0", "a", "s0", 1.0)
            .build()
            .unwrap();
        assert_eq!(m.num_states(), 1);
        assert_eq!(m.transition_matrix().values, vec![vec![1.0]]);
    }

    #[test]
    fn rejects_short_row() {
        let err = RawMdp::new("s0")
            .states(["s0", "s1", "s2"])
            .action("a", Independent)
            .transition("s0", "a", "s1", 0.6)
            .transition("s0", "a", "s2", 0.3)
            .transition("s1", "a", "s1", 1.0)
            .transition("s2", "a", "s2", 1.0)
            .build()
            .unwrap_err();
        assert!(matches!(err, ModelError::RowSum { ref state, .. } if state == "s0"));
    }

    #[test]
    fn rejects_deadlock_duplicate_and_unknown() {
        let dead = RawMdp::new("s0")
            .states(["s0", "s1"])
            .action("a", Independent)
            .transition("s0", "a", "s1", 1.0)
            .build();
        assert_eq!(dead.unwrap_err(), ModelError::Deadlock("s1".into()));

        let dup = RawMdp::new("s0")
            .state("s0")
            .action("a", Independent)
            .transition("s0", "a", "s0", 0.5)
            .transition("s0", "a", "s0", 0.5)
            .build();
        assert!(matches!(dup, Err(ModelError::DuplicateTransition { .. })));

        let unknown = RawMdp::new("s0")
            .state("s0")
            .action("a", Independent)
            .transition("s0", "zz", "s0", 1.0)
            .build();
        assert_eq!(unknown.unwrap_err(), ModelError::UnknownAction("zz".into()));

        let bad_init = RawMdp::new("q").state("s0").build();
        assert_eq!(bad_init.unwrap_err(), ModelError::UnknownState("q".into()));
    }

    #[test]
    fn zero_probability_entries_are_dropped() {
        let m = RawMdp::new("s0")
            .states(["s0", "s1"])
            .action("a", Independent)
            .transition("s0", "a", "s0", 1.0)
            .transition("s0", "a", "s1", 0.0)
            .transition("s1", "a", "s1", 1.0)
            .build()
            .unwrap();
        let a = m.action_id("a").unwrap();
        assert_eq!(m.post_states(StateId(0), a).unwrap(), vec![StateId(0)]);
    }

    #[test]
    fn available_and_post() {
        let m = fork();
        let (a, b) = (m.action_id("a").unwrap(), m.action_id("b").unwrap());
        assert_eq!(m.available_actions(StateId(0)).unwrap(), vec![a, b]);
        assert_eq!(m.available_actions(StateId(1)).unwrap(), vec![a]);
        assert_eq!(
            m.post_states(StateId(0), a).unwrap(),
            vec![StateId(1), StateId(2)]
        );
        assert_eq!(m.post_states(StateId(0), b).unwrap(), vec![StateId(0)]);
        assert!(matches!(
            m.post_states(StateId(1), b),
            Err(ModelError::ActionNotAvailable { .. })
        ));
        assert!(m.available_actions(StateId(9)).is_err());
    }

    #[test]
    fn matrix_has_one_row_per_pair() {
        let m = fork();
        let tm = m.transition_matrix();
        assert_eq!(tm.shape(), (4, 3));
        for row in &tm.values {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(tm.values[0], vec![0.0, 0.8, 0.2]);
    }

    #[test]
    fn induced_chain_copies_rows() {
        let m = fork();
        let (a, b) = (m.action_id("a").unwrap(), m.action_id("b").unwrap());
        let d = m
            .induce_dtmc(&StationaryPolicy::new(vec![a, a, b]))
            .unwrap();
        assert_eq!(d.row(StateId(0)), m.distribution(StateId(0), a).unwrap());
        assert_eq!(d.initial(), m.initial());
        let bad = m.induce_dtmc(&StationaryPolicy::new(vec![a, b, b]));
        assert!(matches!(bad, Err(ModelError::ActionNotAvailable { .. })));
    }

    #[test]
    fn path_probabilities() {
        let s = |i| StateId(i);
        let d = Dtmc::new(
            vec!["s0".into(), "s1".into(), "s2".into()],
            s(0),
            vec![
                Distribution::new([(s(1), 0.5), (s(0), 0.5)]).unwrap(),
                Distribution::new([(s(2), 0.4), (s(1), 0.6)]).unwrap(),
                Distribution::point(s(2)),
            ],
        );
        assert_eq!(d.finite_path_probability(&[s(0)]).unwrap(), 1.0);
        let p = d.finite_path_probability(&[s(0), s(1), s(2)]).unwrap();
        assert!((p - 0.2).abs() < 1e-15);
        assert_eq!(d.finite_path_probability(&[s(0), s(2)]).unwrap(), 0.0);
        assert!(d.finite_path_probability(&[s(7)]).is_err());
    }
}

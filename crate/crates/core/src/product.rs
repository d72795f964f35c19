//! Joint model of one dependency cluster.
//!
//! At a product state `(s_1, .., s_c)` an action `α` with enabled set
//! `E = {j : α ∈ A(s_j)}` produces
//!
//! * a joint row moving every agent when `E` is the whole cluster;
//! * a row moving only the agents in `E` (the rest stay put) when `E` is a
//!   strict subset and no other member owns `α`;
//! * nothing when some member outside `E` owns `α`: a handshake cannot be
//!   executed while one of its sharers is unable to take part.
//!
//! Row probabilities are products of the movers' one-step probabilities.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::mdp::{Action, ActionId, ActionKind, Choice, Distribution, Mdp, ModelError, StateId};
use crate::pctl::{atoms_of, StateFormula};
use crate::team::{AgentId, Team};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProductError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("product state {0} has no executable action")]
    Deadlock(String),
    #[error("atom `{atom}` in the formula of agent `{agent}` is not an action of the cluster")]
    UnknownAtom { agent: String, atom: String },
    #[error("`{0}` is not a handshaking action of the cluster")]
    NotAHandshake(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductOptions {
    /// Keep only states reachable from the joint initial state.
    pub prune_unreachable: bool,
}

impl Default for ProductOptions {
    fn default() -> Self {
        Self {
            prune_unreachable: true,
        }
    }
}

/// Which construction rule produced a product row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    /// Every cluster member moves.
    Joint,
    /// Only the members with the action enabled move.
    Subset,
}

/// How an action relates to a product state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    /// Enabled for no member.
    Absent,
    Fires { rule: Rule, movers: Vec<usize> },
    /// Enabled for some members while another owner cannot join.
    Blocked { enabled: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProductMdp {
    agents: Vec<AgentId>,
    mdp: Mdp,
    components: Vec<Vec<StateId>>,
    movers: Vec<Vec<Vec<usize>>>,
    // local_actions[product action][position] = the member's own id, if it owns it
    local_actions: Vec<Vec<Option<ActionId>>>,
    pruned: usize,
}

struct Builder<'a> {
    locals: Vec<&'a Mdp>,
    actions: Vec<Action>,
    local_actions: Vec<Vec<Option<ActionId>>>,
}

impl Builder<'_> {
    fn classify(&self, tuple: &[StateId], a: usize) -> Classification {
        let owners: Vec<usize> = (0..self.locals.len())
            .filter(|&j| self.local_actions[a][j].is_some())
            .collect();
        let enabled: Vec<usize> = owners
            .iter()
            .copied()
            .filter(|&j| {
                let local = self.local_actions[a][j].expect("owner");
                self.locals[j].is_enabled(tuple[j], local)
            })
            .collect();
        if enabled.is_empty() {
            Classification::Absent
        } else if enabled.len() == self.locals.len() {
            Classification::Fires {
                rule: Rule::Joint,
                movers: enabled,
            }
        } else if enabled.len() == owners.len() {
            Classification::Fires {
                rule: Rule::Subset,
                movers: enabled,
            }
        } else {
            Classification::Blocked { enabled }
        }
    }

    /// Joint successor distribution for `movers` taking action `a`.
    fn successors(&self, tuple: &[StateId], a: usize, movers: &[usize]) -> Vec<(Vec<StateId>, f64)> {
        let mut out = vec![(tuple.to_vec(), 1.0)];
        for &j in movers {
            let local = self.local_actions[a][j].expect("mover owns the action");
            let dist = self.locals[j]
                .distribution(tuple[j], local)
                .expect("mover has the action enabled");
            let mut next = Vec::with_capacity(out.len() * dist.support().len());
            for (partial, p) in &out {
                for (t, q) in dist.support() {
                    let mut succ = partial.clone();
                    succ[j] = *t;
                    next.push((succ, p * q));
                }
            }
            out = next;
        }
        out
    }

    fn firing(&self, tuple: &[StateId]) -> impl Iterator<Item = (usize, Vec<usize>)> + '_ {
        let tuple = tuple.to_vec();
        (0..self.actions.len()).filter_map(move |a| match self.classify(&tuple, a) {
            Classification::Fires { movers, .. } => Some((a, movers)),
            _ => None,
        })
    }
}

fn tuple_label(locals: &[&Mdp], tuple: &[StateId]) -> String {
    if locals.len() == 1 {
        return locals[0].state_label(tuple[0]).to_owned();
    }
    let parts: Vec<&str> = locals
        .iter()
        .zip(tuple)
        .map(|(m, s)| m.state_label(*s))
        .collect();
    format!("({})", parts.join("|"))
}

/// Builds the product of the cluster members' models. Members are taken in
/// increasing id order; states are ordered lexicographically by component.
pub fn build_product(
    team: &Team,
    cluster: &[AgentId],
    options: ProductOptions,
) -> Result<ProductMdp, ProductError> {
    if cluster.is_empty() {
        return Err(ProductError::EmptyCluster);
    }
    let mut agents = cluster.to_vec();
    agents.sort();
    agents.dedup();
    let locals: Vec<&Mdp> = agents.iter().map(|&i| &team.agent(i).mdp).collect();

    let mut actions: Vec<Action> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut local_actions: Vec<Vec<Option<ActionId>>> = Vec::new();
    for (j, m) in locals.iter().enumerate() {
        for (k, a) in m.actions().iter().enumerate() {
            let slot = *index.entry(a.label.clone()).or_insert_with(|| {
                actions.push(a.clone());
                local_actions.push(vec![None; locals.len()]);
                actions.len() - 1
            });
            if a.kind == ActionKind::Handshake {
                actions[slot].kind = ActionKind::Handshake;
            }
            local_actions[slot][j] = Some(ActionId(k));
        }
    }
    let builder = Builder {
        locals: locals.clone(),
        actions,
        local_actions,
    };

    let initial: Vec<StateId> = locals.iter().map(|m| m.initial()).collect();
    let full: u128 = locals.iter().map(|m| m.num_states() as u128).product();
    let mut tuples: Vec<Vec<StateId>> = if options.prune_unreachable {
        let mut seen: HashMap<Vec<StateId>, ()> = HashMap::new();
        seen.insert(initial.clone(), ());
        let mut queue = VecDeque::from([initial.clone()]);
        while let Some(t) = queue.pop_front() {
            for (a, movers) in builder.firing(&t) {
                for (succ, _) in builder.successors(&t, a, &movers) {
                    if !seen.contains_key(&succ) {
                        seen.insert(succ.clone(), ());
                        queue.push_back(succ);
                    }
                }
            }
        }
        seen.into_keys().collect()
    } else {
        let mut all = vec![Vec::new()];
        for m in &locals {
            all = all
                .into_iter()
                .flat_map(|prefix| {
                    m.state_ids().map(move |s| {
                        let mut t = prefix.clone();
                        t.push(s);
                        t
                    })
                })
                .collect();
        }
        all
    };
    tuples.sort();
    let position: HashMap<&[StateId], usize> = tuples
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_slice(), i))
        .collect();

    let labels: Vec<String> = tuples.iter().map(|t| tuple_label(&locals, t)).collect();
    let mut choices = Vec::with_capacity(tuples.len());
    let mut movers = Vec::with_capacity(tuples.len());
    for (i, t) in tuples.iter().enumerate() {
        let mut here = Vec::new();
        let mut here_movers = Vec::new();
        for (a, who) in builder.firing(t) {
            let dist = Distribution::new(
                builder
                    .successors(t, a, &who)
                    .into_iter()
                    .map(|(succ, p)| (StateId(position[succ.as_slice()]), p)),
            )
            .map_err(|e| ModelError::RowSum {
                state: labels[i].clone(),
                action: builder.actions[a].label.clone(),
                sum: match e {
                    crate::mdp::DistributionError::Sum(s) => s,
                    _ => f64::NAN,
                },
            })?;
            here.push(Choice {
                action: ActionId(a),
                dist,
            });
            here_movers.push(who);
        }
        if here.is_empty() {
            return Err(ProductError::Deadlock(labels[i].clone()));
        }
        choices.push(here);
        movers.push(here_movers);
    }

    let initial_index = StateId(position[initial.as_slice()]);
    let pruned = (full - tuples.len() as u128) as usize;
    let Builder {
        actions,
        local_actions,
        ..
    } = builder;
    let mdp = Mdp::from_parts(labels, initial_index, actions, choices)?;
    Ok(ProductMdp {
        agents,
        mdp,
        components: tuples,
        movers,
        local_actions,
        pruned,
    })
}

impl ProductMdp {
    /// Cluster members in enumeration order.
    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn position_of(&self, agent: AgentId) -> Option<usize> {
        self.agents.iter().position(|&a| a == agent)
    }

    /// The product as a plain MDP over product states.
    pub fn mdp(&self) -> &Mdp {
        &self.mdp
    }

    pub fn components(&self, s: StateId) -> &[StateId] {
        &self.components[s.0]
    }

    /// Members moved by the `k`-th choice at `s` (positions in [`Self::agents`]).
    pub fn movers(&self, s: StateId, k: usize) -> &[usize] {
        &self.movers[s.0][k]
    }

    pub fn movers_of(&self, s: StateId, a: ActionId) -> Option<&[usize]> {
        self.mdp
            .choices(s)
            .iter()
            .position(|c| c.action == a)
            .map(|k| self.movers(s, k))
    }

    pub fn rule_of(&self, s: StateId, a: ActionId) -> Option<Rule> {
        self.movers_of(s, a).map(|m| {
            if m.len() == self.agents.len() {
                Rule::Joint
            } else {
                Rule::Subset
            }
        })
    }

    /// The member's own id for product action `a`, if it owns it.
    pub fn local_action(&self, a: ActionId, position: usize) -> Option<ActionId> {
        self.local_actions[a.0][position]
    }

    /// Members declaring `a` as a handshake (positions).
    pub fn sharers(&self, team: &Team, a: ActionId) -> Vec<usize> {
        let label = self.mdp.action_label(a);
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, &i)| team.agent(i).has_handshake(label))
            .map(|(j, _)| j)
            .collect()
    }

    /// Number of joint states dropped as unreachable.
    pub fn pruned_states(&self) -> usize {
        self.pruned
    }

    /// Product states where `action` can be executed as a handshake: the row
    /// exists, moves exactly the sharers, and all sharers stand in regions
    /// with the same label.
    pub fn handshake_enabled_states(
        &self,
        team: &Team,
        action: &str,
    ) -> Result<Vec<StateId>, ProductError> {
        let a = self
            .mdp
            .action_id(action)
            .filter(|&a| self.mdp.action(a).kind == ActionKind::Handshake)
            .ok_or_else(|| ProductError::NotAHandshake(action.to_owned()))?;
        let sharers = self.sharers(team, a);
        Ok(self
            .mdp
            .state_ids()
            .filter(|&s| {
                self.movers_of(s, a).is_some_and(|m| m == sharers.as_slice())
                    && self.colocated(team, s, &sharers)
            })
            .collect())
    }

    /// Whether the members at `positions` occupy regions with one label.
    pub fn colocated(&self, team: &Team, s: StateId, positions: &[usize]) -> bool {
        let mut labels = positions.iter().map(|&j| {
            team.agent(self.agents[j])
                .mdp
                .state_label(self.components[s.0][j])
        });
        match labels.next() {
            None => true,
            Some(first) => labels.all(|l| l == first),
        }
    }

    /// Recomputes how action `a` relates to product state `s` from the
    /// members' models alone.
    pub fn classify(&self, team: &Team, s: StateId, a: ActionId) -> Classification {
        let locals: Vec<&Mdp> = self.agents.iter().map(|&i| &team.agent(i).mdp).collect();
        let builder = Builder {
            locals,
            actions: self.mdp.actions().to_vec(),
            local_actions: self.local_actions.clone(),
        };
        builder.classify(&self.components[s.0], a.0)
    }
}

/// Conjunction of the members' formulas, in id order. Every atom must be an
/// action of some cluster member.
pub fn mutual_formula(team: &Team, cluster: &[AgentId]) -> Result<StateFormula, ProductError> {
    let mut members = cluster.to_vec();
    members.sort();
    let known = |label: &str| {
        members
            .iter()
            .any(|&i| team.agent(i).mdp.action_id(label).is_some())
    };
    let mut acc: Option<StateFormula> = None;
    for &i in &members {
        let agent = team.agent(i);
        if let Some(atom) = atoms_of(&agent.formula).into_iter().find(|a| !known(a)) {
            return Err(ProductError::UnknownAtom {
                agent: agent.name.clone(),
                atom,
            });
        }
        acc = Some(match acc {
            None => agent.formula.clone(),
            Some(prev) => StateFormula::and(prev, agent.formula.clone()),
        });
    }
    acc.ok_or(ProductError::EmptyCluster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionKind::*, RawMdp};
    use crate::pctl::parse_formula;

    fn lossy(tag: &str, h: &str) -> Mdp {
        RawMdp::new("s")
            .states(["s", "t"])
            .action(h, Handshake)
            .action(&format!("{tag}_wait"), Independent)
            .transition("s", h, "t", 0.9)
            .transition("s", h, "s", 0.1)
            .transition("t", &format!("{tag}_wait"), "t", 1.0)
            .build()
            .unwrap()
    }

    fn pair_team() -> Team {
        Team::from_mdps(vec![lossy("x", "go"), lossy("y", "go")]).unwrap()
    }

    #[test]
    fn singleton_matches_agent_model() {
        let team = pair_team();
        let p = build_product(&team, &[AgentId(1)], ProductOptions { prune_unreachable: false })
            .unwrap();
        assert_eq!(p.mdp(), &team.agent(AgentId(1)).mdp);
    }

    #[test]
    fn joint_row_multiplies() {
        let team = pair_team();
        let p = build_product(&team, &[AgentId(1), AgentId(2)], ProductOptions::default()).unwrap();
        let m = p.mdp();
        let ss = m.state_id("(s|s)").unwrap();
        let go = m.action_id("go").unwrap();
        let d = m.distribution(ss, go).unwrap();
        let expect = [("(t|t)", 0.81), ("(t|s)", 0.09), ("(s|t)", 0.09), ("(s|s)", 0.01)];
        for (label, p) in expect {
            assert!((d.prob(m.state_id(label).unwrap()) - p).abs() < 1e-12, "{label}");
        }
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert_eq!(p.rule_of(ss, go), Some(Rule::Joint));
        // at (t|s) the handshake is enabled for one sharer only: blocked
        let ts = m.state_id("(t|s)").unwrap();
        assert!(!m.is_enabled(ts, go));
        assert!(matches!(
            p.classify(&team, ts, go),
            Classification::Blocked { .. }
        ));
    }

    #[test]
    fn private_action_moves_owner_only() {
        let a = RawMdp::new("s")
            .states(["s", "s2"])
            .action("a", Independent)
            .transition("s", "a", "s2", 0.7)
            .transition("s", "a", "s", 0.3)
            .transition("s2", "a", "s2", 1.0)
            .build()
            .unwrap();
        let b = RawMdp::new("t")
            .states(["t", "t2"])
            .action("b", Independent)
            .transition("t", "b", "t2", 1.0)
            .transition("t2", "b", "t2", 1.0)
            .build()
            .unwrap();
        let team = Team::from_mdps(vec![a, b]).unwrap();
        let p = build_product(&team, &[AgentId(1), AgentId(2)], ProductOptions::default()).unwrap();
        let m = p.mdp();
        let st = m.state_id("(s|t)").unwrap();
        let act = m.action_id("a").unwrap();
        let d = m.distribution(st, act).unwrap();
        assert!((d.prob(m.state_id("(s2|t)").unwrap()) - 0.7).abs() < 1e-12);
        assert!((d.prob(st) - 0.3).abs() < 1e-12);
        assert_eq!(p.movers_of(st, act), Some(&[0usize][..]));
        assert_eq!(p.rule_of(st, act), Some(Rule::Subset));
        assert_eq!(p.pruned_states(), 0);
    }

    #[test]
    fn deadlock_is_reported() {
        let a = RawMdp::new("s")
            .state("s")
            .action("h1", Handshake)
            .transition("s", "h1", "s", 1.0)
            .build()
            .unwrap();
        let b = RawMdp::new("s")
            .state("s")
            .action("h1", Handshake)
            .action("h2", Handshake)
            .transition("s", "h2", "s", 1.0)
            .build()
            .unwrap();
        let c = RawMdp::new("s")
            .state("s")
            .action("h2", Handshake)
            .action("h1", Handshake)
            .transition("s", "h1", "s", 1.0)
            .build()
            .unwrap();
        let team = Team::from_mdps(vec![a, b, c]).unwrap();
        let err = build_product(&team, &[AgentId(1), AgentId(2), AgentId(3)], ProductOptions::default());
        assert!(matches!(err, Err(ProductError::Deadlock(_))));
    }

    #[test]
    fn handshake_states_need_colocation() {
        let mk = |start: &str| {
            RawMdp::new(start)
                .states(["r", "q"])
                .action("h", Handshake)
                .action(&format!("mv_{start}"), Independent)
                .transition("r", "h", "r", 1.0)
                .transition("q", "h", "q", 1.0)
                .transition("r", &format!("mv_{start}"), "q", 1.0)
                .transition("q", &format!("mv_{start}"), "r", 1.0)
                .build()
                .unwrap()
        };
        let team = Team::from_mdps(vec![mk("r"), mk("q")]).unwrap();
        let p = build_product(&team, &[AgentId(1), AgentId(2)], ProductOptions::default()).unwrap();
        let states = p.handshake_enabled_states(&team, "h").unwrap();
        let labels: Vec<&str> = states.iter().map(|&s| p.mdp().state_label(s)).collect();
        assert_eq!(labels, vec!["(r|r)", "(q|q)"]);
        assert!(matches!(
            p.handshake_enabled_states(&team, "mv_r"),
            Err(ProductError::NotAHandshake(_))
        ));

        // h disabled at q for the second agent: (q|q) loses the row
        let limited = RawMdp::new("q")
            .states(["r", "q"])
            .action("h", Handshake)
            .action("mv_b", Independent)
            .transition("r", "h", "r", 1.0)
            .transition("r", "mv_b", "q", 1.0)
            .transition("q", "mv_b", "r", 1.0)
            .build()
            .unwrap();
        let team = Team::from_mdps(vec![mk("r"), limited]).unwrap();
        let p = build_product(&team, &[AgentId(1), AgentId(2)], ProductOptions::default()).unwrap();
        let states = p.handshake_enabled_states(&team, "h").unwrap();
        let labels: Vec<&str> = states.iter().map(|&s| p.mdp().state_label(s)).collect();
        assert_eq!(labels, vec!["(r|r)"]);
    }

    #[test]
    fn mutual_formula_conjoins_and_checks_atoms() {
        let mut team = pair_team();
        let f1 = parse_formula("P>=0.5 [ F go ]").unwrap();
        let f2 = parse_formula("P>=0.2 [ X y_wait ]").unwrap();
        team = Team::new(vec![
            ("a1".into(), team.agent(AgentId(1)).mdp.clone(), f1.clone()),
            ("a2".into(), team.agent(AgentId(2)).mdp.clone(), f2.clone()),
        ])
        .unwrap();
        assert_eq!(mutual_formula(&team, &[AgentId(1)]).unwrap(), f1);
        assert_eq!(
            mutual_formula(&team, &[AgentId(2), AgentId(1)]).unwrap(),
            StateFormula::and(f1, f2)
        );
        let bad = Team::new(vec![
            ("a1".into(), team.agent(AgentId(1)).mdp.clone(), parse_formula("deliver").unwrap()),
            ("a2".into(), team.agent(AgentId(2)).mdp.clone(), StateFormula::True),
        ])
        .unwrap();
        assert!(matches!(
            mutual_formula(&bad, &[AgentId(1), AgentId(2)]),
            Err(ProductError::UnknownAtom { .. })
        ));
    }
}

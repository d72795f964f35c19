//! Team policies: enumeration of candidate policies, projection onto agents,
//! the successful-policy check, and the end-to-end solver.

mod evaluate;
mod solve;

use std::collections::{BTreeMap, BTreeSet};

use crate::mdp::{ActionId, ActionKind, Mdp, StateId};
use crate::product::ProductMdp;
use crate::team::{AgentId, Team};

pub use evaluate::path_probability;
pub use solve::{
    is_always, solve_problem1, split_conjunction, ClusterSolution, Satisfaction, SolutionBundle, SolveConfig, SolveError,
    SolveOutcome, NO_DEPENDENCY_WARNING,
};

/// Stationary policy of one cluster over its product states. States never
/// reached under the policy may be left without a choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeamPolicy {
    /// 1-based cluster index.
    pub cluster: usize,
    pub choice: Vec<Option<ActionId>>,
}

impl TeamPolicy {
    pub fn action_at(&self, s: StateId) -> Option<ActionId> {
        self.choice[s.0]
    }

    /// States with a choice, in increasing order.
    pub fn domain(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.choice.len())
            .filter(|&i| self.choice[i].is_some())
            .map(StateId)
    }
}

/// Candidate policies of a cluster, represented by per-state candidate
/// actions. Candidates are tried in the stored order.
#[derive(Debug, Clone)]
pub struct SpSet<'a> {
    pub cluster: usize,
    pub model: &'a Mdp,
    pub candidates: Vec<Vec<ActionId>>,
}

impl<'a> SpSet<'a> {
    /// Every enabled action, in label order.
    pub fn all_actions(cluster: usize, model: &'a Mdp) -> Self {
        let candidates = model
            .state_ids()
            .map(|s| {
                let mut acts: Vec<ActionId> = model.choices(s).iter().map(|c| c.action).collect();
                acts.sort_by(|a, b| model.action_label(*a).cmp(model.action_label(*b)));
                acts
            })
            .collect();
        Self {
            cluster,
            model,
            candidates,
        }
    }

    /// No policy can be drawn when the initial state has no candidate.
    pub fn is_empty(&self) -> bool {
        self.candidates[self.model.initial().0].is_empty()
    }
}

struct Frame {
    state: StateId,
    index: usize,
    added: Vec<StateId>,
}

/// Depth-first enumeration of the policies of an [`SpSet`], restricted to the
/// states each policy reaches from the initial state. The pending state with
/// the smallest index is decided first.
pub struct PolicyStream<'s, 'a> {
    sp: &'s SpSet<'a>,
    choice: Vec<Option<ActionId>>,
    pending: BTreeSet<StateId>,
    frames: Vec<Frame>,
    descending: bool,
    finished: bool,
}

impl<'s, 'a> PolicyStream<'s, 'a> {
    fn new(sp: &'s SpSet<'a>) -> Self {
        Self {
            sp,
            choice: vec![None; sp.model.num_states()],
            pending: BTreeSet::from([sp.model.initial()]),
            frames: Vec::new(),
            descending: true,
            finished: false,
        }
    }

    /// Whether the enumeration has run out of policies.
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn apply_top(&mut self) {
        let frame = self.frames.last_mut().expect("frame");
        let a = self.sp.candidates[frame.state.0][frame.index];
        self.choice[frame.state.0] = Some(a);
        let dist = self.sp.model.distribution(frame.state, a).expect("candidate is enabled");
        for &(t, _) in dist.support() {
            if self.choice[t.0].is_none() && self.pending.insert(t) {
                frame.added.push(t);
            }
        }
    }

    fn undo_top(&mut self) {
        let frame = self.frames.last_mut().expect("frame");
        for t in frame.added.drain(..) {
            self.pending.remove(&t);
        }
        self.choice[frame.state.0] = None;
    }
}

impl Iterator for PolicyStream<'_, '_> {
    type Item = TeamPolicy;

    fn next(&mut self) -> Option<TeamPolicy> {
        if self.finished {
            return None;
        }
        loop {
            if self.descending {
                match self.pending.first().copied() {
                    Some(s) if !self.sp.candidates[s.0].is_empty() => {
                        self.pending.remove(&s);
                        self.frames.push(Frame {
                            state: s,
                            index: 0,
                            added: Vec::new(),
                        });
                        self.apply_top();
                    }
                    Some(_) => self.descending = false,
                    None => {
                        self.descending = false;
                        return Some(TeamPolicy {
                            cluster: self.sp.cluster,
                            choice: self.choice.clone(),
                        });
                    }
                }
            } else {
                let Some(top) = self.frames.last() else {
                    self.finished = true;
                    return None;
                };
                let state = top.state;
                self.undo_top();
                let frame = self.frames.last_mut().expect("frame");
                frame.index += 1;
                if frame.index < self.sp.candidates[state.0].len() {
                    self.apply_top();
                    self.descending = true;
                } else {
                    self.frames.pop();
                    self.pending.insert(state);
                }
            }
        }
    }
}

/// Lazily enumerates the policies of `sp` (at most `limit`).
pub fn enumerate_team_policies<'s, 'a>(
    sp: &'s SpSet<'a>,
    limit: usize,
) -> std::iter::Take<PolicyStream<'s, 'a>> {
    PolicyStream::new(sp).take(limit)
}

/// Unlimited stream, for callers that need to tell exhaustion from a cap.
pub fn policy_stream<'s, 'a>(sp: &'s SpSet<'a>) -> PolicyStream<'s, 'a> {
    PolicyStream::new(sp)
}

/// One row of a projected policy: in joint context `context` the agent, at
/// its own state `local_state`, takes `action` or idles (`None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalEntry {
    pub context: StateId,
    pub local_state: StateId,
    pub action: Option<ActionId>,
}

/// An agent's share of a team policy. Actions use the agent's own ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalPolicy {
    pub agent: AgentId,
    pub cluster: usize,
    pub entries: Vec<LocalEntry>,
}

impl LocalPolicy {
    /// The agent's action in joint context `context`, if it moves there.
    pub fn action_in(&self, context: StateId) -> Option<ActionId> {
        self.entries
            .iter()
            .find(|e| e.context == context)
            .and_then(|e| e.action)
    }
}

/// Splits a team policy into per-agent policies tagged by joint context.
pub fn project_policy(tp: &TeamPolicy, product: &ProductMdp) -> BTreeMap<AgentId, LocalPolicy> {
    let mut out: BTreeMap<AgentId, LocalPolicy> = product
        .agents()
        .iter()
        .map(|&agent| {
            (
                agent,
                LocalPolicy {
                    agent,
                    cluster: tp.cluster,
                    entries: Vec::new(),
                },
            )
        })
        .collect();
    for s in tp.domain() {
        let a = tp.action_at(s).expect("domain");
        let movers = product.movers_of(s, a).expect("team policy picks enabled actions");
        for (j, &agent) in product.agents().iter().enumerate() {
            let action = movers
                .contains(&j)
                .then(|| product.local_action(a, j).expect("mover owns the action"));
            out.get_mut(&agent).expect("member").entries.push(LocalEntry {
                context: s,
                local_state: product.components(s)[j],
                action,
            });
        }
    }
    out
}

/// Handshaking actions used by the policy (product action ids).
pub fn succ_actions(tp: &TeamPolicy, model: &Mdp) -> BTreeSet<ActionId> {
    tp.domain()
        .filter_map(|s| tp.action_at(s))
        .filter(|&a| model.action(a).kind == ActionKind::Handshake)
        .collect()
}

/// Whether a handshake `a` may be chosen at `s`: every sharer in the team
/// belongs to the cluster, takes part in the row, and all of them occupy
/// regions with the same label. Independent actions always may.
pub fn handshake_executable(team: &Team, product: &ProductMdp, s: StateId, a: ActionId) -> bool {
    let model = product.mdp();
    if model.action(a).kind != ActionKind::Handshake {
        return true;
    }
    let label = model.action_label(a);
    let Some(movers) = product.movers_of(s, a) else {
        return false;
    };
    let mut positions = Vec::new();
    for agent in team.sharers(label) {
        match product.position_of(agent) {
            Some(j) if movers.contains(&j) => positions.push(j),
            _ => return false,
        }
    }
    product.colocated(team, s, &positions)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuccessReport {
    pub successful: bool,
    /// States where a handshake is chosen without its sharers co-located.
    pub violations: Vec<StateId>,
}

/// Checks every state with a choice. Policies produced by the enumerator
/// only assign states they reach, so this is the reachable-state check.
pub fn is_successful(tp: &TeamPolicy, product: &ProductMdp, team: &Team) -> SuccessReport {
    let violations: Vec<StateId> = tp
        .domain()
        .filter(|&s| !handshake_executable(team, product, s, tp.action_at(s).expect("domain")))
        .collect();
    SuccessReport {
        successful: violations.is_empty(),
        violations,
    }
}

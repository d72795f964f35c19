//! Handshake well-posedness, agent dependencies and dependency clusters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::mdp::{ActionId, FinitePath, Mdp, StateId};
use crate::team::{AgentId, Team};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("a handshake needs at least two participants")]
    TooFewParticipants,
    #[error("`{action}` is not a handshaking action of agent {agent}")]
    NotAHandshake { action: String, agent: AgentId },
}

/// Witness that a set of agents can stand in one region at the same step with
/// the handshake enabled for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeetEvidence {
    pub action: String,
    pub step: usize,
    pub meet_state: String,
    pub paths: BTreeMap<AgentId, FinitePath>,
}

/// States reachable in exactly `k` steps, with one predecessor per state so a
/// witness path can be rebuilt.
struct Layers {
    layers: Vec<BTreeMap<StateId, Option<(StateId, ActionId)>>>,
}

impl Layers {
    fn explore(mdp: &Mdp, horizon: usize) -> Self {
        let mut first = BTreeMap::new();
        first.insert(mdp.initial(), None);
        let mut layers = vec![first];
        for _ in 0..horizon {
            let prev = layers.last().expect("nonempty");
            let mut next = BTreeMap::new();
            for &s in prev.keys() {
                for c in mdp.choices(s) {
                    for (t, _) in c.dist.support() {
                        next.entry(*t).or_insert(Some((s, c.action)));
                    }
                }
            }
            layers.push(next);
        }
        Self { layers }
    }

    fn path_to(&self, k: usize, target: StateId) -> FinitePath {
        let mut states = vec![target];
        let mut actions = Vec::new();
        let mut cur = target;
        for layer in self.layers[..=k].iter().rev() {
            if let Some((prev, a)) = layer[&cur] {
                states.push(prev);
                actions.push(Some(a));
                cur = prev;
            }
        }
        states.reverse();
        actions.reverse();
        FinitePath { states, actions }
    }
}

/// Default search horizon for a group of agents: the largest state count
/// times the number of agents.
pub fn default_horizon(team: &Team, agents: &[AgentId]) -> usize {
    let widest = agents
        .iter()
        .map(|&i| team.agent(i).mdp.num_states())
        .max()
        .unwrap_or(1);
    widest * agents.len()
}

/// Searches steps `0..=horizon` for a region shared by all `agents` where
/// `action` is enabled for every one of them.
///
/// Agents move independently, so the joint states reachable at step `k` are
/// the product of each agent's step-`k` reachable set; meeting only needs a
/// common label in all of them.
pub fn check_handshake_wellposed(
    team: &Team,
    agents: &[AgentId],
    action: &str,
    horizon: usize,
) -> Result<Option<MeetEvidence>, CouplingError> {
    if agents.len() < 2 {
        return Err(CouplingError::TooFewParticipants);
    }
    for &i in agents {
        if !team.agent(i).has_handshake(action) {
            return Err(CouplingError::NotAHandshake {
                action: action.to_owned(),
                agent: i,
            });
        }
    }
    let explored: Vec<Layers> = agents
        .iter()
        .map(|&i| Layers::explore(&team.agent(i).mdp, horizon))
        .collect();

    for k in 0..=horizon {
        let lead = &team.agent(agents[0]).mdp;
        let lead_action = lead.action_id(action).expect("checked above");
        'candidates: for &s in explored[0].layers[k].keys() {
            if !lead.is_enabled(s, lead_action) {
                continue;
            }
            let label = lead.state_label(s);
            let mut hits = vec![s];
            for (pos, &j) in agents.iter().enumerate().skip(1) {
                let mdp = &team.agent(j).mdp;
                let Some(t) = mdp.state_id(label) else {
                    continue 'candidates;
                };
                let a = mdp.action_id(action).expect("checked above");
                if !explored[pos].layers[k].contains_key(&t) || !mdp.is_enabled(t, a) {
                    continue 'candidates;
                }
                hits.push(t);
            }
            let paths = agents
                .iter()
                .zip(&explored)
                .zip(hits)
                .map(|((&i, layers), t)| (i, layers.path_to(k, t)))
                .collect();
            return Ok(Some(MeetEvidence {
                action: action.to_owned(),
                step: k,
                meet_state: label.to_owned(),
                paths,
            }));
        }
    }
    Ok(None)
}

/// How the pairwise dependency relation is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DependencyRule {
    /// Sharing any handshaking action label makes two agents dependent.
    #[default]
    SharedAction,
    /// Additionally require a reachable meeting region for some shared action
    /// within the horizon.
    SharedActionWithMeeting,
}

pub fn shared_handshakes(team: &Team, i: AgentId, j: AgentId) -> BTreeSet<String> {
    let other = team.agent(j);
    team.agent(i)
        .handshakes()
        .filter(|a| other.has_handshake(a))
        .map(str::to_owned)
        .collect()
}

pub fn check_dependent(
    team: &Team,
    i: AgentId,
    j: AgentId,
    rule: DependencyRule,
    horizon: Option<usize>,
) -> bool {
    if i == j {
        return false;
    }
    let shared = shared_handshakes(team, i, j);
    match rule {
        DependencyRule::SharedAction => !shared.is_empty(),
        DependencyRule::SharedActionWithMeeting => {
            let pair = [i.min(j), i.max(j)];
            let n = horizon.unwrap_or_else(|| default_horizon(team, &pair));
            shared.iter().any(|a| {
                check_handshake_wellposed(team, &pair, a, n)
                    .expect("shared handshakes are handshakes of both")
                    .is_some()
            })
        }
    }
}

/// Undirected dependency graph over agents `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyGraph {
    vertices: usize,
    edges: BTreeSet<(AgentId, AgentId)>,
}

impl DependencyGraph {
    pub fn new(vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges = edges
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (AgentId(a.min(b)), AgentId(a.max(b))))
            .inspect(|(_, b)| assert!(b.0 <= vertices, "edge endpoint out of range"))
            .collect();
        Self { vertices, edges }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices
    }

    /// Edges as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &BTreeSet<(AgentId, AgentId)> {
        &self.edges
    }

    pub fn has_edge(&self, i: AgentId, j: AgentId) -> bool {
        self.edges.contains(&(i.min(j), i.max(j)))
    }

    fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices + 1];
        for (a, b) in &self.edges {
            adj[a.0].push(b.0);
            adj[b.0].push(a.0);
        }
        adj
    }
}

pub fn build_dependency_graph(
    team: &Team,
    rule: DependencyRule,
    horizon: Option<usize>,
) -> DependencyGraph {
    let n = team.len();
    let pairs: Vec<(usize, usize)> = (1..=n)
        .flat_map(|i| ((i + 1)..=n).map(move |j| (i, j)))
        .collect();
    let edges: Vec<(usize, usize)> = pairs
        .into_par_iter()
        .filter(|&(i, j)| check_dependent(team, AgentId(i), AgentId(j), rule, horizon))
        .collect();
    DependencyGraph::new(n, edges)
}

/// Partition of the agents into connected components of the dependency graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    clusters: Vec<Vec<AgentId>>,
    // assignment[i - 1] = 1-based cluster index of agent i
    assignment: Vec<usize>,
}

impl Clustering {
    /// Clusters in order of their smallest member; members sorted.
    pub fn clusters(&self) -> &[Vec<AgentId>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// The map `f`: 1-based index of the cluster containing `agent`.
    pub fn cluster_of(&self, agent: AgentId) -> usize {
        self.assignment[agent.0 - 1]
    }

    pub fn cluster(&self, index: usize) -> &[AgentId] {
        &self.clusters[index - 1]
    }

    pub fn is_independent(&self, agent: AgentId) -> bool {
        self.cluster(self.cluster_of(agent)).len() == 1
    }

    /// Whether some cluster holds at least two agents.
    pub fn has_dependent_agents(&self) -> bool {
        self.clusters.iter().any(|c| c.len() >= 2)
    }
}

pub fn compute_clusters(graph: &DependencyGraph) -> Clustering {
    let n = graph.num_vertices();
    let adj = graph.neighbours();
    let mut assignment = vec![0usize; n];
    let mut clusters = Vec::new();
    for root in 1..=n {
        if assignment[root - 1] != 0 {
            continue;
        }
        let index = clusters.len() + 1;
        let mut members = vec![AgentId(root)];
        assignment[root - 1] = index;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if assignment[w - 1] == 0 {
                    assignment[w - 1] = index;
                    members.push(AgentId(w));
                    queue.push_back(w);
                }
            }
        }
        members.sort();
        clusters.push(members);
    }
    Clustering {
        clusters,
        assignment,
    }
}

/// A state count that may be too large to hold exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnitude {
    pub exact: Option<u128>,
    pub log10: f64,
}

impl Magnitude {
    fn product(factors: impl IntoIterator<Item = usize>) -> Self {
        let mut exact = Some(1u128);
        let mut log10 = 0.0;
        for f in factors {
            exact = exact.and_then(|e| e.checked_mul(f as u128));
            log10 += (f as f64).log10();
        }
        Self { exact, log10 }
    }

    fn le(&self, other: &Self) -> bool {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => a <= b,
            _ => self.log10 <= other.log10 + 1e-9,
        }
    }

    fn lt(&self, other: &Self) -> bool {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => self.log10 < other.log10 - 1e-9,
        }
    }
}

impl std::fmt::Display for Magnitude {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.exact {
            Some(e) => write!(f, "{e}"),
            None => write!(f, "10^{:.3}", self.log10),
        }
    }
}

/// Product sizes per cluster against the centralized product of all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCountReport {
    pub per_cluster: Vec<Magnitude>,
    pub centralized: Magnitude,
    /// Largest cluster product does not exceed the centralized product.
    pub ordering_holds: bool,
    /// Largest cluster product is strictly smaller than the centralized one.
    pub strictly_smaller: bool,
}

/// Sizes when every agent has `w` regions.
pub fn estimate_state_counts(clustering: &Clustering, w: usize) -> StateCountReport {
    let n = clustering.assignment.len();
    estimate_state_counts_from_sizes(clustering, &vec![w; n])
}

/// Sizes from per-agent state counts (`sizes[i - 1]` for agent `i`).
pub fn estimate_state_counts_from_sizes(
    clustering: &Clustering,
    sizes: &[usize],
) -> StateCountReport {
    let per_cluster: Vec<Magnitude> = clustering
        .clusters
        .iter()
        .map(|c| Magnitude::product(c.iter().map(|a| sizes[a.0 - 1])))
        .collect();
    let centralized = Magnitude::product(sizes.iter().copied());
    let largest = per_cluster
        .iter()
        .copied()
        .reduce(|a, b| if a.lt(&b) { b } else { a })
        .unwrap_or(Magnitude {
            exact: Some(1),
            log10: 0.0,
        });
    StateCountReport {
        ordering_holds: largest.le(&centralized),
        strictly_smaller: largest.lt(&centralized),
        per_cluster,
        centralized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ActionKind::*, RawMdp};

    /// Agent on a line of regions r0..r(len-1) with private moves and the
    /// given handshakes enabled at `at`.
    fn walker(
        tag: &str,
        len: usize,
        start: usize,
        handshakes: &[(&str, usize)],
    ) -> Mdp {
        let labels: Vec<String> = (0..len).map(|i| format!("r{i}")).collect();
        let mut raw = RawMdp::new(&labels[start]);
        raw.states = labels.clone();
        let (left, right, stay) = (format!("{tag}_l"), format!("{tag}_r"), format!("{tag}_s"));
        raw = raw
            .action(&left, Independent)
            .action(&right, Independent)
            .action(&stay, Independent);
        for (h, _) in handshakes {
            raw = raw.action(h, Handshake);
        }
        for i in 0..len {
            raw = raw.transition(&labels[i], &stay, &labels[i], 1.0);
            if i > 0 {
                raw = raw.transition(&labels[i], &left, &labels[i - 1], 1.0);
            }
            if i + 1 < len {
                raw = raw.transition(&labels[i], &right, &labels[i + 1], 1.0);
            }
            for (h, at) in handshakes {
                if *at == i {
                    raw = raw.transition(&labels[i], h, &labels[i], 1.0);
                }
            }
        }
        raw.build().unwrap()
    }

    #[test]
    fn colocated_start_meets_at_step_zero() {
        let team = Team::from_mdps(vec![
            walker("x", 3, 0, &[("grab", 0)]),
            walker("y", 3, 0, &[("grab", 0)]),
        ])
        .unwrap();
        let ev = check_handshake_wellposed(&team, &[AgentId(1), AgentId(2)], "grab", 3)
            .unwrap()
            .unwrap();
        assert_eq!(ev.step, 0);
        assert_eq!(ev.meet_state, "r0");
    }

    #[test]
    fn line_meeting_needs_enough_horizon() {
        // opposite ends of r0-r1-r2, handshake only in the middle
        let team = Team::from_mdps(vec![
            walker("x", 3, 0, &[("grab", 1)]),
            walker("y", 3, 2, &[("grab", 1)]),
        ])
        .unwrap();
        let pair = [AgentId(1), AgentId(2)];
        assert!(check_handshake_wellposed(&team, &pair, "grab", 0)
            .unwrap()
            .is_none());
        let ev = check_handshake_wellposed(&team, &pair, "grab", 1)
            .unwrap()
            .unwrap();
        assert_eq!(ev.step, 1);
        assert_eq!(ev.meet_state, "r1");
        for (i, p) in &ev.paths {
            let mdp = &team.agent(*i).mdp;
            assert_eq!(p.len(), 1);
            assert_eq!(mdp.state_label(p.last()), "r1");
            assert_eq!(p.states[0], mdp.initial());
        }
    }

    #[test]
    fn disjoint_regions_never_meet() {
        let a = walker("x", 2, 0, &[("grab", 0)]);
        let b = RawMdp::new("q0")
            .states(["q0", "q1"])
            .action("y_s", Independent)
            .action("grab", Handshake)
            .transition("q0", "grab", "q1", 1.0)
            .transition("q1", "y_s", "q0", 1.0)
            .build()
            .unwrap();
        let team = Team::from_mdps(vec![a, b]).unwrap();
        let none = check_handshake_wellposed(&team, &[AgentId(1), AgentId(2)], "grab", 10).unwrap();
        assert!(none.is_none());
        // the label alone still couples the agents under the default rule
        assert!(check_dependent(&team, AgentId(1), AgentId(2), DependencyRule::SharedAction, None));
        assert!(!check_dependent(
            &team,
            AgentId(1),
            AgentId(2),
            DependencyRule::SharedActionWithMeeting,
            None
        ));
    }

    #[test]
    fn missing_handshake_is_an_error() {
        let team = Team::from_mdps(vec![
            walker("x", 2, 0, &[("grab", 0)]),
            walker("y", 2, 0, &[]),
        ])
        .unwrap();
        let err = check_handshake_wellposed(&team, &[AgentId(1), AgentId(2)], "grab", 2);
        assert_eq!(
            err.unwrap_err(),
            CouplingError::NotAHandshake {
                action: "grab".into(),
                agent: AgentId(2)
            }
        );
        assert_eq!(
            check_handshake_wellposed(&team, &[AgentId(1)], "grab", 2).unwrap_err(),
            CouplingError::TooFewParticipants
        );
    }

    #[test]
    fn clusters_of_empty_and_complete_graphs() {
        let c = compute_clusters(&DependencyGraph::new(4, []));
        assert_eq!(c.len(), 4);
        assert!(!c.has_dependent_agents());
        let c = compute_clusters(&DependencyGraph::new(3, [(1, 2), (2, 3), (1, 3)]));
        assert_eq!(c.clusters(), &[vec![AgentId(1), AgentId(2), AgentId(3)]]);
    }

    #[test]
    fn state_counts() {
        let c = compute_clusters(&DependencyGraph::new(6, [(1, 2), (3, 4), (4, 5)]));
        let r = estimate_state_counts(&c, 4);
        let sizes: Vec<_> = r.per_cluster.iter().map(|m| m.exact.unwrap()).collect();
        assert_eq!(sizes, vec![16, 64, 4]);
        assert_eq!(r.centralized.exact, Some(4096));
        assert!(r.ordering_holds && r.strictly_smaller);

        let single = compute_clusters(&DependencyGraph::new(2, []));
        assert_eq!(estimate_state_counts(&single, 7).per_cluster[0].exact, Some(7));

        let all = compute_clusters(&DependencyGraph::new(3, [(1, 2), (2, 3)]));
        let r = estimate_state_counts(&all, 5);
        assert_eq!(r.per_cluster[0], r.centralized);
        assert!(r.ordering_holds && !r.strictly_smaller);

        let huge = compute_clusters(&DependencyGraph::new(60, [(1, 2)]));
        let r = estimate_state_counts(&huge, 10);
        assert_eq!(r.centralized.exact, None);
        assert!((r.centralized.log10 - 60.0).abs() < 1e-9);
        assert!(r.strictly_smaller);
    }
}

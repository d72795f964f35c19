//! End-to-end solver: dependency clusters, per-cluster product and
//! synthesis, then the first successful satisfying team policy.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use super::{is_successful, path_probability, policy_stream, project_policy, handshake_executable};
use super::{LocalPolicy, SpSet, TeamPolicy};
use crate::coupling::{build_dependency_graph, compute_clusters, Clustering, DependencyRule};
use crate::mdp::{ActionId, Mdp, StateId};
use crate::pctl::{rewrite_derived, Bound, Comparator, PathFormula, StateFormula};
use crate::product::{build_product, mutual_formula, ProductError, ProductMdp, ProductOptions};
use crate::synthesis::{
    check_resolved, meets, sat_states, Objective, PathTarget, SynthesisConfig, ThresholdMode,
};
use crate::team::{AgentId, Team};

pub const NO_DEPENDENCY_WARNING: &str =
    "no two agents depend on each other; every agent is synthesized on its own model";

/// Allowance when pruning at the initial state, covering the gap between
/// converged value iteration and the exact per-policy value.
const PRUNE_SLACK_EXACT: f64 = 1e-9;
const PRUNE_SLACK_ITERATIVE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub dependency: DependencyRule,
    /// Step horizon for the meeting-based dependency rule.
    pub horizon: Option<usize>,
    pub synthesis: SynthesisConfig,
    /// Policies examined per cluster before giving up.
    pub max_policies: usize,
    pub product: ProductOptions,
    /// Check handshakes at every product state, not only reachable ones.
    pub strict_success: bool,
    /// Worker threads for clusters; 0 uses the default pool.
    pub jobs: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            dependency: DependencyRule::default(),
            horizon: None,
            synthesis: SynthesisConfig::default(),
            max_policies: 100_000,
            product: ProductOptions::default(),
            strict_success: false,
            jobs: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("cluster {cluster}: {source}")]
    Product {
        cluster: usize,
        #[source]
        source: ProductError,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Computed value of one conjunct of an agent's formula at the initial
/// product state under the chosen policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Satisfaction {
    pub agent: AgentId,
    pub formula: String,
    /// Probability of the operator's path formula as written, `None` for
    /// plain state conjuncts.
    pub probability: Option<f64>,
    pub holds: bool,
    /// Linear-solve residual for unbounded until.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSolution {
    pub index: usize,
    pub agents: Vec<AgentId>,
    pub product: ProductMdp,
    pub policy: TeamPolicy,
    pub satisfaction: Vec<Satisfaction>,
    /// Policies examined before this one was accepted (inclusive).
    pub examined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionBundle {
    pub clustering: Clustering,
    pub clusters: Vec<ClusterSolution>,
    pub local: BTreeMap<AgentId, LocalPolicy>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveOutcome {
    Solved(SolutionBundle),
    /// Proven: no stationary successful policy of the cluster satisfies its
    /// mutual formula.
    NoSolution {
        cluster: usize,
        agents: Vec<AgentId>,
        reason: String,
    },
    /// The enumeration cap was hit first.
    Inconclusive {
        cluster: usize,
        agents: Vec<AgentId>,
        examined: usize,
    },
}

struct Operator {
    agent: AgentId,
    text: String,
    cmp: Comparator,
    threshold: f64,
    target: PathTarget,
    /// The formula was `G`, checked as `1 - Prob(F !φ)`.
    complement: bool,
}

struct StateConjunct {
    agent: AgentId,
    text: String,
    formula: StateFormula,
}

/// Top-level conjuncts of a formula, dropping `true`.
pub fn split_conjunction(f: &StateFormula) -> Vec<StateFormula> {
    fn walk(f: &StateFormula, out: &mut Vec<StateFormula>) {
        match f {
            StateFormula::And(l, r) => {
                walk(l, out);
                walk(r, out);
            }
            StateFormula::True => {}
            other => out.push(other.clone()),
        }
    }
    let mut out = Vec::new();
    walk(f, &mut out);
    out
}

/// Whether `f` is a probability operator over `G`.
pub fn is_always(f: &StateFormula) -> bool {
    matches!(
        f,
        StateFormula::Prob { path, .. } if matches!(path.as_ref(), PathFormula::Always { .. })
    )
}

enum ClusterOutcome {
    Solved(Box<ClusterSolution>),
    NoSolution(String),
    Inconclusive(usize),
}

fn solve_cluster(
    team: &Team,
    index: usize,
    agents: &[AgentId],
    config: &SolveConfig,
) -> Result<ClusterOutcome, ProductError> {
    mutual_formula(team, agents)?;
    let product = build_product(team, agents, config.product)?;
    let model = product.mdp();
    let s0 = model.initial();
    let syn = &config.synthesis;

    let mut operators = Vec::new();
    let mut plain = Vec::new();
    for &agent in agents {
        for part in split_conjunction(&team.agent(agent).formula) {
            let text = part.to_string();
            let complement = is_always(&part);
            match rewrite_derived(&part) {
                StateFormula::Prob {
                    cmp,
                    threshold,
                    path,
                } => operators.push(Operator {
                    agent,
                    text,
                    cmp,
                    threshold,
                    target: PathTarget::resolve(model, &path, syn),
                    complement,
                }),
                formula => plain.push(StateConjunct {
                    agent,
                    text,
                    formula,
                }),
            }
        }
    }

    for c in &plain {
        if !sat_states(model, &c.formula, syn).contains(s0) {
            return Ok(ClusterOutcome::NoSolution(format!(
                "initial state {} violates `{}` of agent {}",
                model.state_label(s0),
                c.text,
                c.agent
            )));
        }
    }

    // value iteration decides the initial state and prunes its actions
    let mut initial_allowed: Vec<ActionId> = model.choices(s0).iter().map(|c| c.action).collect();
    let mut rank = vec![vec![0usize; model.actions().len()]; model.num_states()];
    let mut distance_sum = vec![vec![0usize; model.actions().len()]; model.num_states()];
    for op in &operators {
        let check = check_resolved(model, op.cmp, op.threshold, &op.target, syn);
        let slack = match &op.target {
            PathTarget::Until {
                bound: Bound::Unbounded,
                ..
            } => PRUNE_SLACK_ITERATIVE,
            _ => PRUNE_SLACK_EXACT,
        };
        let within = |q: f64| {
            if op.cmp.is_lower_bound() {
                q + slack >= op.threshold
            } else {
                q - slack <= op.threshold
            }
        };
        if !within(check.extremal.value(s0)) {
            return Ok(ClusterOutcome::NoSolution(format!(
                "`{}` of agent {} cannot be met: extremal probability {:.12} at {}",
                op.text,
                op.agent,
                check.extremal.value(s0),
                model.state_label(s0)
            )));
        }
        if syn.mode == ThresholdMode::Existential {
            let qs = &check.extremal.choice_values[s0.0];
            initial_allowed.retain(|a| {
                let k = model.choices(s0).iter().position(|c| c.action == *a).expect("enabled");
                within(qs[k])
            });
        }
        for s in model.state_ids() {
            for a in &check.extremal.witnesses[s.0] {
                rank[s.0][a.0] += 1;
            }
        }
        let dist = distances(model, &op.target, check.extremal.objective);
        for s in model.state_ids() {
            for c in model.choices(s) {
                distance_sum[s.0][c.action.0] += c
                    .dist
                    .support()
                    .iter()
                    .map(|(t, _)| dist[t.0])
                    .min()
                    .unwrap_or(usize::MAX / 4);
            }
        }
    }
    if initial_allowed.is_empty() {
        return Ok(ClusterOutcome::NoSolution(format!(
            "no action at {} meets every probability bound",
            model.state_label(s0)
        )));
    }

    let candidates: Vec<Vec<ActionId>> = model
        .state_ids()
        .map(|s| {
            let mut acts: Vec<ActionId> = if s == s0 {
                initial_allowed.clone()
            } else {
                model.choices(s).iter().map(|c| c.action).collect()
            };
            acts.retain(|&a| handshake_executable(team, &product, s, a));
            acts.sort_by(|&a, &b| {
                rank[s.0][b.0]
                    .cmp(&rank[s.0][a.0])
                    .then(distance_sum[s.0][a.0].cmp(&distance_sum[s.0][b.0]))
                    .then(model.action_label(a).cmp(model.action_label(b)))
            });
            acts
        })
        .collect();
    let sp = SpSet {
        cluster: index,
        model,
        candidates,
    };

    let mut stream = policy_stream(&sp);
    let mut examined = 0;
    while examined < config.max_policies {
        let Some(mut policy) = stream.next() else {
            return Ok(ClusterOutcome::NoSolution(
                "no stationary policy with executable handshakes satisfies the mutual formula"
                    .into(),
            ));
        };
        examined += 1;
        let mut satisfaction = Vec::new();
        let mut ok = true;
        for op in &operators {
            let (p, residual) = path_probability(model, &policy.choice, s0, &op.target);
            let holds = meets(op.cmp, p, op.threshold);
            ok &= holds;
            satisfaction.push(Satisfaction {
                agent: op.agent,
                formula: op.text.clone(),
                probability: Some(if op.complement { 1.0 - p } else { p }),
                holds,
                residual,
            });
            if !ok {
                break;
            }
        }
        if !ok {
            continue;
        }
        if config.strict_success {
            for s in model.state_ids() {
                if policy.choice[s.0].is_none() {
                    policy.choice[s.0] = model
                        .choices(s)
                        .iter()
                        .map(|c| c.action)
                        .find(|&a| handshake_executable(team, &product, s, a))
                        .or(Some(model.choices(s)[0].action));
                }
            }
        }
        if !is_successful(&policy, &product, team).successful {
            if config.strict_success {
                return Ok(ClusterOutcome::NoSolution(
                    "some product state offers no executable action".into(),
                ));
            }
            continue;
        }
        for c in &plain {
            satisfaction.push(Satisfaction {
                agent: c.agent,
                formula: c.text.clone(),
                probability: None,
                holds: true,
                residual: None,
            });
        }
        satisfaction.sort_by_key(|s| s.agent);
        return Ok(ClusterOutcome::Solved(Box::new(ClusterSolution {
            index,
            agents: agents.to_vec(),
            product: product.clone(),
            policy,
            satisfaction,
            examined,
        })));
    }
    if stream.next().is_none() {
        Ok(ClusterOutcome::NoSolution(
            "no stationary policy with executable handshakes satisfies the mutual formula".into(),
        ))
    } else {
        Ok(ClusterOutcome::Inconclusive(examined))
    }
}

/// Graph distance from each state to the target set of an operator, used to
/// order candidates so that the first policies head towards the target.
fn distances(model: &Mdp, target: &PathTarget, objective: Objective) -> Vec<usize> {
    let far = usize::MAX / 4;
    if objective == Objective::Min {
        return vec![0; model.num_states()];
    }
    let (left, right): (Vec<bool>, &Vec<bool>) = match target {
        PathTarget::Next(goal) => (vec![true; goal.len()], goal),
        PathTarget::Until { left, right, .. } => (left.clone(), right),
    };
    let mut preds: Vec<Vec<StateId>> = vec![Vec::new(); model.num_states()];
    for s in model.state_ids() {
        for c in model.choices(s) {
            for &(t, _) in c.dist.support() {
                preds[t.0].push(s);
            }
        }
    }
    let mut dist = vec![far; model.num_states()];
    let mut queue = VecDeque::new();
    for s in model.state_ids().filter(|s| right[s.0]) {
        dist[s.0] = 0;
        queue.push_back(s);
    }
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t.0] {
            if dist[s.0] == far && left[s.0] {
                dist[s.0] = dist[t.0] + 1;
                queue.push_back(s);
            }
        }
    }
    dist
}

/// Runs every cluster and combines the outcomes. A proven failure of any
/// cluster takes precedence over a cap being hit elsewhere.
pub fn solve_problem1(team: &Team, config: &SolveConfig) -> Result<SolveOutcome, SolveError> {
    let graph = build_dependency_graph(team, config.dependency, config.horizon);
    let clustering = compute_clusters(&graph);
    let mut warnings = Vec::new();
    if !clustering.has_dependent_agents() {
        warnings.push(NO_DEPENDENCY_WARNING.to_owned());
    }
    let work: Vec<(usize, Vec<AgentId>)> = clustering
        .clusters()
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.clone()))
        .collect();
    let run = || -> Vec<Result<ClusterOutcome, SolveError>> {
        work.par_iter()
            .map(|(index, agents)| {
                solve_cluster(team, *index, agents, config).map_err(|source| SolveError::Product {
                    cluster: *index,
                    source,
                })
            })
            .collect()
    };
    let results = if config.jobs == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| SolveError::Pool(e.to_string()))?
            .install(run)
    };
    let mut outcomes = Vec::with_capacity(results.len());
    for r in results {
        outcomes.push(r?);
    }

    for ((index, agents), outcome) in work.iter().zip(&outcomes) {
        if let ClusterOutcome::NoSolution(reason) = outcome {
            return Ok(SolveOutcome::NoSolution {
                cluster: *index,
                agents: agents.clone(),
                reason: reason.clone(),
            });
        }
    }
    for ((index, agents), outcome) in work.iter().zip(&outcomes) {
        if let ClusterOutcome::Inconclusive(examined) = outcome {
            return Ok(SolveOutcome::Inconclusive {
                cluster: *index,
                agents: agents.clone(),
                examined: *examined,
            });
        }
    }
    let clusters: Vec<ClusterSolution> = outcomes
        .into_iter()
        .map(|o| match o {
            ClusterOutcome::Solved(c) => *c,
            _ => unreachable!("failures returned above"),
        })
        .collect();
    let mut local = BTreeMap::new();
    for c in &clusters {
        local.extend(project_policy(&c.policy, &c.product));
    }
    Ok(SolveOutcome::Solved(SolutionBundle {
        clustering,
        clusters,
        local,
        warnings,
    }))
}

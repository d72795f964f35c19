//! JSON model and policy files.
//!
//! A model file lists agents with their regions, actions, transitions and
//! formula text. A policy file stores, per cluster, the team policy as
//! `(product state, action)` rows and, per agent, the projected policy tagged
//! by joint context. All references are by label.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coupling::DependencyRule;
use crate::mdp::{ActionKind, ModelError, RawMdp};
use crate::pctl::{parse_formula, ParseError};
use crate::policy::{SolutionBundle, SolveConfig, TeamPolicy};
use crate::product::ProductMdp;
use crate::synthesis::ThresholdMode;
use crate::team::{Team, TeamError};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("agent `{agent}`: {source}")]
    Model {
        agent: String,
        #[source]
        source: ModelError,
    },
    #[error("agent `{agent}`: formula {source}")]
    Formula {
        agent: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error("policy does not match the model: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: String,
    pub states: Vec<String>,
    pub initial: String,
    #[serde(default)]
    pub handshake_actions: Vec<String>,
    #[serde(default)]
    pub independent_actions: Vec<String>,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default = "default_formula")]
    pub formula: String,
}

fn default_formula() -> String {
    "true".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub agents: Vec<AgentEntry>,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }

    /// SHA-256 of the compact serialization, in hex.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("model files serialize");
        let mut out = String::with_capacity(64);
        for b in Sha256::digest(canonical.as_bytes()) {
            write!(out, "{b:02x}").expect("writing to a string");
        }
        out
    }

    /// Builds and validates every agent, then the team.
    pub fn to_team(&self) -> Result<Team, FormatError> {
        let mut members = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let mut raw = RawMdp::new(&a.initial).states(a.states.iter().map(String::as_str));
            for h in &a.handshake_actions {
                raw = raw.action(h, ActionKind::Handshake);
            }
            for i in &a.independent_actions {
                raw = raw.action(i, ActionKind::Independent);
            }
            for t in &a.transitions {
                raw = raw.transition(&t.from, &t.action, &t.to, t.prob);
            }
            let mdp = raw.build().map_err(|source| FormatError::Model {
                agent: a.id.clone(),
                source,
            })?;
            let formula = parse_formula(&a.formula).map_err(|source| FormatError::Formula {
                agent: a.id.clone(),
                source,
            })?;
            members.push((a.id.clone(), mdp, formula));
        }
        Ok(Team::new(members)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Existential,
    Universal,
}

impl From<ThresholdMode> for ModeName {
    fn from(m: ThresholdMode) -> Self {
        match m {
            ThresholdMode::Existential => ModeName::Existential,
            ThresholdMode::Universal => ModeName::Universal,
        }
    }
}

impl From<ModeName> for ThresholdMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Existential => ThresholdMode::Existential,
            ModeName::Universal => ThresholdMode::Universal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DependencyName {
    SharedAction,
    SharedActionWithMeeting,
}

impl From<DependencyRule> for DependencyName {
    fn from(r: DependencyRule) -> Self {
        match r {
            DependencyRule::SharedAction => DependencyName::SharedAction,
            DependencyRule::SharedActionWithMeeting => DependencyName::SharedActionWithMeeting,
        }
    }
}

impl From<DependencyName> for DependencyRule {
    fn from(r: DependencyName) -> Self {
        match r {
            DependencyName::SharedAction => DependencyRule::SharedAction,
            DependencyName::SharedActionWithMeeting => DependencyRule::SharedActionWithMeeting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRow {
    pub state: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatisfactionRecord {
    pub agent: String,
    pub formula: String,
    pub probability: Option<f64>,
    pub holds: bool,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterRecord {
    pub index: usize,
    pub agents: Vec<String>,
    pub product_states: usize,
    pub examined: usize,
    pub team_policy: Vec<PolicyRow>,
    pub satisfaction: Vec<SatisfactionRecord>,
}

/// One projected row: in joint context `context` the agent is at `state`
/// and takes `action`, or idles when it is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalRow {
    pub context: String,
    pub state: String,
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentRecord {
    pub agent: String,
    pub cluster: usize,
    pub policy: Vec<LocalRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub format_version: u32,
    pub model_digest: String,
    pub mode: ModeName,
    pub epsilon: f64,
    pub max_iters: u64,
    pub dependency: DependencyName,
    pub horizon: Option<usize>,
    pub prune: bool,
    pub clusters: Vec<ClusterRecord>,
    pub agents: Vec<AgentRecord>,
}

impl PolicyFile {
    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy files serialize")
    }

    pub fn from_bundle(
        team: &Team,
        bundle: &SolutionBundle,
        config: &SolveConfig,
        model_digest: String,
    ) -> Self {
        let name = |a: crate::team::AgentId| team.agent(a).name.clone();
        let clusters = bundle
            .clusters
            .iter()
            .map(|c| {
                let m = c.product.mdp();
                ClusterRecord {
                    index: c.index,
                    agents: c.agents.iter().map(|&a| name(a)).collect(),
                    product_states: m.num_states(),
                    examined: c.examined,
                    team_policy: c
                        .policy
                        .domain()
                        .map(|s| PolicyRow {
                            state: m.state_label(s).to_owned(),
                            action: m.action_label(c.policy.action_at(s).expect("domain")).to_owned(),
                        })
                        .collect(),
                    satisfaction: c
                        .satisfaction
                        .iter()
                        .map(|s| SatisfactionRecord {
                            agent: name(s.agent),
                            formula: s.formula.clone(),
                            probability: s.probability,
                            holds: s.holds,
                            residual: s.residual,
                        })
                        .collect(),
                }
            })
            .collect();
        let agents = bundle
            .local
            .values()
            .map(|lp| {
                let product = &bundle.clusters[lp.cluster - 1].product;
                let local = &team.agent(lp.agent).mdp;
                AgentRecord {
                    agent: name(lp.agent),
                    cluster: lp.cluster,
                    policy: lp
                        .entries
                        .iter()
                        .map(|e| LocalRow {
                            context: product.mdp().state_label(e.context).to_owned(),
                            state: local.state_label(e.local_state).to_owned(),
                            action: e.action.map(|a| local.action_label(a).to_owned()),
                        })
                        .collect(),
                }
            })
            .collect();
        Self {
            format_version: POLICY_FORMAT_VERSION,
            model_digest,
            mode: config.synthesis.mode.into(),
            epsilon: config.synthesis.epsilon,
            max_iters: config.synthesis.max_iters,
            dependency: config.dependency.into(),
            horizon: config.horizon,
            prune: config.product.prune_unreachable,
            clusters,
            agents,
        }
    }

    /// Rebuilds the team policy of `record` over `product`.
    pub fn team_policy(record: &ClusterRecord, product: &ProductMdp) -> Result<TeamPolicy, FormatError> {
        let m = product.mdp();
        let index: HashMap<&str, _> = m.state_ids().map(|s| (m.state_label(s), s)).collect();
        let mut choice = vec![None; m.num_states()];
        for row in &record.team_policy {
            let s = *index
                .get(row.state.as_str())
                .ok_or_else(|| FormatError::Mismatch(format!("unknown product state {}", row.state)))?;
            let a = m
                .action_id(&row.action)
                .filter(|&a| m.is_enabled(s, a))
                .ok_or_else(|| {
                    FormatError::Mismatch(format!("action {} is not enabled at {}", row.action, row.state))
                })?;
            choice[s.0] = Some(a);
        }
        Ok(TeamPolicy {
            cluster: record.index,
            choice,
        })
    }
}

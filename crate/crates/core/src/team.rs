use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::mdp::{ActionKind, Mdp};
use crate::pctl::StateFormula;

/// 1-based agent index in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId(pub usize);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub name: String,
    pub mdp: Mdp,
    pub formula: StateFormula,
}

impl Agent {
    /// Labels of the agent's handshaking actions.
    pub fn handshakes(&self) -> impl Iterator<Item = &str> {
        self.mdp
            .actions()
            .iter()
            .filter(|a| a.kind == ActionKind::Handshake)
            .map(|a| a.label.as_str())
    }

    pub fn has_handshake(&self, label: &str) -> bool {
        self.mdp
            .action_id(label)
            .is_some_and(|a| self.mdp.action(a).kind == ActionKind::Handshake)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeamError {
    #[error("a team needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("duplicate agent `{0}`")]
    DuplicateAgent(String),
    #[error("independent action `{action}` is declared by both `{first}` and `{second}`")]
    SharedIndependent {
        action: String,
        first: String,
        second: String,
    },
    #[error("action `{action}` is a handshake for `{handshake}` but independent for `{independent}`")]
    KindMismatch {
        action: String,
        handshake: String,
        independent: String,
    },
}

/// The agents of one problem instance, with ids `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Team {
    agents: Vec<Agent>,
}

impl Team {
    /// Builds a team from named models and their formulas. Independent action
    /// sets must be pairwise disjoint and every label keeps one kind.
    pub fn new(members: Vec<(String, Mdp, StateFormula)>) -> Result<Self, TeamError> {
        if members.len() < 2 {
            return Err(TeamError::TooFewAgents(members.len()));
        }
        let mut names = HashMap::new();
        let mut owners: HashMap<String, (ActionKind, usize)> = HashMap::new();
        for (i, (name, mdp, _)) in members.iter().enumerate() {
            if names.insert(name.clone(), i).is_some() {
                return Err(TeamError::DuplicateAgent(name.clone()));
            }
            for a in mdp.actions() {
                match owners.get(&a.label) {
                    None => {
                        owners.insert(a.label.clone(), (a.kind, i));
                    }
                    Some(&(kind, j)) => {
                        let other = members[j].0.clone();
                        match (kind, a.kind) {
                            (ActionKind::Independent, ActionKind::Independent) => {
                                return Err(TeamError::SharedIndependent {
                                    action: a.label.clone(),
                                    first: other,
                                    second: name.clone(),
                                })
                            }
                            (ActionKind::Handshake, ActionKind::Independent) => {
                                return Err(TeamError::KindMismatch {
                                    action: a.label.clone(),
                                    handshake: other,
                                    independent: name.clone(),
                                })
                            }
                            (ActionKind::Independent, ActionKind::Handshake) => {
                                return Err(TeamError::KindMismatch {
                                    action: a.label.clone(),
                                    handshake: name.clone(),
                                    independent: other,
                                })
                            }
                            (ActionKind::Handshake, ActionKind::Handshake) => {}
                        }
                    }
                }
            }
        }
        let agents = members
            .into_iter()
            .enumerate()
            .map(|(i, (name, mdp, formula))| Agent {
                id: AgentId(i + 1),
                name,
                mdp,
                formula,
            })
            .collect();
        Ok(Self { agents })
    }

    /// Team of unnamed agents (`a1`, `a2`, ...) with trivial formulas.
    pub fn from_mdps(mdps: Vec<Mdp>) -> Result<Self, TeamError> {
        Self::new(
            mdps.into_iter()
                .enumerate()
                .map(|(i, m)| (format!("a{}", i + 1), m, StateFormula::True))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.iter().map(|a| a.id)
    }

    pub fn agent(&self, id: AgentId) -> &Agent {
        &self.agents[id.0 - 1]
    }

    pub fn by_name(&self, name: &str) -> Option<&Agent> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Agents that declare `label` as a handshaking action.
    pub fn sharers(&self, label: &str) -> Vec<AgentId> {
        self.agents
            .iter()
            .filter(|a| a.has_handshake(label))
            .map(|a| a.id)
            .collect()
    }
}

//! Decentralized PCTL controller synthesis for teams of agents modeled as
//! Markov decision processes.
//!
//! Agents that share handshaking actions are grouped into clusters; each
//! cluster is synthesized on its own product model and the resulting team
//! policy is projected back onto the agents.

pub mod coupling;
pub mod format;
pub mod mdp;
pub mod pctl;
pub mod policy;
pub mod product;
pub mod sim;
pub mod synthesis;
pub mod team;

pub use coupling::{Clustering, DependencyGraph, DependencyRule};
pub use mdp::{
    ActionId, ActionKind, Distribution, Dtmc, FinitePath, Mdp, ModelError, RawMdp, StateId,
    StationaryPolicy,
};
pub use pctl::{parse_formula, Bound, Comparator, PathFormula, StateFormula};
pub use policy::{solve_problem1, SolutionBundle, SolveConfig, SolveOutcome, TeamPolicy};
pub use product::{build_product, ProductMdp, ProductOptions};
pub use synthesis::{SynthesisConfig, ThresholdMode};
pub use team::{Agent, AgentId, Team};

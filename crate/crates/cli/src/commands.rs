use std::fs;
use std::path::{Path, PathBuf};

use massynth_core::coupling::{
    build_dependency_graph, compute_clusters, estimate_state_counts, estimate_state_counts_from_sizes,
};
use massynth_core::format::{FormatError, ModelFile, PolicyFile};
use massynth_core::pctl::rewrite_derived;
use massynth_core::policy::{
    is_always, path_probability, split_conjunction, SolveError, NO_DEPENDENCY_WARNING,
};
use massynth_core::sim::{estimate_path_prob, format_trace, SimConfig, SimError};
use massynth_core::synthesis::PathTarget;
use massynth_core::{
    build_product, solve_problem1, AgentId, Bound, DependencyRule, FinitePath, PathFormula,
    ProductOptions, SolveConfig, SolveOutcome, StateFormula, StationaryPolicy, SynthesisConfig,
    Team, ThresholdMode,
};
use thiserror::Error;

use crate::report::{id_set, prob};
use crate::{Dependency, Mode};

pub const EXIT_OK: u8 = 0;
pub const EXIT_INVALID: u8 = 1;
pub const EXIT_NO_SOLUTION: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: Box<FormatError>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Write { .. } | CliError::Solve(SolveError::Pool(_)) => EXIT_INTERNAL,
            _ => EXIT_INVALID,
        }
    }
}

impl From<Dependency> for DependencyRule {
    fn from(d: Dependency) -> Self {
        match d {
            Dependency::SharedAction => DependencyRule::SharedAction,
            Dependency::SharedActionWithMeeting => DependencyRule::SharedActionWithMeeting,
        }
    }
}

impl From<Mode> for ThresholdMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Existential => ThresholdMode::Existential,
            Mode::Universal => ThresholdMode::Universal,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_owned(),
        source,
    })
}

fn load_model(path: &Path) -> Result<(ModelFile, Team), CliError> {
    let format = |source| CliError::Format {
        path: path.to_owned(),
        source: Box::new(source),
    };
    let file = ModelFile::from_json(&read(path)?).map_err(format)?;
    let team = file.to_team().map_err(format)?;
    Ok((file, team))
}

fn names(team: &Team, agents: &[AgentId]) -> String {
    agents
        .iter()
        .map(|&a| team.agent(a).name.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn is_unbounded(f: &StateFormula) -> bool {
    match rewrite_derived(f) {
        StateFormula::Prob { path, .. } => matches!(
            path.as_ref(),
            PathFormula::Until {
                bound: Bound::Unbounded,
                ..
            }
        ),
        _ => false,
    }
}

pub fn validate(path: &Path) -> Result<u8, CliError> {
    let (_, team) = load_model(path)?;
    for agent in team.agents() {
        let handshakes = agent.handshakes().count();
        println!(
            "agent {} ({}): {} states, {} actions ({} handshake), formula {}",
            agent.id,
            agent.name,
            agent.mdp.num_states(),
            agent.mdp.actions().len(),
            handshakes,
            agent.formula
        );
        for h in agent.handshakes() {
            if team.sharers(h).len() < 2 {
                println!("  note: handshake `{h}` is declared by no other agent");
            }
        }
    }
    println!("valid: {} agents", team.len());
    Ok(EXIT_OK)
}

pub fn cluster(path: &Path, dependency: Dependency, horizon: Option<usize>) -> Result<u8, CliError> {
    let (_, team) = load_model(path)?;
    let graph = build_dependency_graph(&team, dependency.into(), horizon);
    let clustering = compute_clusters(&graph);
    println!("agents: {}", team.len());
    println!("clusters: {}", clustering.len());
    for (i, c) in clustering.clusters().iter().enumerate() {
        println!("  C{} = {}  ({})", i + 1, id_set(c.iter().map(|a| a.0)), names(&team, c));
    }
    let f: Vec<String> = team
        .ids()
        .map(|a| format!("{}->{}", a.0, clustering.cluster_of(a)))
        .collect();
    println!("f: {}", f.join(" "));

    let w = team.agents().iter().map(|a| a.mdp.num_states()).max().unwrap_or(1);
    let uniform = estimate_state_counts(&clustering, w);
    println!("state counts with W = {w}:");
    for (i, (c, m)) in clustering.clusters().iter().zip(&uniform.per_cluster).enumerate() {
        println!("  C{}: W^{} = {m}", i + 1, c.len());
    }
    println!("  centralized: W^{} = {}", team.len(), uniform.centralized);
    let sizes: Vec<usize> = team.agents().iter().map(|a| a.mdp.num_states()).collect();
    let actual = estimate_state_counts_from_sizes(&clustering, &sizes);
    let per: Vec<String> = actual.per_cluster.iter().map(|m| m.to_string()).collect();
    println!(
        "with actual region counts: clusters [{}], centralized {}",
        per.join(", "),
        actual.centralized
    );
    if !clustering.has_dependent_agents() {
        println!("warning: {NO_DEPENDENCY_WARNING}");
    }
    Ok(EXIT_OK)
}

pub struct SynthesizeArgs {
    pub mode: Mode,
    pub dependency: Dependency,
    pub horizon: Option<usize>,
    pub epsilon: f64,
    pub max_iters: u64,
    pub max_policies: usize,
    pub jobs: usize,
    pub strict: bool,
    pub prune: bool,
    pub out: Option<PathBuf>,
}

pub fn synthesize(path: &Path, args: SynthesizeArgs) -> Result<u8, CliError> {
    if args.epsilon.is_nan() || args.epsilon <= 0.0 {
        return Err(CliError::Invalid("--epsilon must be positive".into()));
    }
    if args.max_policies == 0 {
        return Err(CliError::Invalid("--max-policies must be at least 1".into()));
    }
    let (file, team) = load_model(path)?;
    let config = SolveConfig {
        dependency: args.dependency.into(),
        horizon: args.horizon,
        synthesis: SynthesisConfig {
            mode: args.mode.into(),
            epsilon: args.epsilon,
            max_iters: args.max_iters,
        },
        max_policies: args.max_policies,
        product: ProductOptions {
            prune_unreachable: args.prune,
        },
        strict_success: args.strict,
        jobs: args.jobs,
    };
    let bundle = match solve_problem1(&team, &config)? {
        SolveOutcome::Solved(b) => b,
        SolveOutcome::NoSolution {
            cluster,
            agents,
            reason,
        } => {
            println!(
                "no solution: cluster {cluster} {} ({}): {reason}",
                id_set(agents.iter().map(|a| a.0)),
                names(&team, &agents)
            );
            return Ok(EXIT_NO_SOLUTION);
        }
        SolveOutcome::Inconclusive {
            cluster,
            agents,
            examined,
        } => {
            println!(
                "inconclusive: cluster {cluster} {} ({}): cap of {examined} team policies reached",
                id_set(agents.iter().map(|a| a.0)),
                names(&team, &agents)
            );
            return Ok(EXIT_INCONCLUSIVE);
        }
    };
    for w in &bundle.warnings {
        println!("warning: {w}");
    }
    for c in &bundle.clusters {
        println!(
            "cluster {} {}: {} product states, {} team policies examined",
            c.index,
            id_set(c.agents.iter().map(|a| a.0)),
            c.product.mdp().num_states(),
            c.examined
        );
        for s in &c.satisfaction {
            let agent = &team.agent(s.agent).name;
            match s.probability {
                Some(p) => {
                    let mut line = format!("  {agent}: {}  probability {}", s.formula, prob(p));
                    if let Some(r) = s.residual {
                        line.push_str(&format!("  epsilon {:e} residual {:e}", config.synthesis.epsilon, r));
                    }
                    println!("{line}");
                }
                None => println!("  {agent}: {}  holds at the initial state", s.formula),
            }
        }
    }
    let policy = PolicyFile::from_bundle(&team, &bundle, &config, file.digest());
    match &args.out {
        Some(out) => {
            fs::write(out, policy.to_json()).map_err(|source| CliError::Write {
                path: out.clone(),
                source,
            })?;
            println!("policy written to {}", out.display());
        }
        None => println!("{}", policy.to_json()),
    }
    Ok(EXIT_OK)
}

pub fn simulate(
    model_path: &Path,
    policy_path: &Path,
    trials: usize,
    seed: u64,
    max_steps: usize,
    trace: bool,
) -> Result<u8, CliError> {
    let sim = SimConfig::new(trials, max_steps, seed)?;
    let (file, team) = load_model(model_path)?;
    let policy = PolicyFile::from_json(&read(policy_path)?).map_err(|source| CliError::Format {
        path: policy_path.to_owned(),
        source: Box::new(source),
    })?;
    if policy.model_digest != file.digest() {
        return Err(CliError::Invalid(format!(
            "{} was synthesized for a different model (digest {}, model has {})",
            policy_path.display(),
            policy.model_digest,
            file.digest()
        )));
    }
    let syn = SynthesisConfig {
        mode: policy.mode.into(),
        epsilon: policy.epsilon,
        max_iters: policy.max_iters,
    };
    println!("trials {trials}, seed {seed}, max steps {max_steps}");
    for record in &policy.clusters {
        let mut agents = Vec::with_capacity(record.agents.len());
        for name in &record.agents {
            let agent = team
                .by_name(name)
                .ok_or_else(|| CliError::Invalid(format!("policy names unknown agent `{name}`")))?;
            agents.push(agent.id);
        }
        let product = build_product(
            &team,
            &agents,
            ProductOptions {
                prune_unreachable: policy.prune,
            },
        )
        .map_err(|e| CliError::Invalid(format!("cluster {}: {e}", record.index)))?;
        let tp = PolicyFile::team_policy(record, &product).map_err(|source| CliError::Format {
            path: policy_path.to_owned(),
            source: Box::new(source),
        })?;
        let model = product.mdp();
        // states the policy never reaches get their first action
        let total: Vec<_> = model
            .state_ids()
            .map(|s| tp.action_at(s).unwrap_or(model.choices(s)[0].action))
            .collect();
        let chain = model
            .induce_dtmc(&StationaryPolicy::new(total.clone()))
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        println!(
            "cluster {} {}:",
            record.index,
            id_set(agents.iter().map(|a| a.0))
        );
        for &agent in &agents {
            let name = &team.agent(agent).name;
            for part in split_conjunction(&team.agent(agent).formula) {
                let StateFormula::Prob { path, .. } = rewrite_derived(&part) else {
                    continue;
                };
                let target = PathTarget::resolve(model, &path, &syn);
                let (mut computed, residual) = path_probability(model, &tp.choice, model.initial(), &target);
                let report = estimate_path_prob(&chain, &target, &sim);
                let mut estimate = report.estimate;
                if is_always(&part) {
                    computed = 1.0 - computed;
                    estimate = 1.0 - estimate;
                }
                let mut line = format!(
                    "  {name}: {part}  computed {}  estimate {} (stderr {})",
                    prob(computed),
                    prob(estimate),
                    prob(report.stderr)
                );
                if is_unbounded(&part) {
                    line.push_str(&format!(
                        "  epsilon {:e} residual {:e}",
                        syn.epsilon,
                        residual.unwrap_or(0.0)
                    ));
                }
                if report.truncated {
                    line.push_str("  [some trials hit --max-steps undecided]");
                }
                println!("{line}");
                if trace {
                    if let Some(sample) = report.samples.first() {
                        let with_actions = FinitePath {
                            states: sample.states.clone(),
                            actions: sample.states[..sample.len()]
                                .iter()
                                .map(|s| Some(total[s.0]))
                                .collect(),
                        };
                        print!(
                            "{}",
                            format_trace(
                                &with_actions,
                                |s| model.state_label(s).to_owned(),
                                |a| model.action_label(a).to_owned()
                            )
                        );
                    }
                }
            }
        }
    }
    Ok(EXIT_OK)
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use havenmatch_core::analysis::{
    check_strategy_proofness, compare_mechanisms, expected_utility, is_pareto_optimal_within,
    locality_expansion_report, AnalysisError, DominanceOutcome, Grouping, Sampler, SweepOptions,
    UtilityModel, DEFAULT_ORACLE_BUDGET,
};
use havenmatch_core::store::{
    append_round, import_csv_files, load_document, next_round_id, read_rounds, InstanceDocument,
    PrioritySpec, RoundRecord, StoreError,
};
use havenmatch_core::{
    AgentId, Instance, Matching, Mechanism, MechanismError, PriorityError, PriorityRanking,
    PriorityWeights, ProviderId, RoutingPolicy,
};
use havenmatch_service::AppState;

/// Priority-queue housing allocation: run rounds, audit them, probe them.
#[derive(Parser)]
#[command(name = "havenmatch", version)]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate one round and optionally append it to a round log.
    Run {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long, default_value = "sd")]
        mechanism: Mechanism,
        #[command(flatten)]
        priority: PriorityArgs,
        #[command(flatten)]
        routing: RoutingArgs,
        /// Round log (LDJSON) to append the record to.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Check a matching or a logged round for Pareto optimality.
    Audit {
        #[command(flatten)]
        target: AuditTarget,
        /// Maximum number of candidate matchings to examine.
        #[arg(long, default_value_t = DEFAULT_ORACLE_BUDGET)]
        budget: u64,
    },
    /// Search for profitable misreports by one agent, or by each agent.
    Fuzz {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long, default_value = "sd")]
        mechanism: Mechanism,
        #[command(flatten)]
        priority: PriorityArgs,
        #[command(flatten)]
        routing: RoutingArgs,
        /// Only this agent deviates; every agent in turn when absent.
        #[arg(long)]
        deviator: Option<AgentId>,
        /// Sampled reorderings for preference lists too long to enumerate.
        #[arg(long, default_value_t = 1000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        sweep_seed: u64,
    },
    /// Run both mechanisms and compare the matchings agent by agent.
    Compare {
        #[command(flatten)]
        input: InstanceArgs,
        #[command(flatten)]
        priority: PriorityArgs,
        #[command(flatten)]
        routing: RoutingArgs,
    },
    /// Expected utility under a uniformly random queue.
    Utility {
        #[command(flatten)]
        input: InstanceArgs,
        #[arg(long)]
        agent: AgentId,
        /// Monte Carlo sample count; every queue is enumerated when absent.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coarsening chain, e.g. `P,Q;P+Q`: groupings separated by `;`,
        /// groups by `,`, providers pooled within a group by `+`.
        #[arg(long)]
        merge_chain: Option<String>,
        /// JSON file with utility overrides.
        #[arg(long)]
        utilities: Option<PathBuf>,
    },
    /// Build an instance document from agents/options/providers CSV files.
    ImportCsv {
        #[arg(long)]
        agents: PathBuf,
        #[arg(long)]
        options: PathBuf,
        #[arg(long)]
        providers: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        /// Instance to start with; the API can also install one later.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value = "havenmatch-rounds.ldjson")]
        log: PathBuf,
        /// Listen address; falls back to $HAVENMATCH_ADDR, then 127.0.0.1:8080.
        #[arg(long)]
        addr: Option<String>,
    },
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance document (JSON).
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Args)]
struct PriorityArgs {
    /// Explicit queue, highest priority first: `i,j,k`.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["weights", "seed"])]
    priority_order: Option<Vec<AgentId>>,
    /// Criteria weights `family,health,wait`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    weights: Option<Vec<f64>>,
    /// Tie-break seed for weighted priority.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RoutingArgs {
    /// Route an agent to a specific provider: `agent=provider`. Repeatable.
    #[arg(long = "route")]
    routes: Vec<String>,
}

#[derive(Args)]
#[group(required = true)]
struct AuditTarget {
    /// Instance the matching belongs to.
    #[arg(long, requires = "matching", conflicts_with = "log")]
    instance: Option<PathBuf>,
    /// Matching as a JSON object `{agent: option-or-null}`.
    #[arg(long, requires = "instance")]
    matching: Option<PathBuf>,
    /// Round log to audit from.
    #[arg(long, requires = "round")]
    log: Option<PathBuf>,
    #[arg(long, requires = "log")]
    round: Option<u64>,
}

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Exit {
    Ok = 0,
    Io = 1,
    Invalid = 2,
    /// A checked property failed or a manipulation was found.
    Violated = 3,
    BudgetExceeded = 4,
}

#[derive(Debug)]
struct Failure {
    exit: Exit,
    message: String,
    detail: Option<serde_json::Value>,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            exit: Exit::Invalid,
            message: message.into(),
            detail: None,
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let exit = match e {
            StoreError::Io { .. } => Exit::Io,
            _ => Exit::Invalid,
        };
        let detail = match &e {
            StoreError::Validation(v) => Some(json!({ "violations": v })),
            _ => None,
        };
        Failure {
            exit,
            message: e.to_string(),
            detail,
        }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let exit = match e {
            AnalysisError::BudgetExceeded { .. } => Exit::BudgetExceeded,
            _ => Exit::Invalid,
        };
        Failure {
            exit,
            message: e.to_string(),
            detail: None,
        }
    }
}

impl From<MechanismError> for Failure {
    fn from(e: MechanismError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<PriorityError> for Failure {
    fn from(e: PriorityError) -> Self {
        Failure::invalid(e.to_string())
    }
}

/// A rendered command result: a JSON document, its text form, and the exit
/// status it implies.
struct Report {
    json: serde_json::Value,
    text: String,
    exit: Exit,
}

impl Report {
    fn new(value: impl Serialize, text: String) -> Self {
        Report {
            json: serde_json::to_value(value).expect("report serializes"),
            text,
            exit: Exit::Ok,
        }
    }

    fn exit(mut self, exit: Exit) -> Self {
        self.exit = exit;
        self
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve {
            instance,
            log,
            addr,
        } => serve(instance, log, addr),
        command => {
            execute(command).and_then(|report| emit(&report, cli.format, cli.out.as_deref()))
        }
    };
    match result {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(failure) => {
            eprintln!("havenmatch: {}", failure.message);
            if let Some(detail) = &failure.detail {
                eprintln!(
                    "{}",
                    serde_json::to_string_pretty(detail).unwrap_or_default()
                );
            }
            ExitCode::from(failure.exit as u8)
        }
    }
}

fn emit(report: &Report, format: Format, out: Option<&Path>) -> Result<Exit, Failure> {
    let body = match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report.json).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => report.text.clone(),
    };
    match out {
        Some(path) => std::fs::write(path, body).map_err(|source| {
            Failure::from(StoreError::Io {
                path: path.to_path_buf(),
                source,
            })
        })?,
        None => print!("{body}"),
    }
    Ok(report.exit)
}

fn execute(command: Command) -> Result<Report, Failure> {
    match command {
        Command::Run {
            input,
            mechanism,
            priority,
            routing,
            log,
        } => run(
            &input.instance,
            mechanism,
            &priority,
            &routing,
            log.as_deref(),
        ),
        Command::Audit { target, budget } => audit(&target, budget),
        Command::Fuzz {
            input,
            mechanism,
            priority,
            routing,
            deviator,
            budget,
            sweep_seed,
        } => fuzz(
            &input.instance,
            mechanism,
            &priority,
            &routing,
            deviator,
            SweepOptions {
                budget,
                seed: sweep_seed,
            },
        ),
        Command::Compare {
            input,
            priority,
            routing,
        } => compare(&input.instance, &priority, &routing),
        Command::Utility {
            input,
            agent,
            samples,
            seed,
            merge_chain,
            utilities,
        } => utility(
            &input.instance,
            &agent,
            samples,
            seed,
            merge_chain.as_deref(),
            utilities.as_deref(),
        ),
        Command::ImportCsv {
            agents,
            options,
            providers,
        } => {
            let doc = import_csv_files(agents, options, providers)?;
            doc.validate()?;
            let text = serde_json::to_string_pretty(&doc).expect("document serializes") + "\n";
            Ok(Report::new(doc, text))
        }
        Command::Serve { .. } => unreachable!("handled before dispatch"),
    }
}

fn load(path: &Path) -> Result<(InstanceDocument, Instance), Failure> {
    let doc = load_document(path)?;
    let inst = doc.validate()?;
    Ok((doc, inst))
}

/// Flags win over the document's own priority, which wins over the default.
fn resolve_priority(
    doc: &InstanceDocument,
    inst: &Instance,
    args: &PriorityArgs,
) -> Result<PriorityRanking, Failure> {
    let spec = if let Some(order) = &args.priority_order {
        PrioritySpec::Order {
            order: order.clone(),
        }
    } else if args.weights.is_some() || args.seed.is_some() {
        let weights = match args.weights.as_deref() {
            None => PriorityWeights::default(),
            Some(&[family, health, wait]) => PriorityWeights::new(family, health, wait),
            Some(_) => {
                return Err(Failure::invalid(
                    "--weights takes exactly three values: family,health,wait",
                ))
            }
        };
        PrioritySpec::Weights {
            weights,
            seed: args.seed.unwrap_or(0),
        }
    } else {
        doc.priority.clone().unwrap_or_default()
    };
    Ok(spec.resolve(inst)?)
}

fn routing_policy(inst: &Instance, args: &RoutingArgs) -> Result<RoutingPolicy, Failure> {
    let mut policy = RoutingPolicy::default();
    for route in &args.routes {
        let (agent, provider) = route.split_once('=').ok_or_else(|| {
            Failure::invalid(format!("--route {route:?}: expected agent=provider"))
        })?;
        policy = policy.with_override(agent, provider);
    }
    policy.validate(inst)?;
    Ok(policy)
}

fn queue_text(ranking: &PriorityRanking) -> String {
    ranking
        .order
        .iter()
        .map(AgentId::as_str)
        .collect::<Vec<_>>()
        .join(" > ")
}

fn run(
    path: &Path,
    mechanism: Mechanism,
    priority: &PriorityArgs,
    routing: &RoutingArgs,
    log: Option<&Path>,
) -> Result<Report, Failure> {
    let (doc, inst) = load(path)?;
    let ranking = resolve_priority(&doc, &inst, priority)?;
    let routing = match mechanism {
        Mechanism::LocalityRestricted => Some(routing_policy(&inst, routing)?),
        Mechanism::SerialDictatorship => None,
    };
    let round_id = match log {
        Some(log) => next_round_id(log)?,
        None => 1,
    };
    let record = RoundRecord::execute(round_id, mechanism, inst, ranking, routing)?;
    if let Some(log) = log {
        append_round(log, &record)?;
    }

    let mut text = String::new();
    let _ = writeln!(text, "round {} ({mechanism})", record.round_id);
    let _ = writeln!(text, "queue: {}", queue_text(&record.ranking));
    for (turn, step) in record.trace.steps.iter().enumerate() {
        let available: Vec<&str> = step.available.iter().map(|o| o.as_str()).collect();
        let _ = writeln!(
            text,
            "{:>3}. {} -> {}  (available: {})",
            turn + 1,
            step.agent,
            step.chosen,
            if available.is_empty() {
                "-".to_owned()
            } else {
                available.join(" ")
            }
        );
    }
    let _ = writeln!(text, "matching: {}", record.matching);
    let _ = writeln!(text, "digest: {}", record.instance_digest);
    Ok(Report::new(record, text))
}

fn audit(target: &AuditTarget, budget: u64) -> Result<Report, Failure> {
    let (inst, matching, round) = match (&target.log, target.round) {
        (Some(log), Some(round)) => {
            let record = read_rounds(log)?
                .into_iter()
                .find(|r| r.round_id == round)
                .ok_or_else(|| {
                    Failure::invalid(format!("no round {round} in {}", log.display()))
                })?;
            (record.instance, record.matching, Some(round))
        }
        _ => {
            let (_, inst) = load(target.instance.as_deref().expect("clap requires instance"))?;
            let path = target.matching.as_deref().expect("clap requires matching");
            let text = std::fs::read_to_string(path).map_err(|source| {
                Failure::from(StoreError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            })?;
            let matching: Matching = serde_json::from_str(&text)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            (inst, matching, None)
        }
    };
    let verdict = is_pareto_optimal_within(&matching, &inst, budget)?;

    let mut text = format!("matching: {matching}\n");
    match &verdict.witness {
        None => {
            let _ = writeln!(
                text,
                "pareto optimal ({} feasible matchings checked)",
                verdict.candidates
            );
        }
        Some(w) => {
            let _ = writeln!(text, "NOT pareto optimal; dominated by {w}");
        }
    }
    let exit = if verdict.optimal {
        Exit::Ok
    } else {
        Exit::Violated
    };
    Ok(Report::new(
        json!({
            "round_id": round,
            "matching": matching,
            "optimal": verdict.optimal,
            "witness": verdict.witness,
            "candidates": verdict.candidates,
        }),
        text,
    )
    .exit(exit))
}

fn fuzz(
    path: &Path,
    mechanism: Mechanism,
    priority: &PriorityArgs,
    routing: &RoutingArgs,
    deviator: Option<AgentId>,
    opts: SweepOptions,
) -> Result<Report, Failure> {
    let (doc, inst) = load(path)?;
    let ranking = resolve_priority(&doc, &inst, priority)?;
    let policy = routing_policy(&inst, routing)?;
    let deviators: Vec<AgentId> = match deviator {
        Some(d) => vec![d],
        None => inst.agent_ids().cloned().collect(),
    };
    let mut found = Vec::new();
    for d in &deviators {
        found.extend(check_strategy_proofness(
            mechanism, &inst, &ranking, &policy, d, opts,
        )?);
    }

    let mut text = format!(
        "{mechanism}: checked {} deviator(s), queue {}\n",
        deviators.len(),
        queue_text(&ranking)
    );
    if found.is_empty() {
        text.push_str("no profitable misreport found\n");
    }
    for r in &found {
        let mut lie = Vec::new();
        if let Some(p) = &r.deviation.preferences {
            lie.push(format!(
                "preferences {}",
                p.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(">")
            ));
        }
        if let Some(l) = &r.deviation.locality {
            lie.push(format!("locality {l}"));
        }
        let _ = writeln!(
            text,
            "{} reports {}: {} -> {}",
            r.deviator,
            lie.join(", "),
            r.truthful_outcome,
            r.deviant_outcome
        );
    }
    let exit = if found.is_empty() {
        Exit::Ok
    } else {
        Exit::Violated
    };
    Ok(Report::new(
        json!({
            "mechanism": mechanism,
            "ranking": ranking.order,
            "deviators": deviators,
            "manipulable": !found.is_empty(),
            "profitable": found,
        }),
        text,
    )
    .exit(exit))
}

fn compare(path: &Path, priority: &PriorityArgs, routing: &RoutingArgs) -> Result<Report, Failure> {
    let (doc, inst) = load(path)?;
    let ranking = resolve_priority(&doc, &inst, priority)?;
    let policy = routing_policy(&inst, routing)?;
    let cmp = compare_mechanisms(&inst, &ranking, &policy)?;

    let mut text = format!("queue: {}\n", queue_text(&ranking));
    let _ = writeln!(text, "sd:       {}", cmp.serial.matching);
    let _ = writeln!(text, "locality: {}", cmp.restricted.matching);
    let summary = match cmp.verdict.outcome {
        DominanceOutcome::Dominates => "sd pareto-dominates locality",
        DominanceOutcome::DominatedBy => "locality pareto-dominates sd",
        DominanceOutcome::Incomparable => "incomparable",
        DominanceOutcome::Equal => "identical",
    };
    let _ = writeln!(text, "verdict: {summary}");
    let names = |ids: &[AgentId]| {
        ids.iter()
            .map(AgentId::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    };
    if !cmp.verdict.improving.is_empty() {
        let _ = writeln!(text, "better under sd: {}", names(&cmp.verdict.improving));
    }
    if !cmp.verdict.worsening.is_empty() {
        let _ = writeln!(
            text,
            "better under locality: {}",
            names(&cmp.verdict.worsening)
        );
    }
    // Serial dictatorship is Pareto optimal, so nothing may dominate it.
    let exit = if cmp.verdict.outcome == DominanceOutcome::DominatedBy {
        Exit::Violated
    } else {
        Exit::Ok
    };
    Ok(Report::new(
        json!({
            "ranking": ranking.order,
            "verdict": cmp.verdict,
            "sd": cmp.serial,
            "locality": cmp.restricted,
        }),
        text,
    )
    .exit(exit))
}

/// Parses `P,Q;P+Q` into groupings.
fn parse_chain(spec: &str) -> Result<Vec<Grouping>, Failure> {
    spec.split(';')
        .map(|grouping| {
            grouping
                .split(',')
                .map(|group| {
                    let members: Vec<ProviderId> = group
                        .split('+')
                        .map(str::trim)
                        .filter(|p| !p.is_empty())
                        .map(ProviderId::new)
                        .collect();
                    if members.is_empty() {
                        Err(Failure::invalid(format!(
                            "--merge-chain {spec:?}: empty group"
                        )))
                    } else {
                        Ok(members)
                    }
                })
                .collect()
        })
        .collect()
}

fn utility(
    path: &Path,
    agent: &AgentId,
    samples: Option<usize>,
    seed: u64,
    chain: Option<&str>,
    utilities: Option<&Path>,
) -> Result<Report, Failure> {
    let (_, inst) = load(path)?;
    let model: UtilityModel = match utilities {
        None => UtilityModel::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| {
                Failure::from(StoreError::Io {
                    path: p.to_path_buf(),
                    source,
                })
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::invalid(format!("{}: {e}", p.display())))?
        }
    };
    let sampler = match samples {
        Some(samples) => Sampler::MonteCarloSeeded { samples, seed },
        None => Sampler::ExhaustivePriorityOrders,
    };
    let sampler_text = match sampler {
        Sampler::ExhaustivePriorityOrders => "all queues".to_owned(),
        Sampler::MonteCarloSeeded { samples, seed } => format!("{samples} samples, seed {seed}"),
    };

    match chain {
        None => {
            let u = expected_utility(&inst, agent, &model, sampler)?;
            let text = format!("E[u({agent})] = {u:.6} ({sampler_text})\n");
            Ok(Report::new(
                json!({ "agent": agent, "sampler": sampler, "expected_utility": u }),
                text,
            ))
        }
        Some(spec) => {
            let chain = parse_chain(spec)?;
            let steps = locality_expansion_report(&inst, agent, &chain, &model, sampler)?;
            let mut text = format!("E[u({agent})] by grouping ({sampler_text})\n");
            for step in &steps {
                let grouping = step
                    .grouping
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(ProviderId::as_str)
                            .collect::<Vec<_>>()
                            .join("+")
                    })
                    .collect::<Vec<_>>()
                    .join(", ");
                let _ = writeln!(text, "  [{grouping}] {:.6}", step.utility);
            }
            Ok(Report::new(
                json!({ "agent": agent, "sampler": sampler, "steps": steps }),
                text,
            ))
        }
    }
}

fn serve(instance: Option<PathBuf>, log: PathBuf, addr: Option<String>) -> Result<Exit, Failure> {
    let initial = instance.map(|p| load(&p).map(|(doc, _)| doc)).transpose()?;
    let state = AppState::open(log, initial)?;
    let addr = havenmatch_service::listen_addr(addr.as_deref())
        .map_err(|e| Failure::invalid(format!("listen address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        exit: Exit::Io,
        message: e.to_string(),
        detail: None,
    })?;
    eprintln!("havenmatch: listening on {addr}");
    runtime
        .block_on(havenmatch_service::serve(addr, state))
        .map_err(|e| Failure {
            exit: Exit::Io,
            message: e.to_string(),
            detail: None,
        })?;
    Ok(Exit::Ok)
}

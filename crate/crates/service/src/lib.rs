//! HTTP API over a single live instance.
//!
//! State-changing requests (`PUT /instance`, `POST /agents`, `POST /rounds`)
//! take the session write lock, so at most one is applied at a time. Reads
//! and what-if queries share the read lock and never touch the round log.
//! A round is acknowledged only after its record has been appended.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;

use havenmatch_core::analysis::{
    evaluate_deviation, is_pareto_optimal_within, locality_expansion_report, AnalysisError,
    Deviation, Grouping, Sampler, UtilityModel, DEFAULT_ORACLE_BUDGET,
};
use havenmatch_core::store::{
    append_round, instance_digest, read_rounds, InstanceDocument, PrioritySpec, RoundRecord,
    StoreError,
};
use havenmatch_core::{
    validate_instance, Agent, AgentId, Instance, Matching, Mechanism, OptionId, PriorityRanking,
    RoutingPolicy,
};

/// Environment variable holding the listen address.
pub const ADDR_ENV: &str = "HAVENMATCH_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug)]
pub struct Session {
    document: Option<InstanceDocument>,
    log_path: PathBuf,
    rounds: Vec<RoundRecord>,
    last_ranking: Option<PriorityRanking>,
    last_matching: Option<Matching>,
}

impl Session {
    pub fn document(&self) -> Option<&InstanceDocument> {
        self.document.as_ref()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn last_ranking(&self) -> Option<&PriorityRanking> {
        self.last_ranking.as_ref()
    }

    pub fn last_matching(&self) -> Option<&Matching> {
        self.last_matching.as_ref()
    }
}

pub struct AppState {
    session: RwLock<Session>,
    oracle_budget: u64,
}

impl AppState {
    /// Opens (or starts) the round log at `log_path`, optionally with an
    /// initial instance that must already be valid.
    pub fn open(
        log_path: impl Into<PathBuf>,
        initial: Option<InstanceDocument>,
    ) -> Result<Self, StoreError> {
        let log_path = log_path.into();
        if let Some(doc) = &initial {
            doc.validate()?;
        }
        let rounds = read_rounds(&log_path)?;
        Ok(AppState {
            session: RwLock::new(Session {
                document: initial,
                log_path,
                rounds,
                last_ranking: None,
                last_matching: None,
            }),
            oracle_budget: DEFAULT_ORACLE_BUDGET,
        })
    }

    pub fn with_oracle_budget(mut self, budget: u64) -> Self {
        self.oracle_budget = budget;
        self
    }

    pub async fn session(&self) -> tokio::sync::RwLockReadGuard<'_, Session> {
        self.session.read().await
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn no_instance() -> Self {
        ApiError::new(
            StatusCode::CONFLICT,
            "no instance loaded; PUT /instance first",
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Validation(violations) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: json!({ "error": "validation failed", "violations": violations }),
            },
            StoreError::Io { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
        }
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::BudgetExceeded { budget } => ApiError {
                status: StatusCode::CONFLICT,
                body: json!({ "error": "BudgetExceeded", "budget": budget }),
            },
            AnalysisError::UnknownAgent(_) => ApiError::new(StatusCode::NOT_FOUND, e.to_string()),
            other => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn current(session: &Session) -> ApiResult<(&InstanceDocument, Instance)> {
    let doc = session
        .document
        .as_ref()
        .ok_or_else(ApiError::no_instance)?;
    Ok((doc, doc.instance()))
}

fn resolve_priority(
    doc: &InstanceDocument,
    inst: &Instance,
    requested: Option<&PrioritySpec>,
) -> ApiResult<PriorityRanking> {
    let spec = requested
        .or(doc.priority.as_ref())
        .cloned()
        .unwrap_or_default();
    spec.resolve(inst)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

#[derive(Serialize)]
struct InstanceAck {
    digest: String,
    agents: usize,
    options: usize,
}

fn ack(inst: &Instance) -> Json<InstanceAck> {
    Json(InstanceAck {
        digest: instance_digest(inst),
        agents: inst.n(),
        options: inst.m(),
    })
}

async fn put_instance(
    State(state): State<Arc<AppState>>,
    Json(doc): Json<InstanceDocument>,
) -> ApiResult<Json<InstanceAck>> {
    let inst = doc.validate()?;
    let mut session = state.session.write().await;
    session.document = Some(doc);
    Ok(ack(&inst))
}

async fn get_instance(State(state): State<Arc<AppState>>) -> ApiResult<Json<InstanceDocument>> {
    let session = state.session.read().await;
    session
        .document
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no instance loaded"))
}

async fn upsert_agent(
    State(state): State<Arc<AppState>>,
    Json(agent): Json<Agent>,
) -> ApiResult<Json<InstanceAck>> {
    let mut session = state.session.write().await;
    let mut doc = session.document.clone().ok_or_else(ApiError::no_instance)?;
    match doc.agents.iter_mut().find(|a| a.id == agent.id) {
        Some(existing) => *existing = agent,
        None => doc.agents.push(agent),
    }
    let inst = doc.instance();
    let violations = validate_instance(&inst);
    if !violations.is_empty() {
        return Err(StoreError::Validation(violations).into());
    }
    session.document = Some(doc);
    Ok(ack(&inst))
}

#[derive(Debug, Deserialize)]
pub struct RoundRequest {
    pub mechanism: Mechanism,
    #[serde(default)]
    pub priority: Option<PrioritySpec>,
    #[serde(default)]
    pub routing: Option<RoutingPolicy>,
}

async fn run_round(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RoundRequest>,
) -> ApiResult<(StatusCode, Json<RoundRecord>)> {
    let mut session = state.session.write().await;
    let (doc, inst) = current(&session)?;
    let ranking = resolve_priority(doc, &inst, req.priority.as_ref())?;
    let round_id = session.rounds.last().map_or(1, |r| r.round_id + 1);
    let routing = match req.mechanism {
        Mechanism::LocalityRestricted => Some(req.routing.unwrap_or_default()),
        Mechanism::SerialDictatorship => None,
    };
    let record = RoundRecord::execute(round_id, req.mechanism, inst, ranking, routing)?;
    append_round(&session.log_path, &record)?;
    session.last_ranking = Some(record.ranking.clone());
    session.last_matching = Some(record.matching.clone());
    session.rounds.push(record.clone());
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list_rounds(State(state): State<Arc<AppState>>) -> Json<Vec<RoundRecord>> {
    Json(state.session.read().await.rounds.clone())
}

#[derive(Serialize)]
struct AuditResponse {
    round_id: u64,
    mechanism: Mechanism,
    optimal: bool,
    witness: Option<Matching>,
    candidates: u64,
}

async fn audit_round(
    State(state): State<Arc<AppState>>,
    Path(id): Path<u64>,
) -> ApiResult<Json<AuditResponse>> {
    let record = {
        let session = state.session.read().await;
        session
            .rounds
            .iter()
            .find(|r| r.round_id == id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no round {id}")))?
    };
    let budget = state.oracle_budget;
    let verdict = tokio::task::spawn_blocking(move || {
        is_pareto_optimal_within(&record.matching, &record.instance, budget).map(|v| (record, v))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (record, v) = verdict?;
    Ok(Json(AuditResponse {
        round_id: record.round_id,
        mechanism: record.mechanism,
        optimal: v.optimal,
        witness: v.witness,
        candidates: v.candidates,
    }))
}

#[derive(Debug, Deserialize)]
pub struct MisreportRequest {
    pub agent: AgentId,
    #[serde(default)]
    pub preferences: Option<Vec<OptionId>>,
    #[serde(default)]
    pub locality: Option<String>,
    /// Defaults to `locality` when a locality is misreported, else `sd`.
    #[serde(default)]
    pub mechanism: Option<Mechanism>,
    #[serde(default)]
    pub priority: Option<PrioritySpec>,
    #[serde(default)]
    pub routing: Option<RoutingPolicy>,
}

async fn whatif_misreport(
    State(state): State<Arc<AppState>>,
    Json(req): Json<MisreportRequest>,
) -> ApiResult<Json<Value>> {
    let session = state.session.read().await;
    let (doc, inst) = current(&session)?;
    let ranking = resolve_priority(doc, &inst, req.priority.as_ref())?;
    let mechanism = req.mechanism.unwrap_or(if req.locality.is_some() {
        Mechanism::LocalityRestricted
    } else {
        Mechanism::SerialDictatorship
    });
    let deviation = Deviation {
        preferences: req.preferences,
        locality: req.locality,
    };
    let report = evaluate_deviation(
        mechanism,
        &inst,
        &ranking,
        &req.routing.unwrap_or_default(),
        &req.agent,
        &deviation,
    )?;
    Ok(Json(json!({
        "mechanism": mechanism,
        "ranking": ranking.order,
        "report": report,
        "truthful_outcome": report.truthful_outcome,
        "deviant_outcome": report.deviant_outcome,
        "profitable": report.profitable,
    })))
}

#[derive(Debug, Deserialize)]
pub struct MergeRequest {
    pub agent: AgentId,
    pub chain: Vec<Grouping>,
    /// Monte Carlo sample count; exhaustive over all queues when absent.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub utilities: Option<UtilityModel>,
}

async fn whatif_merge(
    State(state): State<Arc<AppState>>,
    Json(req): Json<MergeRequest>,
) -> ApiResult<Json<Value>> {
    let inst = {
        let session = state.session.read().await;
        current(&session)?.1
    };
    let sampler = match req.samples {
        Some(samples) => Sampler::MonteCarloSeeded {
            samples,
            seed: req.seed.unwrap_or(0),
        },
        None => Sampler::ExhaustivePriorityOrders,
    };
    let model = req.utilities.unwrap_or_default();
    let agent = req.agent;
    let chain = req.chain;
    let steps = tokio::task::spawn_blocking(move || {
        locality_expansion_report(&inst, &agent, &chain, &model, sampler).map(|s| (agent, s))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (agent, steps) = steps?;
    Ok(Json(
        json!({ "agent": agent, "sampler": sampler, "steps": steps }),
    ))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/instance", put(put_instance).get(get_instance))
        .route("/agents", post(upsert_agent))
        .route("/rounds", post(run_round).get(list_rounds))
        .route("/rounds/{id}/audit", get(audit_round))
        .route("/whatif/misreport", post(whatif_misreport))
        .route("/whatif/merge", post(whatif_merge))
        .with_state(state)
}

/// `addr` if given, else `$HAVENMATCH_ADDR`, else [`DEFAULT_ADDR`].
pub fn listen_addr(addr: Option<&str>) -> Result<SocketAddr, std::net::AddrParseError> {
    match addr {
        Some(a) => a.parse(),
        None => std::env::var(ADDR_ENV)
            .unwrap_or_else(|_| DEFAULT_ADDR.to_owned())
            .parse(),
    }
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

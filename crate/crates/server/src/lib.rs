//! HTTP/JSON service over the waymark engine.
//!
//! Sessions own a world, an oracle, a replay buffer and a reflective memory.
//! Engine work runs on the blocking pool; within a session, explore and infer
//! take the write lock while search, lookup and artifact reads share it.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use waymark_core::api::*;
use waymark_core::bench::{
    build_oracle, compare_runs, explore, fresh_state, infer, read_results, run_bench, write_results, LoadedWorld,
    MetricsReport, RunConfig, RunManifest,
};
use waymark_core::buffer::BufferGraph;
use waymark_core::memory::MemoryStore;
use waymark_core::model::Query;
use waymark_core::navigator::{astar_search, rank_and_select, CandidatePath};
use waymark_core::oracle::OracleHandle;
use waymark_core::runtime::EpisodeResult;

#[derive(Debug)]
pub struct Failure(pub StatusCode, pub ApiError);

impl Failure {
    fn new(kind: ErrorKind, message: impl ToString) -> Failure {
        let status = match kind {
            ErrorKind::Config => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Mismatch => StatusCode::CONFLICT,
            ErrorKind::Run => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Failure(
            status,
            ApiError {
                kind,
                message: message.to_string(),
            },
        )
    }
}

fn config_err(e: impl ToString) -> Failure {
    Failure::new(ErrorKind::Config, e)
}

fn run_err(e: impl ToString) -> Failure {
    Failure::new(ErrorKind::Run, e)
}

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type Reply<T> = Result<Json<T>, Failure>;

struct Session {
    id: String,
    cfg: RunConfig,
    world: LoadedWorld,
    oracle: OracleHandle,
    buffer: BufferGraph,
    memory: MemoryStore,
    results: Vec<EpisodeResult>,
    next_round: usize,
}

impl Session {
    fn manifest(&self) -> RunManifest {
        RunManifest::new(&self.world, &self.oracle, &self.cfg)
    }

    fn info(&self) -> SessionInfo {
        SessionInfo {
            id: self.id.clone(),
            manifest: self.manifest(),
            buffer_nodes: self.buffer.node_count(),
            memory_entries: self.memory.len(),
            episodes: self.results.len(),
        }
    }

    fn phase(&mut self, results: Vec<EpisodeResult>) -> PhaseResponse {
        self.results.extend(results.iter().cloned());
        PhaseResponse {
            report: MetricsReport::from_results(&self.results),
            results,
            session: self.info(),
        }
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: tokio::sync::RwLock<BTreeMap<String, Arc<RwLock<Session>>>>,
    next_id: AtomicU64,
}

type Shared = Arc<AppState>;

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(session_info).delete(delete_session))
        .route("/v1/sessions/{id}/explore", post(explore_session))
        .route("/v1/sessions/{id}/infer", post(infer_session))
        .route("/v1/sessions/{id}/search", post(search))
        .route("/v1/sessions/{id}/lookup", post(lookup))
        .route("/v1/sessions/{id}/artifacts", get(artifacts))
        .route("/v1/eval", post(eval))
        .route("/v1/compare", post(compare))
        .route("/v1/inspect", post(inspect))
        .route("/v1/bench", post(bench))
        .with_state(Shared::default())
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router()).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Failure> + Send + 'static) -> Result<T, Failure> {
    tokio::task::spawn_blocking(f).await.map_err(run_err)?
}

async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        sessions: state.sessions.read().await.len(),
    })
}

fn load(cfg: &RunConfig) -> Result<(LoadedWorld, OracleHandle), Failure> {
    cfg.check_ranges().map_err(config_err)?;
    cfg.check_files().map_err(config_err)?;
    let world = LoadedWorld::load(&cfg.world).map_err(config_err)?;
    let oracle = build_oracle(&cfg.oracle, cfg.max_oracle_calls).map_err(config_err)?;
    Ok((world, oracle))
}

async fn create_session(State(state): State<Shared>, Json(req): Json<CreateSession>) -> Reply<SessionInfo> {
    let n = state.next_id.fetch_add(1, Ordering::Relaxed) + 1;
    let id = format!("s{n}");
    let session = blocking(move || {
        let (world, oracle) = load(&req.config)?;
        let (mut buffer, mut memory) = fresh_state(&req.config);
        if let Some(snap) = &req.buffer_snapshot {
            buffer = BufferGraph::from_snapshot(snap).map_err(config_err)?;
        }
        if let Some(records) = &req.memory_records {
            memory = MemoryStore::from_records(records).map_err(config_err)?;
        }
        Ok(Session {
            id,
            cfg: req.config,
            world,
            oracle,
            buffer,
            memory,
            results: Vec::new(),
            next_round: 1,
        })
    })
    .await?;
    let info = session.info();
    state
        .sessions
        .write()
        .await
        .insert(info.id.clone(), Arc::new(RwLock::new(session)));
    Ok(Json(info))
}

async fn find(state: &Shared, id: &str) -> Result<Arc<RwLock<Session>>, Failure> {
    state
        .sessions
        .read()
        .await
        .get(id)
        .cloned()
        .ok_or_else(|| Failure::new(ErrorKind::NotFound, format!("no session {id}")))
}

fn poisoned<T>(_: T) -> Failure {
    run_err("session state is poisoned by an earlier panic")
}

async fn session_info(State(state): State<Shared>, Path(id): Path<String>) -> Reply<SessionInfo> {
    let s = find(&state, &id).await?;
    let info = s.read().map_err(poisoned)?.info();
    Ok(Json(info))
}

async fn delete_session(State(state): State<Shared>, Path(id): Path<String>) -> Result<StatusCode, Failure> {
    match state.sessions.write().await.remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(Failure::new(ErrorKind::NotFound, format!("no session {id}"))),
    }
}

async fn explore_session(State(state): State<Shared>, Path(id): Path<String>) -> Reply<PhaseResponse> {
    let s = find(&state, &id).await?;
    blocking(move || {
        let mut guard = s.write().map_err(poisoned)?;
        let sess = &mut *guard;
        let results = explore(&sess.world, &sess.oracle, &sess.cfg, &mut sess.buffer, &mut sess.memory).map_err(run_err)?;
        Ok(Json(sess.phase(results)))
    })
    .await
}

async fn infer_session(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Option<Json<InferRequest>>,
) -> Reply<PhaseResponse> {
    let s = find(&state, &id).await?;
    let req = body.map(|b| b.0).unwrap_or_default();
    blocking(move || {
        let mut guard = s.write().map_err(poisoned)?;
        let sess = &mut *guard;
        let mut cfg = sess.cfg.clone();
        if let Some(r) = req.rounds {
            cfg.rounds = r;
        }
        let first = sess.next_round;
        let results = infer(&sess.world, &sess.oracle, &cfg, &mut sess.buffer, &mut sess.memory, first).map_err(run_err)?;
        sess.next_round += cfg.rounds;
        Ok(Json(sess.phase(results)))
    })
    .await
}

fn summary(c: &CandidatePath) -> PathSummary {
    PathSummary {
        actions: c.actions(),
        terminal: c.terminal.to_string(),
        score: c.score,
    }
}

async fn search(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<SearchRequest>) -> Reply<SearchResponse> {
    let s = find(&state, &id).await?;
    blocking(move || {
        let sess = s.read().map_err(poisoned)?;
        let q = Query::new("search", &req.text, &req.site).map_err(config_err)?;
        let oracle = sess.oracle.session();
        let out = astar_search(&sess.buffer, &q, &oracle, &sess.cfg.search).map_err(run_err)?;
        let best = rank_and_select(&sess.buffer, &out.candidates, &q, &oracle).map_err(run_err)?;
        Ok(Json(SearchResponse {
            expansions: out.expansions.len(),
            candidates: out.candidates.iter().map(summary).collect(),
            best: best.as_ref().map(summary),
        }))
    })
    .await
}

async fn lookup(State(state): State<Shared>, Path(id): Path<String>, Json(req): Json<LookupRequest>) -> Reply<LookupResponse> {
    let s = find(&state, &id).await?;
    blocking(move || {
        let sess = s.read().map_err(poisoned)?;
        let q = Query::new("lookup", &req.text, &req.site).map_err(config_err)?;
        let k = req.k.unwrap_or(sess.cfg.k);
        let hits = sess.memory.lookup(&q, k).map_err(run_err)?;
        Ok(Json(LookupResponse {
            hits: hits
                .into_iter()
                .map(|(e, similarity)| LookupHit {
                    query: e.query.text.clone(),
                    similarity,
                    label: e.value.label.to_string(),
                    rationale: e.value.rationale.clone(),
                    actions: e.value.trajectory.actions().cloned().collect(),
                })
                .collect(),
        }))
    })
    .await
}

async fn artifacts(State(state): State<Shared>, Path(id): Path<String>) -> Reply<Artifacts> {
    let s = find(&state, &id).await?;
    blocking(move || {
        let sess = s.read().map_err(poisoned)?;
        Ok(Json(Artifacts {
            manifest: sess.manifest(),
            buffer_snapshot: sess.buffer.to_snapshot(),
            memory_records: sess.memory.to_records(),
            results: write_results(&sess.results),
        }))
    })
    .await
}

async fn eval(Json(req): Json<EvalRequest>) -> Reply<EvalResponse> {
    let results = read_results(&req.results).map_err(config_err)?;
    let report = MetricsReport::from_results(&results);
    Ok(Json(EvalResponse {
        text: report.render(),
        report,
    }))
}

async fn compare(Json(req): Json<CompareRequest>) -> Reply<CompareResponse> {
    let comparison = compare_runs(&req.baseline, &req.candidate).map_err(|e| Failure::new(ErrorKind::Mismatch, e))?;
    Ok(Json(CompareResponse {
        text: comparison.render(),
        comparison,
    }))
}

async fn inspect(Json(req): Json<InspectRequest>) -> Reply<InspectResponse> {
    blocking(move || {
        let text = match req.kind {
            InspectKind::Buffer => {
                let buf = BufferGraph::from_snapshot(&req.content).map_err(config_err)?;
                if req.graphviz {
                    buf.to_dot()
                } else {
                    buf.render_listing()
                }
            }
            InspectKind::Memory => {
                if req.graphviz {
                    return Err(config_err("graphviz output is only available for buffers"));
                }
                MemoryStore::from_records(&req.content).map_err(config_err)?.render_listing()
            }
        };
        Ok(Json(InspectResponse { text }))
    })
    .await
}

async fn bench(Json(req): Json<BenchRequest>) -> Reply<BenchResponse> {
    blocking(move || {
        let (world, oracle) = load(&req.config)?;
        let (report, full) = run_bench(&world, &oracle, &req.config).map_err(run_err)?;
        Ok(Json(BenchResponse {
            text: report.render(),
            artifacts: Artifacts {
                manifest: full.manifest.clone(),
                buffer_snapshot: full.buffer.to_snapshot(),
                memory_records: full.memory.to_records(),
                results: write_results(&full.results),
            },
            report,
        }))
    })
    .await
}

//! Request and response bodies of the HTTP service. The server and client
//! both serialize these, so the wire format lives in one place.

use serde::{Deserialize, Serialize};

use crate::bench::{BenchReport, Comparison, MetricsReport, RunConfig, RunManifest};
use crate::model::Action;
use crate::runtime::EpisodeResult;

pub const API_VERSION: &str = "v1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Bad configuration or input document; the CLI exits 2.
    Config,
    NotFound,
    /// Reports over different task sets.
    Mismatch,
    /// The run itself failed; the CLI exits 3.
    Run,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub sessions: usize,
}

/// A session holds a loaded world, an oracle, and the buffer and memory
/// that explore and infer calls grow. Optional snapshots resume earlier work.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub config: RunConfig,
    #[serde(default)]
    pub buffer_snapshot: Option<String>,
    #[serde(default)]
    pub memory_records: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub manifest: RunManifest,
    pub buffer_nodes: usize,
    pub memory_entries: usize,
    pub episodes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InferRequest {
    /// Overrides the configured round count.
    #[serde(default)]
    pub rounds: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub results: Vec<EpisodeResult>,
    pub report: MetricsReport,
    pub session: SessionInfo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub site: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub actions: Vec<Action>,
    pub terminal: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub expansions: usize,
    pub candidates: Vec<PathSummary>,
    pub best: Option<PathSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupRequest {
    pub site: String,
    pub text: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupHit {
    pub query: String,
    pub similarity: f64,
    pub label: String,
    pub rationale: String,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LookupResponse {
    pub hits: Vec<LookupHit>,
}

/// Session state in its on-disk encodings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub manifest: RunManifest,
    pub buffer_snapshot: String,
    pub memory_records: String,
    pub results: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    /// Results file contents, one episode per line.
    pub results: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub report: MetricsReport,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRequest {
    pub baseline: MetricsReport,
    pub candidate: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub comparison: Comparison,
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectKind {
    Buffer,
    Memory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectRequest {
    pub kind: InspectKind,
    pub content: String,
    #[serde(default)]
    pub graphviz: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InspectResponse {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRequest {
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResponse {
    pub report: BenchReport,
    pub text: String,
    /// State left by the full-system variant.
    pub artifacts: Artifacts,
}

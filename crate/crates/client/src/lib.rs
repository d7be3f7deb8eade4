//! Thin async client for the waymark service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use waymark_core::api::*;
use waymark_core::bench::{MetricsReport, RunConfig};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("{status}: {}", .error.message)]
    Api { status: StatusCode, error: ApiError },
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    /// The server-side error kind, when the server answered.
    pub fn kind(&self) -> Option<&ErrorKind> {
        match self {
            ClientError::Api { error, .. } => Some(&error.kind),
            ClientError::Transport(_) => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Client {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await?;
        let error = serde_json::from_str(&text).unwrap_or(ApiError {
            kind: ErrorKind::Run,
            message: text,
        });
        Err(ClientError::Api { status, error })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionInfo, ClientError> {
        self.post("/v1/sessions", req).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionInfo, ClientError> {
        self.get(&format!("/v1/sessions/{id}")).await
    }

    pub async fn delete_session(&self, id: &str) -> Result<(), ClientError> {
        let resp = self.http.delete(format!("{}/v1/sessions/{id}", self.base)).send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(());
        }
        let error = resp.json().await?;
        Err(ClientError::Api { status, error })
    }

    pub async fn explore(&self, id: &str) -> Result<PhaseResponse, ClientError> {
        self.post(&format!("/v1/sessions/{id}/explore"), &()).await
    }

    pub async fn infer(&self, id: &str, rounds: Option<usize>) -> Result<PhaseResponse, ClientError> {
        self.post(&format!("/v1/sessions/{id}/infer"), &InferRequest { rounds }).await
    }

    pub async fn search(&self, id: &str, req: &SearchRequest) -> Result<SearchResponse, ClientError> {
        self.post(&format!("/v1/sessions/{id}/search"), req).await
    }

    pub async fn lookup(&self, id: &str, req: &LookupRequest) -> Result<LookupResponse, ClientError> {
        self.post(&format!("/v1/sessions/{id}/lookup"), req).await
    }

    pub async fn artifacts(&self, id: &str) -> Result<Artifacts, ClientError> {
        self.get(&format!("/v1/sessions/{id}/artifacts")).await
    }

    pub async fn eval(&self, results: String) -> Result<EvalResponse, ClientError> {
        self.post("/v1/eval", &EvalRequest { results }).await
    }

    pub async fn compare(&self, baseline: MetricsReport, candidate: MetricsReport) -> Result<CompareResponse, ClientError> {
        self.post("/v1/compare", &CompareRequest { baseline, candidate }).await
    }

    pub async fn inspect(&self, kind: InspectKind, content: String, graphviz: bool) -> Result<InspectResponse, ClientError> {
        self.post("/v1/inspect", &InspectRequest { kind, content, graphviz }).await
    }

    pub async fn bench(&self, config: RunConfig) -> Result<BenchResponse, ClientError> {
        self.post("/v1/bench", &BenchRequest { config }).await
    }
}

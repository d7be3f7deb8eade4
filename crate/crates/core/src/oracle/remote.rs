//! HTTP oracle client.
//!
//! Request body: `{"role": <role name>, "prompt": <rendered template>,
//! "schema": <JSON schema of the expected result>}`.
//! Response body: `{"result": <value>}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    check_verdict, render_context, Oracle, OracleError, OracleRequest, OracleRole, OracleVerdict,
    PROMPT_VERSION,
};
use crate::model::FailureLabel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_retries() -> u32 {
    2
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            token_env: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }
}

pub struct RemoteOracle {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

#[derive(Serialize)]
struct Body<'a> {
    role: &'a str,
    prompt: &'a str,
    schema: Value,
}

#[derive(Deserialize)]
struct Reply {
    result: Value,
}

pub fn result_schema(role: OracleRole) -> Value {
    match role {
        OracleRole::Heuristic => json!({"type": "number", "minimum": 0, "maximum": 1}),
        OracleRole::Relevance => json!({"type": "boolean"}),
        OracleRole::RankPaths => json!({"type": "array", "items": {"type": "integer", "minimum": 0}}),
        OracleRole::ClassifyError => {
            json!({"type": "string", "enum": ["navigation_failure", "execution_failure"]})
        }
        OracleRole::LocateFirstError => json!({"type": "integer", "minimum": 1}),
        OracleRole::Reflect => json!({"type": "string", "minLength": 1}),
        OracleRole::UpdateDecision => json!({"type": "string", "enum": ["keep_old", "take_new"]}),
    }
}

fn number(v: &Value) -> Option<f64> {
    v.as_f64()
        .or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
        .filter(|x: &f64| x.is_finite())
}

fn parse(role: OracleRole, v: &Value) -> Result<OracleVerdict, String> {
    let bad = || format!("cannot read {v} as a {role} result");
    Ok(match role {
        OracleRole::Heuristic => {
            let p = number(v).ok_or_else(bad)?;
            if !(0.0..=1.0).contains(&p) {
                tracing::warn!(promise = p, "remote promise outside [0, 1], clamping");
            }
            OracleVerdict::Heuristic(p.clamp(0.0, 1.0))
        }
        OracleRole::Relevance => OracleVerdict::Relevance(
            v.as_bool()
                .or_else(|| v.as_str().and_then(|s| s.trim().to_lowercase().parse().ok()))
                .ok_or_else(bad)?,
        ),
        OracleRole::RankPaths => OracleVerdict::RankPaths(
            v.as_array()
                .ok_or_else(bad)?
                .iter()
                .map(|x| x.as_u64().map(|n| n as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(bad)?,
        ),
        OracleRole::ClassifyError => {
            let label: FailureLabel = serde_json::from_value(v.clone()).map_err(|_| bad())?;
            OracleVerdict::ClassifyError(label)
        }
        OracleRole::LocateFirstError => {
            let x = number(v).ok_or_else(bad)?;
            if x.fract() != 0.0 || x < 0.0 {
                return Err(bad());
            }
            OracleVerdict::LocateFirstError(x as usize)
        }
        OracleRole::Reflect => OracleVerdict::Reflect(
            v.as_str()
                .filter(|s| !s.trim().is_empty())
                .ok_or_else(bad)?
                .to_string(),
        ),
        OracleRole::UpdateDecision => {
            OracleVerdict::UpdateDecision(serde_json::from_value(v.clone()).map_err(|_| bad())?)
        }
    })
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Result<Self, OracleError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        let token = config
            .token_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok());
        Ok(RemoteOracle {
            config,
            client,
            token,
        })
    }

    fn post(&self, role: OracleRole, prompt: &str) -> Result<Value, OracleError> {
        let body = Body {
            role: role.name(),
            prompt,
            schema: result_schema(role),
        };
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            let mut rb = self.client.post(&self.config.endpoint).json(&body);
            if let Some(t) = &self.token {
                rb = rb.bearer_auth(t);
            }
            match rb.send().and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    return resp
                        .json::<Reply>()
                        .map(|r| r.result)
                        .map_err(|e| OracleError::MalformedVerdict(format!("response body: {e}")));
                }
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "oracle request failed");
                    last = e.to_string();
                }
            }
        }
        Err(OracleError::Unavailable(last))
    }
}

impl Oracle for RemoteOracle {
    fn judge(&self, req: &OracleRequest) -> Result<OracleVerdict, OracleError> {
        let role = req.role();
        let prompt = render_context(req);
        let attempt = |prompt: &str| -> Result<Result<OracleVerdict, String>, OracleError> {
            let value = match self.post(role, prompt) {
                Ok(v) => v,
                Err(OracleError::MalformedVerdict(m)) => return Ok(Err(m)),
                Err(e) => return Err(e),
            };
            Ok(parse(role, &value).and_then(|v| {
                check_verdict(req, &v).map(|_| v).map_err(|e| e.to_string())
            }))
        };
        match attempt(&prompt)? {
            Ok(v) => Ok(v),
            Err(problem) => {
                tracing::warn!(%role, %problem, "malformed oracle output, asking once more");
                let repair = format!(
                    "{prompt}\n\nYour previous answer was rejected ({problem}). \
                     Reply with only a result matching the schema."
                );
                attempt(&repair)?.map_err(OracleError::MalformedVerdict)
            }
        }
    }

    fn describe(&self) -> String {
        format!("remote ({}, prompts {PROMPT_VERSION})", self.config.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_clamps() {
        assert_eq!(
            parse(OracleRole::Heuristic, &json!("1.7")).unwrap(),
            OracleVerdict::Heuristic(1.0)
        );
        assert_eq!(
            parse(OracleRole::Heuristic, &json!(-0.2)).unwrap(),
            OracleVerdict::Heuristic(0.0)
        );
        assert!(parse(OracleRole::Heuristic, &json!("high")).is_err());
        assert_eq!(
            parse(OracleRole::Relevance, &json!("True")).unwrap(),
            OracleVerdict::Relevance(true)
        );
        assert!(parse(OracleRole::LocateFirstError, &json!(2.5)).is_err());
        assert!(parse(OracleRole::ClassifyError, &json!("nav")).is_err());
        assert!(parse(OracleRole::RankPaths, &json!([1, -1])).is_err());
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let mut cfg = RemoteConfig::new("http://127.0.0.1:9/oracle");
        cfg.retries = 0;
        cfg.timeout_ms = 500;
        let o = RemoteOracle::new(cfg).unwrap();
        let q = crate::model::Query::new("q", "x", "s").unwrap();
        let req = OracleRequest::new(&q, super::super::OracleContext::Relevance { page: String::new() });
        assert!(matches!(o.judge(&req), Err(OracleError::Unavailable(_))));
    }
}

//! Rule-table oracle. Rules are tried in file order; the first whose
//! matcher accepts the request decides. Unmatched requests get the role's
//! default verdict, so the table is total.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{
    default_arbitration, Oracle, OracleContext, OracleError, OracleRequest, OracleRole, OracleVerdict,
    TrajectoryView, UpdateChoice,
};
use crate::model::{ActionKind, FailureLabel};

pub const RULES_SCHEMA: u32 = 1;
pub const DEFAULT_PROMISE: f64 = 0.5;
pub const DEFAULT_REFLECTION: &str =
    "The agent did not complete the task; re-check each step against the query before answering.";

/// Substring tests, all case-insensitive. Absent fields always match.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_lacks: Option<String>,
    /// Page under judgment, or the final page of a trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_lacks: Option<String>,
    /// Any page along the trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visited_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visited_lacks: Option<String>,
    /// Any rendered action, e.g. "click 'sort-hits'".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_lacks: Option<String>,
}

struct Subject<'a> {
    query: String,
    page: &'a str,
    visited: Vec<&'a str>,
    actions: Vec<String>,
}

impl<'a> Subject<'a> {
    fn of_page(query: &str, page: &'a str) -> Self {
        Subject {
            query: query.to_lowercase(),
            page,
            visited: vec![page],
            actions: Vec::new(),
        }
    }

    fn of_trajectory(query: &str, t: &'a TrajectoryView) -> Self {
        Subject {
            query: query.to_lowercase(),
            page: t.last_page(),
            visited: t.pages.iter().map(String::as_str).collect(),
            actions: t.actions.iter().map(|a| a.to_string().to_lowercase()).collect(),
        }
    }
}

fn has(hay: &str, needle: &str) -> bool {
    hay.to_lowercase().contains(&needle.to_lowercase())
}

impl Matcher {
    fn accepts(&self, s: &Subject<'_>) -> bool {
        let check = |field: &Option<String>, pred: &dyn Fn(&str) -> bool| {
            field.as_deref().is_none_or(pred)
        };
        check(&self.query_contains, &|n| has(&s.query, n))
            && check(&self.query_lacks, &|n| !has(&s.query, n))
            && check(&self.page_contains, &|n| has(s.page, n))
            && check(&self.page_lacks, &|n| !has(s.page, n))
            && check(&self.visited_contains, &|n| s.visited.iter().any(|p| has(p, n)))
            && check(&self.visited_lacks, &|n| !s.visited.iter().any(|p| has(p, n)))
            && check(&self.action_contains, &|n| s.actions.iter().any(|a| has(a, n)))
            && check(&self.action_lacks, &|n| !s.actions.iter().any(|a| has(a, n)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocateSpec {
    LastStep,
    Index(usize),
    FirstKind(ActionKind),
    FirstActionContains(String),
}

impl LocateSpec {
    fn resolve(&self, t: &TrajectoryView) -> usize {
        let h = t.actions.len().max(1);
        let found = match self {
            LocateSpec::LastStep => None,
            LocateSpec::Index(i) => Some(*i),
            LocateSpec::FirstKind(k) => t.actions.iter().position(|a| a.kind == *k).map(|i| i + 1),
            LocateSpec::FirstActionContains(n) => t
                .actions
                .iter()
                .position(|a| has(&a.to_string(), n))
                .map(|i| i + 1),
        };
        found.unwrap_or(h).clamp(1, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    KeepOld,
    TakeNew,
    Arbitrate,
}

#[derive(Clone, Debug, PartialEq)]
enum Then {
    Promise(f64),
    Relevant(bool),
    Score(f64),
    Label(FailureLabel),
    Locate(LocateSpec),
    Text(String),
    Update(UpdateRule),
}

#[derive(Serialize, Deserialize)]
struct RawRule {
    role: OracleRole,
    #[serde(default)]
    when: Matcher,
    then: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule", into = "RawRule")]
pub struct Rule {
    pub role: OracleRole,
    pub when: Matcher,
    then: Then,
    raw_then: Value,
}

impl TryFrom<RawRule> for Rule {
    type Error = String;

    fn try_from(raw: RawRule) -> Result<Self, String> {
        let v = &raw.then;
        let bad = || format!("invalid `then` for a {} rule: {v}", raw.role);
        let then = match raw.role {
            OracleRole::Heuristic => {
                let p = v.as_f64().ok_or_else(bad)?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(bad());
                }
                Then::Promise(p)
            }
            OracleRole::Relevance => Then::Relevant(v.as_bool().ok_or_else(bad)?),
            OracleRole::RankPaths => Then::Score(v.as_f64().ok_or_else(bad)?),
            OracleRole::ClassifyError => {
                let l: FailureLabel = serde_json::from_value(v.clone()).map_err(|_| bad())?;
                if l == FailureLabel::Success {
                    return Err(bad());
                }
                Then::Label(l)
            }
            OracleRole::LocateFirstError => {
                Then::Locate(serde_json::from_value(v.clone()).map_err(|_| bad())?)
            }
            OracleRole::Reflect => Then::Text(v.as_str().filter(|s| !s.trim().is_empty()).ok_or_else(bad)?.to_string()),
            OracleRole::UpdateDecision => {
                Then::Update(serde_json::from_value(v.clone()).map_err(|_| bad())?)
            }
        };
        Ok(Rule {
            role: raw.role,
            when: raw.when,
            then,
            raw_then: raw.then,
        })
    }
}

impl From<Rule> for RawRule {
    fn from(r: Rule) -> RawRule {
        RawRule {
            role: r.role,
            when: r.when,
            then: r.raw_then,
        }
    }
}

impl Rule {
    /// Builds a rule from a JSON `then` value, validating it for the role.
    pub fn new(role: OracleRole, when: Matcher, then: Value) -> Result<Rule, String> {
        Rule::try_from(RawRule { role, when, then })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub schema: u32,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

impl Default for RuleSet {
    fn default() -> Self {
        RuleSet {
            schema: RULES_SCHEMA,
            rules: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScriptedOracle {
    rules: RuleSet,
}

impl ScriptedOracle {
    pub fn new(rules: RuleSet) -> Self {
        ScriptedOracle { rules }
    }

    pub fn from_json(text: &str) -> Result<Self, OracleError> {
        let rules: RuleSet = serde_json::from_str(text)
            .map_err(|e| OracleError::MalformedVerdict(format!("rule file: {e}")))?;
        if rules.schema != RULES_SCHEMA {
            return Err(OracleError::MalformedVerdict(format!(
                "rule file schema {} (expected {RULES_SCHEMA})",
                rules.schema
            )));
        }
        Ok(ScriptedOracle { rules })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::Unavailable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    fn first(&self, role: OracleRole, s: &Subject<'_>) -> Option<&Then> {
        self.rules
            .rules
            .iter()
            .find(|r| r.role == role && r.when.accepts(s))
            .map(|r| &r.then)
    }
}

impl Oracle for ScriptedOracle {
    fn judge(&self, req: &OracleRequest) -> Result<OracleVerdict, OracleError> {
        let q = req.query.text.as_str();
        let role = req.role();
        Ok(match &req.context {
            OracleContext::Heuristic { page } => match self.first(role, &Subject::of_page(q, page)) {
                Some(Then::Promise(p)) => OracleVerdict::Heuristic(*p),
                _ => OracleVerdict::Heuristic(DEFAULT_PROMISE),
            },
            OracleContext::Relevance { page } => match self.first(role, &Subject::of_page(q, page)) {
                Some(Then::Relevant(b)) => OracleVerdict::Relevance(*b),
                _ => OracleVerdict::Relevance(false),
            },
            OracleContext::RankPaths { candidates } => {
                let scores: Vec<f64> = candidates
                    .iter()
                    .map(|c| match self.first(role, &Subject::of_trajectory(q, c)) {
                        Some(Then::Score(s)) => *s,
                        _ => 0.0,
                    })
                    .collect();
                let mut order: Vec<usize> = (0..candidates.len()).collect();
                order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
                OracleVerdict::RankPaths(order)
            }
            OracleContext::ClassifyError { trajectory } => {
                match self.first(role, &Subject::of_trajectory(q, trajectory)) {
                    Some(Then::Label(l)) => OracleVerdict::ClassifyError(*l),
                    _ => OracleVerdict::ClassifyError(FailureLabel::NavigationFailure),
                }
            }
            OracleContext::LocateFirstError { trajectory } => {
                let spec = match self.first(role, &Subject::of_trajectory(q, trajectory)) {
                    Some(Then::Locate(s)) => s.clone(),
                    _ => LocateSpec::LastStep,
                };
                OracleVerdict::LocateFirstError(spec.resolve(trajectory))
            }
            OracleContext::Reflect { trajectory, .. } => {
                match self.first(role, &Subject::of_trajectory(q, trajectory)) {
                    Some(Then::Text(t)) => OracleVerdict::Reflect(t.clone()),
                    _ => OracleVerdict::Reflect(DEFAULT_REFLECTION.to_string()),
                }
            }
            OracleContext::UpdateDecision { old, new } => {
                let rule = match self.first(role, &Subject::of_trajectory(q, &new.trajectory)) {
                    Some(Then::Update(u)) => *u,
                    _ => UpdateRule::Arbitrate,
                };
                OracleVerdict::UpdateDecision(match rule {
                    UpdateRule::KeepOld => UpdateChoice::KeepOld,
                    UpdateRule::TakeNew => UpdateChoice::TakeNew,
                    UpdateRule::Arbitrate => default_arbitration(old, new),
                })
            }
        })
    }

    fn describe(&self) -> String {
        let json = serde_json::to_string(&self.rules).unwrap_or_default();
        let digest = hex::encode(Sha256::digest(json.as_bytes()));
        format!("scripted ({} rules, {})", self.rules.rules.len(), &digest[..12])
    }
}

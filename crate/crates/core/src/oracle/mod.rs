//! Every judgment the agent needs from a language model goes through one
//! interface: [`Oracle::judge`]. [`ScriptedOracle`] answers from a rule
//! table; [`RemoteOracle`] forwards rendered prompts over HTTP.

mod prompt;
mod remote;
mod scripted;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, FailureLabel, ModelError, Query, Trajectory};

pub use prompt::{render_context, template, PROMPT_VERSION};
pub use remote::{RemoteConfig, RemoteOracle};
pub use scripted::{Matcher, Rule, RuleSet, ScriptedOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("malformed verdict: {0}")]
    MalformedVerdict(String),
    #[error("oracle budget of {limit} calls exceeded")]
    BudgetExceeded { limit: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleRole {
    Heuristic,
    Relevance,
    RankPaths,
    ClassifyError,
    LocateFirstError,
    Reflect,
    UpdateDecision,
}

impl OracleRole {
    pub const ALL: [OracleRole; 7] = [
        OracleRole::Heuristic,
        OracleRole::Relevance,
        OracleRole::RankPaths,
        OracleRole::ClassifyError,
        OracleRole::LocateFirstError,
        OracleRole::Reflect,
        OracleRole::UpdateDecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleRole::Heuristic => "heuristic",
            OracleRole::Relevance => "relevance",
            OracleRole::RankPaths => "rank_paths",
            OracleRole::ClassifyError => "classify_error",
            OracleRole::LocateFirstError => "locate_first_error",
            OracleRole::Reflect => "reflect",
            OracleRole::UpdateDecision => "update_decision",
        }
    }
}

impl fmt::Display for OracleRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Actions plus the normalized text of every page `o_0..o_H` they produced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryView {
    pub actions: Vec<Action>,
    pub pages: Vec<String>,
}

impl TrajectoryView {
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self, ModelError> {
        Ok(TrajectoryView {
            actions: traj.actions().cloned().collect(),
            pages: traj
                .page_states()?
                .iter()
                .map(|p| p.normalized_text())
                .collect(),
        })
    }

    pub fn last_page(&self) -> &str {
        self.pages.last().map(String::as_str).unwrap_or("")
    }
}

/// A memory value as shown to the update arbiter.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredView {
    pub trajectory: TrajectoryView,
    pub label: FailureLabel,
    pub rationale: String,
}

impl StoredView {
    pub fn validated(&self) -> bool {
        self.label == FailureLabel::Success
    }
}

/// Role-specific payload. The role is implied by the variant, so a request
/// can never be missing the fields its role needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum OracleContext {
    Heuristic { page: String },
    Relevance { page: String },
    RankPaths { candidates: Vec<TrajectoryView> },
    ClassifyError { trajectory: TrajectoryView },
    LocateFirstError { trajectory: TrajectoryView },
    Reflect { trajectory: TrajectoryView, error_index: Option<usize> },
    UpdateDecision { old: StoredView, new: StoredView },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub query: Query,
    pub context: OracleContext,
}

impl OracleRequest {
    pub fn new(query: &Query, context: OracleContext) -> Self {
        OracleRequest {
            query: query.clone(),
            context,
        }
    }

    pub fn role(&self) -> OracleRole {
        match &self.context {
            OracleContext::Heuristic { .. } => OracleRole::Heuristic,
            OracleContext::Relevance { .. } => OracleRole::Relevance,
            OracleContext::RankPaths { .. } => OracleRole::RankPaths,
            OracleContext::ClassifyError { .. } => OracleRole::ClassifyError,
            OracleContext::LocateFirstError { .. } => OracleRole::LocateFirstError,
            OracleContext::Reflect { .. } => OracleRole::Reflect,
            OracleContext::UpdateDecision { .. } => OracleRole::UpdateDecision,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateChoice {
    KeepOld,
    TakeNew,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", content = "result", rename_all = "snake_case")]
pub enum OracleVerdict {
    Heuristic(f64),
    Relevance(bool),
    RankPaths(Vec<usize>),
    ClassifyError(FailureLabel),
    LocateFirstError(usize),
    Reflect(String),
    UpdateDecision(UpdateChoice),
}

impl OracleVerdict {
    pub fn role(&self) -> OracleRole {
        match self {
            OracleVerdict::Heuristic(_) => OracleRole::Heuristic,
            OracleVerdict::Relevance(_) => OracleRole::Relevance,
            OracleVerdict::RankPaths(_) => OracleRole::RankPaths,
            OracleVerdict::ClassifyError(_) => OracleRole::ClassifyError,
            OracleVerdict::LocateFirstError(_) => OracleRole::LocateFirstError,
            OracleVerdict::Reflect(_) => OracleRole::Reflect,
            OracleVerdict::UpdateDecision(_) => OracleRole::UpdateDecision,
        }
    }
}

/// Checks that `verdict` is well-formed for `req`.
pub fn check_verdict(req: &OracleRequest, verdict: &OracleVerdict) -> Result<(), OracleError> {
    let bad = |m: String| Err(OracleError::MalformedVerdict(m));
    if verdict.role() != req.role() {
        return bad(format!("{} verdict for a {} request", verdict.role(), req.role()));
    }
    match (verdict, &req.context) {
        (OracleVerdict::Heuristic(p), _) if !(0.0..=1.0).contains(p) => {
            bad(format!("promise {p} outside [0, 1]"))
        }
        (OracleVerdict::RankPaths(perm), OracleContext::RankPaths { candidates }) => {
            let mut seen = vec![false; candidates.len()];
            if perm.len() != candidates.len() {
                return bad(format!(
                    "ranking has {} entries for {} candidates",
                    perm.len(),
                    candidates.len()
                ));
            }
            for &i in perm {
                if i >= seen.len() || seen[i] {
                    return bad(format!("ranking {perm:?} is not a permutation"));
                }
                seen[i] = true;
            }
            Ok(())
        }
        (OracleVerdict::ClassifyError(FailureLabel::Success), _) => {
            bad("classification must be a failure label".into())
        }
        (OracleVerdict::LocateFirstError(i), OracleContext::LocateFirstError { trajectory }) => {
            if *i == 0 || *i > trajectory.actions.len() {
                bad(format!(
                    "error index {i} outside 1..={}",
                    trajectory.actions.len()
                ))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

pub trait Oracle: Send + Sync {
    fn judge(&self, req: &OracleRequest) -> Result<OracleVerdict, OracleError>;

    /// Short description for run manifests.
    fn describe(&self) -> String;
}

/// Shared oracle plus a call counter. [`OracleHandle::session`] gives each
/// episode a fresh counter against the same budget.
#[derive(Clone)]
pub struct OracleHandle {
    inner: Arc<dyn Oracle>,
    budget: Option<usize>,
    calls: Arc<AtomicUsize>,
}

impl fmt::Debug for OracleHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleHandle")
            .field("oracle", &self.inner.describe())
            .field("budget", &self.budget)
            .field("calls", &self.calls())
            .finish()
    }
}

impl OracleHandle {
    pub fn new(oracle: impl Oracle + 'static) -> Self {
        Self::from_arc(Arc::new(oracle))
    }

    pub fn from_arc(inner: Arc<dyn Oracle>) -> Self {
        OracleHandle {
            inner,
            budget: None,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.budget = budget;
        self
    }

    pub fn session(&self) -> OracleHandle {
        OracleHandle {
            inner: Arc::clone(&self.inner),
            budget: self.budget,
            calls: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn describe(&self) -> String {
        self.inner.describe()
    }

    pub fn judge(&self, req: &OracleRequest) -> Result<OracleVerdict, OracleError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if let Some(limit) = self.budget {
            if n > limit {
                return Err(OracleError::BudgetExceeded { limit });
            }
        }
        let verdict = self.inner.judge(req)?;
        check_verdict(req, &verdict)?;
        Ok(verdict)
    }

    /// Promise `p` in [0, 1] that `page` leads toward answering `q`.
    pub fn promise(&self, q: &Query, page: &str) -> Result<f64, OracleError> {
        let req = OracleRequest::new(q, OracleContext::Heuristic { page: page.into() });
        match self.judge(&req)? {
            OracleVerdict::Heuristic(p) => Ok(p),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    pub fn is_relevant(&self, q: &Query, page: &str) -> Result<bool, OracleError> {
        let req = OracleRequest::new(q, OracleContext::Relevance { page: page.into() });
        match self.judge(&req)? {
            OracleVerdict::Relevance(b) => Ok(b),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    /// Candidate indices, best first.
    pub fn rank(&self, q: &Query, candidates: Vec<TrajectoryView>) -> Result<Vec<usize>, OracleError> {
        let req = OracleRequest::new(q, OracleContext::RankPaths { candidates });
        match self.judge(&req)? {
            OracleVerdict::RankPaths(p) => Ok(p),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    pub fn classify(&self, q: &Query, trajectory: TrajectoryView) -> Result<FailureLabel, OracleError> {
        let req = OracleRequest::new(q, OracleContext::ClassifyError { trajectory });
        match self.judge(&req)? {
            OracleVerdict::ClassifyError(l) => Ok(l),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    /// 1-based index of the first wrong action.
    pub fn locate_first_error(&self, q: &Query, trajectory: TrajectoryView) -> Result<usize, OracleError> {
        let req = OracleRequest::new(q, OracleContext::LocateFirstError { trajectory });
        match self.judge(&req)? {
            OracleVerdict::LocateFirstError(i) => Ok(i),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    pub fn reflect(
        &self,
        q: &Query,
        trajectory: TrajectoryView,
        error_index: Option<usize>,
    ) -> Result<String, OracleError> {
        let req = OracleRequest::new(
            q,
            OracleContext::Reflect {
                trajectory,
                error_index,
            },
        );
        match self.judge(&req)? {
            OracleVerdict::Reflect(s) => Ok(s),
            v => Err(wrong_shape(&req, &v)),
        }
    }

    pub fn update_decision(&self, q: &Query, old: StoredView, new: StoredView) -> Result<UpdateChoice, OracleError> {
        let req = OracleRequest::new(q, OracleContext::UpdateDecision { old, new });
        match self.judge(&req)? {
            OracleVerdict::UpdateDecision(c) => Ok(c),
            v => Err(wrong_shape(&req, &v)),
        }
    }
}

fn wrong_shape(req: &OracleRequest, v: &OracleVerdict) -> OracleError {
    OracleError::MalformedVerdict(format!("{} verdict for a {} request", v.role(), req.role()))
}

/// Default arbitration: validated beats unvalidated, a shorter validated
/// trajectory beats a longer one, and between two unvalidated values the
/// newcomer wins.
pub fn default_arbitration(old: &StoredView, new: &StoredView) -> UpdateChoice {
    match (old.validated(), new.validated()) {
        (false, true) => UpdateChoice::TakeNew,
        (true, false) => UpdateChoice::KeepOld,
        (true, true) if new.trajectory.actions.len() < old.trajectory.actions.len() => {
            UpdateChoice::TakeNew
        }
        (true, true) => UpdateChoice::KeepOld,
        (false, false) => UpdateChoice::TakeNew,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(OracleVerdict);
    impl Oracle for Fixed {
        fn judge(&self, _: &OracleRequest) -> Result<OracleVerdict, OracleError> {
            Ok(self.0.clone())
        }
        fn describe(&self) -> String {
            "fixed".into()
        }
    }

    fn q() -> Query {
        Query::new("q", "find orders", "s").unwrap()
    }

    fn view(n: usize) -> TrajectoryView {
        TrajectoryView {
            actions: (0..n).map(|i| Action::click(format!("l{i}"))).collect(),
            pages: vec![String::new(); n + 1],
        }
    }

    #[test]
    fn wrong_role_is_malformed() {
        let h = OracleHandle::new(Fixed(OracleVerdict::Relevance(true)));
        assert!(matches!(h.promise(&q(), "x"), Err(OracleError::MalformedVerdict(_))));
        assert!(h.is_relevant(&q(), "x").unwrap());
    }

    #[test]
    fn ranking_must_be_a_permutation() {
        let h = OracleHandle::new(Fixed(OracleVerdict::RankPaths(vec![0, 0])));
        assert!(h.rank(&q(), vec![view(1), view(2)]).is_err());
        let h = OracleHandle::new(Fixed(OracleVerdict::RankPaths(vec![1, 0])));
        assert_eq!(h.rank(&q(), vec![view(1), view(2)]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn error_index_in_range_and_label_not_success() {
        let h = OracleHandle::new(Fixed(OracleVerdict::LocateFirstError(4)));
        assert!(h.locate_first_error(&q(), view(3)).is_err());
        assert_eq!(h.locate_first_error(&q(), view(4)).unwrap(), 4);
        let h = OracleHandle::new(Fixed(OracleVerdict::ClassifyError(FailureLabel::Success)));
        assert!(h.classify(&q(), view(1)).is_err());
    }

    #[test]
    fn budget_is_per_session() {
        let h = OracleHandle::new(Fixed(OracleVerdict::Heuristic(0.5))).with_budget(Some(2));
        let s = h.session();
        s.promise(&q(), "").unwrap();
        s.promise(&q(), "").unwrap();
        assert_eq!(
            s.promise(&q(), ""),
            Err(OracleError::BudgetExceeded { limit: 2 })
        );
        let fresh = h.session();
        assert!(fresh.promise(&q(), "").is_ok());
    }

    #[test]
    fn arbitration_rules() {
        let sv = |n, label| StoredView {
            trajectory: view(n),
            label,
            rationale: String::new(),
        };
        use FailureLabel::*;
        assert_eq!(default_arbitration(&sv(3, ExecutionFailure), &sv(5, Success)), UpdateChoice::TakeNew);
        assert_eq!(default_arbitration(&sv(5, Success), &sv(2, NavigationFailure)), UpdateChoice::KeepOld);
        assert_eq!(default_arbitration(&sv(5, Success), &sv(3, Success)), UpdateChoice::TakeNew);
        assert_eq!(default_arbitration(&sv(3, Success), &sv(3, Success)), UpdateChoice::KeepOld);
        assert_eq!(default_arbitration(&sv(3, ExecutionFailure), &sv(4, NavigationFailure)), UpdateChoice::TakeNew);
    }

    #[test]
    fn verdict_json_shape() {
        let v = OracleVerdict::UpdateDecision(UpdateChoice::TakeNew);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"role":"update_decision","result":"take_new"}"#);
    }
}

//! Turns a failed episode into a [`Reflection`]: classify it, then either
//! cut it before its first wrong action (execution failures) or replace it
//! with a route found in the replay buffer (navigation failures).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::BufferGraph;
use crate::model::{FailureLabel, ModelError, Query, Trajectory};
use crate::navigator::{repair_navigation, NavError, SearchLimits};
use crate::oracle::{OracleError, OracleHandle, TrajectoryView};

#[derive(Debug, Error)]
pub enum ReflectError {
    #[error("trajectory for {0} validated; only failures are reflected on")]
    NotAFailure(String),
    #[error("expected a {expected} trajectory, got {found}")]
    WrongLabel {
        expected: FailureLabel,
        found: FailureLabel,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Navigation(#[from] NavError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub failed_query: Query,
    pub label: FailureLabel,
    /// 1-based; execution failures only.
    pub first_error_index: Option<usize>,
    pub truncated: Trajectory,
    pub rationale: String,
    /// The repaired route equals the start of the failed trajectory.
    #[serde(default)]
    pub no_op_repair: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub oracle: FailureLabel,
    pub ground_truth: Option<FailureLabel>,
    /// The label the run acts on.
    pub used: FailureLabel,
}

impl Classification {
    pub fn agrees(&self) -> Option<bool> {
        self.ground_truth.map(|g| g == self.oracle)
    }
}

/// Asks the oracle for a failure label. With simulator ground truth at hand
/// both are kept; the oracle's label is used unless `trust_ground_truth`.
pub fn classify(
    traj: &Trajectory,
    q: &Query,
    oracle: &OracleHandle,
    ground_truth: Option<FailureLabel>,
    trust_ground_truth: bool,
) -> Result<Classification, ReflectError> {
    if ground_truth == Some(FailureLabel::Success) {
        return Err(ReflectError::NotAFailure(q.id.clone()));
    }
    let label = oracle.classify(q, TrajectoryView::from_trajectory(traj)?)?;
    let used = match ground_truth {
        Some(g) if g != label => {
            tracing::info!(query = %q.id, oracle = %label, ground_truth = %g, "failure labels disagree");
            if trust_ground_truth {
                g
            } else {
                label
            }
        }
        _ => label,
    };
    Ok(Classification {
        oracle: label,
        ground_truth,
        used,
    })
}

pub fn reflect_execution(
    traj: &Trajectory,
    q: &Query,
    oracle: &OracleHandle,
) -> Result<Reflection, ReflectError> {
    let view = TrajectoryView::from_trajectory(traj)?;
    let i = oracle.locate_first_error(q, view.clone())?;
    let rationale = oracle.reflect(q, view, Some(i))?;
    Ok(Reflection {
        failed_query: q.clone(),
        label: FailureLabel::ExecutionFailure,
        first_error_index: Some(i),
        truncated: traj.prefix(i - 1),
        rationale,
        no_op_repair: false,
    })
}

pub fn reflect_navigation(
    traj: &Trajectory,
    q: &Query,
    buf: &BufferGraph,
    oracle: &OracleHandle,
    limits: &SearchLimits,
) -> Result<Option<Reflection>, ReflectError> {
    let Some(repaired) = repair_navigation(buf, traj, q, oracle, limits)? else {
        return Ok(None);
    };
    let route: Vec<_> = repaired.actions().cloned().collect();
    let taken: Vec<_> = traj.actions().take(route.len()).cloned().collect();
    let no_op = route == taken;
    let listed: Vec<String> = route.iter().map(ToString::to_string).collect();
    let rationale = format!(
        "Navigation: {}. Reflection: Agent fails to reach the correct page; this route reaches it.",
        if listed.is_empty() {
            "stay on the start page".to_string()
        } else {
            listed.join(", ")
        }
    );
    Ok(Some(Reflection {
        failed_query: q.clone(),
        label: FailureLabel::NavigationFailure,
        first_error_index: None,
        truncated: repaired,
        rationale,
        no_op_repair: no_op,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, Element, Observation, PageState, Step};
    use crate::oracle::ScriptedOracle;

    fn page(loc: &str) -> PageState {
        PageState::new(loc, vec![Element::new("h", "heading", format!("page {loc}"))])
    }

    fn walk(locs: &[&str], stop: Option<&str>) -> Trajectory {
        let mut prev = page("/");
        let mut t = Trajectory::new("q", "s", Observation::root(&prev));
        for loc in locs {
            let next = page(loc);
            t.steps.push(Step {
                action: Action::click(format!("to{loc}")),
                observation: Observation::successor(&prev, &next),
            });
            prev = next;
        }
        if let Some(ans) = stop {
            t.steps.push(Step {
                action: Action::stop(ans),
                observation: Observation::successor(&prev, &prev),
            });
        }
        t
    }

    fn oracle(rules: &str) -> OracleHandle {
        OracleHandle::new(ScriptedOracle::from_json(&format!(r#"{{"schema":1,"rules":[{rules}]}}"#)).unwrap())
    }

    fn q() -> Query {
        Query::new("q", "top search terms", "s").unwrap()
    }

    #[test]
    fn classification_prefers_oracle_unless_told() {
        let o = oracle(r#"{"role":"classify_error","when":{"visited_lacks":"page /orders"},"then":"navigation_failure"},{"role":"classify_error","then":"execution_failure"}"#);
        let t = walk(&["/a"], Some("x"));
        let c = classify(&t, &q(), &o, Some(FailureLabel::ExecutionFailure), false).unwrap();
        assert_eq!(c.oracle, FailureLabel::NavigationFailure);
        assert_eq!(c.used, FailureLabel::NavigationFailure);
        assert_eq!(c.agrees(), Some(false));
        let c = classify(&t, &q(), &o, Some(FailureLabel::ExecutionFailure), true).unwrap();
        assert_eq!(c.used, FailureLabel::ExecutionFailure);
        assert!(matches!(
            classify(&t, &q(), &o, Some(FailureLabel::Success), false),
            Err(ReflectError::NotAFailure(_))
        ));
    }

    #[test]
    fn execution_truncates_before_error() {
        let t = walk(&["/a", "/b", "/c", "/d", "/e"], Some("x"));
        let o = oracle(r#"{"role":"locate_first_error","then":{"index":4}}"#);
        let r = reflect_execution(&t, &q(), &o).unwrap();
        assert_eq!(r.first_error_index, Some(4));
        assert_eq!(r.truncated.horizon(), 3);
        assert_eq!(r.truncated.steps[..], t.steps[..3]);
        assert!(!r.rationale.is_empty());

        let o = oracle(r#"{"role":"locate_first_error","then":{"index":1}}"#);
        assert_eq!(reflect_execution(&t, &q(), &o).unwrap().truncated.horizon(), 0);
    }

    #[test]
    fn wrong_sort_rationale_mentions_sort() {
        let t = walk(&["/reports", "/terms"], Some("shoes"));
        let o = oracle(
            r#"{"role":"locate_first_error","when":{"action_lacks":"sort"},"then":{"first_kind":"stop"}},
               {"role":"reflect","when":{"action_lacks":"sort"},"then":"Sort by Hits before answering: click 'sort-hits'"}"#,
        );
        let r = reflect_execution(&t, &q(), &o).unwrap();
        assert_eq!(r.first_error_index, Some(3));
        assert!(r.rationale.contains("sort"));
    }

    #[test]
    fn navigation_repair_and_no_op() {
        let mut buf = BufferGraph::new(100);
        buf.ingest_episode(&walk(&["/orders"], None));
        let o = oracle(r#"{"role":"relevance","when":{"page_contains":"page /orders"},"then":true}"#);
        let stuck = walk(&["/a"], Some("x"));
        let r = reflect_navigation(&stuck, &q(), &buf, &o, &SearchLimits::default())
            .unwrap()
            .unwrap();
        assert_eq!(r.truncated.horizon(), 1);
        assert!(!r.no_op_repair);
        assert!(r.rationale.starts_with("Navigation: Click 'to/orders'"));

        let already = walk(&["/orders"], Some("x"));
        let r = reflect_navigation(&already, &q(), &buf, &o, &SearchLimits::default())
            .unwrap()
            .unwrap();
        assert!(r.no_op_repair);

        let empty = BufferGraph::new(10);
        assert!(reflect_navigation(&stuck, &q(), &empty, &o, &SearchLimits::default())
            .unwrap()
            .is_none());
    }
}

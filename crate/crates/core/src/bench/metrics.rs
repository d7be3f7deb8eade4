use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FailureLabel;
use crate::runtime::{EpisodeResult, Phase};

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("results line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One JSON object per line, one line per episode.
pub fn write_results(results: &[EpisodeResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("results serialize"));
        out.push('\n');
    }
    out
}

pub fn read_results(text: &str) -> Result<Vec<EpisodeResult>, ResultsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ResultsError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub success: f64,
    pub navigation_failure: f64,
    pub execution_failure: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.success + self.navigation_failure + self.execution_failure
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub site: String,
    pub success: bool,
    pub steps: usize,
    pub label: FailureLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPoint {
    pub round: usize,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Which episodes the headline numbers describe, e.g. `inference round 5`.
    pub scope: String,
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub per_domain: BTreeMap<String, DomainMetrics>,
    /// Mean action count over successful episodes.
    pub mean_steps: Option<f64>,
    pub navigation_failures: usize,
    pub execution_failures: usize,
    pub breakdown: Breakdown,
    pub round_curve: Vec<RoundPoint>,
    /// Summed over every episode in the input, all phases.
    pub oracle_calls: usize,
    /// Actions taken while exploring, before any task is attempted for real.
    pub offline_steps: usize,
    /// Actions taken in baseline and inference episodes.
    pub online_steps: usize,
    pub outcomes: BTreeMap<String, TaskOutcome>,
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Percentage with one decimal, e.g. `27.3%`.
pub fn percent(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

/// Relative reduction in percent; zero when there was nothing to reduce.
pub fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        (before as f64 - after as f64) / before as f64 * 100.0
    }
}

fn final_scope(results: &[EpisodeResult]) -> Option<(Phase, usize)> {
    let last_round = results
        .iter()
        .filter(|r| r.phase == Phase::Inference)
        .map(|r| r.round)
        .max();
    if let Some(round) = last_round {
        return Some((Phase::Inference, round));
    }
    [Phase::Baseline, Phase::Exploration]
        .into_iter()
        .find(|p| results.iter().any(|r| r.phase == *p))
        .map(|p| (p, 0))
}

impl MetricsReport {
    /// Headline numbers come from the last inference round when there is
    /// one, otherwise from the baseline or exploration episodes. A task
    /// appearing twice in that scope keeps its last record.
    pub fn from_results(results: &[EpisodeResult]) -> MetricsReport {
        let oracle_calls = results.iter().map(|r| r.oracle_calls).sum();
        let offline_steps = results.iter().filter(|r| r.phase == Phase::Exploration).map(|r| r.steps).sum();
        let online_steps = results.iter().filter(|r| r.phase != Phase::Exploration).map(|r| r.steps).sum();
        let mut rounds: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in results.iter().filter(|r| r.phase == Phase::Inference) {
            let e = rounds.entry(r.round).or_default();
            e.0 += usize::from(r.success);
            e.1 += 1;
        }
        let round_curve = rounds
            .into_iter()
            .map(|(round, (s, n))| RoundPoint {
                round,
                success_rate: rate(s, n),
            })
            .collect();

        let (scope, outcomes) = match final_scope(results) {
            None => ("no tasks".to_string(), BTreeMap::new()),
            Some((phase, round)) => {
                let outcomes: BTreeMap<String, TaskOutcome> = results
                    .iter()
                    .filter(|r| r.phase == phase && r.round == round)
                    .map(|r| {
                        (
                            r.task_id.clone(),
                            TaskOutcome {
                                site: r.site.clone(),
                                success: r.success,
                                steps: r.steps,
                                label: r.label,
                            },
                        )
                    })
                    .collect();
                let scope = match phase {
                    Phase::Inference => format!("inference round {round}"),
                    Phase::Baseline => "baseline".to_string(),
                    Phase::Exploration => "exploration".to_string(),
                };
                (scope, outcomes)
            }
        };

        let tasks = outcomes.len();
        let successes = outcomes.values().filter(|o| o.success).count();
        let count = |l: FailureLabel| outcomes.values().filter(|o| !o.success && o.label == l).count();
        let navigation_failures = count(FailureLabel::NavigationFailure);
        // Anything unsuccessful that is not a navigation failure.
        let execution_failures = tasks - successes - navigation_failures;
        let mut per_domain: BTreeMap<String, DomainMetrics> = BTreeMap::new();
        for o in outcomes.values() {
            let d = per_domain.entry(o.site.clone()).or_insert(DomainMetrics {
                tasks: 0,
                successes: 0,
                success_rate: 0.0,
            });
            d.tasks += 1;
            d.successes += usize::from(o.success);
        }
        for d in per_domain.values_mut() {
            d.success_rate = rate(d.successes, d.tasks);
        }
        let solved: Vec<usize> = outcomes.values().filter(|o| o.success).map(|o| o.steps).collect();
        let mean_steps = (!solved.is_empty()).then(|| solved.iter().sum::<usize>() as f64 / solved.len() as f64);
        MetricsReport {
            scope,
            tasks,
            successes,
            success_rate: rate(successes, tasks),
            per_domain,
            mean_steps,
            navigation_failures,
            execution_failures,
            breakdown: Breakdown {
                success: rate(successes, tasks),
                navigation_failure: rate(navigation_failures, tasks),
                execution_failure: rate(execution_failures, tasks),
            },
            round_curve,
            oracle_calls,
            offline_steps,
            online_steps,
            outcomes,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        if self.tasks == 0 {
            let _ = writeln!(s, "no tasks: the results contain no episodes");
            let _ = writeln!(s, "oracle calls: {}", self.oracle_calls);
            return s;
        }
        let _ = writeln!(s, "scope: {}", self.scope);
        let _ = writeln!(
            s,
            "success rate: {} ({}/{})",
            percent(self.success_rate),
            self.successes,
            self.tasks
        );
        for (site, d) in &self.per_domain {
            let _ = writeln!(s, "  {site:<16} {:>6} ({}/{})", percent(d.success_rate), d.successes, d.tasks);
        }
        match self.mean_steps {
            Some(m) => {
                let _ = writeln!(s, "mean steps (successes): {m:.2}");
            }
            None => {
                let _ = writeln!(s, "mean steps (successes): n/a");
            }
        }
        let _ = writeln!(
            s,
            "outcomes: success {}, navigation failure {} ({}), execution failure {} ({})",
            percent(self.breakdown.success),
            percent(self.breakdown.navigation_failure),
            self.navigation_failures,
            percent(self.breakdown.execution_failure),
            self.execution_failures
        );
        if !self.round_curve.is_empty() {
            let curve: Vec<String> = self
                .round_curve
                .iter()
                .map(|p| format!("r{} {}", p.round, percent(p.success_rate)))
                .collect();
            let _ = writeln!(s, "rounds: {}", curve.join(", "));
        }
        let _ = writeln!(s, "steps: {} offline, {} online", self.offline_steps, self.online_steps);
        let _ = writeln!(s, "oracle calls: {}", self.oracle_calls);
        s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("task sets differ: {only_left} only in the first run, {only_right} only in the second")]
    TaskSetMismatch { only_left: usize, only_right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tasks: usize,
    pub success_rate: [f64; 2],
    /// Percentage points.
    pub success_rate_delta: f64,
    pub success_rate_ratio: Option<f64>,
    pub navigation_failures: [usize; 2],
    pub navigation_reduction_pct: f64,
    pub execution_failures: [usize; 2],
    pub mean_steps: [Option<f64>; 2],
    pub mean_steps_delta: Option<f64>,
    /// Tasks solved in both runs and their mean steps in each.
    pub common_solved: usize,
    pub common_mean_steps: Option<[f64; 2]>,
    pub fixed: Vec<String>,
    pub regressed: Vec<String>,
}

/// Compares two reports over the same task set; `a` is the reference.
pub fn compare_runs(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison, CompareError> {
    let ka: BTreeSet<&String> = a.outcomes.keys().collect();
    let kb: BTreeSet<&String> = b.outcomes.keys().collect();
    if ka != kb {
        return Err(CompareError::TaskSetMismatch {
            only_left: ka.difference(&kb).count(),
            only_right: kb.difference(&ka).count(),
        });
    }
    let mut fixed = Vec::new();
    let mut regressed = Vec::new();
    let mut common = Vec::new();
    for (id, oa) in &a.outcomes {
        let ob = &b.outcomes[id];
        match (oa.success, ob.success) {
            (false, true) => fixed.push(id.clone()),
            (true, false) => regressed.push(id.clone()),
            (true, true) => common.push((oa.steps, ob.steps)),
            _ => {}
        }
    }
    let common_mean_steps = (!common.is_empty()).then(|| {
        let n = common.len() as f64;
        [
            common.iter().map(|c| c.0).sum::<usize>() as f64 / n,
            common.iter().map(|c| c.1).sum::<usize>() as f64 / n,
        ]
    });
    Ok(Comparison {
        tasks: a.tasks,
        success_rate: [a.success_rate, b.success_rate],
        success_rate_delta: (b.success_rate - a.success_rate) * 100.0,
        success_rate_ratio: (a.success_rate > 0.0).then(|| b.success_rate / a.success_rate),
        navigation_failures: [a.navigation_failures, b.navigation_failures],
        navigation_reduction_pct: reduction_pct(a.navigation_failures, b.navigation_failures),
        execution_failures: [a.execution_failures, b.execution_failures],
        mean_steps: [a.mean_steps, b.mean_steps],
        mean_steps_delta: steps_delta(a.mean_steps, b.mean_steps),
        common_solved: common.len(),
        common_mean_steps,
        fixed,
        regressed,
    })
}

pub fn steps_delta(before: Option<f64>, after: Option<f64>) -> Option<f64> {
    Some(after? - before?)
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tasks: {}", self.tasks);
        let _ = writeln!(
            s,
            "success rate: {} -> {} ({:+.1} pts{})",
            percent(self.success_rate[0]),
            percent(self.success_rate[1]),
            self.success_rate_delta,
            self.success_rate_ratio
                .map(|r| format!(", x{r:.2}"))
                .unwrap_or_default()
        );
        let _ = writeln!(
            s,
            "navigation failures: {} -> {} ({:.1}% reduction)",
            self.navigation_failures[0], self.navigation_failures[1], self.navigation_reduction_pct
        );
        let _ = writeln!(
            s,
            "execution failures: {} -> {}",
            self.execution_failures[0], self.execution_failures[1]
        );
        let fmt = |m: Option<f64>| m.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            "mean steps: {} -> {} (delta {})",
            fmt(self.mean_steps[0]),
            fmt(self.mean_steps[1]),
            self.mean_steps_delta
                .map(|d| format!("{d:+.1}"))
                .unwrap_or_else(|| "n/a".into())
        );
        if let Some([x, y]) = self.common_mean_steps {
            let _ = writeln!(s, "mean steps on {} commonly solved: {x:.2} -> {y:.2}", self.common_solved);
        }
        let _ = writeln!(s, "fixed: {}, regressed: {}", self.fixed.len(), self.regressed.len());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Observation, PageState, Trajectory};

    fn rec(id: &str, site: &str, phase: Phase, round: usize, success: bool, steps: usize, label: FailureLabel) -> EpisodeResult {
        EpisodeResult {
            task_id: id.into(),
            site: site.into(),
            phase,
            round,
            trajectory: Trajectory::new(id, site, Observation::root(&PageState::default())),
            success,
            label,
            oracle_label: None,
            steps,
            oracle_calls: 2,
            demonstrations_used: 0,
            reflection: None,
            memory_outcome: None,
            aborted: None,
        }
    }

    use FailureLabel::*;

    #[test]
    fn two_of_four() {
        let rs = vec![
            rec("a", "x", Phase::Baseline, 0, true, 3, Success),
            rec("b", "x", Phase::Baseline, 0, true, 5, Success),
            rec("c", "y", Phase::Baseline, 0, false, 7, NavigationFailure),
            rec("d", "y", Phase::Baseline, 0, false, 2, ExecutionFailure),
        ];
        let m = MetricsReport::from_results(&rs);
        assert_eq!(m.success_rate, 0.5);
        assert_eq!(percent(m.success_rate), "50.0%");
        assert_eq!(m.mean_steps, Some(4.0));
        assert_eq!(m.per_domain["y"].successes, 0);
        assert!((m.breakdown.total() - 1.0).abs() <= 1e-9);
        assert_eq!(m.oracle_calls, 8);
    }

    #[test]
    fn percent_rounds_to_one_decimal() {
        assert_eq!(percent(30.0 / 110.0), "27.3%");
        assert_eq!(reduction_pct(36, 18), 50.0);
        let d = steps_delta(Some(29.2), Some(13.1)).unwrap();
        assert!((d + 16.1).abs() < 1e-9);
    }

    #[test]
    fn scope_is_last_round() {
        let rs = vec![
            rec("a", "x", Phase::Exploration, 0, false, 5, NavigationFailure),
            rec("a", "x", Phase::Inference, 1, false, 9, ExecutionFailure),
            rec("a", "x", Phase::Inference, 2, true, 3, Success),
        ];
        let m = MetricsReport::from_results(&rs);
        assert_eq!(m.scope, "inference round 2");
        assert_eq!(m.successes, 1);
        assert_eq!(m.round_curve.len(), 2);
        assert_eq!(m.round_curve[0].success_rate, 0.0);
    }

    #[test]
    fn empty_results() {
        let m = MetricsReport::from_results(&read_results("\n").unwrap());
        assert_eq!(m.tasks, 0);
        assert!(m.render().contains("no tasks"));
    }

    #[test]
    fn jsonl_round_trip() {
        let rs = vec![rec("a", "x", Phase::Baseline, 0, true, 3, Success)];
        let text = write_results(&rs);
        assert_eq!(text.lines().count(), 1);
        assert_eq!(read_results(&text).unwrap(), rs);
        assert!(matches!(read_results("{"), Err(ResultsError::Parse { line: 1, .. })));
    }

    #[test]
    fn comparisons() {
        let base = MetricsReport::from_results(&[
            rec("a", "x", Phase::Baseline, 0, true, 6, Success),
            rec("b", "x", Phase::Baseline, 0, false, 9, NavigationFailure),
        ]);
        let same = compare_runs(&base, &base).unwrap();
        assert_eq!(same.success_rate_delta, 0.0);
        assert_eq!(same.navigation_reduction_pct, 0.0);
        assert_eq!(same.mean_steps_delta, Some(0.0));

        let better = MetricsReport::from_results(&[
            rec("a", "x", Phase::Baseline, 0, true, 3, Success),
            rec("b", "x", Phase::Baseline, 0, true, 4, Success),
        ]);
        let c = compare_runs(&base, &better).unwrap();
        assert_eq!(c.navigation_reduction_pct, 100.0);
        assert_eq!(c.success_rate_ratio, Some(2.0));
        assert_eq!(c.common_mean_steps, Some([6.0, 3.0]));
        assert_eq!(c.fixed, vec!["b".to_string()]);

        let other = MetricsReport::from_results(&[rec("z", "x", Phase::Baseline, 0, true, 3, Success)]);
        assert_eq!(
            compare_runs(&base, &other),
            Err(CompareError::TaskSetMismatch { only_left: 2, only_right: 1 })
        );
    }
}

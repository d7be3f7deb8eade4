use super::{OracleContext, OracleRequest, OracleRole, StoredView, TrajectoryView};

pub const PROMPT_VERSION: &str = "v1";

pub fn template(role: OracleRole) -> &'static str {
    match role {
        OracleRole::Heuristic => include_str!("../../prompts/v1/heuristic.txt"),
        OracleRole::Relevance => include_str!("../../prompts/v1/relevance.txt"),
        OracleRole::RankPaths => include_str!("../../prompts/v1/rank_paths.txt"),
        OracleRole::ClassifyError => include_str!("../../prompts/v1/classify_error.txt"),
        OracleRole::LocateFirstError => include_str!("../../prompts/v1/locate_first_error.txt"),
        OracleRole::Reflect => include_str!("../../prompts/v1/reflect.txt"),
        OracleRole::UpdateDecision => include_str!("../../prompts/v1/update_decision.txt"),
    }
}

fn locator_of(page: &str) -> &str {
    page.lines()
        .next()
        .and_then(|l| l.strip_prefix("@ "))
        .unwrap_or("?")
}

fn render_trajectory(t: &TrajectoryView) -> String {
    let mut out = String::from("Actions:\n");
    if t.actions.is_empty() {
        out.push_str("(none)\n");
    }
    for (i, a) in t.actions.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, a));
    }
    let locs: Vec<&str> = t.pages.iter().map(|p| locator_of(p)).collect();
    out.push_str(&format!("Pages visited: {}\n", locs.join(" -> ")));
    out.push_str("Final page:\n");
    out.push_str(t.last_page());
    out
}

fn render_stored(s: &StoredView) -> String {
    format!(
        "Outcome: {}\n{}Rationale: {}\n",
        s.label,
        render_trajectory(&s.trajectory),
        if s.rationale.is_empty() { "(none)" } else { &s.rationale }
    )
}

/// Fills the role's template. Deterministic; the remote oracle sends this
/// text verbatim.
pub fn render_context(req: &OracleRequest) -> String {
    let t = template(req.role()).replace("{query}", &req.query.text);
    match &req.context {
        OracleContext::Heuristic { page } | OracleContext::Relevance { page } => {
            t.replace("{page}", page)
        }
        OracleContext::RankPaths { candidates } => {
            let body: Vec<String> = candidates
                .iter()
                .enumerate()
                .map(|(i, c)| format!("Candidate {i}:\n{}", render_trajectory(c)))
                .collect();
            t.replace("{candidates}", &body.join("\n"))
        }
        OracleContext::ClassifyError { trajectory } | OracleContext::LocateFirstError { trajectory } => {
            t.replace("{trajectory}", &render_trajectory(trajectory))
        }
        OracleContext::Reflect {
            trajectory,
            error_index,
        } => t
            .replace("{trajectory}", &render_trajectory(trajectory))
            .replace(
                "{error_index}",
                &error_index.map_or("not applicable".to_string(), |i| i.to_string()),
            ),
        OracleContext::UpdateDecision { old, new } => t
            .replace("{old}", &render_stored(old))
            .replace("{new}", &render_stored(new)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Action, FailureLabel, Query};

    fn q() -> Query {
        Query::new("q1", "oldest complete order", "shop").unwrap()
    }

    fn traj() -> TrajectoryView {
        TrajectoryView {
            actions: vec![Action::click("sales"), Action::stop("John Lee")],
            pages: vec!["@ /\n".into(), "@ /sales\n".into(), "@ /sales\n".into()],
        }
    }

    #[test]
    fn classify_prompt_lists_actions_and_labels() {
        let text = render_context(&OracleRequest::new(
            &q(),
            OracleContext::ClassifyError { trajectory: traj() },
        ));
        assert!(text.contains("1. Click 'sales'"));
        assert!(text.contains("2. Stop: John Lee"));
        assert!(text.contains("navigation_failure:"));
        assert!(text.contains("execution_failure:"));
        assert!(text.contains("Pages visited: / -> /sales -> /sales"));
    }

    #[test]
    fn update_prompt_shows_both() {
        let old = StoredView {
            trajectory: traj(),
            label: FailureLabel::ExecutionFailure,
            rationale: "forgot to sort".into(),
        };
        let mut new = old.clone();
        new.label = FailureLabel::Success;
        new.trajectory.actions.insert(0, Action::click("orders"));
        let text = render_context(&OracleRequest::new(
            &q(),
            OracleContext::UpdateDecision { old, new },
        ));
        assert!(text.contains("Outcome: execution_failure"));
        assert!(text.contains("Outcome: success"));
        assert!(text.contains("1. Click 'orders'"));
    }

    #[test]
    fn empty_heuristic_is_stable() {
        let req = OracleRequest::new(&q(), OracleContext::Heuristic { page: String::new() });
        let a = render_context(&req);
        assert_eq!(a, render_context(&req));
        assert!(a.contains("Task: oldest complete order"));
        assert!(!a.contains('{'));
    }
}

//! The 60-trajectory classification suite over cms-mini, frozen as
//! `fixtures/classification-suite.json`. Each case is an action list with
//! the label its author intended; labels are data, not computed.

use serde::{Deserialize, Serialize};

use super::cms;
use crate::env::{EnvError, ValidatorKind, World};
use crate::model::{Action, FailureLabel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub case: String,
    pub task: String,
    pub note: String,
    pub actions: Vec<Action>,
    pub label: FailureLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub schema: u32,
    pub world: String,
    pub cases: Vec<SuiteCase>,
}

const WRONG: &str = "not sure";

/// Builds the suite from the cms-mini tasks. Per answer task: a wrong
/// section, the right page with a wrong answer, and the right page left
/// again before a wrong answer. Per page-reaching task: three different
/// wrong sections.
pub fn generate(world: &World) -> Result<Suite, EnvError> {
    let mut cases = Vec::new();
    for task in &world.tasks {
        let id = &task.query.id;
        let mut n = 0;
        let mut add = |note: &str, actions: Vec<Action>, label| {
            n += 1;
            cases.push(SuiteCase {
                case: format!("{id}/{n}"),
                task: id.clone(),
                note: note.to_string(),
                actions,
                label,
            })
        };
        let nav = FailureLabel::NavigationFailure;
        let exec = FailureLabel::ExecutionFailure;
        add("opens help and gives up", vec![Action::click("help"), Action::stop(WRONG)], nav);
        if task.validator.kind == ValidatorKind::StateReached {
            add(
                "wanders into content pages",
                vec![Action::click("content"), Action::click("pages"), Action::stop(WRONG)],
                nav,
            );
            add(
                "circles through sales",
                vec![Action::click("sales"), Action::click("home"), Action::click("sales"), Action::stop("")],
                nav,
            );
            continue;
        }
        let solution = world
            .shortest_solution(task, 30)?
            .expect("every cms-mini task is solvable");
        let mut route: Vec<Action> = solution.iter().filter(|a| !a.is_stop()).cloned().collect();
        let mut wrong = route.clone();
        wrong.push(Action::stop(WRONG));
        add("reaches the key pages, answers wrongly", wrong, exec);
        route.push(Action::click(leave_target(world, task, &route)?));
        route.push(Action::stop(WRONG));
        add("reaches the key pages, leaves, answers wrongly", route, exec);
    }
    Ok(Suite {
        schema: 1,
        world: "cms-mini".into(),
        cases,
    })
}

/// Some link on the final page of `route`.
fn leave_target(world: &World, task: &crate::env::TaskSpec, route: &[Action]) -> Result<String, EnvError> {
    let traj = world.replay(&task.query.id, &task.query.site, route)?;
    let page = traj
        .page_states()
        .map_err(|e| EnvError::Schema(e.to_string()))?
        .pop()
        .expect("start page");
    let site = world.site(&task.query.site)?;
    let aff = site.pages[&page.locator]
        .affordances
        .iter()
        .find(|a| a.dest.is_some())
        .expect("every cms page links somewhere");
    Ok(aff.element_id.clone())
}

pub fn to_json(s: &Suite) -> String {
    serde_json::to_string_pretty(s).expect("suite serializes") + "\n"
}

pub fn cms_world() -> World {
    World::from_file(cms::world()).expect("cms-mini loads")
}

//! Deterministic simulated multi-site web environment.
//!
//! A world is a set of site graphs (pages with element lists and
//! affordances) plus task definitions with ground-truth key observations and
//! programmatic validators. Worlds are loaded from the JSON site-graph
//! format (`schema: 1`).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, ActionKind, Element, KeyObservationSet, ModelError, ObsId, Observation, PageState,
    Query, Step, Trajectory,
};

pub const WORLD_SCHEMA: u32 = 1;
pub const DEFAULT_HORIZON_CAP: usize = 30;
const ERROR_ELEMENT_ID: &str = "__error";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot read world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("site {site}: page {from} has an action pointing to missing page {to}")]
    DanglingLocator { site: String, from: String, to: String },
    #[error("site {site}: page {locator} is unreachable from the root")]
    UnreachablePage { site: String, locator: String },
    #[error("unknown site {0}")]
    UnknownSite(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("episode already stopped")]
    Terminated,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    /// The typed payload becomes the element's text; the page stays put.
    SetText,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Affordance {
    pub action_kind: ActionKind,
    pub element_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<Mutation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpec {
    pub locator: String,
    pub elements: Vec<Element>,
    #[serde(default)]
    pub affordances: Vec<Affordance>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteFile {
    pub site_id: String,
    pub root: String,
    pub pages: Vec<PageSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorKind {
    AnswerEquals,
    AnswerContains,
    StateReached,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorFile {
    pub kind: ValidatorKind,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFile {
    pub query: Query,
    /// Locators of the key pages; resolved to observation ids at load.
    pub key_obs: Vec<String>,
    pub validator: ValidatorFile,
}

/// On-disk site-graph document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldFile {
    pub schema: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub sites: Vec<SiteFile>,
    pub tasks: Vec<TaskFile>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteGraph {
    pub site_id: String,
    pub root: String,
    pub pages: BTreeMap<String, PageSpec>,
}

impl SiteGraph {
    /// Pages reachable from the root through navigating affordances.
    pub fn reachable(&self) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([self.root.clone()]);
        let mut queue = VecDeque::from([self.root.clone()]);
        while let Some(loc) = queue.pop_front() {
            for aff in &self.pages[&loc].affordances {
                if let Some(dest) = &aff.dest {
                    if seen.insert(dest.clone()) {
                        queue.push_back(dest.clone());
                    }
                }
            }
        }
        seen
    }
}

/// For answer validators `expected` is the answer text; for `StateReached`
/// it is the hex observation id of the target page.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidatorSpec {
    pub kind: ValidatorKind,
    pub expected: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub query: Query,
    pub key_obs: KeyObservationSet,
    pub key_locators: Vec<String>,
    pub validator: ValidatorSpec,
}

/// Where an episode currently is. Owned per episode; the world itself is
/// immutable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub site: String,
    pub locator: String,
    pub overrides: BTreeMap<String, String>,
    pub error: Option<String>,
    pub step: usize,
    pub terminated: bool,
    pub answer: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct World {
    pub name: String,
    pub sites: BTreeMap<String, SiteGraph>,
    pub tasks: Vec<TaskSpec>,
}

fn schema_err(msg: impl Into<String>) -> EnvError {
    EnvError::Schema(msg.into())
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

pub fn load_world(path: impl AsRef<Path>) -> Result<World, EnvError> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut world = World::from_json(&text)?;
    if world.name.is_empty() {
        if let Some(stem) = path.as_ref().file_stem() {
            world.name = stem.to_string_lossy().into_owned();
        }
    }
    Ok(world)
}

impl World {
    pub fn from_json(text: &str) -> Result<World, EnvError> {
        let file: WorldFile =
            serde_json::from_str(text).map_err(|e| schema_err(format!("world file: {e}")))?;
        World::from_file(file)
    }

    pub fn from_file(file: WorldFile) -> Result<World, EnvError> {
        if file.schema != WORLD_SCHEMA {
            return Err(schema_err(format!(
                "world schema {} is not supported (expected {WORLD_SCHEMA})",
                file.schema
            )));
        }
        let mut sites = BTreeMap::new();
        for site in file.sites {
            let graph = check_site(site)?;
            if sites.contains_key(&graph.site_id) {
                return Err(schema_err(format!("duplicate site {}", graph.site_id)));
            }
            sites.insert(graph.site_id.clone(), graph);
        }

        let mut world = World {
            name: file.name.unwrap_or_default(),
            sites,
            tasks: Vec::new(),
        };
        let mut ids = BTreeSet::new();
        for task in file.tasks {
            let spec = world.check_task(task)?;
            if !ids.insert(spec.query.id.clone()) {
                return Err(schema_err(format!("duplicate task id {}", spec.query.id)));
            }
            world.tasks.push(spec);
        }
        Ok(world)
    }

    fn check_task(&self, task: TaskFile) -> Result<TaskSpec, EnvError> {
        let qid = task.query.id.clone();
        let site = self.site(&task.query.site)?;
        let mut key = Vec::new();
        for loc in &task.key_obs {
            if !site.pages.contains_key(loc) {
                return Err(schema_err(format!("task {qid}: key page {loc} does not exist")));
            }
            key.push(self.pristine_obs(&site.site_id, loc)?);
        }
        let key_obs = KeyObservationSet::new(key)
            .map_err(|_| schema_err(format!("task {qid}: key_obs must not be empty")))?;
        let expected = match task.validator.kind {
            ValidatorKind::AnswerEquals | ValidatorKind::AnswerContains => {
                if task.validator.expected.is_empty() {
                    return Err(schema_err(format!("task {qid}: validator needs an expected answer")));
                }
                task.validator.expected
            }
            ValidatorKind::StateReached => {
                let loc = &task.validator.expected;
                if !site.pages.contains_key(loc) {
                    return Err(schema_err(format!("task {qid}: target page {loc} does not exist")));
                }
                self.pristine_obs(&site.site_id, loc)?.0
            }
        };
        Ok(TaskSpec {
            query: task.query,
            key_obs,
            key_locators: task.key_obs,
            validator: ValidatorSpec {
                kind: task.validator.kind,
                expected,
            },
        })
    }

    pub fn site(&self, site: &str) -> Result<&SiteGraph, EnvError> {
        self.sites
            .get(site)
            .ok_or_else(|| EnvError::UnknownSite(site.to_string()))
    }

    pub fn task(&self, id: &str) -> Result<&TaskSpec, EnvError> {
        self.tasks
            .iter()
            .find(|t| t.query.id == id)
            .ok_or_else(|| EnvError::UnknownTask(id.to_string()))
    }

    pub fn page_count(&self) -> usize {
        self.sites.values().map(|s| s.pages.len()).sum()
    }

    /// Canonical state of a page before any mutation.
    pub fn pristine_state(&self, site: &str, locator: &str) -> Result<PageState, EnvError> {
        let page = self
            .site(site)?
            .pages
            .get(locator)
            .ok_or_else(|| schema_err(format!("no page {locator} on {site}")))?;
        Ok(PageState::new(locator, page.elements.clone()).canonical())
    }

    pub fn pristine_obs(&self, site: &str, locator: &str) -> Result<ObsId, EnvError> {
        Ok(self.pristine_state(site, locator)?.obs_id())
    }

    pub fn reset(&self, site: &str) -> Result<(EnvState, Observation), EnvError> {
        let graph = self.site(site)?;
        let state = EnvState {
            site: site.to_string(),
            locator: graph.root.clone(),
            overrides: BTreeMap::new(),
            error: None,
            step: 0,
            terminated: false,
            answer: None,
        };
        let obs = Observation::root(&self.view(&state)?);
        Ok((state, obs))
    }

    /// What the agent sees: page elements with typed text applied, a
    /// volatile render stamp, and an error element if the last action failed.
    pub fn view(&self, state: &EnvState) -> Result<PageState, EnvError> {
        let page = self
            .site(&state.site)?
            .pages
            .get(&state.locator)
            .ok_or_else(|| schema_err(format!("no page {}", state.locator)))?;
        let mut elements: Vec<Element> = page
            .elements
            .iter()
            .map(|e| match state.overrides.get(&e.id) {
                Some(text) => Element::new(e.id.clone(), e.role.clone(), text.clone()),
                None => e.clone(),
            })
            .collect();
        if let Some(err) = &state.error {
            elements.push(Element::new(ERROR_ELEMENT_ID, "error", err.clone()));
        }
        elements.push(Element::new(
            "clock",
            "timestamp",
            format!("rendered at step {}", state.step),
        ));
        Ok(PageState::new(state.locator.clone(), elements))
    }

    /// Applies one action. Invalid targets produce an error observation
    /// rather than an `Err`.
    pub fn step(&self, state: &EnvState, action: &Action) -> Result<(EnvState, Observation), EnvError> {
        if state.terminated {
            return Err(EnvError::Terminated);
        }
        let before = self.view(state)?;
        let mut next = state.clone();
        next.step += 1;
        next.error = None;

        match action.kind {
            ActionKind::Stop => {
                next.terminated = true;
                next.answer = Some(action.payload.clone());
            }
            ActionKind::Click | ActionKind::Type => {
                let page = &self.site(&state.site)?.pages[&state.locator];
                let present = page.elements.iter().any(|e| e.id == action.target);
                let aff = page
                    .affordances
                    .iter()
                    .find(|a| a.action_kind == action.kind && a.element_id == action.target);
                match (present, aff) {
                    (false, _) => {
                        next.error = Some(format!("no such element: {}", action.target));
                    }
                    (true, None) => {
                        next.error = Some(format!(
                            "element {} does not accept {}",
                            action.target, action.kind
                        ));
                    }
                    (true, Some(aff)) => {
                        if let Some(dest) = &aff.dest {
                            next.locator = dest.clone();
                            next.overrides.clear();
                        } else if aff.mutation == Some(Mutation::SetText) {
                            next.overrides
                                .insert(action.target.clone(), action.payload.clone());
                        }
                    }
                }
            }
        }
        let after = self.view(&next)?;
        Ok((next, Observation::successor(&before, &after)))
    }

    /// Replays `actions` from the site root, stopping early after a Stop.
    pub fn replay(&self, query_id: &str, site: &str, actions: &[Action]) -> Result<Trajectory, EnvError> {
        let (mut state, start) = self.reset(site)?;
        let mut traj = Trajectory::new(query_id, site, start);
        for action in actions {
            let (next, obs) = self.step(&state, action)?;
            traj.steps.push(Step {
                action: action.clone(),
                observation: obs,
            });
            state = next;
            if action.is_stop() {
                break;
            }
        }
        Ok(traj)
    }

    /// Every navigating affordance of every reachable page, each as a
    /// trajectory along the breadth-first route from the root.
    pub fn crawl(&self, site: &str) -> Result<Vec<Trajectory>, EnvError> {
        let graph = self.site(site)?;
        let routes = bfs_routes(graph);
        let mut out = Vec::new();
        for (loc, route) in &routes {
            for aff in &graph.pages[loc].affordances {
                if aff.dest.is_none() {
                    continue;
                }
                let mut actions = route.clone();
                actions.push(affordance_action(aff)?);
                out.push(self.replay(&format!("crawl:{loc}"), site, &actions)?);
            }
        }
        Ok(out)
    }

    /// Uniform random walk over navigating affordances.
    pub fn random_walk<R: Rng>(
        &self,
        site: &str,
        len: usize,
        rng: &mut R,
        query_id: &str,
    ) -> Result<Trajectory, EnvError> {
        let graph = self.site(site)?;
        let mut loc = graph.root.clone();
        let mut actions = Vec::new();
        for _ in 0..len {
            let options: Vec<&Affordance> = graph.pages[&loc]
                .affordances
                .iter()
                .filter(|a| a.dest.is_some())
                .collect();
            if options.is_empty() {
                break;
            }
            let aff = options[rng.gen_range(0..options.len())];
            actions.push(affordance_action(aff)?);
            loc = aff.dest.clone().expect("filtered");
        }
        self.replay(query_id, site, &actions)
    }

    /// Shortest action sequence (within `horizon`) that visits every key
    /// page and then stops with the expected answer, found by breadth-first
    /// search over (page, covered key pages).
    pub fn shortest_solution(&self, task: &TaskSpec, horizon: usize) -> Result<Option<Vec<Action>>, EnvError> {
        let graph = self.site(&task.query.site)?;
        let keys: Vec<&String> = task.key_locators.iter().collect();
        let full: u64 = (1u64 << keys.len()) - 1;
        let mask_of = |loc: &str| -> u64 {
            keys.iter()
                .enumerate()
                .filter(|(_, k)| k.as_str() == loc)
                .fold(0, |m, (i, _)| m | (1 << i))
        };
        let stop = match task.validator.kind {
            ValidatorKind::StateReached => String::new(),
            _ => task.validator.expected.clone(),
        };
        let target_obs = (task.validator.kind == ValidatorKind::StateReached)
            .then(|| ObsId(task.validator.expected.clone()));

        let start = (graph.root.clone(), mask_of(&graph.root));
        let mut prev: BTreeMap<(String, u64), ((String, u64), Action)> = BTreeMap::new();
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([(start.clone(), 0usize)]);
        while let Some(((loc, mask), depth)) = queue.pop_front() {
            let reached_target = target_obs
                .as_ref()
                .is_none_or(|t| self.pristine_obs(&graph.site_id, &loc).ok().as_ref() == Some(t));
            if mask == full && reached_target && depth < horizon {
                let mut actions = vec![Action::stop(stop)];
                let mut cur = (loc, mask);
                while let Some((p, a)) = prev.get(&cur) {
                    actions.push(a.clone());
                    cur = p.clone();
                }
                actions.reverse();
                return Ok(Some(actions));
            }
            if depth + 1 >= horizon {
                continue;
            }
            for aff in &graph.pages[&loc].affordances {
                let Some(dest) = &aff.dest else { continue };
                let node = (dest.clone(), mask | mask_of(dest));
                if seen.insert(node.clone()) {
                    prev.insert(node.clone(), ((loc.clone(), mask), affordance_action(aff)?));
                    queue.push_back((node, depth + 1));
                }
            }
        }
        Ok(None)
    }
}

fn affordance_action(aff: &Affordance) -> Result<Action, ModelError> {
    match aff.action_kind {
        ActionKind::Type => Action::type_text(aff.element_id.clone(), "query"),
        kind => Action::new(kind, aff.element_id.clone(), ""),
    }
}

fn bfs_routes(graph: &SiteGraph) -> BTreeMap<String, Vec<Action>> {
    let mut routes = BTreeMap::from([(graph.root.clone(), Vec::new())]);
    let mut queue = VecDeque::from([graph.root.clone()]);
    while let Some(loc) = queue.pop_front() {
        let base = routes[&loc].clone();
        for aff in &graph.pages[&loc].affordances {
            let Some(dest) = &aff.dest else { continue };
            if routes.contains_key(dest) {
                continue;
            }
            let Ok(action) = affordance_action(aff) else { continue };
            let mut r = base.clone();
            r.push(action);
            routes.insert(dest.clone(), r);
            queue.push_back(dest.clone());
        }
    }
    routes
}

fn check_site(site: SiteFile) -> Result<SiteGraph, EnvError> {
    let sid = site.site_id.clone();
    if !is_token(&sid) {
        return Err(schema_err(format!("bad site id {sid:?}")));
    }
    let mut pages = BTreeMap::new();
    for page in site.pages {
        if page.locator.is_empty() {
            return Err(schema_err(format!("site {sid}: page with empty locator")));
        }
        let mut ids = BTreeSet::new();
        for el in &page.elements {
            if !is_token(&el.id) || !is_token(&el.role) {
                return Err(schema_err(format!(
                    "site {sid} page {}: element ids and roles must be non-empty without whitespace",
                    page.locator
                )));
            }
            if el.id == ERROR_ELEMENT_ID || el.id == "clock" {
                return Err(schema_err(format!("element id {} is reserved", el.id)));
            }
            if !ids.insert(el.id.clone()) {
                return Err(schema_err(format!(
                    "site {sid} page {}: duplicate element id {}",
                    page.locator, el.id
                )));
            }
        }
        for aff in &page.affordances {
            if !ids.contains(&aff.element_id) {
                return Err(schema_err(format!(
                    "site {sid} page {}: affordance on missing element {}",
                    page.locator, aff.element_id
                )));
            }
            match (aff.action_kind, &aff.dest, &aff.mutation) {
                (ActionKind::Stop, _, _) => {
                    return Err(schema_err("stop cannot be an affordance"));
                }
                (_, Some(_), Some(_)) | (_, None, None) => {
                    return Err(schema_err(format!(
                        "site {sid} page {}: affordance on {} needs exactly one of dest/mutation",
                        page.locator, aff.element_id
                    )));
                }
                (ActionKind::Click, None, Some(_)) => {
                    return Err(schema_err("only type affordances may mutate"));
                }
                _ => {}
            }
        }
        if pages.insert(page.locator.clone(), page).is_some() {
            return Err(schema_err(format!("site {sid}: duplicate locator")));
        }
    }
    if !pages.contains_key(&site.root) {
        return Err(schema_err(format!("site {sid}: root {} is not a page", site.root)));
    }
    for (loc, page) in &pages {
        for aff in &page.affordances {
            if let Some(dest) = &aff.dest {
                if !pages.contains_key(dest) {
                    return Err(EnvError::DanglingLocator {
                        site: sid.clone(),
                        from: loc.clone(),
                        to: dest.clone(),
                    });
                }
            }
        }
    }
    let graph = SiteGraph {
        site_id: sid,
        root: site.root,
        pages,
    };
    let reachable = graph.reachable();
    if let Some(loc) = graph.pages.keys().find(|l| !reachable.contains(*l)) {
        return Err(EnvError::UnreachablePage {
            site: graph.site_id.clone(),
            locator: loc.clone(),
        });
    }
    Ok(graph)
}

/// True iff the task's validator accepts the episode.
pub fn validate(task: &TaskSpec, traj: &Trajectory) -> bool {
    match task.validator.kind {
        ValidatorKind::AnswerEquals => traj
            .final_answer()
            .is_some_and(|a| a.trim() == task.validator.expected.trim()),
        ValidatorKind::AnswerContains => traj
            .final_answer()
            .is_some_and(|a| a.contains(task.validator.expected.as_str())),
        ValidatorKind::StateReached => traj
            .obs_path()
            .iter()
            .any(|id| id.0 == task.validator.expected),
    }
}

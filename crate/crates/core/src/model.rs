//! Domain vocabulary shared by every subsystem: queries, actions, page
//! states, observations, trajectories and failure labels.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Element roles that carry per-request noise and are dropped before hashing.
pub const VOLATILE_ROLES: &[&str] = &["timestamp", "session"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("malformed page state: {0}")]
    MalformedState(String),
    #[error("diff does not apply: {0}")]
    DiffMismatch(String),
    #[error("key observation set must not be empty")]
    EmptyKeyObservations,
}

/// A natural-language task posed to the agent on one site.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    pub id: String,
    pub text: String,
    pub site: String,
}

#[derive(Deserialize)]
struct RawQuery {
    id: String,
    text: String,
    site: String,
}

impl TryFrom<RawQuery> for Query {
    type Error = ModelError;

    fn try_from(raw: RawQuery) -> Result<Self, Self::Error> {
        Query::new(raw.id, raw.text, raw.site)
    }
}

impl Query {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        site: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let (id, text, site) = (id.into(), text.into(), site.into());
        if text.trim().is_empty() {
            return Err(ModelError::InvalidQuery(format!("query {id} has empty text")));
        }
        if id.is_empty() {
            return Err(ModelError::InvalidQuery("query id is empty".into()));
        }
        Ok(Self { id, text, site })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Type,
    Stop,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Click => "click",
            ActionKind::Type => "type",
            ActionKind::Stop => "stop",
        })
    }
}

/// One agent interaction. `target` is an element id; `payload` is the typed
/// text or, for `Stop`, the final answer.
///
/// Ordering is (kind, target, payload), which is the tie-break order used by
/// search.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAction")]
pub struct Action {
    pub kind: ActionKind,
    pub target: String,
    pub payload: String,
}

#[derive(Deserialize)]
struct RawAction {
    kind: ActionKind,
    #[serde(default)]
    target: String,
    #[serde(default)]
    payload: String,
}

impl TryFrom<RawAction> for Action {
    type Error = ModelError;

    fn try_from(raw: RawAction) -> Result<Self, Self::Error> {
        Action::new(raw.kind, raw.target, raw.payload)
    }
}

impl Action {
    pub fn new(
        kind: ActionKind,
        target: impl Into<String>,
        payload: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let action = Action {
            kind,
            target: target.into(),
            payload: payload.into(),
        };
        action.check()?;
        Ok(action)
    }

    pub fn click(target: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::Click,
            target: target.into(),
            payload: String::new(),
        }
    }

    pub fn type_text(target: impl Into<String>, text: impl Into<String>) -> Result<Self, ModelError> {
        Action::new(ActionKind::Type, target, text)
    }

    pub fn stop(answer: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::Stop,
            target: String::new(),
            payload: answer.into(),
        }
    }

    pub fn is_stop(&self) -> bool {
        self.kind == ActionKind::Stop
    }

    fn check(&self) -> Result<(), ModelError> {
        match self.kind {
            ActionKind::Click if self.target.is_empty() => {
                Err(ModelError::InvalidAction("click needs a target".into()))
            }
            ActionKind::Click if !self.payload.is_empty() => {
                Err(ModelError::InvalidAction("click carries no payload".into()))
            }
            ActionKind::Type if self.target.is_empty() || self.payload.is_empty() => Err(
                ModelError::InvalidAction("type needs a target and a payload".into()),
            ),
            ActionKind::Stop if !self.target.is_empty() => {
                Err(ModelError::InvalidAction("stop has no target".into()))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActionKind::Click => write!(f, "Click '{}'", self.target),
            ActionKind::Type => write!(f, "Type '{}' into '{}'", self.payload, self.target),
            ActionKind::Stop => write!(f, "Stop: {}", self.payload),
        }
    }
}

/// A single element record of a page.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub role: String,
    pub text: String,
}

impl Element {
    pub fn new(id: impl Into<String>, role: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            role: role.into(),
            text: text.into(),
        }
    }
}

/// A page as the agent sees it: an address plus an ordered element list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageState {
    pub locator: String,
    pub elements: Vec<Element>,
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl PageState {
    pub fn new(locator: impl Into<String>, elements: Vec<Element>) -> Self {
        Self {
            locator: locator.into(),
            elements,
        }
    }

    /// Drops volatile elements and collapses whitespace. Element order is
    /// kept because it is meaningful (table rows, menus).
    pub fn canonical(&self) -> PageState {
        PageState {
            locator: collapse_ws(&self.locator),
            elements: self
                .elements
                .iter()
                .filter(|e| !VOLATILE_ROLES.contains(&e.role.as_str()))
                .map(|e| Element {
                    id: collapse_ws(&e.id),
                    role: collapse_ws(&e.role),
                    text: collapse_ws(&e.text),
                })
                .collect(),
        }
    }

    /// Normalized text form; the input to [`observation_hash`].
    pub fn normalized_text(&self) -> String {
        let canon = self.canonical();
        let mut out = format!("@ {}\n", canon.locator);
        for e in &canon.elements {
            out.push_str(&e.id);
            out.push(' ');
            out.push_str(&e.role);
            out.push(' ');
            out.push_str(&e.text);
            out.push('\n');
        }
        out
    }

    /// Parses text produced by [`PageState::normalized_text`].
    pub fn parse_normalized(text: &str) -> Result<PageState, ModelError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ModelError::MalformedState("empty page text".into()))?;
        let locator = header
            .strip_prefix("@ ")
            .or_else(|| header.strip_prefix('@'))
            .ok_or_else(|| ModelError::MalformedState(format!("bad header {header:?}")))?;
        let mut elements = Vec::new();
        for line in lines {
            let mut parts = line.splitn(3, ' ');
            let id = parts.next().unwrap_or_default();
            let role = parts
                .next()
                .ok_or_else(|| ModelError::MalformedState(format!("bad element line {line:?}")))?;
            let text = parts.next().unwrap_or_default();
            if id.is_empty() || role.is_empty() {
                return Err(ModelError::MalformedState(format!("bad element line {line:?}")));
            }
            elements.push(Element::new(id, role, text));
        }
        Ok(PageState::new(locator, elements))
    }

    pub fn obs_id(&self) -> ObsId {
        observation_hash(&self.normalized_text())
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn text_content(&self) -> String {
        self.elements
            .iter()
            .map(|e| e.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Content hash of a normalized page state (lowercase hex SHA-256).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObsId(pub String);

impl ObsId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..self.0.len().min(10)]
    }
}

impl fmt::Display for ObsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn observation_hash(normalized_state: &str) -> ObsId {
    let digest = Sha256::digest(normalized_state.as_bytes());
    ObsId(hex::encode(digest))
}

/// An element inserted at `index` of the successor page.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacedElement {
    pub index: usize,
    pub element: Element,
}

/// Element-level difference between two canonical page states.
///
/// Applying it removes `removed` (by id) from the predecessor and then
/// inserts `added` at ascending indices. Elements whose relative order
/// changed are encoded as remove + add.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageDiff {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locator: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added: Vec<PlacedElement>,
}

impl PageDiff {
    /// Diff from `old` (None = blank page) to `new`. Both are canonicalized.
    pub fn between(old: Option<&PageState>, new: &PageState) -> PageDiff {
        let new = new.canonical();
        let old = old.map(PageState::canonical).unwrap_or_default();

        let mut kept_old = vec![false; old.elements.len()];
        let mut kept_new = vec![false; new.elements.len()];
        let mut last_old: Option<usize> = None;
        for (ni, el) in new.elements.iter().enumerate() {
            if let Some(oi) = old.elements.iter().position(|o| o.id == el.id) {
                let in_order = last_old.is_none_or(|l| oi > l);
                if in_order && old.elements[oi] == *el {
                    kept_old[oi] = true;
                    kept_new[ni] = true;
                    last_old = Some(oi);
                }
            }
        }

        PageDiff {
            locator: (old.locator != new.locator).then(|| new.locator.clone()),
            removed: old
                .elements
                .iter()
                .zip(&kept_old)
                .filter(|(_, k)| !**k)
                .map(|(e, _)| e.id.clone())
                .collect(),
            added: new
                .elements
                .iter()
                .enumerate()
                .filter(|(i, _)| !kept_new[*i])
                .map(|(index, e)| PlacedElement {
                    index,
                    element: e.clone(),
                })
                .collect(),
        }
    }

    pub fn apply(&self, base: Option<&PageState>) -> Result<PageState, ModelError> {
        let mut state = base.cloned().unwrap_or_default();
        if let Some(loc) = &self.locator {
            state.locator = loc.clone();
        }
        for id in &self.removed {
            let pos = state
                .elements
                .iter()
                .position(|e| &e.id == id)
                .ok_or_else(|| ModelError::DiffMismatch(format!("no element {id} to remove")))?;
            state.elements.remove(pos);
        }
        for placed in &self.added {
            if placed.index > state.elements.len() {
                return Err(ModelError::DiffMismatch(format!(
                    "insert index {} beyond {} elements",
                    placed.index,
                    state.elements.len()
                )));
            }
            state.elements.insert(placed.index, placed.element.clone());
        }
        Ok(state)
    }

    pub fn is_empty(&self) -> bool {
        self.locator.is_none() && self.removed.is_empty() && self.added.is_empty()
    }
}

/// A page observation stored in diff form. Roots also cache the full
/// normalized state so diff chains have somewhere to start.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub obs_id: ObsId,
    pub diff: PageDiff,
    pub locator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_state_cached: Option<String>,
}

impl Observation {
    pub fn root(state: &PageState) -> Observation {
        let canon = state.canonical();
        let text = canon.normalized_text();
        Observation {
            obs_id: observation_hash(&text),
            diff: PageDiff::between(None, &canon),
            locator: canon.locator,
            full_state_cached: Some(text),
        }
    }

    pub fn successor(prev: &PageState, next: &PageState) -> Observation {
        let canon = next.canonical();
        Observation {
            obs_id: canon.obs_id(),
            diff: PageDiff::between(Some(prev), &canon),
            locator: canon.locator,
            full_state_cached: None,
        }
    }

    pub fn is_root(&self) -> bool {
        self.full_state_cached.is_some()
    }
}

/// Rebuilds a page by applying `diffs` in order on top of a full state.
pub fn apply_diffs<'a>(
    full_state: &str,
    diffs: impl IntoIterator<Item = &'a PageDiff>,
) -> Result<PageState, ModelError> {
    let mut state = PageState::parse_normalized(full_state)?;
    for d in diffs {
        state = d.apply(Some(&state))?;
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    pub observation: Observation,
}

/// An episode: the start observation `o_0` followed by `(a_h, o_h)` pairs.
/// Each step's diff is relative to the previous observation in the list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub query_id: String,
    pub site: String,
    pub start: Observation,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new(query_id: impl Into<String>, site: impl Into<String>, start: Observation) -> Self {
        Self {
            query_id: query_id.into(),
            site: site.into(),
            start,
            steps: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn actions(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().map(|s| &s.action)
    }

    /// `o_0` followed by every step observation.
    pub fn obs_path(&self) -> Vec<ObsId> {
        std::iter::once(self.start.obs_id.clone())
            .chain(self.steps.iter().map(|s| s.observation.obs_id.clone()))
            .collect()
    }

    pub fn visited(&self) -> BTreeSet<ObsId> {
        self.obs_path().into_iter().collect()
    }

    /// The first `len` steps.
    pub fn prefix(&self, len: usize) -> Trajectory {
        Trajectory {
            query_id: self.query_id.clone(),
            site: self.site.clone(),
            start: self.start.clone(),
            steps: self.steps[..len.min(self.steps.len())].to_vec(),
        }
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.steps
            .last()
            .filter(|s| s.action.is_stop())
            .map(|s| s.action.payload.as_str())
    }

    /// Full page states for `o_0..o_H`, rebuilt from the start's cached state.
    pub fn page_states(&self) -> Result<Vec<PageState>, ModelError> {
        let full = self.start.full_state_cached.as_deref().ok_or_else(|| {
            ModelError::InvalidTrajectory("start observation carries no full state".into())
        })?;
        let mut states = vec![PageState::parse_normalized(full)?];
        for step in &self.steps {
            let next = step.observation.diff.apply(states.last())?;
            states.push(next);
        }
        Ok(states)
    }
}

/// Ground-truth set of observations needed to solve a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeSet<ObsId>", into = "BTreeSet<ObsId>")]
pub struct KeyObservationSet(BTreeSet<ObsId>);

impl KeyObservationSet {
    pub fn new(members: impl IntoIterator<Item = ObsId>) -> Result<Self, ModelError> {
        let set: BTreeSet<ObsId> = members.into_iter().collect();
        if set.is_empty() {
            return Err(ModelError::EmptyKeyObservations);
        }
        Ok(Self(set))
    }

    pub fn members(&self) -> &BTreeSet<ObsId> {
        &self.0
    }

    pub fn contains(&self, id: &ObsId) -> bool {
        self.0.contains(id)
    }
}

impl TryFrom<BTreeSet<ObsId>> for KeyObservationSet {
    type Error = ModelError;

    fn try_from(set: BTreeSet<ObsId>) -> Result<Self, Self::Error> {
        KeyObservationSet::new(set)
    }
}

impl From<KeyObservationSet> for BTreeSet<ObsId> {
    fn from(k: KeyObservationSet) -> Self {
        k.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureLabel {
    Success,
    NavigationFailure,
    ExecutionFailure,
}

impl fmt::Display for FailureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureLabel::Success => "success",
            FailureLabel::NavigationFailure => "navigation_failure",
            FailureLabel::ExecutionFailure => "execution_failure",
        })
    }
}

/// Labels an episode against ground truth: unsolved episodes that missed
/// any key observation failed at navigation, the rest at execution.
pub fn classify_by_ground_truth(
    traj: &Trajectory,
    key_obs: &KeyObservationSet,
    solved: bool,
) -> Result<FailureLabel, ModelError> {
    if traj.horizon() == 0 {
        return Err(ModelError::InvalidTrajectory(format!(
            "trajectory for {} has no steps",
            traj.query_id
        )));
    }
    if solved {
        return Ok(FailureLabel::Success);
    }
    let visited = traj.visited();
    if key_obs.members().is_subset(&visited) {
        Ok(FailureLabel::ExecutionFailure)
    } else {
        Ok(FailureLabel::NavigationFailure)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(locator: &str, items: &[(&str, &str, &str)]) -> PageState {
        PageState::new(
            locator,
            items
                .iter()
                .map(|(i, r, t)| Element::new(*i, *r, *t))
                .collect(),
        )
    }

    fn traj_over(pages: &[PageState]) -> Trajectory {
        let mut t = Trajectory::new("q", "s", Observation::root(&pages[0]));
        for w in pages.windows(2) {
            t.steps.push(Step {
                action: Action::click("x"),
                observation: Observation::successor(&w[0], &w[1]),
            });
        }
        t
    }

    #[test]
    fn action_invariants() {
        assert!(Action::new(ActionKind::Click, "a", "").is_ok());
        assert!(Action::new(ActionKind::Click, "a", "p").is_err());
        assert!(Action::new(ActionKind::Type, "", "p").is_err());
        assert!(Action::new(ActionKind::Type, "a", "").is_err());
        assert!(Action::new(ActionKind::Stop, "a", "42").is_err());
        assert!(Action::new(ActionKind::Stop, "", "").is_ok());
        let bad: Result<Action, _> =
            serde_json::from_str(r#"{"kind":"click","target":"a","payload":"x"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn query_requires_text() {
        assert!(Query::new("q1", "  ", "s").is_err());
        assert!(serde_json::from_str::<Query>(r#"{"id":"q","text":"","site":"s"}"#).is_err());
    }

    #[test]
    fn empty_hash_is_fixed() {
        assert_eq!(
            observation_hash("").as_str(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn distinct_fixture_pages_hash_apart() {
        let a = page("/orders", &[("h", "heading", "Orders")]);
        let b = page("/orders", &[("h", "heading", "Invoices")]);
        assert_ne!(a.obs_id(), b.obs_id());
        assert_eq!(a.obs_id(), a.clone().obs_id());
    }

    #[test]
    fn volatile_elements_do_not_change_identity() {
        let a = page("/", &[("h", "heading", "Home"), ("clock", "timestamp", "t=1")]);
        let b = page("/", &[("h", "heading", "Home"), ("clock", "timestamp", "t=2")]);
        let c = page("/", &[("h", "heading", "  Home\t")]);
        assert_eq!(a.obs_id(), b.obs_id());
        assert_eq!(a.obs_id(), c.obs_id());
    }

    #[test]
    fn normalized_text_round_trips() {
        let p = page("/a b", &[("x", "row", "hello  world"), ("y", "link", "")]);
        let parsed = PageState::parse_normalized(&p.normalized_text()).unwrap();
        assert_eq!(parsed, p.canonical());
    }

    #[test]
    fn ground_truth_labels() {
        let p = |n: &str| page(&format!("/{n}"), &[("h", "heading", n)]);
        let (o1, o2, o3, o5) = (p("o1"), p("o2"), p("o3"), p("o5"));
        let home = p("home");
        let key = |ps: &[&PageState]| KeyObservationSet::new(ps.iter().map(|p| p.obs_id())).unwrap();

        let t = traj_over(&[home.clone(), o1.clone(), o2.clone()]);
        assert_eq!(
            classify_by_ground_truth(&t, &key(&[&o1, &o3]), false).unwrap(),
            FailureLabel::NavigationFailure
        );
        let t = traj_over(&[home.clone(), o1.clone(), o3.clone(), o5.clone()]);
        assert_eq!(
            classify_by_ground_truth(&t, &key(&[&o1, &o3]), false).unwrap(),
            FailureLabel::ExecutionFailure
        );
        let t = traj_over(&[home.clone(), o1.clone()]);
        assert_eq!(
            classify_by_ground_truth(&t, &key(&[&o1]), true).unwrap(),
            FailureLabel::Success
        );
        let empty = traj_over(&[home]);
        assert!(matches!(
            classify_by_ground_truth(&empty, &key(&[&o1]), true),
            Err(ModelError::InvalidTrajectory(_))
        ));
    }

    #[test]
    fn empty_key_set_rejected() {
        assert_eq!(
            KeyObservationSet::new(Vec::new()),
            Err(ModelError::EmptyKeyObservations)
        );
    }

    #[test]
    fn observation_serialization_keeps_id() {
        let p = page("/", &[("h", "heading", "Home")]);
        let obs = Observation::root(&p);
        let back: Observation = serde_json::from_str(&serde_json::to_string(&obs).unwrap()).unwrap();
        assert_eq!(back, obs);
        assert_eq!(back.obs_id, p.obs_id());
    }

    fn arb_page() -> impl Strategy<Value = PageState> {
        let el = (0u8..8, prop::sample::select(vec!["row", "link", "heading"]), "[a-c ]{0,6}");
        (prop::sample::select(vec!["/", "/a", "/b"]), prop::collection::vec(el, 0..8)).prop_map(
            |(loc, els)| {
                let mut seen = BTreeSet::new();
                let elements = els
                    .into_iter()
                    .filter(|(id, _, _)| seen.insert(*id))
                    .map(|(id, role, text)| Element::new(format!("e{id}"), role, text))
                    .collect();
                PageState::new(loc, elements)
            },
        )
    }

    proptest! {
        #[test]
        fn diff_chain_reconstructs_every_page(pages in prop::collection::vec(arb_page(), 1..6)) {
            let t = traj_over(&pages);
            let states = t.page_states().unwrap();
            for (state, id) in states.iter().zip(t.obs_path()) {
                prop_assert_eq!(state.obs_id(), id);
            }
            let diffs: Vec<&PageDiff> = t.steps.iter().map(|s| &s.observation.diff).collect();
            let last = apply_diffs(t.start.full_state_cached.as_ref().unwrap(), diffs).unwrap();
            prop_assert_eq!(last.obs_id(), pages.last().unwrap().obs_id());
        }

        #[test]
        fn classification_is_total(n_key in 1usize..4, visit_mask in 0u8..16, solved: bool) {
            let ps: Vec<PageState> = (0..4).map(|i| page(&format!("/{i}"), &[])).collect();
            let key = KeyObservationSet::new(ps[..n_key].iter().map(|p| p.obs_id())).unwrap();
            let mut path = vec![page("/home", &[])];
            path.extend((0..4).filter(|i| visit_mask & (1 << i) != 0).map(|i| ps[i].clone()));
            if path.len() < 2 { path.push(page("/other", &[])); }
            let t = traj_over(&path);
            let label = classify_by_ground_truth(&t, &key, solved).unwrap();
            let covered = (0..n_key).all(|i| visit_mask & (1 << i) != 0);
            let expected = if solved { FailureLabel::Success }
                else if covered { FailureLabel::ExecutionFailure }
                else { FailureLabel::NavigationFailure };
            prop_assert_eq!(label, expected);
        }
    }
}

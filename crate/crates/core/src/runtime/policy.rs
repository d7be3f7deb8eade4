//! Agent policies. All of them are pure functions of the query, the
//! interaction history and the injected demonstrations.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::memory::{tokens, MemoryEntry};
use crate::model::{Action, ActionKind, FailureLabel, ObsId, PageState, Query, Trajectory};
use crate::oracle::{OracleError, OracleHandle};

/// One past step: the page the agent saw and what it did there.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Turn {
    pub page: PageState,
    pub action: Action,
}

/// A retrieved memory value, ready for injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub query: Query,
    pub similarity: f64,
    pub label: FailureLabel,
    /// Loop-free action sequence.
    pub actions: Vec<Action>,
    pub rationale: String,
}

impl Demonstration {
    pub fn from_entry(entry: &MemoryEntry, similarity: f64) -> Self {
        Demonstration {
            query: entry.query.clone(),
            similarity,
            label: entry.value.label,
            actions: eliminate_loops(&entry.value.trajectory),
            rationale: entry.value.rationale.clone(),
        }
    }

    /// "query -> numbered actions -> rationale" block.
    pub fn render(&self) -> String {
        let mut out = format!("Query: {}\n", self.query.text);
        for (i, a) in self.actions.iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, a));
        }
        if !self.rationale.is_empty() {
            out.push_str(&format!("Rationale: {}\n", self.rationale));
        }
        out
    }

    /// Element ids named as `click '<id>'` in the rationale.
    pub fn click_hints(&self) -> Vec<String> {
        let mut hints = Vec::new();
        let mut rest = self.rationale.as_str();
        while let Some(pos) = rest.find("click '") {
            rest = &rest[pos + 7..];
            if let Some(end) = rest.find('\'') {
                hints.push(rest[..end].to_string());
                rest = &rest[end..];
            }
        }
        hints
    }
}

/// Drops every cycle from the observation path, keeping the actions that
/// remain. A closing Stop is always kept.
pub fn eliminate_loops(traj: &Trajectory) -> Vec<Action> {
    let mut stack: Vec<ObsId> = vec![traj.start.obs_id.clone()];
    let mut actions: Vec<Action> = Vec::new();
    for step in &traj.steps {
        if step.action.is_stop() {
            actions.push(step.action.clone());
            break;
        }
        let o = &step.observation.obs_id;
        if let Some(p) = stack.iter().position(|s| s == o) {
            stack.truncate(p + 1);
            actions.truncate(p);
        } else {
            stack.push(o.clone());
            actions.push(step.action.clone());
        }
    }
    actions
}

pub struct PolicyContext<'a> {
    pub query: &'a Query,
    pub page: &'a PageState,
    pub history: &'a [Turn],
    pub demonstrations: &'a [Demonstration],
    /// The episode's oracle session.
    pub oracle: &'a OracleHandle,
}

impl PolicyContext<'_> {
    fn has_element(&self, id: &str) -> bool {
        self.page.element(id).is_some()
    }

    fn clicked_here(&self) -> BTreeSet<&str> {
        self.history
            .iter()
            .filter(|t| t.page.locator == self.page.locator && t.action.kind == ActionKind::Click)
            .map(|t| t.action.target.as_str())
            .collect()
    }

    fn links(&self) -> Vec<&crate::model::Element> {
        self.page.elements.iter().filter(|e| e.role == "link").collect()
    }

    fn first_row(&self) -> Option<&str> {
        self.page
            .elements
            .iter()
            .find(|e| e.role == "row")
            .map(|e| e.text.as_str())
    }

    /// The next action of the first demonstration while the episode has
    /// followed it exactly and its target is on the page.
    fn replay(&self) -> Option<Action> {
        let demo = self.demonstrations.first()?;
        let h = self.history.len();
        let on_track = h < demo.actions.len()
            && self
                .history
                .iter()
                .zip(&demo.actions)
                .all(|(t, a)| &t.action == a);
        if !on_track {
            return None;
        }
        let next = &demo.actions[h];
        (next.is_stop() || self.has_element(&next.target)).then(|| next.clone())
    }

    fn hint(&self) -> Option<Action> {
        let demo = self.demonstrations.first()?;
        let clicked = self.clicked_here();
        demo.click_hints()
            .into_iter()
            .find(|id| self.has_element(id) && !clicked.contains(id.as_str()))
            .map(Action::click)
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    fn decide(&self, ctx: &PolicyContext<'_>) -> Result<Action, OracleError>;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "any", "are", "at", "by", "for", "from", "how", "i", "in", "is", "it", "me",
    "my", "of", "on", "or", "our", "show", "the", "to", "what", "which", "with",
];

fn content_tokens(text: &str) -> BTreeSet<String> {
    tokens(text)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

/// The scripted base agent.
///
/// 1. Follow the first demonstration while it applies.
/// 2. Click any element named by a `click '<id>'` hint in its rationale.
/// 3. On a page with table rows, answer with the first row.
/// 4. Otherwise click the unclicked link sharing most words with the
///    query; with no overlap at all, the first unclicked link.
#[derive(Clone, Copy, Debug, Default)]
pub struct KeywordPolicy;

impl Policy for KeywordPolicy {
    fn name(&self) -> String {
        "keyword".into()
    }

    fn decide(&self, ctx: &PolicyContext<'_>) -> Result<Action, OracleError> {
        if let Some(a) = ctx.replay().or_else(|| ctx.hint()) {
            return Ok(a);
        }
        if let Some(row) = ctx.first_row() {
            return Ok(Action::stop(row));
        }
        let want = content_tokens(&ctx.query.text);
        let clicked = ctx.clicked_here();
        let mut best: Option<(&str, usize)> = None;
        for link in ctx.links() {
            if clicked.contains(link.id.as_str()) {
                continue;
            }
            let overlap = content_tokens(&link.text).intersection(&want).count();
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((&link.id, overlap));
            }
        }
        Ok(match best {
            Some((id, _)) => Action::click(id),
            None => Action::stop(""),
        })
    }
}

/// Replays demonstrations like [`KeywordPolicy`] but otherwise asks the
/// oracle: stop when the page is judged relevant, else click the link whose
/// text gets the highest promise.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleDrivenPolicy;

impl Policy for OracleDrivenPolicy {
    fn name(&self) -> String {
        "oracle-driven".into()
    }

    fn decide(&self, ctx: &PolicyContext<'_>) -> Result<Action, OracleError> {
        if let Some(a) = ctx.replay().or_else(|| ctx.hint()) {
            return Ok(a);
        }
        if ctx.oracle.is_relevant(ctx.query, &ctx.page.normalized_text())? {
            return Ok(Action::stop(ctx.first_row().unwrap_or_default()));
        }
        let clicked = ctx.clicked_here();
        let mut best: Option<(&str, f64)> = None;
        for link in ctx.links() {
            if clicked.contains(link.id.as_str()) {
                continue;
            }
            let p = ctx.oracle.promise(ctx.query, &link.text)?;
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((&link.id, p));
            }
        }
        Ok(best.map_or_else(|| Action::stop(""), |(id, _)| Action::click(id)))
    }
}

/// Naive wanderer used as a step-count comparator: answers on any page with
/// rows, otherwise clicks a pseudo-random link seeded by the query and step.
#[derive(Clone, Copy, Debug, Default)]
pub struct WandererPolicy {
    pub seed: u64,
}

impl Policy for WandererPolicy {
    fn name(&self) -> String {
        format!("wanderer(seed={})", self.seed)
    }

    fn decide(&self, ctx: &PolicyContext<'_>) -> Result<Action, OracleError> {
        if let Some(row) = ctx.first_row() {
            return Ok(Action::stop(row));
        }
        let links = ctx.links();
        if links.is_empty() {
            return Ok(Action::stop(""));
        }
        let digest = Sha256::digest(format!("{}:{}:{}", self.seed, ctx.query.id, ctx.history.len()));
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Action::click(&links[rng.gen_range(0..links.len())].id))
    }
}

/// Emits a fixed action list, then repeats its last action (or stops when
/// the list is empty).
#[derive(Clone, Debug, Default)]
pub struct ActionListPolicy {
    pub actions: Vec<Action>,
}

impl Policy for ActionListPolicy {
    fn name(&self) -> String {
        "action-list".into()
    }

    fn decide(&self, ctx: &PolicyContext<'_>) -> Result<Action, OracleError> {
        Ok(self
            .actions
            .get(ctx.history.len())
            .or(self.actions.last())
            .cloned()
            .unwrap_or_else(|| Action::stop("")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    Keyword,
    OracleDriven,
    Wanderer,
}

impl PolicyKind {
    pub fn build(self, seed: u64) -> Box<dyn Policy> {
        match self {
            PolicyKind::Keyword => Box::new(KeywordPolicy),
            PolicyKind::OracleDriven => Box::new(OracleDrivenPolicy),
            PolicyKind::Wanderer => Box::new(WandererPolicy { seed }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Element, Observation, Step};

    fn page(loc: &str, els: &[(&str, &str, &str)]) -> PageState {
        PageState::new(loc, els.iter().map(|(i, r, t)| Element::new(*i, *r, *t)).collect())
    }

    fn root() -> PageState {
        page(
            "/",
            &[
                ("help", "link", "Help Center"),
                ("sales", "link", "Sales"),
                ("catalog", "link", "Catalog"),
            ],
        )
    }

    fn decide(p: &dyn Policy, q: &str, pg: &PageState, hist: &[Turn], demos: &[Demonstration]) -> Action {
        let query = Query::new("q", q, "s").unwrap();
        let oracle = OracleHandle::new(crate::oracle::ScriptedOracle::default());
        p.decide(&PolicyContext {
            query: &query,
            page: pg,
            history: hist,
            demonstrations: demos,
            oracle: &oracle,
        })
        .unwrap()
    }

    #[test]
    fn keyword_overlap_ties_and_wandering() {
        let r = root();
        assert_eq!(decide(&KeywordPolicy, "catalog products", &r, &[], &[]), Action::click("catalog"));
        // Tie between help and sales goes to page order.
        assert_eq!(decide(&KeywordPolicy, "help with sales", &r, &[], &[]), Action::click("help"));
        let hist = [Turn {
            page: r.clone(),
            action: Action::click("help"),
        }];
        assert_eq!(decide(&KeywordPolicy, "help with sales", &r, &hist, &[]), Action::click("sales"));
        assert_eq!(decide(&KeywordPolicy, "zzz", &r, &hist, &[]), Action::click("sales"));
        let data = page("/d", &[("r1", "row", "Ann 5"), ("r2", "row", "Bo 9")]);
        assert_eq!(decide(&KeywordPolicy, "x", &data, &[], &[]), Action::stop("Ann 5"));
        assert_eq!(decide(&KeywordPolicy, "x", &page("/e", &[]), &[], &[]), Action::stop(""));
    }

    fn demo(actions: Vec<Action>, rationale: &str) -> Demonstration {
        Demonstration {
            query: Query::new("d", "x", "s").unwrap(),
            similarity: 1.0,
            label: FailureLabel::ExecutionFailure,
            actions,
            rationale: rationale.into(),
        }
    }

    #[test]
    fn replays_then_follows_hints() {
        let d = demo(vec![Action::click("catalog")], "Sort first: click 'sort-hits'");
        assert_eq!(decide(&KeywordPolicy, "sales", &root(), &[], std::slice::from_ref(&d)), Action::click("catalog"));
        let data = page("/c", &[("sort-hits", "link", "Sort by Hits"), ("r", "row", "a")]);
        let hist = [Turn {
            page: root(),
            action: Action::click("catalog"),
        }];
        assert_eq!(decide(&KeywordPolicy, "x", &data, &hist, std::slice::from_ref(&d)), Action::click("sort-hits"));
        let sorted = page("/c2", &[("r", "row", "b")]);
        assert_eq!(decide(&KeywordPolicy, "x", &sorted, &hist, &[d]), Action::stop("b"));
        // Missing target abandons replay.
        let d = demo(vec![Action::click("nowhere")], "");
        assert_eq!(decide(&KeywordPolicy, "sales", &root(), &[], &[d]), Action::click("sales"));
    }

    #[test]
    fn hint_parsing() {
        let d = demo(vec![], "Navigation: Click 'Sales'. Then click 'a' and click 'b-c'.");
        assert_eq!(d.click_hints(), vec!["a", "b-c"]);
        assert!(d.render().contains("Rationale:"));
    }

    #[test]
    fn loops_are_removed() {
        let r = root();
        let help = page("/help", &[("home", "link", "Home")]);
        let sales = page("/sales", &[("home", "link", "Home")]);
        let mut t = Trajectory::new("q", "s", Observation::root(&r));
        let mut prev = r.clone();
        for (a, next) in [("help", &help), ("home", &r), ("sales", &sales)] {
            t.steps.push(Step {
                action: Action::click(a),
                observation: Observation::successor(&prev, next),
            });
            prev = next.clone();
        }
        t.steps.push(Step {
            action: Action::stop("x"),
            observation: Observation::successor(&prev, &prev),
        });
        assert_eq!(eliminate_loops(&t), vec![Action::click("sales"), Action::stop("x")]);
    }

    #[test]
    fn action_list_repeats_last() {
        let p = ActionListPolicy {
            actions: vec![Action::click("a")],
        };
        let hist: Vec<Turn> = (0..3)
            .map(|_| Turn {
                page: root(),
                action: Action::click("a"),
            })
            .collect();
        assert_eq!(decide(&p, "x", &root(), &hist, &[]), Action::click("a"));
        assert_eq!(decide(&ActionListPolicy::default(), "x", &root(), &[], &[]), Action::stop(""));
    }

    #[test]
    fn wanderer_is_deterministic() {
        let w = WandererPolicy { seed: 3 };
        let a = decide(&w, "x", &root(), &[], &[]);
        assert_eq!(a, decide(&w, "x", &root(), &[], &[]));
    }
}

//! Best-first search over a replay buffer snapshot.
//!
//! The oracle supplies a promise `p` per page; the search uses `h = 1 - p`.
//! Queue order is `(f, g, action sequence, node)`, all ascending, so every
//! run with a deterministic oracle expands nodes in the same order.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{BufferError, BufferGraph};
use crate::model::{Action, Observation, ObsId, PageState, Query, Step, Trajectory};
use crate::oracle::{OracleError, OracleHandle, TrajectoryView};

#[derive(Debug, Error)]
pub enum NavError {
    #[error("buffer has no root for site {0}")]
    NoRoot(String),
    #[error("node {0} was not reached by this search")]
    NotVisited(ObsId),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMode {
    /// `f = g + W * h` with unit edge costs.
    #[default]
    Standard,
    /// `f(o_0) = h(o_0)`, `f(o_j) = f(o_i) + h(o_j)`.
    Cumulative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchLimits {
    pub max_expansions: usize,
    pub candidate_cap: usize,
    pub f_mode: FMode,
    pub heuristic_weight: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_expansions: 500,
            candidate_cap: 20,
            f_mode: FMode::Standard,
            heuristic_weight: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchNodeScore {
    pub g: u32,
    pub h: f64,
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub node: ObsId,
    pub score: SearchNodeScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub root: ObsId,
    pub terminal: ObsId,
    pub path: Vec<(Action, ObsId)>,
    pub score: f64,
}

impl CandidatePath {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.path.iter().map(|(a, _)| a.clone()).collect()
    }

    /// Rebuilds the path as a trajectory using page states from `buf`.
    pub fn to_trajectory(&self, buf: &BufferGraph, query_id: &str, site: &str) -> Result<Trajectory, BufferError> {
        let mut prev: PageState = buf.reconstruct_state(&self.root)?;
        let mut traj = Trajectory::new(query_id, site, Observation::root(&prev));
        for (action, dst) in &self.path {
            let next = buf.reconstruct_state(dst)?;
            traj.steps.push(Step {
                action: action.clone(),
                observation: Observation::successor(&prev, &next),
            });
            prev = next;
        }
        Ok(traj)
    }

    pub fn view(&self, buf: &BufferGraph) -> Result<TrajectoryView, BufferError> {
        let mut pages = vec![buf.reconstruct_page(&self.root)?];
        for (_, id) in &self.path {
            pages.push(buf.reconstruct_page(id)?);
        }
        Ok(TrajectoryView {
            actions: self.actions(),
            pages,
        })
    }
}

/// Everything a search produced; `parents` are this search's own pointers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub root: Option<ObsId>,
    pub candidates: Vec<CandidatePath>,
    pub expansions: Vec<Expansion>,
    pub parents: BTreeMap<ObsId, (ObsId, Action)>,
}

impl SearchOutcome {
    pub fn backtrack(&self, terminal: &ObsId) -> Result<CandidatePath, NavError> {
        let root = self
            .root
            .clone()
            .ok_or_else(|| NavError::NotVisited(terminal.clone()))?;
        let score = self
            .expansions
            .iter()
            .find(|e| &e.node == terminal)
            .map(|e| e.score.f)
            .ok_or_else(|| NavError::NotVisited(terminal.clone()))?;
        let mut path = Vec::new();
        let mut cur = terminal.clone();
        while cur != root {
            let (p, a) = self
                .parents
                .get(&cur)
                .ok_or_else(|| NavError::NotVisited(cur.clone()))?;
            path.push((a.clone(), cur.clone()));
            cur = p.clone();
        }
        path.reverse();
        Ok(CandidatePath {
            root,
            terminal: terminal.clone(),
            path,
            score,
        })
    }

    pub fn expanded(&self, node: &ObsId) -> Option<&SearchNodeScore> {
        self.expansions.iter().find(|e| &e.node == node).map(|e| &e.score)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Key {
    f: f64,
    g: u32,
    actions: Vec<Action>,
    node: ObsId,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        self.f
            .total_cmp(&o.f)
            .then(self.g.cmp(&o.g))
            .then_with(|| self.actions.cmp(&o.actions))
            .then_with(|| self.node.cmp(&o.node))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct Search<'a> {
    buf: &'a BufferGraph,
    q: &'a Query,
    oracle: &'a OracleHandle,
    h_cache: BTreeMap<ObsId, f64>,
    pages: BTreeMap<ObsId, String>,
}

impl Search<'_> {
    fn page(&mut self, id: &ObsId) -> Result<String, NavError> {
        if let Some(p) = self.pages.get(id) {
            return Ok(p.clone());
        }
        let p = self.buf.reconstruct_page(id)?;
        self.pages.insert(id.clone(), p.clone());
        Ok(p)
    }

    fn h(&mut self, id: &ObsId) -> Result<f64, NavError> {
        if let Some(h) = self.h_cache.get(id) {
            return Ok(*h);
        }
        let page = self.page(id)?;
        let h = 1.0 - self.oracle.promise(self.q, &page)?;
        self.h_cache.insert(id.clone(), h);
        Ok(h)
    }
}

/// A* from the site root. Relevance is judged when a node is dequeued;
/// search stops when the frontier empties, `max_expansions` nodes have been
/// expanded, or `candidate_cap` relevant nodes were found.
pub fn astar_search(
    buf: &BufferGraph,
    q: &Query,
    oracle: &OracleHandle,
    limits: &SearchLimits,
) -> Result<SearchOutcome, NavError> {
    if buf.is_empty() {
        return Ok(SearchOutcome::default());
    }
    let root = buf
        .root_for(&q.site)
        .cloned()
        .ok_or_else(|| NavError::NoRoot(q.site.clone()))?;
    let mut s = Search {
        buf,
        q,
        oracle,
        h_cache: BTreeMap::new(),
        pages: BTreeMap::new(),
    };
    let w = limits.heuristic_weight;
    let h0 = s.h(&root)?;
    let f0 = match limits.f_mode {
        FMode::Standard => w * h0,
        FMode::Cumulative => h0,
    };

    let mut out = SearchOutcome {
        root: Some(root.clone()),
        ..Default::default()
    };
    let mut best: BTreeMap<ObsId, Key> = BTreeMap::new();
    let mut closed: BTreeSet<ObsId> = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    let start = Key {
        f: f0,
        g: 0,
        actions: Vec::new(),
        node: root.clone(),
    };
    best.insert(root.clone(), start.clone());
    heap.push(Reverse(start));

    while let Some(Reverse(key)) = heap.pop() {
        if closed.contains(&key.node) || best.get(&key.node) != Some(&key) {
            continue;
        }
        if out.expansions.len() >= limits.max_expansions {
            break;
        }
        closed.insert(key.node.clone());
        let h = s.h(&key.node)?;
        out.expansions.push(Expansion {
            node: key.node.clone(),
            score: SearchNodeScore {
                g: key.g,
                h,
                f: key.f,
            },
        });

        let page = s.page(&key.node)?;
        if oracle.is_relevant(q, &page)? {
            out.candidates.push(out.backtrack(&key.node)?);
            if out.candidates.len() >= limits.candidate_cap {
                break;
            }
        }

        for (action, dst) in buf.neighbors(&key.node)? {
            if closed.contains(&dst) {
                continue;
            }
            let hj = s.h(&dst)?;
            let g = key.g + 1;
            let f = match limits.f_mode {
                FMode::Standard => g as f64 + w * hj,
                FMode::Cumulative => key.f + hj,
            };
            let mut actions = key.actions.clone();
            actions.push(action.clone());
            let next = Key {
                f,
                g,
                actions,
                node: dst.clone(),
            };
            if best.get(&dst).is_none_or(|b| next < *b) {
                out.parents.insert(dst.clone(), (key.node.clone(), action));
                best.insert(dst, next.clone());
                heap.push(Reverse(next));
            }
        }
    }
    Ok(out)
}

/// Picks P* among `cands`. Candidates are first put in (length, action
/// sequence) order so that ranking ties resolve to the shortest, then
/// lexicographically least, path.
pub fn rank_and_select(
    buf: &BufferGraph,
    cands: &[CandidatePath],
    q: &Query,
    oracle: &OracleHandle,
) -> Result<Option<CandidatePath>, NavError> {
    let mut sorted: Vec<&CandidatePath> = cands.iter().collect();
    sorted.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.actions().cmp(&b.actions()))
            .then_with(|| a.terminal.cmp(&b.terminal))
    });
    match sorted.len() {
        0 => Ok(None),
        1 => Ok(Some(sorted[0].clone())),
        _ => {
            let views = sorted
                .iter()
                .map(|c| c.view(buf))
                .collect::<Result<Vec<_>, _>>()?;
            let order = oracle.rank(q, views)?;
            Ok(Some(sorted[order[0]].clone()))
        }
    }
}

/// Searches the buffer for a better route for `q` and returns it as a
/// navigation-only trajectory, or `None` when nothing relevant is stored.
pub fn repair_navigation(
    buf: &BufferGraph,
    failed: &Trajectory,
    q: &Query,
    oracle: &OracleHandle,
    limits: &SearchLimits,
) -> Result<Option<Trajectory>, NavError> {
    let outcome = match astar_search(buf, q, oracle, limits) {
        Ok(o) => o,
        Err(NavError::NoRoot(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let Some(best) = rank_and_select(buf, &outcome.candidates, q, oracle)? else {
        return Ok(None);
    };
    Ok(Some(best.to_trajectory(buf, &failed.query_id, &failed.site)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Element;
    use crate::oracle::ScriptedOracle;

    fn page(loc: &str) -> PageState {
        PageState::new(loc, vec![Element::new("h", "heading", format!("page {loc}"))])
    }

    /// Ingests root-to-node click chains; link target ids are `to<loc>`.
    fn buffer(routes: &[&[&str]]) -> BufferGraph {
        let mut b = BufferGraph::new(1000);
        for r in routes {
            let mut prev = page("/");
            let mut t = Trajectory::new("q", "s", Observation::root(&prev));
            for loc in *r {
                let next = page(loc);
                t.steps.push(Step {
                    action: Action::click(format!("to{loc}")),
                    observation: Observation::successor(&prev, &next),
                });
                prev = next;
            }
            b.ingest_episode(&t);
        }
        b
    }

    fn oracle(rules: &str) -> OracleHandle {
        OracleHandle::new(ScriptedOracle::from_json(&format!(r#"{{"schema":1,"rules":[{rules}]}}"#)).unwrap())
    }

    fn q() -> Query {
        Query::new("q", "find target", "s").unwrap()
    }

    #[test]
    fn cumulative_update_adds_child_heuristic() {
        // promise 0.5 everywhere -> h = 0.5 per node.
        let b = buffer(&[&["/a", "/b", "/c", "/d"]]);
        let o = oracle(r#"{"role":"heuristic","then":0.5}"#);
        let limits = SearchLimits {
            f_mode: FMode::Cumulative,
            ..Default::default()
        };
        let out = astar_search(&b, &q(), &o, &limits).unwrap();
        let fs: Vec<f64> = out.expansions.iter().map(|e| e.score.f).collect();
        assert_eq!(fs, vec![0.5, 1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn zero_heuristic_finds_shortest_path() {
        let b = buffer(&[&["/a", "/b", "/t"], &["/c", "/t"]]);
        let o = oracle(
            r#"{"role":"heuristic","then":1.0},{"role":"relevance","when":{"page_contains":"page /t"},"then":true}"#,
        );
        let out = astar_search(&b, &q(), &o, &SearchLimits::default()).unwrap();
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.candidates[0].len(), 2);
        let gs: Vec<u32> = out.expansions.iter().map(|e| e.score.g).collect();
        assert!(gs.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn diamond_prefers_least_action_sequence() {
        let b = buffer(&[&["/x", "/t"], &["/a", "/t"]]);
        let o = oracle(r#"{"role":"relevance","when":{"page_contains":"page /t"},"then":true}"#);
        let out = astar_search(&b, &q(), &o, &SearchLimits::default()).unwrap();
        let p = &out.candidates[0];
        assert_eq!(p.actions(), vec![Action::click("to/a"), Action::click("to/t")]);
        assert_eq!(out.backtrack(&p.terminal).unwrap(), *p);
    }

    #[test]
    fn backtrack_cases() {
        let b = buffer(&[&["/a", "/b"]]);
        let o = oracle("");
        let out = astar_search(&b, &q(), &o, &SearchLimits::default()).unwrap();
        let root = out.root.clone().unwrap();
        assert!(out.backtrack(&root).unwrap().is_empty());
        assert_eq!(out.backtrack(&page("/b").obs_id()).unwrap().len(), 2);
        assert!(matches!(
            out.backtrack(&page("/zz").obs_id()),
            Err(NavError::NotVisited(_))
        ));
    }

    #[test]
    fn empty_buffer_and_missing_root() {
        let o = oracle("");
        let empty = BufferGraph::new(10);
        assert!(astar_search(&empty, &q(), &o, &SearchLimits::default())
            .unwrap()
            .candidates
            .is_empty());
        let b = buffer(&[&["/a"]]);
        let other = Query::new("q", "x", "elsewhere").unwrap();
        assert!(matches!(
            astar_search(&b, &other, &o, &SearchLimits::default()),
            Err(NavError::NoRoot(_))
        ));
    }

    #[test]
    fn expansion_limit_and_candidate_cap() {
        let b = buffer(&[&["/a"], &["/b"], &["/c"], &["/d"]]);
        let o = oracle(r#"{"role":"relevance","then":true}"#);
        let limits = SearchLimits {
            max_expansions: 2,
            ..Default::default()
        };
        assert_eq!(astar_search(&b, &q(), &o, &limits).unwrap().expansions.len(), 2);
        let limits = SearchLimits {
            candidate_cap: 3,
            ..Default::default()
        };
        assert_eq!(astar_search(&b, &q(), &o, &limits).unwrap().candidates.len(), 3);
    }

    #[test]
    fn rank_and_select_contract() {
        let b = buffer(&[&["/a"], &["/b"]]);
        let o = oracle(
            r#"{"role":"relevance","when":{"page_lacks":"@ /\n"},"then":true},
               {"role":"rank_paths","when":{"page_contains":"page /b"},"then":0.9},
               {"role":"rank_paths","when":{"page_contains":"page /a"},"then":0.4}"#,
        );
        let out = astar_search(&b, &q(), &o, &SearchLimits::default()).unwrap();
        assert_eq!(out.candidates.len(), 2);
        let best = rank_and_select(&b, &out.candidates, &q(), &o).unwrap().unwrap();
        assert_eq!(best.terminal, page("/b").obs_id());
        assert!(rank_and_select(&b, &[], &q(), &o).unwrap().is_none());
        let single = rank_and_select(&b, &out.candidates[..1], &q(), &o).unwrap().unwrap();
        assert_eq!(single, out.candidates[0]);
    }

    #[test]
    fn repair_builds_reconstructable_trajectory() {
        let b = buffer(&[&["/a", "/t"]]);
        let o = oracle(r#"{"role":"relevance","when":{"page_contains":"page /t"},"then":true}"#);
        let failed = Trajectory::new("q", "s", Observation::root(&page("/")));
        let fixed = repair_navigation(&b, &failed, &q(), &o, &SearchLimits::default())
            .unwrap()
            .unwrap();
        assert_eq!(fixed.horizon(), 2);
        let states = fixed.page_states().unwrap();
        assert_eq!(states.last().unwrap().obs_id(), page("/t").obs_id());

        let none = oracle("");
        assert!(repair_navigation(&b, &failed, &q(), &none, &SearchLimits::default())
            .unwrap()
            .is_none());
    }
}

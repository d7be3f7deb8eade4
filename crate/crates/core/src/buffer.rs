//! Bounded directed graph of observed pages with action-labelled edges.
//!
//! Nodes store only the diff against their first-seen predecessor
//! (`parent_hint`); roots also cache their full normalized state, so any
//! node can be rebuilt by walking the hint chain up to a root. Eviction
//! only ever removes nodes that no surviving node uses as a hint parent,
//! which keeps every chain intact.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ActionKind, ModelError, ObsId, Observation, PageState, Trajectory};
use crate::records::{self, RecordError};

pub const DEFAULT_CAPACITY: usize = 10_000;
const SNAPSHOT_KIND: &str = "buffer";

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("unknown node {0}")]
    UnknownNode(ObsId),
    #[error("diff chain of {node} is broken: ancestor {missing} is gone")]
    BrokenChain { node: ObsId, missing: ObsId },
    #[error("stored diffs for {node} do not rebuild the page: {source}")]
    CorruptDiff { node: ObsId, source: ModelError },
    #[error("rebuilt page for {0} hashes to a different id")]
    HashMismatch(ObsId),
    #[error("snapshot: {0}")]
    Snapshot(#[from] RecordError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionPolicy {
    /// Least recently visited first.
    #[default]
    Lru,
    /// Least frequently visited first, recency breaks ties.
    Lfu,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferNode {
    pub site: String,
    pub obs: Observation,
    pub parent_hint: Option<ObsId>,
    pub last_visit: u64,
    pub visit_count: u64,
    pub depth: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: ObsId,
    pub dst: ObsId,
    pub action: Action,
}

impl Edge {
    fn sort_key(&self) -> (&ObsId, ActionKind, &str, &ObsId, &str) {
        (
            &self.src,
            self.action.kind,
            &self.action.target,
            &self.dst,
            &self.action.payload,
        )
    }

    fn lower_bound(src: &ObsId) -> Edge {
        Edge {
            src: src.clone(),
            dst: ObsId(String::new()),
            action: Action::stop(""),
        }
        .with_kind(ActionKind::Click)
    }

    fn with_kind(mut self, kind: ActionKind) -> Edge {
        self.action.kind = kind;
        self
    }
}

impl Ord for Edge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for Edge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BufferGraph {
    nodes: BTreeMap<ObsId, BufferNode>,
    edges: BTreeSet<Edge>,
    roots: BTreeMap<String, ObsId>,
    capacity: usize,
    policy: EvictionPolicy,
    visit_clock: u64,
    pins: BTreeSet<ObsId>,
    warnings: Vec<String>,
    // number of live nodes whose parent_hint is the key
    hint_children: BTreeMap<ObsId, usize>,
}

impl Default for BufferGraph {
    fn default() -> Self {
        BufferGraph::new(DEFAULT_CAPACITY)
    }
}

impl BufferGraph {
    pub fn new(capacity: usize) -> Self {
        Self::with_policy(capacity, EvictionPolicy::Lru)
    }

    pub fn with_policy(capacity: usize, policy: EvictionPolicy) -> Self {
        BufferGraph {
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            roots: BTreeMap::new(),
            capacity: capacity.max(1),
            policy,
            visit_clock: 0,
            pins: BTreeSet::new(),
            warnings: Vec::new(),
            hint_children: BTreeMap::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> EvictionPolicy {
        self.policy
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &BTreeMap<ObsId, BufferNode> {
        &self.nodes
    }

    pub fn node(&self, id: &ObsId) -> Option<&BufferNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &ObsId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn roots(&self) -> &BTreeMap<String, ObsId> {
        &self.roots
    }

    pub fn root_for(&self, site: &str) -> Option<&ObsId> {
        self.roots.get(site)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn pins(&self) -> &BTreeSet<ObsId> {
        &self.pins
    }

    /// Replaces the pin set. Pinned nodes (pages on trajectories held in
    /// reflective memory) are never evicted.
    pub fn set_pins(&mut self, pins: impl IntoIterator<Item = ObsId>) {
        self.pins = pins.into_iter().collect();
    }

    /// Merges one episode into the graph: each `(o_{h-1}, a_h, o_h)` becomes a
    /// node and edge insertion; already-known pages only gain visit stats.
    /// Stop steps and self-loops add no edges.
    pub fn ingest_episode(&mut self, traj: &Trajectory) {
        let start = &traj.start;
        if !self.nodes.contains_key(&start.obs_id) {
            if !start.is_root() {
                self.warnings.push(format!(
                    "skipped episode {}: start page {} is neither known nor a root",
                    traj.query_id,
                    start.obs_id.short()
                ));
                return;
            }
            self.insert_node(&traj.site, start.clone(), None, 0);
            self.roots
                .entry(traj.site.clone())
                .or_insert_with(|| start.obs_id.clone());
            self.enforce_capacity(&[&start.obs_id]);
        }
        self.touch(&start.obs_id);

        let mut prev = start.obs_id.clone();
        for step in &traj.steps {
            if step.action.is_stop() {
                continue;
            }
            let dst = &step.observation.obs_id;
            if *dst == prev {
                self.touch(dst);
                continue;
            }
            let Some(prev_depth) = self.nodes.get(&prev).map(|n| n.depth) else {
                break;
            };
            if self.nodes.contains_key(dst) {
                self.touch(dst);
            } else {
                let mut obs = step.observation.clone();
                obs.full_state_cached = None;
                self.insert_node(&traj.site, obs, Some(prev.clone()), prev_depth + 1);
                self.touch(dst);
            }
            self.edges.insert(Edge {
                src: prev.clone(),
                dst: dst.clone(),
                action: step.action.clone(),
            });
            self.relax_depths(&prev);
            self.enforce_capacity(&[&prev, dst]);
            prev = dst.clone();
        }
    }

    fn insert_node(&mut self, site: &str, obs: Observation, parent: Option<ObsId>, depth: u32) {
        if let Some(p) = &parent {
            *self.hint_children.entry(p.clone()).or_default() += 1;
        }
        self.nodes.insert(
            obs.obs_id.clone(),
            BufferNode {
                site: site.to_string(),
                obs,
                parent_hint: parent,
                last_visit: 0,
                visit_count: 0,
                depth,
            },
        );
    }

    fn touch(&mut self, id: &ObsId) {
        self.visit_clock += 1;
        if let Some(n) = self.nodes.get_mut(id) {
            n.last_visit = self.visit_clock;
            n.visit_count += 1;
        }
    }

    fn out_edges<'a>(&'a self, src: &'a ObsId) -> impl Iterator<Item = &'a Edge> + 'a {
        self.edges
            .range(Edge::lower_bound(src)..)
            .take_while(move |e| &e.src == src)
    }

    /// Restores depth(child) <= depth(parent) + 1 downstream of `from`.
    fn relax_depths(&mut self, from: &ObsId) {
        let mut queue = VecDeque::from([from.clone()]);
        while let Some(u) = queue.pop_front() {
            let du = self.nodes[&u].depth;
            let lowered: Vec<ObsId> = self
                .out_edges(&u)
                .filter(|e| self.nodes.get(&e.dst).is_some_and(|n| n.depth > du + 1))
                .map(|e| e.dst.clone())
                .collect();
            for v in lowered {
                if let Some(n) = self.nodes.get_mut(&v) {
                    if n.depth > du + 1 {
                        n.depth = du + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
    }

    fn evictable(&self, id: &ObsId, node: &BufferNode, protect: &[&ObsId]) -> bool {
        node.parent_hint.is_some()
            && !self.pins.contains(id)
            && !protect.contains(&id)
            && self.hint_children.get(id).copied().unwrap_or(0) == 0
            && !self.roots.values().any(|r| r == id)
    }

    fn victim(&self, protect: &[&ObsId]) -> Option<ObsId> {
        let candidates = self
            .nodes
            .iter()
            .filter(|(id, n)| self.evictable(id, n, protect));
        match self.policy {
            EvictionPolicy::Lru => candidates
                .min_by_key(|(id, n)| (n.last_visit, (*id).clone()))
                .map(|(id, _)| id.clone()),
            EvictionPolicy::Lfu => candidates
                .min_by_key(|(id, n)| (n.visit_count, n.last_visit, (*id).clone()))
                .map(|(id, _)| id.clone()),
        }
    }

    /// Removes lowest-priority evictable nodes until the capacity holds.
    pub fn evict(&mut self) {
        self.enforce_capacity(&[]);
    }

    fn enforce_capacity(&mut self, protect: &[&ObsId]) {
        while self.nodes.len() > self.capacity {
            match self.victim(protect) {
                Some(v) => self.remove_node(&v),
                None => {
                    self.warnings.push(format!(
                        "capacity {} exceeded ({} nodes): every remaining node is a root, pinned, or a diff parent",
                        self.capacity,
                        self.nodes.len()
                    ));
                    break;
                }
            }
        }
    }

    fn remove_node(&mut self, id: &ObsId) {
        if let Some(node) = self.nodes.remove(id) {
            if let Some(p) = node.parent_hint {
                if let Some(c) = self.hint_children.get_mut(&p) {
                    *c -= 1;
                    if *c == 0 {
                        self.hint_children.remove(&p);
                    }
                }
            }
            self.edges.retain(|e| &e.src != id && &e.dst != id);
        }
    }

    /// Outgoing edges ordered by (action kind, target, destination).
    pub fn neighbors(&self, id: &ObsId) -> Result<Vec<(Action, ObsId)>, BufferError> {
        if !self.nodes.contains_key(id) {
            return Err(BufferError::UnknownNode(id.clone()));
        }
        Ok(self
            .out_edges(id)
            .map(|e| (e.action.clone(), e.dst.clone()))
            .collect())
    }

    pub fn reconstruct_state(&self, id: &ObsId) -> Result<PageState, BufferError> {
        let mut chain = Vec::new();
        let mut cur = id.clone();
        let base = loop {
            let node = self.nodes.get(&cur).ok_or_else(|| {
                if &cur == id {
                    BufferError::UnknownNode(id.clone())
                } else {
                    BufferError::BrokenChain {
                        node: id.clone(),
                        missing: cur.clone(),
                    }
                }
            })?;
            if let Some(full) = &node.obs.full_state_cached {
                break PageState::parse_normalized(full).map_err(|source| {
                    BufferError::CorruptDiff {
                        node: id.clone(),
                        source,
                    }
                })?;
            }
            chain.push(&node.obs.diff);
            if chain.len() > self.nodes.len() {
                return Err(BufferError::BrokenChain {
                    node: id.clone(),
                    missing: cur,
                });
            }
            cur = node.parent_hint.clone().ok_or_else(|| BufferError::BrokenChain {
                node: id.clone(),
                missing: cur.clone(),
            })?;
        };
        let mut state = base;
        for diff in chain.into_iter().rev() {
            state = diff.apply(Some(&state)).map_err(|source| BufferError::CorruptDiff {
                node: id.clone(),
                source,
            })?;
        }
        if &state.obs_id() != id {
            return Err(BufferError::HashMismatch(id.clone()));
        }
        Ok(state)
    }

    /// Normalized page text rebuilt from the root's cached state plus the
    /// diffs along the hint chain.
    pub fn reconstruct_page(&self, id: &ObsId) -> Result<String, BufferError> {
        Ok(self.reconstruct_state(id)?.normalized_text())
    }

    pub fn to_snapshot(&self) -> String {
        let mut recs = vec![SnapshotRecord::Meta {
            capacity: self.capacity,
            policy: self.policy,
            visit_clock: self.visit_clock,
        }];
        recs.extend(self.roots.iter().map(|(site, id)| SnapshotRecord::Root {
            site: site.clone(),
            obs_id: id.clone(),
        }));
        recs.extend(self.nodes.values().map(|n| SnapshotRecord::Node { node: n.clone() }));
        recs.extend(self.edges.iter().map(|e| SnapshotRecord::Edge { edge: e.clone() }));
        recs.extend(self.pins.iter().map(|p| SnapshotRecord::Pin { obs_id: p.clone() }));
        recs.extend(self.warnings.iter().map(|w| SnapshotRecord::Warning { text: w.clone() }));
        records::encode(SNAPSHOT_KIND, recs)
    }

    pub fn from_snapshot(text: &str) -> Result<BufferGraph, BufferError> {
        let recs: Vec<SnapshotRecord> = records::decode(SNAPSHOT_KIND, text)?;
        let bad = |m: String| BufferError::Snapshot(RecordError::Schema(m));
        let mut iter = recs.into_iter();
        let Some(SnapshotRecord::Meta {
            capacity,
            policy,
            visit_clock,
        }) = iter.next()
        else {
            return Err(bad("first record must be meta".into()));
        };
        let mut g = BufferGraph::with_policy(capacity, policy);
        g.visit_clock = visit_clock;
        for rec in iter {
            match rec {
                SnapshotRecord::Meta { .. } => return Err(bad("duplicate meta record".into())),
                SnapshotRecord::Root { site, obs_id } => {
                    g.roots.insert(site, obs_id);
                }
                SnapshotRecord::Node { node } => {
                    if let Some(p) = &node.parent_hint {
                        *g.hint_children.entry(p.clone()).or_default() += 1;
                    }
                    g.nodes.insert(node.obs.obs_id.clone(), node);
                }
                SnapshotRecord::Edge { edge } => {
                    g.edges.insert(edge);
                }
                SnapshotRecord::Pin { obs_id } => {
                    g.pins.insert(obs_id);
                }
                SnapshotRecord::Warning { text } => g.warnings.push(text),
            }
        }
        for e in &g.edges {
            if !g.nodes.contains_key(&e.src) || !g.nodes.contains_key(&e.dst) {
                return Err(bad(format!("edge {} -> {} has a missing endpoint", e.src, e.dst)));
            }
        }
        for id in g.roots.values() {
            if !g.nodes.contains_key(id) {
                return Err(bad(format!("root {id} is not a node")));
            }
        }
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BufferError> {
        std::fs::write(path, self.to_snapshot())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<BufferGraph, BufferError> {
        BufferGraph::from_snapshot(&std::fs::read_to_string(path)?)
    }

    fn depth_ordered_nodes(&self) -> Vec<(&ObsId, &BufferNode)> {
        let mut v: Vec<_> = self.nodes.iter().collect();
        v.sort_by(|a, b| (a.1.depth, a.0).cmp(&(b.1.depth, b.0)));
        v
    }

    /// Human-readable dump, nodes and edges in depth order.
    pub fn render_listing(&self) -> String {
        let mut out = format!(
            "replay buffer (capacity {}, {:?} eviction)\n{} nodes, {} edges\n",
            self.capacity,
            self.policy,
            self.nodes.len(),
            self.edges.len()
        );
        if !self.nodes.is_empty() {
            out.push_str("nodes:\n");
        }
        let order = self.depth_ordered_nodes();
        for (id, n) in &order {
            let root = if n.obs.is_root() { " root" } else { "" };
            let pin = if self.pins.contains(*id) { " pinned" } else { "" };
            out.push_str(&format!(
                "  [{}] {} {} {} visits={}{}{}\n",
                n.depth,
                id.short(),
                n.site,
                n.obs.locator,
                n.visit_count,
                root,
                pin
            ));
        }
        if !self.edges.is_empty() {
            out.push_str("edges:\n");
        }
        for (id, _) in &order {
            for e in self.out_edges(id) {
                out.push_str(&format!(
                    "  {} -> {} : {}\n",
                    e.src.short(),
                    e.dst.short(),
                    e.action
                ));
            }
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }

    /// Graphviz rendering of the graph.
    pub fn to_dot(&self) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph buffer {\n  rankdir=LR;\n");
        for (id, n) in self.depth_ordered_nodes() {
            let shape = if n.obs.is_root() { "doublecircle" } else { "box" };
            out.push_str(&format!(
                "  \"{}\" [label=\"{}\\n{}\", shape={}];\n",
                id.short(),
                esc(&n.site),
                esc(&n.obs.locator),
                shape
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  \"{}\" -> \"{}\" [label=\"{}\"];\n",
                e.src.short(),
                e.dst.short(),
                esc(&e.action.to_string())
            ));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum SnapshotRecord {
    Meta {
        capacity: usize,
        policy: EvictionPolicy,
        visit_clock: u64,
    },
    Root {
        site: String,
        obs_id: ObsId,
    },
    Node {
        node: BufferNode,
    },
    Edge {
        edge: Edge,
    },
    Pin {
        obs_id: ObsId,
    },
    Warning {
        text: String,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Element, Step};

    fn page(loc: &str) -> PageState {
        PageState::new(
            loc,
            vec![
                Element::new("h", "heading", format!("page {loc}")),
                Element::new("home", "link", "Home"),
            ],
        )
    }

    /// Root "/" followed by clicks through `locs`.
    fn chain(locs: &[&str]) -> Trajectory {
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
        t
    }

    fn id(loc: &str) -> ObsId {
        page(loc).obs_id()
    }

    #[test]
    fn ingest_counts_nodes_and_edges() {
        let mut b = BufferGraph::new(100);
        let t = chain(&["/a", "/b", "/c"]);
        b.ingest_episode(&t);
        assert_eq!(b.node_count(), 4);
        assert_eq!(b.edge_count(), 3);
        assert_eq!(b.node(&id("/c")).unwrap().depth, 3);

        b.ingest_episode(&t);
        assert_eq!(b.node_count(), 4);
        assert_eq!(b.edge_count(), 3);
        for n in b.nodes().values() {
            assert_eq!(n.visit_count, 2);
        }
    }

    #[test]
    fn shorter_route_lowers_depth_downstream() {
        let mut b = BufferGraph::new(100);
        b.ingest_episode(&chain(&["/a", "/b", "/c", "/d"]));
        assert_eq!(b.node(&id("/d")).unwrap().depth, 4);
        b.ingest_episode(&chain(&["/c"]));
        assert_eq!(b.node(&id("/c")).unwrap().depth, 1);
        assert_eq!(b.node(&id("/d")).unwrap().depth, 2);
        // The diff chain still follows the first-seen parent.
        assert_eq!(b.node(&id("/c")).unwrap().parent_hint, Some(id("/b")));
        for n in b.nodes().keys() {
            assert_eq!(b.reconstruct_state(n).unwrap().obs_id(), *n);
        }
    }

    #[test]
    fn stop_and_self_loops_add_no_edges() {
        let mut t = chain(&["/a"]);
        let a = page("/a");
        t.steps.push(Step {
            action: Action::click("noop"),
            observation: Observation::successor(&a, &a),
        });
        t.steps.push(Step {
            action: Action::stop("x"),
            observation: Observation::successor(&a, &a),
        });
        let mut b = BufferGraph::new(10);
        b.ingest_episode(&t);
        assert_eq!(b.edge_count(), 1);
    }

    #[test]
    fn evicts_least_recent_leaf() {
        let mut b = BufferGraph::new(5);
        for loc in ["/1", "/2", "/3", "/4"] {
            b.ingest_episode(&chain(&[loc]));
        }
        assert_eq!(b.node_count(), 5);
        b.ingest_episode(&chain(&["/5"]));
        assert_eq!(b.node_count(), 5);
        assert!(!b.contains(&id("/1")));
        assert!(b.contains(&id("/5")));
        assert!(b.edges().all(|e| b.contains(&e.src) && b.contains(&e.dst)));
    }

    #[test]
    fn lfu_prefers_rarely_visited() {
        let mut b = BufferGraph::with_policy(4, EvictionPolicy::Lfu);
        b.ingest_episode(&chain(&["/1"]));
        b.ingest_episode(&chain(&["/1"]));
        b.ingest_episode(&chain(&["/2"]));
        b.ingest_episode(&chain(&["/3"]));
        b.ingest_episode(&chain(&["/4"]));
        assert!(b.contains(&id("/1")));
        assert!(!b.contains(&id("/2")));
    }

    #[test]
    fn pinned_nodes_survive_and_warn() {
        let mut b = BufferGraph::new(3);
        b.ingest_episode(&chain(&["/1"]));
        b.ingest_episode(&chain(&["/2"]));
        b.set_pins([id("/1"), id("/2")]);
        b.ingest_episode(&chain(&["/3"]));
        assert!(b.contains(&id("/1")) && b.contains(&id("/2")));
        assert!(!b.contains(&id("/3")) || b.node_count() > 3);
        // Capacity 1: only the root would fit, but roots are never evicted.
        let mut tight = BufferGraph::new(1);
        tight.ingest_episode(&chain(&["/a"]));
        tight.set_pins([id("/a")]);
        tight.ingest_episode(&chain(&["/a"]));
        tight.evict();
        assert_eq!(tight.node_count(), 2);
        assert!(!tight.warnings().is_empty());
    }

    #[test]
    fn chain_interior_nodes_are_not_evicted() {
        let mut b = BufferGraph::new(4);
        b.ingest_episode(&chain(&["/a", "/b", "/c"]));
        b.ingest_episode(&chain(&["/x"]));
        // /a and /b are diff parents, /c is the only old leaf.
        assert!(!b.contains(&id("/c")));
        assert!(b.contains(&id("/b")));
        for n in b.nodes().keys() {
            b.reconstruct_page(n).unwrap();
        }
    }

    #[test]
    fn neighbors_sorted_and_unknown() {
        let mut b = BufferGraph::new(100);
        for loc in ["/z", "/a", "/m"] {
            b.ingest_episode(&chain(&[loc]));
        }
        let n = b.neighbors(&id("/")).unwrap();
        let targets: Vec<&str> = n.iter().map(|(a, _)| a.target.as_str()).collect();
        assert_eq!(targets, vec!["to/a", "to/m", "to/z"]);
        assert!(b.neighbors(&id("/a")).unwrap().is_empty());
        assert!(matches!(b.neighbors(&id("/nope")), Err(BufferError::UnknownNode(_))));
    }

    #[test]
    fn reconstruct_root_and_child() {
        let mut b = BufferGraph::new(100);
        b.ingest_episode(&chain(&["/a"]));
        assert_eq!(b.reconstruct_page(&id("/")).unwrap(), page("/").normalized_text());
        assert_eq!(b.reconstruct_page(&id("/a")).unwrap(), page("/a").normalized_text());
    }

    #[test]
    fn broken_chain_is_reported() {
        let mut b = BufferGraph::new(100);
        b.ingest_episode(&chain(&["/a", "/b"]));
        b.nodes.remove(&id("/a"));
        assert!(matches!(
            b.reconstruct_page(&id("/b")),
            Err(BufferError::BrokenChain { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut b = BufferGraph::new(100);
        b.ingest_episode(&chain(&["/a", "/b"]));
        b.ingest_episode(&chain(&["/c"]));
        b.set_pins([id("/c")]);
        let text = b.to_snapshot();
        let back = BufferGraph::from_snapshot(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_snapshot(), text);
    }

    #[test]
    fn listing_and_dot() {
        let empty = BufferGraph::new(10);
        assert!(empty.render_listing().contains("0 nodes, 0 edges"));
        let mut b = BufferGraph::new(10);
        b.ingest_episode(&chain(&["/a", "/b"]));
        let listing = b.render_listing();
        assert!(listing.contains("3 nodes, 2 edges"));
        let depths: Vec<usize> = listing
            .lines()
            .filter_map(|l| l.trim().strip_prefix('['))
            .map(|l| l[..1].parse().unwrap())
            .collect();
        assert_eq!(depths, vec![0, 1, 2]);
        assert!(b.to_dot().starts_with("digraph buffer {"));
    }
}

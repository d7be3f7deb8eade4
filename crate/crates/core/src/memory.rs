//! Reflective memory: query embeddings mapped to stored trajectories and
//! rationales, searched by exact cosine scan.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{FailureLabel, ObsId, Query, Trajectory};
use crate::oracle::{OracleError, OracleHandle, StoredView, TrajectoryView, UpdateChoice};
use crate::records::{self, RecordError};

pub const DEFAULT_DIM: usize = 256;
const STORE_KIND: &str = "memory";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("store file: {0}")]
    Store(#[from] RecordError),
    #[error("embedding service: {0}")]
    Embed(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("stored trajectory: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Embedder {
    HashedBagOfWords { dim: usize },
    /// POSTs `{"role":"embed","text":...}` and expects `{"result":[f64; dim]}`.
    Remote {
        endpoint: String,
        dim: usize,
        #[serde(default = "default_embed_timeout")]
        timeout_ms: u64,
    },
}

fn default_embed_timeout() -> u64 {
    30_000
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::HashedBagOfWords { dim: DEFAULT_DIM }
    }
}

fn basis(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim.max(1)];
    v[0] = 1.0;
    v
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return basis(v.len());
    }
    for x in &mut v {
        *x /= norm;
    }
    v
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Hashed bag of words: each lowercase alphanumeric token adds one to the
/// bucket given by the first 8 bytes (little endian) of its SHA-256.
pub fn hashed_bag_of_words(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    for tok in tokens(text) {
        let d = Sha256::digest(tok.as_bytes());
        let bucket = u64::from_le_bytes(d[..8].try_into().expect("8 bytes")) % dim as u64;
        v[bucket as usize] += 1.0;
    }
    normalize(v)
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::HashedBagOfWords { dim } | Embedder::Remote { dim, .. } => *dim,
        }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, MemoryError> {
        match self {
            Embedder::HashedBagOfWords { dim } => Ok(hashed_bag_of_words(text, *dim)),
            Embedder::Remote {
                endpoint,
                dim,
                timeout_ms,
            } => {
                #[derive(Deserialize)]
                struct Reply {
                    result: Vec<f64>,
                }
                let client = reqwest::blocking::Client::builder()
                    .timeout(Duration::from_millis(*timeout_ms))
                    .build()
                    .map_err(|e| MemoryError::Embed(e.to_string()))?;
                let reply: Reply = client
                    .post(endpoint)
                    .json(&serde_json::json!({"role": "embed", "text": text}))
                    .send()
                    .and_then(|r| r.error_for_status())
                    .and_then(|r| r.json())
                    .map_err(|e| MemoryError::Embed(e.to_string()))?;
                if reply.result.len() != *dim {
                    return Err(MemoryError::Embed(format!(
                        "expected {dim} dimensions, got {}",
                        reply.result.len()
                    )));
                }
                Ok(normalize(reply.result))
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub dedup_threshold: f64,
    pub min_similarity: f64,
    pub k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            dedup_threshold: 0.95,
            min_similarity: 0.30,
            k: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryValue {
    pub trajectory: Trajectory,
    pub rationale: String,
    pub label: FailureLabel,
}

impl MemoryValue {
    pub fn validated(&self) -> bool {
        self.label == FailureLabel::Success
    }

    fn view(&self) -> Result<StoredView, MemoryError> {
        Ok(StoredView {
            trajectory: TrajectoryView::from_trajectory(&self.trajectory)?,
            label: self.label,
            rationale: self.rationale.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub key_vec: Vec<f64>,
    pub query: Query,
    pub value: MemoryValue,
    pub version: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOutcome {
    Inserted,
    Replaced,
    Kept,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct MemoryStore {
    embedder: Embedder,
    config: MemoryConfig,
    entries: Vec<MemoryEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum StoreRecord {
    Meta {
        embedder: Embedder,
        config: MemoryConfig,
    },
    Entry {
        entry: MemoryEntry,
    },
}

impl MemoryStore {
    pub fn new(embedder: Embedder, config: MemoryConfig) -> Self {
        MemoryStore {
            embedder,
            config,
            entries: Vec::new(),
        }
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds an entry without arbitration.
    pub fn insert(&mut self, q: &Query, value: MemoryValue) -> Result<(), MemoryError> {
        let key_vec = self.embedder.embed(&q.text)?;
        self.entries.push(MemoryEntry {
            key_vec,
            query: q.clone(),
            value,
            version: 0,
        });
        Ok(())
    }

    /// Top `k` entries at or above `min_similarity`, best first; equal
    /// similarities keep insertion order.
    pub fn lookup(&self, q: &Query, k: usize) -> Result<Vec<(&MemoryEntry, f64)>, MemoryError> {
        self.lookup_where(q, k, |_| true)
    }

    /// As [`MemoryStore::lookup`], considering only entries accepted by `keep`.
    pub fn lookup_where(
        &self,
        q: &Query,
        k: usize,
        keep: impl Fn(&MemoryEntry) -> bool,
    ) -> Result<Vec<(&MemoryEntry, f64)>, MemoryError> {
        let key = self.embedder.embed(&q.text)?;
        Ok(self.scan(&key, k, self.config.min_similarity, keep))
    }

    pub fn scan(
        &self,
        key: &[f64],
        k: usize,
        min_similarity: f64,
        keep: impl Fn(&MemoryEntry) -> bool,
    ) -> Vec<(&MemoryEntry, f64)> {
        let mut hits: Vec<(&MemoryEntry, f64)> = self
            .entries
            .iter()
            .filter(|e| keep(e))
            .map(|e| (e, dot(key, &e.key_vec)))
            .filter(|(_, s)| *s >= min_similarity)
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1));
        hits.truncate(k);
        hits
    }

    /// Inserts `value`, or lets the oracle arbitrate against the closest
    /// same-site entry at or above `dedup_threshold`. An unreachable oracle
    /// keeps the old value.
    pub fn update(
        &mut self,
        q: &Query,
        value: MemoryValue,
        oracle: &OracleHandle,
    ) -> Result<UpdateOutcome, MemoryError> {
        let key = self.embedder.embed(&q.text)?;
        let closest = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.query.site == q.site)
            .map(|(i, e)| (i, dot(&key, &e.key_vec)))
            .filter(|(_, s)| *s >= self.config.dedup_threshold)
            .fold(None::<(usize, f64)>, |best, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            });
        let Some((idx, _)) = closest else {
            self.entries.push(MemoryEntry {
                key_vec: key,
                query: q.clone(),
                value,
                version: 0,
            });
            return Ok(UpdateOutcome::Inserted);
        };
        let old = self.entries[idx].value.view()?;
        let choice = match oracle.update_decision(q, old, value.view()?) {
            Ok(c) => c,
            Err(OracleError::Unavailable(msg)) => {
                tracing::warn!(query = %q.id, %msg, "update arbiter unavailable, keeping stored value");
                UpdateChoice::KeepOld
            }
            Err(e) => return Err(e.into()),
        };
        Ok(match choice {
            UpdateChoice::KeepOld => UpdateOutcome::Kept,
            UpdateChoice::TakeNew => {
                let e = &mut self.entries[idx];
                e.key_vec = key;
                e.query = q.clone();
                e.value = value;
                e.version += 1;
                UpdateOutcome::Replaced
            }
        })
    }

    /// Observation ids on every stored trajectory; the buffer never evicts these.
    pub fn pinned_observations(&self) -> BTreeSet<ObsId> {
        self.entries
            .iter()
            .flat_map(|e| e.value.trajectory.obs_path())
            .collect()
    }

    pub fn to_records(&self) -> String {
        let meta = StoreRecord::Meta {
            embedder: self.embedder.clone(),
            config: self.config,
        };
        records::encode(
            STORE_KIND,
            std::iter::once(meta).chain(
                self.entries
                    .iter()
                    .map(|e| StoreRecord::Entry { entry: e.clone() }),
            ),
        )
    }

    pub fn from_records(text: &str) -> Result<MemoryStore, MemoryError> {
        let mut recs = records::decode::<StoreRecord>(STORE_KIND, text)?.into_iter();
        let Some(StoreRecord::Meta { embedder, config }) = recs.next() else {
            return Err(RecordError::Schema("first record must be meta".into()).into());
        };
        let mut store = MemoryStore::new(embedder, config);
        for r in recs {
            match r {
                StoreRecord::Entry { entry } => {
                    if entry.key_vec.len() != store.embedder.dim() {
                        return Err(RecordError::Schema(format!(
                            "entry {} has a {}-dimensional key",
                            entry.query.id,
                            entry.key_vec.len()
                        ))
                        .into());
                    }
                    store.entries.push(entry);
                }
                StoreRecord::Meta { .. } => {
                    return Err(RecordError::Schema("duplicate meta record".into()).into())
                }
            }
        }
        Ok(store)
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        std::fs::write(path, self.to_records())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MemoryStore, MemoryError> {
        MemoryStore::from_records(&std::fs::read_to_string(path)?)
    }

    pub fn render_listing(&self) -> String {
        let mut out = format!(
            "reflective memory ({} entries, {}-dim {})\n",
            self.entries.len(),
            self.embedder.dim(),
            match self.embedder {
                Embedder::HashedBagOfWords { .. } => "hashed bag-of-words",
                Embedder::Remote { .. } => "remote",
            }
        );
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "[{i}] {} ({}) v{} {}: {}\n",
                e.query.id, e.query.site, e.version, e.value.label, e.query.text
            ));
            let actions: Vec<String> = e.value.trajectory.actions().map(ToString::to_string).collect();
            out.push_str(&format!("    actions: {}\n", if actions.is_empty() { "(none)".into() } else { actions.join(" | ") }));
            if !e.value.rationale.is_empty() {
                out.push_str(&format!("    rationale: {}\n", e.value.rationale));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Element, Observation, PageState};
    use crate::oracle::ScriptedOracle;
    use proptest::prelude::*;

    fn q(id: &str, text: &str) -> Query {
        Query::new(id, text, "shop").unwrap()
    }

    fn value(label: FailureLabel, steps: usize) -> MemoryValue {
        let p = PageState::new("/", vec![Element::new("h", "heading", "Home")]);
        let mut t = Trajectory::new("x", "shop", Observation::root(&p));
        for i in 0..steps {
            t.steps.push(crate::model::Step {
                action: crate::model::Action::click(format!("l{i}")),
                observation: Observation::successor(&p, &p),
            });
        }
        MemoryValue {
            trajectory: t,
            rationale: "r".into(),
            label,
        }
    }

    fn scripted(rules: &str) -> OracleHandle {
        OracleHandle::new(ScriptedOracle::from_json(&format!(r#"{{"schema":1,"rules":[{rules}]}}"#)).unwrap())
    }

    #[test]
    fn empty_text_is_first_basis_vector() {
        let v = hashed_bag_of_words("", 256);
        assert_eq!(v[0], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert_eq!(hashed_bag_of_words(" ,;", 8), basis(8));
    }

    #[test]
    fn related_queries_are_closer() {
        let a = hashed_bag_of_words("oldest complete order", 256);
        let b = hashed_bag_of_words("billing name of the oldest complete order", 256);
        let c = hashed_bag_of_words("top search terms", 256);
        assert!(dot(&a, &b) > dot(&a, &c));
    }

    proptest! {
        #[test]
        fn embeddings_are_unit_and_deterministic(s in ".{0,60}") {
            let v = hashed_bag_of_words(&s, 64);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            prop_assert_eq!(v, hashed_bag_of_words(&s, 64));
        }
    }

    #[test]
    fn lookup_basics() {
        let mut m = MemoryStore::default();
        let query = q("a", "oldest complete order");
        assert!(m.lookup(&query, 3).unwrap().is_empty());
        m.insert(&query, value(FailureLabel::Success, 2)).unwrap();
        m.insert(&q("b", "top search terms"), value(FailureLabel::Success, 2)).unwrap();
        let hits = m.lookup(&query, 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(hits[0].0.query.id, "a");
    }

    #[test]
    fn update_outcomes() {
        let mut m = MemoryStore::default();
        let o = scripted("");
        let query = q("a", "oldest complete order");
        assert_eq!(m.update(&query, value(FailureLabel::ExecutionFailure, 2), &o).unwrap(), UpdateOutcome::Inserted);
        assert_eq!(m.update(&query, value(FailureLabel::Success, 4), &o).unwrap(), UpdateOutcome::Replaced);
        assert_eq!(m.entries()[0].version, 1);
        assert_eq!(m.update(&query, value(FailureLabel::NavigationFailure, 1), &o).unwrap(), UpdateOutcome::Kept);

        let keep = scripted(r#"{"role":"update_decision","then":"keep_old"}"#);
        assert_eq!(m.update(&query, value(FailureLabel::Success, 1), &keep).unwrap(), UpdateOutcome::Kept);
        assert_eq!(m.entries()[0].version, 1);

        // Same text on another site is a separate entry.
        let other = Query::new("a2", "oldest complete order", "forum").unwrap();
        assert_eq!(m.update(&other, value(FailureLabel::Success, 1), &o).unwrap(), UpdateOutcome::Inserted);
    }

    #[test]
    fn unavailable_arbiter_keeps() {
        struct Down;
        impl crate::oracle::Oracle for Down {
            fn judge(&self, _: &crate::oracle::OracleRequest) -> Result<crate::oracle::OracleVerdict, OracleError> {
                Err(OracleError::Unavailable("down".into()))
            }
            fn describe(&self) -> String {
                "down".into()
            }
        }
        let mut m = MemoryStore::default();
        let query = q("a", "x y");
        m.insert(&query, value(FailureLabel::ExecutionFailure, 1)).unwrap();
        let o = OracleHandle::new(Down);
        assert_eq!(m.update(&query, value(FailureLabel::Success, 1), &o).unwrap(), UpdateOutcome::Kept);
    }

    #[test]
    fn persist_round_trip_and_errors() {
        let mut m = MemoryStore::default();
        m.insert(&q("a", "alpha beta"), value(FailureLabel::Success, 2)).unwrap();
        m.insert(&q("b", "gamma"), value(FailureLabel::ExecutionFailure, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.wm");
        m.persist(&path).unwrap();
        let back = MemoryStore::load(&path).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.entries().iter().zip(m.entries()) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.key_vec), bits(&b.key_vec));
        }
        let text = m.to_records();
        assert!(matches!(
            MemoryStore::from_records(&text.replace("alpha", "alphaX")),
            Err(MemoryError::Store(RecordError::Schema(_)))
        ));
        assert!(matches!(
            MemoryStore::from_records(&text.replace("\"schema\":1", "\"schema\":9")),
            Err(MemoryError::Store(RecordError::VersionMismatch { .. }))
        ));
    }

    #[test]
    fn pins_cover_stored_paths() {
        let mut m = MemoryStore::default();
        m.insert(&q("a", "x"), value(FailureLabel::Success, 1)).unwrap();
        assert_eq!(m.pinned_observations().len(), 1);
    }
}

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{Ablation, OracleSpec, RunConfig};
use super::metrics::{compare_runs, percent, Comparison, MetricsReport};
use crate::buffer::{BufferGraph, EvictionPolicy};
use crate::navigator::FMode;
use crate::env::{EnvError, World};
use crate::memory::MemoryStore;
use crate::oracle::{OracleError, OracleHandle, RemoteOracle, ScriptedOracle};
use crate::runtime::{run_baseline, run_exploration, run_inference, EpisodeResult, RuntimeError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
}

/// A world plus the identifier recorded in manifests.
#[derive(Clone, Debug)]
pub struct LoadedWorld {
    pub world: World,
    pub id: String,
}

impl LoadedWorld {
    pub fn from_json(text: &str) -> Result<LoadedWorld, EnvError> {
        let world = World::from_json(text)?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(LoadedWorld {
            id: format!("{}@{}", world.name, &digest[..12]),
            world,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedWorld, EnvError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EnvError::Schema(format!("{}: {e}", path.as_ref().display())))?;
        LoadedWorld::from_json(&text)
    }
}

pub fn build_oracle(spec: &OracleSpec, budget: Option<usize>) -> Result<OracleHandle, OracleError> {
    let handle = match spec {
        OracleSpec::Scripted { rules } => OracleHandle::new(ScriptedOracle::from_path(rules)?),
        OracleSpec::Remote(cfg) => OracleHandle::new(RemoteOracle::new(cfg.clone())?),
    };
    Ok(handle.with_budget(budget))
}

/// Knobs that shape results, copied into every manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub dedup_threshold: f64,
    pub min_similarity: f64,
    pub k: usize,
    pub capacity: usize,
    pub eviction: EvictionPolicy,
    pub horizon_cap: usize,
    pub exploration_horizon: usize,
    pub f_mode: FMode,
    pub heuristic_weight: f64,
    pub max_expansions: usize,
    pub candidate_cap: usize,
}

impl Thresholds {
    pub fn of(cfg: &RunConfig) -> Thresholds {
        Thresholds {
            dedup_threshold: cfg.dedup_threshold,
            min_similarity: cfg.min_similarity,
            k: cfg.k,
            capacity: cfg.capacity,
            eviction: cfg.eviction,
            horizon_cap: cfg.horizon_cap,
            exploration_horizon: cfg.exploration_horizon,
            f_mode: cfg.search.f_mode,
            heuristic_weight: cfg.search.heuristic_weight,
            max_expansions: cfg.search.max_expansions,
            candidate_cap: cfg.search.candidate_cap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub world_id: String,
    pub oracle: String,
    pub policy: String,
    pub rounds: usize,
    pub tasks: usize,
    pub ablate: Vec<Ablation>,
    pub thresholds: Thresholds,
}

impl RunManifest {
    pub fn new(world: &LoadedWorld, oracle: &OracleHandle, cfg: &RunConfig) -> RunManifest {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            world_id: world.id.clone(),
            oracle: oracle.describe(),
            policy: serde_json::to_value(cfg.policy)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            rounds: cfg.rounds,
            tasks: world.world.tasks.len(),
            ablate: cfg.ablate.clone(),
            thresholds: Thresholds::of(cfg),
        }
    }
}

/// Everything a full run leaves behind.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub results: Vec<EpisodeResult>,
    pub buffer: BufferGraph,
    pub memory: MemoryStore,
}

impl RunOutput {
    pub fn report(&self) -> MetricsReport {
        MetricsReport::from_results(&self.results)
    }
}

/// One exploration pass over every task.
pub fn explore(
    world: &LoadedWorld,
    oracle: &OracleHandle,
    cfg: &RunConfig,
    buffer: &mut BufferGraph,
    memory: &mut MemoryStore,
) -> Result<Vec<EpisodeResult>, ExperimentError> {
    let policy = cfg.policy.build(cfg.seed);
    let tasks = &world.world.tasks;
    Ok(run_exploration(&world.world, tasks, policy.as_ref(), buffer, memory, oracle, &cfg.runtime())?)
}

/// Inference rounds `first..first + cfg.rounds`.
pub fn infer(
    world: &LoadedWorld,
    oracle: &OracleHandle,
    cfg: &RunConfig,
    buffer: &mut BufferGraph,
    memory: &mut MemoryStore,
    first: usize,
) -> Result<Vec<EpisodeResult>, ExperimentError> {
    let policy = cfg.policy.build(cfg.seed);
    let rt = cfg.runtime();
    let tasks = &world.world.tasks;
    let mut results = Vec::new();
    for round in first..first + cfg.rounds {
        results.extend(run_inference(&world.world, tasks, policy.as_ref(), buffer, memory, oracle, &rt, round)?);
    }
    Ok(results)
}

/// Exploration followed by `cfg.rounds` inference rounds, starting from the
/// given buffer and memory.
pub fn run_rounds(
    world: &LoadedWorld,
    oracle: &OracleHandle,
    cfg: &RunConfig,
    mut buffer: BufferGraph,
    mut memory: MemoryStore,
) -> Result<RunOutput, ExperimentError> {
    let mut results = explore(world, oracle, cfg, &mut buffer, &mut memory)?;
    results.extend(infer(world, oracle, cfg, &mut buffer, &mut memory, 1)?);
    Ok(RunOutput {
        manifest: RunManifest::new(world, oracle, cfg),
        results,
        buffer,
        memory,
    })
}

pub fn fresh_state(cfg: &RunConfig) -> (BufferGraph, MemoryStore) {
    (
        BufferGraph::with_policy(cfg.capacity, cfg.eviction),
        MemoryStore::new(cfg.embedder.clone(), cfg.memory()),
    )
}

pub fn run_full(world: &LoadedWorld, oracle: &OracleHandle, cfg: &RunConfig) -> Result<RunOutput, ExperimentError> {
    let (b, m) = fresh_state(cfg);
    run_rounds(world, oracle, cfg, b, m)
}

pub fn run_memoryless(
    world: &LoadedWorld,
    oracle: &OracleHandle,
    cfg: &RunConfig,
) -> Result<Vec<EpisodeResult>, ExperimentError> {
    let policy = cfg.policy.build(cfg.seed);
    Ok(run_baseline(&world.world, &world.world.tasks, policy.as_ref(), oracle, &cfg.runtime())?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub ablate: Vec<Ablation>,
    pub report: MetricsReport,
}

/// Baseline, full system and the three single-component ablations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub manifest: RunManifest,
    pub baseline: MetricsReport,
    pub variants: Vec<Variant>,
    /// Baseline against the full system.
    pub comparison: Comparison,
}

impl BenchReport {
    pub fn variant(&self, name: &str) -> Option<&MetricsReport> {
        self.variants.iter().find(|v| v.name == name).map(|v| &v.report)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let m = &self.manifest;
        let _ = writeln!(
            s,
            "world {} | {} tasks | {} rounds | seed {} | oracle {}",
            m.world_id, m.tasks, m.rounds, m.seed, m.oracle
        );
        let _ = writeln!(
            s,
            "{:<22} {:>8} {:>8} {:>8} {:>10} {:>8}",
            "variant", "SR", "nav", "exec", "steps", "calls"
        );
        let row = |s: &mut String, name: &str, r: &MetricsReport| {
            let _ = writeln!(
                s,
                "{:<22} {:>8} {:>8} {:>8} {:>10} {:>8}",
                name,
                percent(r.success_rate),
                r.navigation_failures,
                r.execution_failures,
                r.mean_steps.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into()),
                r.oracle_calls
            );
        };
        row(&mut s, "baseline", &self.baseline);
        for v in &self.variants {
            row(&mut s, &v.name, &v.report);
        }
        if let Some(full) = self.variant(FULL) {
            let curve: Vec<String> = full.round_curve.iter().map(|p| percent(p.success_rate)).collect();
            let _ = writeln!(s, "full system by round: {}", curve.join(" "));
        }
        s.push_str("\nbaseline vs full system\n");
        s.push_str(&self.comparison.render());
        s
    }
}

pub const FULL: &str = "full";
pub const VARIANTS: [(&str, &[Ablation]); 4] = [
    (FULL, &[]),
    ("no-reflection", &[Ablation::Reflection]),
    ("no-navigation", &[Ablation::Navigation]),
    ("validated-only", &[Ablation::FailedTrajectories]),
];

pub fn run_bench(world: &LoadedWorld, oracle: &OracleHandle, cfg: &RunConfig) -> Result<(BenchReport, RunOutput), ExperimentError> {
    let baseline = MetricsReport::from_results(&run_memoryless(world, oracle, cfg)?);
    let mut variants = Vec::new();
    let mut full_output = None;
    for (name, ablate) in VARIANTS {
        let mut c = cfg.clone();
        c.ablate = ablate.to_vec();
        let out = run_full(world, oracle, &c)?;
        variants.push(Variant {
            name: name.to_string(),
            ablate: c.ablate.clone(),
            report: out.report(),
        });
        if name == FULL {
            full_output = Some(out);
        }
    }
    let full_output = full_output.expect("full variant runs");
    let comparison = compare_runs(&baseline, &variants[0].report).expect("same task set");
    let mut manifest = RunManifest::new(world, oracle, cfg);
    manifest.ablate.clear();
    Ok((
        BenchReport {
            manifest,
            baseline,
            variants,
            comparison,
        },
        full_output,
    ))
}

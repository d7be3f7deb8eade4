//! Episode loop and the two phases built on it.
//!
//! Each round runs its episodes (in parallel when configured), then applies
//! side effects serially: buffer ingestion in task order, memory updates in
//! a seeded shuffled order. Outputs depend only on inputs and the seed.

pub mod policy;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::BufferGraph;
use crate::env::{validate, EnvError, TaskSpec, World, DEFAULT_HORIZON_CAP};
use crate::memory::{MemoryError, MemoryStore, MemoryValue, UpdateOutcome};
use crate::model::{classify_by_ground_truth, FailureLabel, ModelError, Step, Trajectory};
use crate::navigator::SearchLimits;
use crate::oracle::{OracleError, OracleHandle};
use crate::reflector::{classify, reflect_execution, reflect_navigation, ReflectError};

pub use policy::{
    eliminate_loops, ActionListPolicy, Demonstration, KeywordPolicy, OracleDrivenPolicy, Policy,
    PolicyContext, PolicyKind, Turn, WandererPolicy,
};

pub const DEFAULT_EXPLORATION_HORIZON: usize = 5;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Switches for the three ablations; all `true` is the full system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Components {
    /// Reflect on execution failures.
    pub reflection: bool,
    /// Repair navigation failures from the replay buffer.
    pub navigation: bool,
    /// Store failed-and-corrected trajectories, not just validated ones.
    pub failed_trajectories: bool,
}

impl Default for Components {
    fn default() -> Self {
        Components {
            reflection: true,
            navigation: true,
            failed_trajectories: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub exploration_horizon: usize,
    pub horizon_cap: usize,
    pub k: usize,
    pub search: SearchLimits,
    pub trust_ground_truth: bool,
    pub components: Components,
    pub seed: u64,
    pub parallelism: usize,
    pub max_oracle_calls: Option<usize>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            exploration_horizon: DEFAULT_EXPLORATION_HORIZON,
            horizon_cap: DEFAULT_HORIZON_CAP,
            k: 1,
            search: SearchLimits::default(),
            trust_ground_truth: false,
            components: Components::default(),
            seed: 0,
            parallelism: 1,
            max_oracle_calls: Some(1000),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    Exploration,
    Inference,
}

/// What reflection did with a failed episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionKind {
    Execution,
    Navigation,
    NavigationNoOp,
    /// Navigation failure with nothing relevant in the buffer.
    Unrepaired,
    /// The responsible component is switched off.
    Disabled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub site: String,
    pub phase: Phase,
    pub round: usize,
    pub trajectory: Trajectory,
    pub success: bool,
    /// Ground-truth label.
    pub label: FailureLabel,
    pub oracle_label: Option<FailureLabel>,
    pub steps: usize,
    pub oracle_calls: usize,
    pub demonstrations_used: usize,
    pub reflection: Option<ReflectionKind>,
    pub memory_outcome: Option<UpdateOutcome>,
    pub aborted: Option<String>,
}

/// Runs one episode from the site root until Stop or `horizon` actions.
pub fn run_episode(
    world: &World,
    task: &TaskSpec,
    policy: &dyn Policy,
    demos: &[Demonstration],
    horizon: usize,
    oracle: &OracleHandle,
) -> Result<Trajectory, (Trajectory, EpisodeError)> {
    let q = &task.query;
    let (mut state, start) = world.reset(&q.site).map_err(|e| {
        let blank = Trajectory::new(q.id.clone(), q.site.clone(), crate::model::Observation::root(&Default::default()));
        (blank, EpisodeError::from(e))
    })?;
    let mut traj = Trajectory::new(q.id.clone(), q.site.clone(), start);
    let mut history: Vec<Turn> = Vec::new();
    while traj.horizon() < horizon {
        let page = match world.view(&state) {
            Ok(p) => p,
            Err(e) => return Err((traj, e.into())),
        };
        let ctx = PolicyContext {
            query: q,
            page: &page,
            history: &history,
            demonstrations: demos,
            oracle,
        };
        let action = match policy.decide(&ctx) {
            Ok(a) => a,
            Err(e) => return Err((traj, e.into())),
        };
        let (next, obs) = match world.step(&state, &action) {
            Ok(x) => x,
            Err(e) => return Err((traj, e.into())),
        };
        traj.steps.push(Step {
            action: action.clone(),
            observation: obs,
        });
        history.push(Turn { page, action: action.clone() });
        state = next;
        if action.is_stop() {
            break;
        }
    }
    Ok(traj)
}

struct Pending {
    result: EpisodeResult,
    store: Option<MemoryValue>,
}

fn ground_truth(task: &TaskSpec, traj: &Trajectory) -> (bool, FailureLabel) {
    let success = validate(task, traj);
    let label = classify_by_ground_truth(traj, &task.key_obs, success)
        .unwrap_or(FailureLabel::NavigationFailure);
    (success, label)
}

struct Phaser<'a> {
    world: &'a World,
    policy: &'a dyn Policy,
    oracle: &'a OracleHandle,
    config: &'a RuntimeConfig,
}

impl Phaser<'_> {
    fn pool(&self) -> Result<rayon::ThreadPool, RuntimeError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism.max(1))
            .build()
            .map_err(|e| RuntimeError::Pool(e.to_string()))
    }

    fn episode(
        &self,
        task: &TaskSpec,
        phase: Phase,
        round: usize,
        demos: Vec<Demonstration>,
        horizon: usize,
    ) -> (EpisodeResult, OracleHandle) {
        let session = self.oracle.session();
        let (trajectory, aborted) = match run_episode(self.world, task, self.policy, &demos, horizon, &session) {
            Ok(t) => (t, None),
            Err((t, e)) => (t, Some(e.to_string())),
        };
        let (success, label) = ground_truth(task, &trajectory);
        let result = EpisodeResult {
            task_id: task.query.id.clone(),
            site: task.query.site.clone(),
            phase,
            round,
            steps: trajectory.horizon(),
            trajectory,
            success,
            label,
            oracle_label: None,
            oracle_calls: session.calls(),
            demonstrations_used: demos.len(),
            reflection: None,
            memory_outcome: None,
            aborted,
        };
        (result, session)
    }

    /// Reflection against a read-only buffer; produces the value to store.
    fn reflect(&self, task: &TaskSpec, mut result: EpisodeResult, session: &OracleHandle, buf: &BufferGraph) -> Pending {
        let q = &task.query;
        let c = &self.config.components;
        let mut store = None;
        if result.aborted.is_none() {
            if result.success {
                store = Some(MemoryValue {
                    trajectory: result.trajectory.clone(),
                    rationale: String::new(),
                    label: FailureLabel::Success,
                });
            } else if result.trajectory.horizon() > 0 {
                let outcome: Result<_, ReflectError> = (|| {
                    let cls = classify(&result.trajectory, q, session, Some(result.label), self.config.trust_ground_truth)?;
                    result.oracle_label = Some(cls.oracle);
                    Ok(match cls.used {
                        FailureLabel::ExecutionFailure if c.reflection => {
                            let r = reflect_execution(&result.trajectory, q, session)?;
                            (Some(r), ReflectionKind::Execution)
                        }
                        FailureLabel::NavigationFailure if c.navigation => {
                            match reflect_navigation(&result.trajectory, q, buf, session, &self.config.search)? {
                                Some(r) if r.no_op_repair => (Some(r), ReflectionKind::NavigationNoOp),
                                Some(r) => (Some(r), ReflectionKind::Navigation),
                                None => (None, ReflectionKind::Unrepaired),
                            }
                        }
                        _ => (None, ReflectionKind::Disabled),
                    })
                })();
                match outcome {
                    Ok((refl, kind)) => {
                        result.reflection = Some(kind);
                        if c.failed_trajectories {
                            store = refl.map(|r| MemoryValue {
                                trajectory: r.truncated,
                                rationale: r.rationale,
                                label: r.label,
                            });
                        }
                    }
                    Err(e) => result.aborted = Some(e.to_string()),
                }
            }
        }
        result.oracle_calls = session.calls();
        Pending { result, store }
    }

    fn apply_updates(
        &self,
        tasks: &[TaskSpec],
        pending: &mut [Pending],
        mem: &mut MemoryStore,
        buf: &mut BufferGraph,
        round: usize,
    ) -> Result<(), RuntimeError> {
        let mut order: Vec<usize> = (0..pending.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(round as u64));
        order.shuffle(&mut rng);
        for i in order {
            let Some(value) = pending[i].store.take() else {
                continue;
            };
            let session = self.oracle.session();
            match mem.update(&tasks[i].query, value, &session) {
                Ok(outcome) => pending[i].result.memory_outcome = Some(outcome),
                Err(MemoryError::Oracle(e)) => pending[i].result.aborted = Some(e.to_string()),
                Err(e) => return Err(e.into()),
            }
            pending[i].result.oracle_calls += session.calls();
        }
        buf.set_pins(mem.pinned_observations());
        buf.evict();
        Ok(())
    }
}

/// Exploration: one short episode per task, every trajectory merged into the
/// buffer, then failures reflected on and all outcomes offered to memory.
pub fn run_exploration(
    world: &World,
    tasks: &[TaskSpec],
    policy: &dyn Policy,
    buf: &mut BufferGraph,
    mem: &mut MemoryStore,
    oracle: &OracleHandle,
    config: &RuntimeConfig,
) -> Result<Vec<EpisodeResult>, RuntimeError> {
    let ph = Phaser {
        world,
        policy,
        oracle,
        config,
    };
    let pool = ph.pool()?;
    let episodes: Vec<(EpisodeResult, OracleHandle)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|t| ph.episode(t, Phase::Exploration, 0, Vec::new(), config.exploration_horizon))
            .collect()
    });
    for (r, _) in &episodes {
        buf.ingest_episode(&r.trajectory);
    }
    let snapshot: &BufferGraph = buf;
    let mut pending: Vec<Pending> = pool.install(|| {
        episodes
            .into_par_iter()
            .zip(tasks.par_iter())
            .map(|((r, s), t)| ph.reflect(t, r, &s, snapshot))
            .collect()
    });
    ph.apply_updates(tasks, &mut pending, mem, buf, 0)?;
    Ok(pending.into_iter().map(|p| p.result).collect())
}

/// One inference round: retrieve same-site demonstrations, act, reflect on
/// failures and update memory. Inference episodes are not added to the
/// buffer.
pub fn run_inference(
    world: &World,
    tasks: &[TaskSpec],
    policy: &dyn Policy,
    buf: &mut BufferGraph,
    mem: &mut MemoryStore,
    oracle: &OracleHandle,
    config: &RuntimeConfig,
    round: usize,
) -> Result<Vec<EpisodeResult>, RuntimeError> {
    let ph = Phaser {
        world,
        policy,
        oracle,
        config,
    };
    let mut demos = Vec::with_capacity(tasks.len());
    for t in tasks {
        let hits = mem.lookup_where(&t.query, config.k.max(1), |e| e.query.site == t.query.site)?;
        demos.push(
            hits.into_iter()
                .map(|(e, s)| Demonstration::from_entry(e, s))
                .collect::<Vec<_>>(),
        );
    }
    let pool = ph.pool()?;
    let snapshot: &BufferGraph = buf;
    let mut pending: Vec<Pending> = pool.install(|| {
        tasks
            .par_iter()
            .zip(demos.into_par_iter())
            .map(|(t, d)| {
                let (r, s) = ph.episode(t, Phase::Inference, round, d, config.horizon_cap);
                ph.reflect(t, r, &s, snapshot)
            })
            .collect()
    });
    ph.apply_updates(tasks, &mut pending, mem, buf, round)?;
    Ok(pending.into_iter().map(|p| p.result).collect())
}

/// Memoryless reference run: the policy alone, no demonstrations.
pub fn run_baseline(
    world: &World,
    tasks: &[TaskSpec],
    policy: &dyn Policy,
    oracle: &OracleHandle,
    config: &RuntimeConfig,
) -> Result<Vec<EpisodeResult>, RuntimeError> {
    let ph = Phaser {
        world,
        policy,
        oracle,
        config,
    };
    let pool = ph.pool()?;
    Ok(pool.install(|| {
        tasks
            .par_iter()
            .map(|t| ph.episode(t, Phase::Baseline, 0, Vec::new(), config.horizon_cap).0)
            .collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;
    use crate::oracle::ScriptedOracle;

    const WORLD: &str = r#"{"schema":1,"sites":[{"site_id":"s","root":"/","pages":[
        {"locator":"/","elements":[{"id":"help","role":"link","text":"Help"},{"id":"sales","role":"link","text":"Sales"}],
         "affordances":[{"action_kind":"click","element_id":"help","dest":"/help"},
                        {"action_kind":"click","element_id":"sales","dest":"/sales"}]},
        {"locator":"/help","elements":[{"id":"home","role":"link","text":"Home"}],
         "affordances":[{"action_kind":"click","element_id":"home","dest":"/"}]},
        {"locator":"/sales","elements":[{"id":"r1","role":"row","text":"Ann"},{"id":"home","role":"link","text":"Home"}],
         "affordances":[{"action_kind":"click","element_id":"home","dest":"/"}]}]}],
      "tasks":[{"query":{"id":"t1","text":"sales leader","site":"s"},"key_obs":["/sales"],
                "validator":{"kind":"answer_equals","expected":"Ann"}},
               {"query":{"id":"t2","text":"help me","site":"s"},"key_obs":["/sales"],
                "validator":{"kind":"answer_equals","expected":"Ann"}}]}"#;

    fn setup() -> (World, OracleHandle) {
        let world = World::from_json(WORLD).unwrap();
        let oracle = OracleHandle::new(
            ScriptedOracle::from_json(
                r#"{"schema":1,"rules":[{"role":"relevance","when":{"page_contains":"@ /sales"},"then":true}]}"#,
            )
            .unwrap(),
        );
        (world, oracle)
    }

    #[test]
    fn immediate_stop_and_horizon_cap() {
        let (w, o) = setup();
        let stop = ActionListPolicy {
            actions: vec![Action::stop("x")],
        };
        let t = run_episode(&w, &w.tasks[0], &stop, &[], 30, &o).unwrap();
        assert_eq!(t.horizon(), 1);
        let forever = ActionListPolicy {
            actions: vec![Action::click("help"), Action::click("home")],
        };
        let t = run_episode(&w, &w.tasks[0], &forever, &[], 30, &o).unwrap();
        assert_eq!(t.horizon(), 30);
    }

    #[test]
    fn exploration_stores_success_and_repair() {
        let (w, o) = setup();
        let mut buf = BufferGraph::default();
        let mut mem = MemoryStore::default();
        let cfg = RuntimeConfig::default();
        let res = run_exploration(&w, &w.tasks, &KeywordPolicy, &mut buf, &mut mem, &o, &cfg).unwrap();
        assert!(res[0].success);
        assert_eq!(res[0].steps, 2);
        // t2 wanders help -> home -> sales within 5 steps? help, home, then
        // sales: it reaches the rows and answers, so it also succeeds.
        assert!(res[1].success);
        assert_eq!(mem.len(), 2);
        assert_eq!(buf.node_count(), 3);

        // Inference replays the loop-free demonstration.
        let inf = run_inference(&w, &w.tasks, &KeywordPolicy, &mut buf, &mut mem, &o, &cfg, 1).unwrap();
        assert!(inf.iter().all(|r| r.success && r.demonstrations_used == 1));
        assert_eq!(inf[1].steps, 2);
        assert_eq!(inf[1].memory_outcome, Some(UpdateOutcome::Replaced));
    }

    #[test]
    fn exploration_is_deterministic() {
        let (w, o) = setup();
        let run = |par| {
            let mut buf = BufferGraph::default();
            let mut mem = MemoryStore::default();
            let cfg = RuntimeConfig {
                parallelism: par,
                ..Default::default()
            };
            run_exploration(&w, &w.tasks, &KeywordPolicy, &mut buf, &mut mem, &o, &cfg).unwrap();
            (buf.to_snapshot(), mem.to_records())
        };
        assert_eq!(run(1), run(1));
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn navigation_failure_is_repaired_from_buffer() {
        let (w, o) = setup();
        let mut buf = BufferGraph::default();
        // Seed the buffer with the route to /sales.
        buf.ingest_episode(&w.replay("seed", "s", &[Action::click("sales")]).unwrap());
        let mut mem = MemoryStore::default();
        let stuck = ActionListPolicy {
            actions: vec![Action::click("help"), Action::stop("?")],
        };
        let res = run_exploration(&w, &w.tasks[..1], &stuck, &mut buf, &mut mem, &o, &RuntimeConfig::default()).unwrap();
        assert_eq!(res[0].label, FailureLabel::NavigationFailure);
        assert_eq!(res[0].reflection, Some(ReflectionKind::Navigation));
        assert_eq!(mem.entries()[0].value.trajectory.actions().collect::<Vec<_>>(), vec![&Action::click("sales")]);
    }
}

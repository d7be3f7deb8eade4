//! The `waymark` binary end to end, each invocation with its own
//! in-process server.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use waymark_core::buffer::BufferGraph;
use waymark_core::env::load_world;
use waymark_core::model::Action;

fn waymark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_waymark")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = waymark(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    waymark(args).status.code().unwrap()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn explore_infer_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ex = dir.path().join("ex");
    let inf = dir.path().join("in");
    let cfg = config("cms-mini.toml");
    ok(&["explore", "--config", &cfg, "--out", s(&ex), "--seed", "9"]);
    for f in ["manifest.json", "buffer.records", "memory.records", "results.jsonl", "report.txt", "report.json"] {
        assert!(ex.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ex.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["thresholds"]["min_similarity"], 0.3);

    let again = dir.path().join("ex2");
    ok(&["explore", "--config", &cfg, "--out", s(&again), "--seed", "9"]);
    for f in ["manifest.json", "buffer.records", "results.jsonl"] {
        assert_eq!(std::fs::read(ex.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let text = ok(&["infer", "--config", &cfg, "--from", s(&ex), "--out", s(&inf), "--rounds", "2"]);
    assert!(text.contains("scope: inference round 2"), "{text}");

    // Reports are pure functions of the results file.
    let r1 = dir.path().join("r1");
    let r2 = dir.path().join("r2");
    let results = inf.join("results.jsonl");
    ok(&["eval", "--results", s(&results), "--out", s(&r1)]);
    ok(&["eval", "--results", s(&results), "--out", s(&r2)]);
    for f in ["report.txt", "report.json"] {
        assert_eq!(std::fs::read(r1.join(f)).unwrap(), std::fs::read(r2.join(f)).unwrap());
    }
    assert_eq!(std::fs::read(r1.join("report.json")).unwrap(), std::fs::read(inf.join("report.json")).unwrap());
}

#[test]
fn eval_of_empty_results() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("results.jsonl");
    std::fs::write(&empty, "").unwrap();
    let text = ok(&["eval", "--results", s(&empty)]);
    assert!(text.contains("no tasks"), "{text}");
    let json = ok(&["eval", "--results", s(&empty), "--json"]);
    assert_eq!(serde_json::from_str::<serde_json::Value>(&json).unwrap()["tasks"], 0);
}

#[test]
fn inspect_listings() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.records");
    BufferGraph::new(100).save(&empty).unwrap();
    let text = ok(&["inspect", "buffer", s(&empty)]);
    assert!(text.lines().next().unwrap().starts_with("replay buffer"), "{text}");
    assert!(text.contains("0 nodes, 0 edges"));

    let world = load_world(core_fixture("cms-mini.json")).unwrap();
    let mut chain = BufferGraph::new(100);
    chain.ingest_episode(&world.replay("c", "cms", &[Action::click("sales"), Action::click("orders")]).unwrap());
    let path = dir.path().join("chain.records");
    chain.save(&path).unwrap();
    let text = ok(&["inspect", "buffer", s(&path)]);
    assert!(text.contains("3 nodes, 2 edges"), "{text}");
    let order: Vec<usize> = ["cms / ", "cms /sales ", "cms /sales/orders "].iter().map(|l| text.find(l).unwrap()).collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{text}");
}

#[test]
fn graphviz_output_parses() {
    let world = load_world(core_fixture("cms-mini.json")).unwrap();
    let mut buf = BufferGraph::new(10_000);
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for i in 0..40 {
        buf.ingest_episode(&world.random_walk("cms", 6, &mut rng, &format!("w{i}")).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cms.records");
    buf.save(&path).unwrap();
    let dot = ok(&["inspect", "buffer", s(&path), "--graphviz"]);
    let ast = dot_parser::ast::Graph::try_from(dot.as_str()).unwrap_or_else(|e| panic!("{e}\n{dot}"));
    let graph = dot_parser::canonical::Graph::from(ast);
    assert_eq!(graph.nodes.set.len(), buf.node_count());
    assert_eq!(graph.edges.set.len(), buf.edge_count());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(code(&["explore", "--config", "missing.toml", "--out", out]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "rounds = 0\n").unwrap();
    assert_eq!(code(&["explore", "--config", s(&bad), "--out", out]), 2);
    std::fs::write(&bad, "colour = \"blue\"\n").unwrap();
    assert_eq!(code(&["explore", "--config", s(&bad), "--out", out]), 2);
    assert_eq!(code(&["bench", "--config", &config("bench.toml"), "--ablate", "everything"]), 2);
    assert_eq!(
        code(&["explore", "--config", &config("cms-mini.toml"), "--out", out, "--server", "http://127.0.0.1:1"]),
        3
    );
    let garbage = dir.path().join("garbage.records");
    std::fs::write(&garbage, "not a snapshot").unwrap();
    assert_eq!(code(&["inspect", "memory", s(&garbage)]), 2);
}

#[test]
fn compare_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("cms-mini.toml");
    let a = dir.path().join("a");
    ok(&["explore", "--config", &cfg, "--out", s(&a)]);
    let report = a.join("report.json");
    let same = ok(&["compare", s(&report), s(&report), "--json"]);
    let same: serde_json::Value = serde_json::from_str(&same).unwrap();
    assert_eq!(same["success_rate_delta"], 0.0);
    assert_eq!(same["tasks"], 20);

    let empty = dir.path().join("results.jsonl");
    std::fs::write(&empty, "").unwrap();
    let e = dir.path().join("e");
    ok(&["eval", "--results", s(&empty), "--out", s(&e)]);
    assert_eq!(code(&["compare", s(&report), s(&e.join("report.json"))]), 3);
}

#[test]
fn bench_writes_reports_and_full_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&["bench", "--config", &config("bench.toml"), "--out", s(dir.path())]);
    assert!(text.contains("baseline vs full system"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("bench.json")).unwrap()).unwrap();
    assert_eq!(report["variants"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("full/buffer.records").exists());
    assert!(dir.path().join("full/memory.records").exists());
}

#[test]
fn shipped_configs_load() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        waymark_core::bench::RunConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert_eq!(n, 4);
    let reference = waymark_core::bench::RunConfig::from_file(dir.join("reference.toml")).unwrap();
    let defaults = waymark_core::bench::RunConfig {
        world: reference.world.clone(),
        seed: reference.seed,
        oracle: reference.oracle.clone(),
        ..Default::default()
    };
    assert_eq!(reference, defaults);
}

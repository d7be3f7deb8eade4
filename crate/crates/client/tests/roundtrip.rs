//! Client against an in-process server on an ephemeral port.

use std::path::PathBuf;

use waymark_client::Client;
use waymark_core::api::{CreateSession, ErrorKind, InspectKind, LookupRequest, SearchRequest};
use waymark_core::bench::{OracleSpec, RunConfig};

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

async fn start() -> Client {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(waymark_server::serve(listener));
    Client::new(format!("http://{addr}"))
}

fn cms_config() -> RunConfig {
    RunConfig {
        world: core_fixture("cms-mini.json"),
        oracle: OracleSpec::Scripted {
            rules: core_fixture("cms-mini-rules.json"),
        },
        rounds: 2,
        ..RunConfig::default()
    }
}

#[tokio::test]
async fn session_lifecycle() {
    let c = start().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    let info = c
        .create_session(&CreateSession {
            config: cms_config(),
            buffer_snapshot: None,
            memory_records: None,
        })
        .await
        .unwrap();
    assert_eq!(info.manifest.tasks, 20);
    assert_eq!(info.buffer_nodes, 0);

    let explored = c.explore(&info.id).await.unwrap();
    assert_eq!(explored.results.len(), 20);
    assert!(explored.session.buffer_nodes > 0);
    assert_eq!(explored.report.scope, "exploration");

    let inferred = c.infer(&info.id, Some(1)).await.unwrap();
    assert_eq!(inferred.results.len(), 20);
    assert_eq!(inferred.report.scope, "inference round 1");
    let again = c.infer(&info.id, Some(1)).await.unwrap();
    assert_eq!(again.report.scope, "inference round 2");
    assert_eq!(again.session.episodes, 60);

    let found = c
        .search(
            &info.id,
            &SearchRequest {
                site: "cms".into(),
                text: "oldest complete order billing name".into(),
            },
        )
        .await
        .unwrap();
    assert!(found.expansions > 0);

    let hits = c
        .lookup(
            &info.id,
            &LookupRequest {
                site: "cms".into(),
                text: "What is the billing name of the oldest complete order?".into(),
                k: Some(3),
            },
        )
        .await
        .unwrap();
    assert!(hits.hits.len() <= 3);
    assert!(hits.hits.windows(2).all(|w| w[0].similarity >= w[1].similarity));

    let art = c.artifacts(&info.id).await.unwrap();
    let eval = c.eval(art.results.clone()).await.unwrap();
    assert_eq!(eval.report, again.report);
    let listing = c.inspect(InspectKind::Buffer, art.buffer_snapshot.clone(), false).await.unwrap();
    assert!(listing.text.contains(&format!("{} nodes", again.session.buffer_nodes)));

    c.delete_session(&info.id).await.unwrap();
    let gone = c.session(&info.id).await.unwrap_err();
    assert_eq!(gone.kind(), Some(&ErrorKind::NotFound));
}

#[tokio::test]
async fn errors_carry_their_kind() {
    let c = start().await;
    let mut cfg = cms_config();
    cfg.world = core_fixture("no-such-world.json");
    let err = c
        .create_session(&CreateSession {
            config: cfg,
            buffer_snapshot: None,
            memory_records: None,
        })
        .await
        .unwrap_err();
    assert_eq!(err.kind(), Some(&ErrorKind::Config));

    let empty = c.eval(String::new()).await.unwrap();
    assert_eq!(empty.report.tasks, 0);
    assert!(empty.text.contains("no tasks"));

    let a = c.eval(String::new()).await.unwrap().report;
    let mut b = a.clone();
    b.outcomes.insert(
        "t".into(),
        waymark_core::bench::metrics::TaskOutcome {
            site: "s".into(),
            success: true,
            steps: 1,
            label: waymark_core::model::FailureLabel::Success,
        },
    );
    let err = c.compare(a, b).await.unwrap_err();
    assert_eq!(err.kind(), Some(&ErrorKind::Mismatch));

    let err = c.inspect(InspectKind::Memory, "garbage".into(), false).await.unwrap_err();
    assert_eq!(err.kind(), Some(&ErrorKind::Config));
}

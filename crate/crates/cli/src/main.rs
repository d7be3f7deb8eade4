//! `waymark`: command-line client. Without `--server` it starts a private
//! in-process server on a loopback port and talks to that.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use waymark_client::{Client, ClientError};
use waymark_core::api::{Artifacts, CreateSession, ErrorKind, InspectKind, PhaseResponse};
use waymark_core::bench::{Ablation, MetricsReport, RunConfig};

#[derive(Parser)]
#[command(name = "waymark", version, about = "Replay-buffer search and reflective memory for web agents")]
struct Cli {
    /// Service root URL; omitted means an in-process server.
    #[arg(long, global = true)]
    server: Option<String>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Disables a component; repeatable. Replaces the config's list.
    #[arg(long, global = true, value_enum)]
    ablate: Vec<AblateArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblateArg {
    Reflection,
    Navigation,
    FailedTrajectories,
}

impl From<AblateArg> for Ablation {
    fn from(a: AblateArg) -> Ablation {
        match a {
            AblateArg::Reflection => Ablation::Reflection,
            AblateArg::Navigation => Ablation::Navigation,
            AblateArg::FailedTrajectories => Ablation::FailedTrajectories,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Buffer,
    Memory,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the HTTP service in the foreground.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
    /// Explores every task once and writes the resulting artifacts.
    Explore {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs inference rounds on top of an earlier explore or infer output.
    Infer {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding buffer.records and memory.records.
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured round count.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Builds a metrics report from a results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// Writes report.txt and report.json here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Prints the machine-readable report.
        #[arg(long)]
        json: bool,
    },
    /// Prints a buffer snapshot or memory store.
    Inspect {
        kind: Kind,
        path: PathBuf,
        /// Emits the buffer as a dot graph.
        #[arg(long)]
        graphviz: bool,
    },
    /// Compares two report.json files over the same tasks.
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Baseline, full system and ablations on one world.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Run(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) => 3,
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Failure {
        match e.kind() {
            Some(ErrorKind::Config) => Failure::Config(e.to_string()),
            _ => Failure::Run(e.to_string()),
        }
    }
}

fn config_err(e: impl Display) -> Failure {
    Failure::Config(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Run(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Failure::Run(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

impl Cli {
    fn load_config(&self, path: &Path) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::from_file(path).map_err(config_err)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if !self.ablate.is_empty() {
            cfg.ablate = self.ablate.iter().map(|&a| a.into()).collect();
        }
        cfg.check_ranges().map_err(config_err)?;
        Ok(cfg)
    }
}

fn write_artifacts(out: &Path, art: &Artifacts, report: &MetricsReport) -> Result<(), Failure> {
    write(out, "manifest.json", &json(&art.manifest))?;
    write(out, "buffer.records", &art.buffer_snapshot)?;
    write(out, "memory.records", &art.memory_records)?;
    write(out, "results.jsonl", &art.results)?;
    write(out, "report.txt", &report.render())?;
    write(out, "report.json", &json(report))
}

async fn finish_phase(client: &Client, phase: PhaseResponse, out: &Path) -> Result<(), Failure> {
    let id = phase.session.id.clone();
    let art = client.artifacts(&id).await?;
    write_artifacts(out, &art, &phase.report)?;
    client.delete_session(&id).await?;
    print!("{}", phase.report.render());
    println!("artifacts: {}", out.display());
    Ok(())
}

async fn run(cli: Cli, client: Client) -> Result<(), Failure> {
    match &cli.command {
        Command::Serve { .. } => unreachable!("handled before connecting"),
        Command::Explore { config, out } => {
            let cfg = cli.load_config(config)?;
            let info = client
                .create_session(&CreateSession {
                    config: cfg,
                    buffer_snapshot: None,
                    memory_records: None,
                })
                .await?;
            let phase = client.explore(&info.id).await?;
            finish_phase(&client, phase, out).await
        }
        Command::Infer {
            config,
            from,
            out,
            rounds,
        } => {
            let cfg = cli.load_config(config)?;
            let info = client
                .create_session(&CreateSession {
                    config: cfg,
                    buffer_snapshot: Some(read(&from.join("buffer.records"))?),
                    memory_records: Some(read(&from.join("memory.records"))?),
                })
                .await?;
            let phase = client.infer(&info.id, *rounds).await?;
            finish_phase(&client, phase, out).await
        }
        Command::Eval { results, out, json: as_json } => {
            let resp = client.eval(read(results)?).await?;
            match out {
                Some(dir) => {
                    write(dir, "report.txt", &resp.text)?;
                    write(dir, "report.json", &json(&resp.report))?;
                }
                None if *as_json => print!("{}", json(&resp.report)),
                None => print!("{}", resp.text),
            }
            Ok(())
        }
        Command::Inspect { kind, path, graphviz } => {
            let kind = match kind {
                Kind::Buffer => InspectKind::Buffer,
                Kind::Memory => InspectKind::Memory,
            };
            print!("{}", client.inspect(kind, read(path)?, *graphviz).await?.text);
            Ok(())
        }
        Command::Compare {
            baseline,
            candidate,
            json: as_json,
        } => {
            let parse = |p: &PathBuf| -> Result<MetricsReport, Failure> {
                serde_json::from_str(&read(p)?).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
            };
            let resp = client.compare(parse(baseline)?, parse(candidate)?).await?;
            if *as_json {
                print!("{}", json(&resp.comparison));
            } else {
                print!("{}", resp.text);
            }
            Ok(())
        }
        Command::Bench { config, out, json: as_json } => {
            let cfg = cli.load_config(config)?;
            let resp = client.bench(cfg).await?;
            if let Some(dir) = out {
                write(dir, "bench.txt", &resp.text)?;
                write(dir, "bench.json", &json(&resp.report))?;
                let full = resp.report.variant(waymark_core::bench::FULL).cloned().expect("full variant");
                write_artifacts(&dir.join("full"), &resp.artifacts, &full)?;
            }
            if *as_json {
                print!("{}", json(&resp.report));
            } else {
                print!("{}", resp.text);
            }
            Ok(())
        }
    }
}

async fn connect(server: Option<&str>) -> Result<Client, Failure> {
    if let Some(url) = server {
        return Ok(Client::new(url));
    }
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
        .await
        .map_err(|e| Failure::Run(format!("cannot bind a local port: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Failure::Run(e.to_string()))?;
    tokio::spawn(waymark_server::serve(listener));
    Ok(Client::new(format!("http://{addr}")))
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Serve { addr } => match tokio::net::TcpListener::bind(addr).await {
            Ok(listener) => {
                eprintln!("listening on {addr}");
                waymark_server::serve(listener).await.map_err(|e| Failure::Run(e.to_string()))
            }
            Err(e) => Err(Failure::Config(format!("cannot bind {addr}: {e}"))),
        },
        _ => match connect(cli.server.as_deref()).await {
            Ok(client) => run(cli, client).await,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(m) | Failure::Run(m)) = &f;
            eprintln!("error: {m}");
            ExitCode::from(f.code())
        }
    }
}

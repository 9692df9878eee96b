//! `kgcrowd`: serve the API, move graphs in and out of event logs, run the
//! crowd simulator and print recommendations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use kgcrowd::engine::{Engine, EngineConfig};
use kgcrowd::graph;
use kgcrowd::ids::EntityId;
use kgcrowd::recommend::{self, LearnerRecord, RecommendConfig};
use kgcrowd::sim::{self, SimConfig};
use kgcrowd_service::{log::EventLog, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "kgcrowd", version, about = "Crowdsourced educational knowledge graph engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve the JSON API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Event log to replay and append to; state is in memory only without it.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Seed for challenge selection in a fresh deployment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Secret mixed into session tokens.
        #[arg(long, env = "KGCROWD_SECRET", default_value = "kgcrowd-dev-secret")]
        secret: String,
    },
    /// Start a new event log from a kgcf/1 graph file.
    Import {
        file: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the graph held in an event log as kgcf/1 (`-` for stdout).
    Export {
        file: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Run the crowd simulator and write its JSON report.
    Simulate(SimulateArgs),
    /// Print recommendations for one student as JSON.
    Recommend(RecommendArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    population: u32,
    #[arg(long, default_value_t = 0.8)]
    accuracy: f64,
    #[arg(long, default_value_t = 50)]
    slots: u32,
    #[arg(long, default_value_t = 100)]
    submissions: u32,
    #[arg(long, default_value_t = 0)]
    two_truth_slots: u32,
    #[arg(long, default_value_t = 0.9)]
    unequal_bias: f64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["log", "graph"]))]
struct RecommendArgs {
    #[arg(long)]
    student: EntityId,
    /// Threshold P; the deployment default when absent.
    #[arg(long)]
    p: Option<f64>,
    /// Event log whose state and stored learner records are used.
    #[arg(long)]
    log: Option<PathBuf>,
    /// kgcf/1 graph file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// JSON learner record, or an array of them, to use with `--graph`.
    #[arg(long, requires = "graph")]
    records: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn engine_config(seed: u64) -> EngineConfig {
    let mut config = EngineConfig::default();
    config.captcha.rng_seed = seed;
    config
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) if path != Path::new("-") => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn load_records(path: &Path) -> Result<Vec<LearnerRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text).context("learner records are not JSON")?;
    let records = if value.is_array() { serde_json::from_value(value)? } else { vec![serde_json::from_value(value)?] };
    Ok(records)
}

fn recommend_cmd(args: RecommendArgs) -> Result<()> {
    let report = if let Some(log) = &args.log {
        let (_, engine) = EventLog::open(log).with_context(|| format!("replaying {}", log.display()))?;
        engine.recommendations(args.student, args.p)?
    } else {
        let path = args.graph.as_ref().expect("clap requires a source");
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let g = graph::import(&text)?;
        let record = match &args.records {
            Some(p) => load_records(p)?.into_iter().find(|r| r.student_id == args.student),
            None => None,
        }
        .unwrap_or_else(|| LearnerRecord::new(args.student));
        record.validate(&g)?;
        let config = match args.p {
            Some(p) => RecommendConfig::new(p)?,
            None => RecommendConfig::default(),
        };
        recommend::recommend(&g, &record, &config)?
    };
    write_output(args.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::Serve { addr, log, seed, secret } => {
            let config = ServiceConfig { engine: engine_config(seed), secret, ..Default::default() };
            let service = match &log {
                Some(path) => Service::open(path, config).with_context(|| format!("opening {}", path.display()))?,
                None => Service::in_memory(config)?,
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(kgcrowd_service::serve(service, &addr)).with_context(|| format!("serving on {addr}"))?;
        }
        Cmd::Import { file, log, seed } => {
            if log.exists() {
                bail!("{} already exists", log.display());
            }
            let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let g = graph::import(&text).with_context(|| format!("parsing {}", file.display()))?;
            let (entities, triples) = (g.entities().count(), g.triples().count());
            let engine = Engine::with_graph(engine_config(seed), g)?;
            EventLog::create(&log, &engine).with_context(|| format!("creating {}", log.display()))?;
            eprintln!("imported {entities} entities and {triples} triples into {}", log.display());
        }
        Cmd::Export { file, log } => {
            let (_, engine) = EventLog::open(&log).with_context(|| format!("replaying {}", log.display()))?;
            write_output(Some(&file), &graph::export(&engine.graph))?;
        }
        Cmd::Simulate(a) => {
            let config = SimConfig {
                seed: a.seed,
                population: a.population,
                accuracy: a.accuracy,
                slots: a.slots,
                submissions_per_slot: a.submissions,
                two_truth_slots: a.two_truth_slots,
                unequal_bias: a.unequal_bias,
                ..Default::default()
            };
            let report = sim::run(&config)?;
            write_output(a.out.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report)?))?;
        }
        Cmd::Recommend(a) => recommend_cmd(a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use prefrank::config::ExperimentConfig;
use prefrank::format::{self, Plan};
use prefrank::log;
use prefrank::server::{self, ServerOptions};
use prefrank::service::{self, Experiment};
use prefrank_core::report;
use prefrank_core::sim::run_simulation;
use prefrank_core::{Journal, SelectionPolicy};

#[derive(Parser)]
#[command(
    name = "prefrank",
    version,
    about = "Budgeted merge-rank preference tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Balanced,
    Naive,
}

#[derive(Subcommand)]
enum Command {
    /// Tolerance, per-pair cap, and worst-case cost for a budget.
    Plan {
        #[arg(long)]
        targets: u64,
        #[arg(long)]
        budget: u64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Check this tolerance instead of deriving one.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario file with a [simulation] section.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        policy: Option<Policy>,
        /// Write events.jsonl and report.json here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Run the evaluation server.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Event log; defaults to the config's log_path.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Where logs of experiments loaded over HTTP are kept.
        #[arg(long, default_value = ".")]
        data_dir: PathBuf,
        /// Media directory when no config is given.
        #[arg(long)]
        media: Option<PathBuf>,
        /// Static web UI bundle.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
    /// Report from an event log.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        log: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Canonical event log (truncated tail completed) or engine snapshot.
    Export {
        #[arg(long)]
        config: PathBuf,
        log: PathBuf,
        #[arg(long)]
        snapshot: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn plan(targets: u64, budget: u64, delta: f64, epsilon: Option<f64>, json: bool) -> Result<()> {
    let plan = Plan::new(targets, budget, delta, epsilon)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&plan)?);
    } else {
        print!("{}", plan.text());
    }
    if plan.over_budget() {
        eprintln!(
            "warning: worst case {} exceeds budget {}; convergence is not guaranteed",
            plan.worst_case, plan.budget
        );
    }
    Ok(())
}

fn simulate(
    scenario: &Path,
    seed: Option<u64>,
    policy: Option<Policy>,
    out_dir: Option<&Path>,
    format: Format,
) -> Result<()> {
    let config = ExperimentConfig::load(scenario)?;
    let (mut setup, default_seed) = config.sim_setup()?;
    if let Some(p) = policy {
        setup.policy = match p {
            Policy::Balanced => SelectionPolicy::Balanced,
            Policy::Naive => SelectionPolicy::Naive,
        };
    }
    let run = run_simulation(&setup, seed.unwrap_or(default_seed))?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("events.jsonl"), log::encode(&run.events))?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&run.report)?,
        )?;
    }
    match format {
        Format::Table => print!("{}", format::sim_text(&run.report)),
        Format::Csv => print!("{}", format::csv(&run.report.rows)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&run.report)?),
    }
    Ok(())
}

async fn serve(
    config: Option<&Path>,
    addr: SocketAddr,
    log: Option<PathBuf>,
    data_dir: PathBuf,
    media: Option<PathBuf>,
    ui: Option<PathBuf>,
) -> Result<()> {
    let clock = server::system_clock();
    let (experiment, media_root) = match config {
        Some(path) => {
            let config = ExperimentConfig::load(path)?;
            let log = log.unwrap_or_else(|| data_dir.join(config.log_path()));
            let media = media.unwrap_or_else(|| config.media_root.clone());
            let exp = Experiment::open(config, &log, clock())
                .with_context(|| format!("recovering {}", log.display()))?;
            tracing::info!(log = %log.display(), last_seq = exp.last_seq(), "experiment loaded");
            (Some(exp), Some(media))
        }
        None => (None, media),
    };
    let admin_token = std::env::var(server::ADMIN_TOKEN_VAR)
        .ok()
        .filter(|t| !t.is_empty());
    if admin_token.is_none() {
        tracing::warn!(
            "{} not set; admin endpoints are disabled",
            server::ADMIN_TOKEN_VAR
        );
    }
    let app = server::router(
        experiment,
        ServerOptions {
            admin_token,
            data_dir,
            media_root,
            ui_dir: ui,
            clock,
        },
    );
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        if let Ok(mut term) = signal(SignalKind::terminate()) {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
            return;
        }
    }
    let _ = tokio::signal::ctrl_c().await;
}

fn analyze(config: &Path, log_path: &Path, format: Format) -> Result<()> {
    let config = ExperimentConfig::load(config)?;
    let journal = service::replay_file(&config, log_path)?;
    let report = report::build(journal.engine());
    match format {
        Format::Table => print!("{}", format::report_text(&report)),
        Format::Csv => print!("{}", format::csv(&report.rows)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn export(config: &Path, log_path: &Path, snapshot: bool, out: Option<&Path>) -> Result<()> {
    let config = ExperimentConfig::load(config)?;
    let events = log::read(log_path)?;
    let replayed = Journal::replay(service::fresh_engine(&config)?, &events)?;
    let text = if snapshot {
        serde_json::to_string_pretty(replayed.journal.engine())? + "\n"
    } else {
        let mut all = events;
        all.extend(replayed.missing);
        log::encode(&all)
    };
    write_output(out, &text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plan {
            targets,
            budget,
            delta,
            epsilon,
            json,
        } => plan(targets, budget, delta, epsilon, json),
        Command::Simulate {
            scenario,
            seed,
            policy,
            out_dir,
            format,
        } => simulate(&scenario, seed, policy, out_dir.as_deref(), format),
        Command::Serve {
            config,
            addr,
            log,
            data_dir,
            media,
            ui,
        } => {
            if config.is_none() && log.is_some() {
                bail!("--log requires --config");
            }
            tokio::runtime::Runtime::new()?.block_on(serve(
                config.as_deref(),
                addr,
                log,
                data_dir,
                media,
                ui,
            ))
        }
        Command::Analyze {
            config,
            log,
            format,
        } => analyze(&config, &log, format),
        Command::Export {
            config,
            log,
            snapshot,
            out,
        } => export(&config, &log, snapshot, out.as_deref()),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

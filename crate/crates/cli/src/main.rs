use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use slicenet_core::control::{router, CommandLog};
use slicenet_core::sim::{compare_runs, preset, replay_scenario, run_scenario, LiveSession, Report, ScenarioConfig, PRESET_NAMES};
use tracing::{info, warn};

const EXIT_CONFIG: u8 = 2;
const EXIT_INVARIANT: u8 = 3;

#[derive(Parser)]
#[command(name = "slicenet", version, about = "Slicing-enabled private cell simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and write its report.
    Run {
        /// Scenario file (TOML, or JSON with a .json extension) or `preset:<name>`.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        /// Also write CSV time series into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Print metric deltas between two reports (b relative to a).
    Compare { a: PathBuf, b: PathBuf },
    /// Run a scenario against the wall clock with the REST API and telemetry stream.
    Serve {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
        /// Start simulating immediately instead of waiting for POST /scenario/start.
        #[arg(long)]
        autostart: bool,
        /// Write the session report here when it ends.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the session command log here when it ends.
        #[arg(long)]
        commands_out: Option<PathBuf>,
        /// Shut the server down once the session ends.
        #[arg(long)]
        exit_on_finish: bool,
    },
    /// Re-run a scenario from a saved command log.
    Replay {
        #[arg(long)]
        config: String,
        #[arg(long)]
        commands: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List or show the shipped scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as a complete TOML scenario with every default filled in.
    Show { name: String },
}

enum Failure {
    Config(anyhow::Error),
    Invariant(usize),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_config(spec: &str) -> Result<ScenarioConfig, Failure> {
    if let Some(name) = spec.strip_prefix("preset:") {
        return preset(name).ok_or_else(|| Failure::Config(anyhow::anyhow!("unknown preset {name:?}")));
    }
    let cfg = ScenarioConfig::load(Path::new(spec)).map_err(|e| Failure::Config(e.into()))?;
    Ok(cfg)
}

fn write_report(report: &Report, out: &Path) -> anyhow::Result<()> {
    fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))
}

fn check_audit(report: &Report) -> Result<(), Failure> {
    if report.audit.is_empty() {
        return Ok(());
    }
    for v in report.audit.iter().take(20) {
        eprintln!("audit: tti {} {:?}: {}", v.tti, v.kind, v.detail);
    }
    Err(Failure::Invariant(report.audit.len()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, csv } => {
            let cfg = load_config(&config)?;
            let report = run_scenario(cfg).map_err(|e| Failure::Config(e.into()))?;
            write_report(&report, &out)?;
            if let Some(dir) = csv {
                report.write_csv(&dir).context("writing CSV")?;
            }
            check_audit(&report)
        }
        Command::Compare { a, b } => {
            let read = |p: &Path| -> anyhow::Result<Report> {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Report::from_json(&text).with_context(|| format!("parsing {}", p.display()))
            };
            let (ra, rb) = (read(&a)?, read(&b)?);
            let cmp = compare_runs(&ra, &rb).map_err(|e| Failure::Other(e.into()))?;
            println!("{}", serde_json::to_string_pretty(&cmp).context("serialising comparison")?);
            Ok(())
        }
        Command::Serve {
            config,
            listen,
            pace,
            autostart,
            out,
            commands_out,
            exit_on_finish,
        } => {
            let cfg = load_config(&config)?;
            let session = LiveSession::spawn(cfg, pace, autostart).map_err(|e| Failure::Config(e.into()))?;
            let rt = tokio::runtime::Runtime::new().context("starting async runtime")?;
            let app = router(session.api_state());
            let watched = session.control();
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&listen)
                    .await
                    .with_context(|| format!("binding {listen}"))?;
                info!("listening on {}", listener.local_addr()?);
                let finished = async move {
                    loop {
                        tokio::time::sleep(std::time::Duration::from_millis(100)).await;
                        if exit_on_finish && watched.is_finished() {
                            break;
                        }
                    }
                };
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        tokio::select! {
                            _ = tokio::signal::ctrl_c() => {}
                            _ = finished => {}
                        }
                    })
                    .await
                    .context("serving")
            })?;
            if !session.is_finished() {
                session.control().request_stop();
            }
            let outcome = session.join();
            if let Some(p) = out {
                write_report(&outcome.report, &p)?;
            }
            if let Some(p) = commands_out {
                let text = serde_json::to_string_pretty(&outcome.log).context("serialising command log")?;
                fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
            }
            check_audit(&outcome.report)
        }
        Command::Replay { config, commands, out } => {
            let cfg = load_config(&config)?;
            let text = fs::read_to_string(&commands)
                .with_context(|| format!("reading {}", commands.display()))
                .map_err(Failure::Config)?;
            let log: CommandLog = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", commands.display()))
                .map_err(Failure::Config)?;
            let report = replay_scenario(cfg, log).map_err(|e| Failure::Config(e.into()))?;
            write_report(&report, &out)?;
            check_audit(&report)
        }
        Command::Presets { action } => {
            match action {
                PresetAction::List => {
                    for name in PRESET_NAMES {
                        println!("{name}");
                    }
                }
                PresetAction::Show { name } => {
                    let cfg = preset(&name).ok_or_else(|| Failure::Config(anyhow::anyhow!("unknown preset {name:?}")))?;
                    print!("{}", cfg.to_toml_string());
                }
            }
            Ok(())
        }
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
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Invariant(n)) => {
            warn!("{n} invariant violations");
            eprintln!("{n} invariant violations recorded in the report");
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `pmdss` command line: import plans, record progress, report, export the
//! S-curve and run the HTTP service.
//!
//! Exit status: 0 success (or "proceed" for `report`), 1 internal failure,
//! 2 bad input or disallowed state, 3 `report` says investigate and correct.

pub mod backend;
pub mod error;
pub mod render;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use pmdss_core::{
    Baseline, EventKind, Gate, NextStep, Outcome, ProgressSnapshot, ProjectId, Role, TimePoint,
};
use pmdss_service::{EventRequest, Service, ServiceConfig};
use serde::de::DeserializeOwned;

pub use backend::Backend;
pub use error::{CliError, EXIT_INPUT, EXIT_INTERNAL, EXIT_INVESTIGATE, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Table,
    /// Pretty JSON; identical input gives identical bytes.
    Structured,
}

#[derive(Debug, Parser)]
#[command(name = "pmdss", version, about = "Earned value project controls")]
pub struct Cli {
    /// Data directory (overrides the config file and PMDSS_DATA_DIR).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true, env = "PMDSS_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t)]
    pub format: ReportFormat,
    /// Base URL of a running service; without it the data directory is used directly.
    #[arg(long, global = true, env = "PMDSS_REMOTE")]
    pub remote: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a project in the opportunity phase.
    Init { project: ProjectId },
    /// Store a baseline from a JSON file.
    ImportBaseline {
        project: ProjectId,
        file: PathBuf,
        /// Replace a locked baseline during implementation.
        #[arg(long)]
        rebaseline: bool,
    },
    /// Record a progress snapshot from a JSON file.
    RecordProgress { project: ProjectId, file: PathBuf },
    /// Record a lifecycle event, e.g. `event P1 bid_no_bid --outcome go --role business-manager`.
    Event {
        project: ProjectId,
        /// opportunity_qualified, proposal_ready, bid_no_bid, win_loss, contract_signed,
        /// plan_established, tasks_completed, tests_passed, delivered_to_customer, contract_closed
        event: String,
        /// go or no_go; required for bid_no_bid and win_loss.
        #[arg(long)]
        outcome: Option<String>,
        #[arg(long, env = "PMDSS_ROLE")]
        role: Role,
        /// Event time; defaults to the previous event's time.
        #[arg(long)]
        at: Option<i64>,
    },
    /// Show the lifecycle phase, decisions and allowed events.
    Status { project: ProjectId },
    /// Print indices, forecasts and diagnostics for the latest snapshot.
    Report { project: ProjectId },
    /// Write the S-curve table as CSV (t, pv, ev, ac).
    ExportScurve {
        project: ProjectId,
        /// Output file; standard output if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP service until interrupted.
    Serve {
        /// Listen address (overrides the config file).
        #[arg(long)]
        listen: Option<std::net::SocketAddr>,
    },
}

/// What a successful command concluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Done,
    Verdict(NextStep),
}

impl Completion {
    pub fn exit_code(self) -> u8 {
        match self {
            Completion::Done | Completion::Verdict(NextStep::ProceedNextCycle) => EXIT_OK,
            Completion::Verdict(NextStep::InvestigateAndCorrect) => EXIT_INVESTIGATE,
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<ServiceConfig, CliError> {
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn backend(cli: &Cli) -> Result<Backend, CliError> {
    match &cli.remote {
        Some(url) => Ok(Backend::Remote(backend::Remote::new(url))),
        None => Ok(Backend::Local(Service::open(&load_config(cli)?)?)),
    }
}

/// Parses a JSON input file; errors carry the file name and line/column or field.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let input = |message: String| CliError::Input {
        path: path.to_owned(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| input(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input(e.to_string()))
}

pub fn parse_event(name: &str, outcome: Option<&str>) -> Result<EventKind, CliError> {
    let outcome = || -> Result<Outcome, CliError> {
        match outcome {
            Some("go") => Ok(Outcome::Go),
            Some("no_go" | "no-go") => Ok(Outcome::NoGo),
            Some(other) => Err(CliError::Usage(format!(
                "outcome must be go or no_go, not `{other}`"
            ))),
            None => Err(CliError::Usage(format!("{name} needs --outcome go|no_go"))),
        }
    };
    let name = name.replace('-', "_");
    let kind = match name.as_str() {
        "bid_no_bid" => EventKind::Decision {
            gate: Gate::BidNoBid,
            outcome: outcome()?,
        },
        "win_loss" => EventKind::Decision {
            gate: Gate::WinLoss,
            outcome: outcome()?,
        },
        _ => EventKind::ALL
            .into_iter()
            .find(|k| k.key() == name)
            .ok_or_else(|| CliError::Usage(format!("unknown event `{name}`")))?,
    };
    Ok(kind)
}

/// Runs one command, writing its output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Completion, CliError> {
    let structured = cli.format == ReportFormat::Structured;
    match &cli.command {
        Command::Init { project } => {
            let stored = backend(cli)?.create_project(project)?;
            if structured {
                render::json(out, &stored)?;
            } else {
                writeln!(
                    out,
                    "created {} (phase {}, revision {})",
                    project, stored.record.phase, stored.revision
                )?;
            }
        }
        Command::ImportBaseline {
            project,
            file,
            rebaseline,
        } => {
            let baseline: Baseline = read_json(file)?;
            let receipt = backend(cli)?.put_baseline(project, baseline, *rebaseline)?;
            if structured {
                render::json(out, &receipt)?;
            } else {
                writeln!(
                    out,
                    "baseline stored for {}: {} tasks, BAC {} (revision {})",
                    project,
                    receipt.tasks,
                    receipt.bac.normalize(),
                    receipt.revision
                )?;
            }
        }
        Command::RecordProgress { project, file } => {
            let snapshot: ProgressSnapshot = read_json(file)?;
            let receipt = backend(cli)?.record_snapshot(project, snapshot)?;
            if structured {
                render::json(out, &receipt)?;
            } else {
                writeln!(
                    out,
                    "progress at {} recorded for {} (revision {})",
                    receipt.status_date, project, receipt.revision
                )?;
                for w in &receipt.warnings {
                    writeln!(out, "warning: {w}")?;
                }
            }
        }
        Command::Event {
            project,
            event,
            outcome,
            role,
            at,
        } => {
            let request = EventRequest {
                kind: parse_event(event, outcome.as_deref())?,
                at: at.map(TimePoint),
            };
            let view = backend(cli)?.apply_event(project, *role, request)?;
            if structured {
                render::json(out, &view)?;
            } else {
                render::lifecycle_table(out, &view)?;
            }
        }
        Command::Status { project } => {
            let view = backend(cli)?.lifecycle(project)?;
            if structured {
                render::json(out, &view)?;
            } else {
                render::lifecycle_table(out, &view)?;
            }
        }
        Command::Report { project } => {
            let report = backend(cli)?.indicators(project)?;
            if structured {
                render::json(out, &report)?;
            } else {
                render::report_table(out, &report)?;
            }
            return Ok(Completion::Verdict(report.next_step));
        }
        Command::ExportScurve { project, out: path } => {
            let rows = backend(cli)?.s_curve_rows(project)?;
            match path {
                Some(p) => {
                    let mut file = std::fs::File::create(p)?;
                    render::s_curve_csv(&mut file, &rows)?;
                    file.sync_all()?;
                }
                None => render::s_curve_csv(out, &rows)?,
            }
        }
        Command::Serve { listen } => {
            if cli.remote.is_some() {
                return Err(CliError::Usage("serve runs locally; drop --remote".into()));
            }
            let mut config = load_config(cli)?;
            if let Some(addr) = listen {
                config.listen = *addr;
            }
            serve(&config, out)?;
        }
    }
    Ok(Completion::Done)
}

fn serve(config: &ServiceConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        // handlers are installed before the address is announced
        let shutdown = shutdown_signal()?;
        pmdss_service::serve(config, shutdown, |addr| {
            let _ = writeln!(out, "listening on http://{addr}");
            let _ = out.flush();
        })
        .await
    })?;
    Ok(())
}

#[cfg(unix)]
fn shutdown_signal() -> std::io::Result<impl std::future::Future<Output = ()>> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut interrupt = signal(SignalKind::interrupt())?;
    let mut terminate = signal(SignalKind::terminate())?;
    Ok(async move {
        tokio::select! {
            _ = interrupt.recv() => {}
            _ = terminate.recv() => {}
        }
    })
}

#[cfg(not(unix))]
fn shutdown_signal() -> std::io::Result<impl std::future::Future<Output = ()>> {
    Ok(async {
        let _ = tokio::signal::ctrl_c().await;
    })
}

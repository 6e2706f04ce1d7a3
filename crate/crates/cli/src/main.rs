//! `orch5g` command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use orch5g::harness::{Harness, HarnessError, ReportFormat};

#[derive(Parser)]
#[command(name = "orch5g", version, about = "Deterministic SDN/NFV orchestration emulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Structured,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => ReportFormat::Text,
            Format::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write the event log (JSON lines) here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Persist the final state and log for later `inject` calls.
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Execute one event against a saved context.
    Inject { context: PathBuf, event: PathBuf },
    /// Render the report of a saved context.
    Report {
        context: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
}

const EXIT_MISMATCH: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn invalid(e: HarnessError) -> anyhow::Result<ExitCode> {
    eprintln!("{e}");
    Ok(ExitCode::from(EXIT_INVALID))
}

fn exit(code: i32) -> ExitCode {
    if code == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MISMATCH)
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, report, log, format, context } => {
            let (mut h, events) = match Harness::from_json(&read(&scenario)?) {
                Ok(x) => x,
                Err(e) => return invalid(e),
            };
            h.run_events(&events);
            let rendered = h.render_report(format.into());
            match report {
                Some(path) => write(&path, &rendered)?,
                None => print!("{rendered}"),
            }
            if let Some(path) = log {
                write(&path, &h.log_text())?;
            }
            if let Some(dir) = context {
                h.save_context(&dir)?;
            }
            for r in h.records().iter().filter(|r| !r.matched) {
                eprintln!("event {} ({}) expected {} but got {}", r.seq, r.action, r.expect, r.error_kind.as_deref().unwrap_or("ok"));
            }
            Ok(exit(h.exit_code()))
        }
        Command::Validate { scenario } => match Harness::from_json(&read(&scenario)?) {
            Ok((_, events)) => {
                println!("valid: {} events", events.len());
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => invalid(e),
        },
        Command::Inject { context, event } => {
            let mut h = Harness::load_context(&context)?;
            let value: serde_json::Value = match serde_json::from_str(&read(&event)?) {
                Ok(v) => v,
                Err(e) => return invalid(HarnessError::Validation(e.to_string())),
            };
            let record = match h.inject(&value) {
                Ok(r) => r.clone(),
                Err(e) => return invalid(e),
            };
            h.save_context(&context)?;
            println!("{}", serde_json::to_string(&record)?);
            Ok(exit(if record.matched { 0 } else { 1 }))
        }
        Command::Report { context, format } => {
            let h = Harness::load_context(&context)?;
            print!("{}", h.render_report(format.into()));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

//! Library side of the `rsac` binary.

pub mod args;
pub mod run;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use rsac_core::metrics::emit_report;
use rsac_core::persist::{load_bank, save_bank};
use rsac_core::{Error, ErrorKind, EvalReport, ReportFormat, Result};

pub use args::Cli;
use args::{BankCommand, Command, ReportArgs, RunArgs};
pub use run::*;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => EXIT_USAGE,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_USAGE;
        }
    };
    match pool.install(|| execute(&cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let (Error::Io(io), Some(run)) = (&e, run_args(&cli.command)) {
                if io.kind() == io::ErrorKind::NotFound {
                    eprint!("{}", missing_data_hint(&run.dataset, &run.data_root));
                }
            }
            exit_code(&e)
        }
    }
}

fn run_args(command: &Command) -> Option<&RunArgs> {
    match command {
        Command::TrainEval(a) => Some(&a.run),
        Command::AblateThreshold(a) => Some(&a.run),
        Command::AblateDatasize(a) => Some(&a.run),
        Command::Bank(BankCommand::Save { run, .. } | BankCommand::Load { run, .. }) => Some(run),
        Command::Bank(BankCommand::Inspect { .. }) => None,
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn write_report(report: &EvalReport, args: &ReportArgs) -> Result<()> {
    match &args.output {
        Some(p) => emit_report(report, args.format, p),
        None => {
            let text = match args.format {
                ReportFormat::Json => report.to_json()? + "\n",
                ReportFormat::Csv => report.to_csv(),
            };
            write_text(None, &text)
        }
    }
}

fn summarize(report: &EvalReport) {
    eprintln!(
        "{} {}: accuracy {:.4} on {} samples, train {:.2}s, infer {:.2}s, {} stored vectors",
        report.dataset,
        report.protocol,
        report.accuracy,
        report.evaluated,
        report.timing.train_seconds,
        report.timing.infer_seconds,
        report.memory.total_vectors
    );
}

fn execute(command: &Command) -> Result<()> {
    match command {
        Command::TrainEval(a) => {
            let cfg = a.run.to_config()?;
            let data = load_data(&cfg)?;
            let outcome = train_eval(&cfg, &data)?;
            if let Some(p) = &a.schedule_out {
                fs::write(p, outcome.schedule.to_manifest())?;
            }
            if let Some(p) = &a.confusion_pgm {
                fs::write(p, outcome.report.confusion.to_pgm())?;
            }
            if let Some(p) = &a.save_bank {
                save_bank(&outcome.bank, p)?;
            }
            summarize(&outcome.report);
            write_report(&outcome.report, &a.report)
        }
        Command::AblateThreshold(a) => {
            let cfg = a.run.to_config()?;
            let data = load_data(&cfg)?;
            let rows = ablate_threshold(&cfg, &data, &a.thresholds)?;
            write_text(a.output.as_deref(), &threshold_csv(&rows))
        }
        Command::AblateDatasize(a) => {
            let cfg = a.run.to_config()?;
            let data = load_data(&cfg)?;
            let rows = ablate_datasize(&cfg, &data, &a.counts)?;
            write_text(a.output.as_deref(), &datasize_csv(&rows))
        }
        Command::Bank(BankCommand::Save { path, run }) => {
            let cfg = run.to_config()?;
            let data = load_data(&cfg)?;
            let (state, _) = train(&cfg, &data)?;
            save_bank(&state.bank, path)?;
            write_text(None, &inspect(&state.bank)?)
        }
        Command::Bank(BankCommand::Load { path, run, report }) => {
            let cfg = run.to_config()?;
            let bank = load_bank(path)?;
            let test = load_test(&cfg)?;
            let eval = evaluate_bank(&bank, cfg.qdc, &test)?;
            let cfg = RunConfig {
                rank: bank.policy(),
                ..cfg
            };
            let r = build_report(&cfg, "bank", 0, &bank, &eval, 0.0)?;
            summarize(&r);
            write_report(&r, report)
        }
        Command::Bank(BankCommand::Inspect { path }) => write_text(None, &inspect(&load_bank(path)?)?),
    }
}

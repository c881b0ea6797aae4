//! Front end for `distinct`: argument grammar, report rendering and command
//! dispatch. The binary is a thin wrapper over [`main_with_args`].

pub mod args;
pub mod report;
pub mod run;

use std::ffi::OsString;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use crate::args::{Cli, OutputFormat};
use crate::run::{config_from_report, execute, is_usage_error, resolve_config, usage, Outcome};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

fn run_cli(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(w) = g.workers {
        if w == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("configuring worker threads")?;
    }
    let cfg = match (&g.from_report, cli.command) {
        (Some(path), None) => config_from_report(path)?,
        (None, Some(cmd)) => resolve_config(g, cmd)?,
        (Some(_), Some(_)) => return Err(usage("--from-report replaces the subcommand; give one or the other")),
        (None, None) => return Err(usage("no command given (try --help)")),
    };
    let text = match execute(&cfg)? {
        Outcome::Summary(s) => format!("{s}\n"),
        Outcome::Report(r) => match g.format {
            OutputFormat::Json => r.to_json(),
            OutputFormat::Csv => r.to_csv(),
        },
    };
    match &g.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Parses `args`, runs the command and maps the outcome to an exit status:
/// 0 when the command ran (whatever the statistical decision), 1 on an
/// operational failure, 2 on a usage error.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run_cli(cli) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage_error(&e) { EXIT_USAGE } else { EXIT_FAILURE })
        }
    }
}

//! Command-line front-end: parameter scans of the unconditional, ultimate
//! and effective QFI, and plot-ready merging of their outputs.

pub mod config;
pub mod error;
pub mod plot;
pub mod scan;

use clap::{Parser, Subcommand};

pub use config::{Efficiency, Mode, PartialConfig, ProbeState, RunArgs, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "monqfi", version, about = "QFI of continuously monitored frequency sensors")]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge scan CSVs into plot-ready data
    PlotData(plot::PlotArgs),
}

fn run_scan(args: &RunArgs) -> Result<(), CliError> {
    let cfg = match &args.replay {
        Some(path) => {
            let mut cfg = scan::Manifest::read(path)?.config;
            if args.out.is_some() {
                cfg.out = args.out.clone();
                cfg.manifest = args.manifest.clone();
            }
            cfg
        }
        None => config::from_args(args)?,
    };
    let work = || scan::execute(&cfg).map(|_| ());
    match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let result = match &cli.command {
        Some(Command::PlotData(args)) => plot::execute(args),
        None => run_scan(&cli.run),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use opgrowth::spec::ExperimentName;
use opgrowth::{check, run_experiment, ExperimentSpec, Report, THREADS_ENV};

#[derive(Parser)]
#[command(name = "opgrowth", version = opgrowth::report::VERSION, about = "Operator growth experiments under noise")]
struct Cli {
    /// Worker threads for trajectory sampling (the OPGROWTH_THREADS
    /// environment variable takes precedence).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML spec.
    Run {
        spec: PathBuf,
        /// Override the seed from the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory from the spec.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the known experiments.
    List,
    /// Re-evaluate the criteria stored in a report.
    Check { report: PathBuf },
}

/// Like `println!`, but a closed stdout (for example a pipe into `head`)
/// is ignored instead of aborting the run.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_FAILED: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n = v
                .trim()
                .parse::<usize>()
                .with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

fn print_outcomes(outcomes: &[opgrowth_core::criteria::CriterionOutcome]) {
    for o in outcomes {
        say!("{}", o.summary());
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::List => {
            for name in ExperimentName::ALL {
                say!("{:<20} {}", name.as_str(), name.description());
            }
            Ok(true)
        }
        Command::Run { spec, seed, out } => {
            let resolved = ExperimentSpec::load(&spec)?.resolve(seed, out.as_deref())?;
            let report = run_experiment(&resolved)?;
            print_outcomes(&report.criteria);
            say!(
                "{}: {} ({})",
                report.experiment,
                if report.passed { "PASS" } else { "FAIL" },
                resolved.output_dir.display()
            );
            Ok(report.passed)
        }
        Command::Check { report } => {
            let rep = Report::load(&report)?;
            let result = check(&rep);
            print_outcomes(&result.outcomes);
            for c in &result.mismatches {
                eprintln!("warning: stored verdict for {c} disagrees with its metrics");
            }
            Ok(result.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            let err = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(|c| c.to_string()).collect::<Vec<_>>(),
            });
            eprintln!("{err}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

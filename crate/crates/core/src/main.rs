use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pce::cli::{init_threads, run, thread_count, Command};

/// Plane-wave band structures and verification suites for periodic and
/// slowly modulated Maxwell operators.
#[derive(Parser)]
#[command(name = "pce", version)]
struct Args {
    /// bands | groundstate | projections | symbol-check | validate | oracle | convergence
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to PCE_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = thread_count(args.threads).and_then(|n| {
        init_threads(n);
        let text = std::fs::read_to_string(&args.config)?;
        let base = args.config.parent().map(PathBuf::from).unwrap_or_default();
        run(args.command, &text, &base, args.out.as_deref())
    });
    match result {
        Ok(outcome) => {
            let verdict = if outcome.exit_code == 0 { "ok" } else { "check failed" };
            println!("{}: {verdict}; {}", outcome.command.name(), outcome.summary);
            for a in &outcome.artifacts {
                println!("  wrote {}", a.display());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Returns early with a usage failure (exit 2).
macro_rules! usage {
    ($($arg:tt)*) => {
        return Err($crate::Failure::Usage(anyhow::anyhow!($($arg)*)))
    };
}

mod bench;
mod eval;
mod gradcheck;
mod maps;
mod scan;
mod schedule;
mod sir;

/// Failure classes, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    /// A check ran and did not pass (exit 1).
    Check(String),
    /// Bad input, bad flags or I/O trouble (exit 2).
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(
    name = "sodscan",
    version,
    about = "Saliency-guided scan orders, SSM kernels and saliency metrics"
)]
struct Cli {
    /// Worker threads for data-parallel work (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the four saliency-guided scan paths for a coarse map.
    Scan(scan::ScanArgs),
    /// Score a directory of predictions against ground truth.
    Eval(eval::EvalArgs),
    /// Time sequential vs parallel SSM evaluation.
    SsmBench(bench::BenchArgs),
    /// Compare analytic SSM gradients with finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Run boundary/reverse refinement on a coarse map.
    Sir(sir::SirArgs),
    /// Build a rehearsal schedule from a manifest and sample from it.
    Schedule(schedule::ScheduleArgs),
}

pub fn ensure_parent(path: &std::path::Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_file(path: &PathBuf, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    use anyhow::Context;
    ensure_parent(path)?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Scan(a) => scan::run(a),
        Command::Eval(a) => eval::run(a),
        Command::SsmBench(a) => bench::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Sir(a) => sir::run(a),
        Command::Schedule(a) => schedule::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

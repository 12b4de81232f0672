//! `mzimesh`: compile linear-interferometer unitaries for 2D lattice devices.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mzimesh_core::circuit::Mode;
use mzimesh_core::Lattice;

pub(crate) const EXIT_FAILURE: u8 = 1;
pub(crate) const EXIT_INPUT: u8 = 2;
pub(crate) const EXIT_ASSERT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "mzimesh", version, about = "Lattice-aware MZI compiler with gate dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Haar-random unitary.
    GenUnitary {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Compile a unitary into a circuit and report.
    Compile(CompileArgs),
    /// Evaluate a circuit against a reference unitary.
    Verify {
        #[arg(long)]
        input: std::path::PathBuf,
        #[arg(long)]
        circuit: std::path::PathBuf,
        /// Exit with a nonzero code if the fidelity is below the bound.
        #[arg(long)]
        assert: bool,
        /// Bound for --assert. Defaults to the circuit's tau, or 1 - 1e-9
        /// when nothing was dropped.
        #[arg(long)]
        min_fidelity: Option<f64>,
    },
    /// Draw per-shot keep masks from a full-opt circuit.
    SampleCircuits {
        #[arg(long)]
        circuit: std::path::PathBuf,
        #[arg(long, default_value_t = 1)]
        shots: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Histogram of beamsplitter angles as CSV.
    Analyze {
        #[arg(long)]
        circuit: std::path::PathBuf,
        #[arg(long, default_value_t = mzimesh_core::circuit::DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Scalability benchmark on Haar unitaries, CSV output.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct CompileArgs {
    #[arg(long)]
    input: std::path::PathBuf,
    #[arg(long)]
    device: Lattice,
    #[arg(long, default_value = "full-opt")]
    mode: Mode,
    #[arg(long, default_value_t = 0.999)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Indicator ranks to try, e.g. 8,12,16.
    #[arg(long, value_delimiter = ',')]
    map_k: Option<Vec<usize>>,
    /// Power candidates for the dropout distribution.
    #[arg(long, value_delimiter = ',')]
    power_k: Option<Vec<u32>>,
    #[arg(long, default_value_t = mzimesh_core::dropout::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// Reorder main-path columns by weight after the greedy exchange.
    #[arg(long)]
    sort_main_path: bool,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    report: Option<std::path::PathBuf>,
    /// Angle histogram CSV.
    #[arg(long)]
    histogram: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,60,100")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.95)]
    tau: f64,
    #[arg(long, default_value_t = 5)]
    repeats: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixed device instead of 3 x ceil(N/3).
    #[arg(long)]
    device: Option<Lattice>,
    #[arg(long, default_value = "full-opt")]
    mode: Mode,
    #[arg(long, default_value_t = mzimesh_core::dropout::DEFAULT_ITERATIONS)]
    iterations: usize,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}

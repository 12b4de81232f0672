use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::Context;
use mzimesh_core::circuit::{angle_histogram, default_bin_edges, gate_counts, CompiledCircuit, Mode};
use mzimesh_core::dropout::{sample_shot, DEFAULT_POWER_KS};
use mzimesh_core::mapper::MapperOptions;
use mzimesh_core::numerics::{fidelity, haar_random_unitary};
use mzimesh_core::pipeline::{bench_device, compile, CompileOptions};
use mzimesh_core::UnitaryMatrix;
use serde::Serialize;

use crate::{BenchArgs, Command, CompileArgs, EXIT_ASSERT, EXIT_FAILURE, EXIT_INPUT};

#[derive(Debug)]
pub enum CliError {
    Input(anyhow::Error),
    Assertion(String),
    Failure(anyhow::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Assertion(_) => EXIT_ASSERT,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(e) | CliError::Failure(e) => {
                if f.alternate() {
                    write!(f, "{e:#}")
                } else {
                    write!(f, "{e}")
                }
            }
            CliError::Assertion(msg) => write!(f, "assertion failed: {msg}"),
        }
    }
}

/// Library errors caused by bad files or arguments count as input errors.
fn classify(e: mzimesh_core::Error) -> CliError {
    use mzimesh_core::Error as E;
    match e {
        E::ResidualMass { .. } | E::DegenerateDistribution(_) | E::InvalidPattern(_) => CliError::Failure(e.into()),
        other => CliError::Input(other.into()),
    }
}

trait InputContext<T> {
    fn input(self, what: impl FnOnce() -> String) -> Result<T, CliError>;
}

impl<T> InputContext<T> for mzimesh_core::Result<T> {
    fn input(self, what: impl FnOnce() -> String) -> Result<T, CliError> {
        self.map_err(|e| match classify(e) {
            CliError::Input(e) => CliError::Input(e.context(what())),
            other => other,
        })
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(CliError::Input)
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenUnitary { n, seed, out } => {
            let u = haar_random_unitary(n, seed).input(|| "generating unitary".into())?;
            u.write(&out).input(|| format!("writing {}", out.display()))
        }
        Command::Compile(args) => cmd_compile(args),
        Command::Verify { input, circuit, assert, min_fidelity } => cmd_verify(&input, &circuit, assert, min_fidelity),
        Command::SampleCircuits { circuit, shots, seed, out } => cmd_sample(&circuit, shots, seed, &out),
        Command::Analyze { circuit, bins, out } => {
            let c = read_circuit(&circuit)?;
            if bins == 0 {
                return Err(CliError::Input(anyhow::anyhow!("--bins must be positive")));
            }
            let h = angle_histogram(&c.thetas(), &default_bin_edges(bins)).input(|| "histogram".into())?;
            write_file(&out, &h.to_csv())
        }
        Command::Bench(args) => cmd_bench(args),
    }
}

fn read_unitary(path: &Path) -> Result<UnitaryMatrix, CliError> {
    UnitaryMatrix::read(path).input(|| format!("reading unitary {}", path.display()))
}

fn read_circuit(path: &Path) -> Result<CompiledCircuit, CliError> {
    CompiledCircuit::read(path).input(|| format!("reading circuit {}", path.display()))
}

fn cmd_compile(a: CompileArgs) -> Result<(), CliError> {
    let u = read_unitary(&a.input)?;
    let opts = CompileOptions {
        mode: a.mode,
        tau: a.tau,
        map_k: a.map_k,
        power_k: a.power_k.unwrap_or_else(|| DEFAULT_POWER_KS.to_vec()),
        iterations: a.iterations,
        seed: a.seed,
        mapper: MapperOptions { sort_main_path: a.sort_main_path },
        ..CompileOptions::default()
    };
    let out = compile(&u, &a.device, &opts).input(|| format!("compiling in {} mode", a.mode))?;
    out.circuit.write(&a.out).input(|| format!("writing {}", a.out.display()))?;
    if let Some(p) = &a.report {
        out.report.write(p).input(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.histogram {
        write_file(p, &out.report.angle_histogram.to_csv())?;
    }
    let r = &out.report;
    println!(
        "mode={} n={} bs_kept={}/{} reduction={:.2}% fidelity={:.6}",
        r.mode,
        r.n,
        r.bs_kept,
        r.bs_total,
        100.0 * r.bs_reduction(),
        r.fidelity_deterministic
    );
    Ok(())
}

fn cmd_verify(input: &Path, circuit: &Path, assert: bool, min_fidelity: Option<f64>) -> Result<(), CliError> {
    let u = read_unitary(input)?;
    let c = read_circuit(circuit)?;
    if u.dim() != c.n {
        return Err(CliError::Input(anyhow::anyhow!("unitary has dimension {}, circuit has {} qumodes", u.dim(), c.n)));
    }
    let f = c.fidelity_against(&u).input(|| "evaluating circuit".into())?;
    let counts = gate_counts(&c);
    println!("fidelity={f:.12} bs_kept={} bs_total={} ps_count={}", counts.bs_kept, c.gates.len(), counts.ps_count);
    if assert {
        let bound = match (min_fidelity, &c.dropout) {
            (Some(b), _) => b,
            (None, Some(rec)) => rec.tau,
            (None, None) if counts.bs_kept == c.gates.len() => 1.0 - 1e-9,
            (None, None) => {
                return Err(CliError::Input(anyhow::anyhow!(
                    "circuit has dropped gates but no recorded tau; pass --min-fidelity"
                )))
            }
        };
        if f < bound {
            return Err(CliError::Assertion(format!("fidelity {f} < {bound}")));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Shot {
    shot: u64,
    /// Indices of gates whose beamsplitter is removed in this shot.
    dropped: Vec<usize>,
    fidelity: f64,
}

#[derive(Serialize)]
struct ShotFile {
    n: usize,
    gates: usize,
    kept_count: usize,
    power_k: u32,
    seed: u64,
    mean_fidelity: Option<f64>,
    model_mean_fidelity: f64,
    shots: Vec<Shot>,
}

fn cmd_sample(circuit: &Path, shots: u64, seed: u64, out: &Path) -> Result<(), CliError> {
    let c = read_circuit(circuit)?;
    let model = c.dropout_model().input(|| format!("{} has no dropout model (compile with --mode full-opt)", circuit.display()))?;
    // The undropped circuit reproduces the source unitary exactly.
    let reference = c.logical_unitary_with(&vec![true; c.gates.len()]);
    let mut list = Vec::with_capacity(shots as usize);
    for shot in 0..shots {
        let mask = sample_shot(&model, seed, shot);
        let f = fidelity(&c.logical_unitary_with(&mask), &reference).input(|| "evaluating shot".into())?;
        let dropped = mask.iter().enumerate().filter(|(_, &k)| !k).map(|(i, _)| i).collect();
        list.push(Shot { shot, dropped, fidelity: f });
    }
    let mean = (!list.is_empty()).then(|| list.iter().map(|s| s.fidelity).sum::<f64>() / list.len() as f64);
    let file = ShotFile {
        n: c.n,
        gates: c.gates.len(),
        kept_count: model.kept_count,
        power_k: model.power_k,
        seed,
        mean_fidelity: mean,
        model_mean_fidelity: model.mean_fidelity,
        shots: list,
    };
    write_file(out, &(serde_json::to_string_pretty(&file).expect("serializable") + "\n"))?;
    match mean {
        Some(m) => println!("shots={shots} kept={} mean_fidelity={m:.6} tau_k={:.6}", model.kept_count, model.mean_fidelity),
        None => println!("shots=0"),
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    if a.repeats == 0 {
        return Err(CliError::Input(anyhow::anyhow!("--repeats must be positive")));
    }
    let mut csv = String::from("n,device,mode,tau,repeats,mean_bs_drop_pct,mean_fidelity,mean_decomp_s,mean_total_s\n");
    for &n in &a.sizes {
        let device = match a.device {
            Some(d) => d,
            None => bench_device(n).input(|| format!("device for n = {n}"))?,
        };
        let opts = CompileOptions { mode: a.mode, tau: a.tau, iterations: a.iterations, seed: a.seed, ..CompileOptions::default() };
        let (mut drop, mut fid, mut dec, mut tot) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..a.repeats {
            let u = haar_random_unitary(n, a.seed + i).input(|| format!("unitary n = {n}"))?;
            let out = compile(&u, &device, &opts).input(|| format!("compiling n = {n}"))?;
            drop += out.report.bs_reduction();
            fid += out.report.fidelity_deterministic;
            dec += out.report.timings.decompose + out.report.timings.map;
            tot += out.report.timings.total;
        }
        let k = a.repeats as f64;
        let tau = if a.mode == Mode::Baseline { String::new() } else { a.tau.to_string() };
        csv.push_str(&format!(
            "{n},{device},{},{tau},{},{:.2},{:.6},{:.4},{:.4}\n",
            a.mode,
            a.repeats,
            100.0 * drop / k,
            fid / k,
            dec / k,
            tot / k
        ));
    }
    match &a.out {
        Some(p) => write_file(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

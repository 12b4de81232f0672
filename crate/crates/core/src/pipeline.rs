//! End-to-end compilation for each experiment configuration.

use std::time::Instant;

use crate::circuit::{
    decomposition_histogram, default_bin_edges, gate_counts, CompileReport, CompiledCircuit, DropoutRecord, Mode,
    Timings, DEFAULT_BINS,
};
use crate::decomposer::{build_plan, decompose, Decomposition};
use crate::dropout::{deterministic_cut, find_threshold, select_power_k, DropoutModel, DEFAULT_ITERATIONS, DEFAULT_POWER_KS};
use crate::error::{Error, Result};
use crate::mapper::{default_map_k_candidates, partition_columns, select_map_k, MapperOptions, SMALL_ANGLE};
use crate::numerics::{PermutationPair, UnitaryMatrix};
use crate::topology::{device_pattern, snake_chain, Lattice, PatternTree};

#[derive(Clone, Debug, PartialEq)]
pub struct CompileOptions {
    pub mode: Mode,
    pub tau: f64,
    /// `None` uses [`default_map_k_candidates`].
    pub map_k: Option<Vec<usize>>,
    pub power_k: Vec<u32>,
    pub iterations: usize,
    pub seed: u64,
    pub mapper: MapperOptions,
    pub histogram_bins: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            mode: Mode::FullOpt,
            tau: 0.999,
            map_k: None,
            power_k: DEFAULT_POWER_KS.to_vec(),
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            mapper: MapperOptions::default(),
            histogram_bins: DEFAULT_BINS,
        }
    }
}

impl CompileOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }
}

#[derive(Clone, Debug)]
pub struct CompileOutput {
    pub circuit: CompiledCircuit,
    pub report: CompileReport,
    pub decomposition: Decomposition,
    pub tree: PatternTree,
    pub dropout: Option<DropoutModel>,
}

/// Pattern the given mode decomposes on.
pub fn mode_pattern(mode: Mode, device: &Lattice, n: usize) -> Result<PatternTree> {
    if n > device.node_count() {
        return Err(Error::InvalidDevice(format!("{n} qumodes do not fit on {device}")));
    }
    match mode {
        Mode::Baseline | Mode::RotCut => snake_chain(device, n),
        Mode::DecompOpt | Mode::FullOpt => device_pattern(device, n),
    }
}

pub fn compile(u: &UnitaryMatrix, device: &Lattice, opts: &CompileOptions) -> Result<CompileOutput> {
    let n = u.dim();
    if opts.mode.drops() && !(opts.tau > 0.0 && opts.tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau = {} outside (0, 1)", opts.tau)));
    }
    let t_total = Instant::now();
    let tree = mode_pattern(opts.mode, device, n)?;
    let plan = build_plan(&tree)?;
    let mut timings = Timings::default();

    let (permutations, target, decomposition, map_k) = if opts.mode == Mode::FullOpt {
        let t = Instant::now();
        let partition = partition_columns(&tree);
        let candidates = opts.map_k.clone().unwrap_or_else(|| default_map_k_candidates(n));
        if let Some(&k) = candidates.iter().find(|&&k| k == 0 || k > n) {
            return Err(Error::InvalidArgument(format!("map_k = {k} outside 1..={n}")));
        }
        let m = select_map_k(u, &partition, &plan, &candidates, opts.mapper)?;
        timings.map = t.elapsed().as_secs_f64();
        (m.permutations, m.permuted_unitary, m.decomposition, Some(m.map_k))
    } else {
        let t = Instant::now();
        let d = decompose(u, &plan)?;
        timings.decompose = t.elapsed().as_secs_f64();
        (PermutationPair::identity(n), u.clone(), d, None)
    };

    let t = Instant::now();
    let (keep, threshold, model) = if opts.mode.drops() {
        let th = find_threshold(&decomposition, &target, opts.tau)?;
        let keep = deterministic_cut(&decomposition, th.theta_cut);
        let model = if opts.mode == Mode::FullOpt {
            Some(select_power_k(&decomposition, &target, &th, &opts.power_k, opts.iterations, opts.seed)?)
        } else {
            None
        };
        (keep, Some(th), model)
    } else {
        (vec![true; decomposition.len()], None, None)
    };
    timings.dropout = t.elapsed().as_secs_f64();

    let mut circuit =
        CompiledCircuit::from_decomposition(&decomposition, &keep, *device, tree.coords().to_vec(), &permutations, opts.mode)?;
    circuit.dropout = model.as_ref().map(DropoutRecord::from);

    let counts = gate_counts(&circuit);
    let fidelity_deterministic = circuit.fidelity_against(u)?;
    let histogram = decomposition_histogram(&decomposition, &default_bin_edges(opts.histogram_bins))?;
    timings.total = t_total.elapsed().as_secs_f64();

    let report = CompileReport {
        mode: opts.mode,
        n,
        device: *device,
        tau: opts.mode.drops().then_some(opts.tau),
        bs_total: decomposition.len(),
        bs_kept: counts.bs_kept,
        bs_dropped: decomposition.len() - counts.bs_kept,
        ps_count: counts.ps_count,
        small_angle_count: decomposition.count_below(SMALL_ANGLE),
        fidelity_deterministic,
        mean_sampled_fidelity: model.as_ref().map(|m| m.mean_fidelity),
        theta_cut: threshold.as_ref().map(|t| t.theta_cut),
        power_k: model.as_ref().map(|m| m.power_k),
        power_k_scores: model.as_ref().map(|m| m.candidates.clone()).unwrap_or_default(),
        map_k,
        angle_histogram: histogram,
        timings,
    };
    Ok(CompileOutput { circuit, report, decomposition, tree, dropout: model })
}

/// `3 x ceil(n/3)` lattice used by the scalability study.
pub fn bench_device(n: usize) -> Result<Lattice> {
    Lattice::new(3, n.div_ceil(3).max(1))
}

//! Compiled circuits, gate counts, angle histograms and report files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decomposer::{circuit_matrix, Decomposition, MziBlock};
use crate::dropout::{build_distribution, DropoutModel};
use crate::error::{Error, Result};
use crate::numerics::{check_bijection, fidelity, permute_matrix, PermutationPair, UnitaryMatrix};
use crate::topology::{Coord, Lattice};

/// Experiment configuration a circuit was compiled under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Triangular chain decomposition, nothing dropped.
    Baseline,
    /// Chain decomposition with the angle cut.
    RotCut,
    /// Tree pattern with the angle cut, trivial mapping.
    DecompOpt,
    /// Tree pattern, relabeling and the dropout model.
    FullOpt,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Baseline, Mode::RotCut, Mode::DecompOpt, Mode::FullOpt];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::RotCut => "rot-cut",
            Mode::DecompOpt => "decomp-opt",
            Mode::FullOpt => "full-opt",
        }
    }

    pub fn drops(self) -> bool {
        self != Mode::Baseline
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode {s:?}; expected baseline, rot-cut, decomp-opt or full-opt")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    /// Phase shifter on `m` followed by a beamsplitter on `(m, n)`.
    #[default]
    Mzi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gate {
    #[serde(default)]
    pub kind: GateKind,
    pub m: usize,
    pub n: usize,
    pub theta: f64,
    pub phi: f64,
    pub dropped: bool,
}

impl Gate {
    pub fn block(&self) -> MziBlock {
        MziBlock { m: self.m, n: self.n, theta: self.theta, phi: self.phi }
    }
}

/// Parameters needed to regenerate per-shot masks from a circuit file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DropoutRecord {
    pub tau: f64,
    pub theta_cut: f64,
    pub kept_count: usize,
    pub power_k: u32,
    pub iterations: usize,
    pub mean_fidelity: f64,
    pub deterministic_fidelity: f64,
    pub seed: u64,
}

impl From<&DropoutModel> for DropoutRecord {
    fn from(m: &DropoutModel) -> Self {
        Self {
            tau: m.tau,
            theta_cut: m.theta_cut,
            kept_count: m.kept_count,
            power_k: m.power_k,
            iterations: m.iterations,
            mean_fidelity: m.mean_fidelity,
            deterministic_fidelity: m.deterministic_fidelity,
            seed: m.seed,
        }
    }
}

/// Gate list in application order plus relabeling records.
///
/// `m`/`n` are physical qumode indices; `sites[i]` is the lattice position
/// of physical qumode `i`. Logical input `j` is prepared on physical qumode
/// `input_map[j]`; physical output `i` carries logical output `output_map[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompiledCircuit {
    pub n: usize,
    pub device: Lattice,
    pub sites: Vec<Coord>,
    pub input_map: Vec<usize>,
    pub output_map: Vec<usize>,
    pub gates: Vec<Gate>,
    pub final_phases: Vec<f64>,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<DropoutRecord>,
}

/// `(bs_kept, ps_count)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub bs_kept: usize,
    pub ps_count: usize,
}

impl CompiledCircuit {
    pub fn from_decomposition(
        d: &Decomposition,
        keep: &[bool],
        device: Lattice,
        sites: Vec<Coord>,
        permutations: &PermutationPair,
        mode: Mode,
    ) -> Result<Self> {
        if keep.len() != d.len() {
            return Err(Error::ShapeMismatch(format!("mask of {} for {} blocks", keep.len(), d.len())));
        }
        let gates = d
            .blocks
            .iter()
            .zip(keep)
            .map(|(b, &k)| Gate { kind: GateKind::Mzi, m: b.m, n: b.n, theta: b.theta, phi: b.phi, dropped: !k })
            .collect();
        let c = Self {
            n: d.source_dim,
            device,
            sites,
            input_map: permutations.col_perm.clone(),
            output_map: permutations.row_perm.clone(),
            gates,
            final_phases: d.final_phases.clone(),
            mode,
            dropout: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Structural checks: sizes, bijective maps, sites on the device and
    /// every gate on a lattice edge.
    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        let bad = |msg: String| Err(Error::Parse(msg));
        if n < 2 {
            return bad(format!("n = {n}; need at least 2 qumodes"));
        }
        if self.device.rows == 0 || self.device.cols == 0 {
            return bad(format!("device {} has no sites", self.device));
        }
        for (name, len) in [
            ("sites", self.sites.len()),
            ("input_map", self.input_map.len()),
            ("output_map", self.output_map.len()),
            ("final_phases", self.final_phases.len()),
        ] {
            if len != n {
                return bad(format!("{name} has {len} entries, expected {n}"));
            }
        }
        check_bijection(&self.input_map).map_err(|e| Error::Parse(format!("input_map: {e}")))?;
        check_bijection(&self.output_map).map_err(|e| Error::Parse(format!("output_map: {e}")))?;
        let mut seen = std::collections::HashSet::new();
        for (i, s) in self.sites.iter().enumerate() {
            if !self.device.contains(*s) || !seen.insert(*s) {
                return bad(format!("site {i} at ({}, {}) is off-device or duplicated", s.r, s.c));
            }
        }
        for (g, gate) in self.gates.iter().enumerate() {
            if gate.m >= n || gate.n >= n || gate.m == gate.n {
                return bad(format!("gate {g} acts on ({}, {})", gate.m, gate.n));
            }
            if !gate.theta.is_finite() || !gate.phi.is_finite() {
                return bad(format!("gate {g} has a non-finite angle"));
            }
            if !self.sites[gate.m].is_adjacent(self.sites[gate.n]) {
                return bad(format!("gate {g} couples non-adjacent qumodes {} and {}", gate.m, gate.n));
            }
        }
        if self.final_phases.iter().any(|p| !p.is_finite()) {
            return bad("non-finite final phase".into());
        }
        Ok(())
    }

    pub fn permutations(&self) -> PermutationPair {
        PermutationPair { row_perm: self.output_map.clone(), col_perm: self.input_map.clone() }
    }

    /// Physical unitary `Λ · T_k ⋯ T_1` with dropped flags applied.
    pub fn physical_unitary(&self) -> UnitaryMatrix {
        self.physical_unitary_with(&self.keep_mask())
    }

    /// Physical unitary for an arbitrary keep mask.
    pub fn physical_unitary_with(&self, keep: &[bool]) -> UnitaryMatrix {
        let blocks: Vec<MziBlock> = self.gates.iter().map(Gate::block).collect();
        UnitaryMatrix::new_unchecked(circuit_matrix(
            self.n,
            blocks.iter().zip(keep).map(|(b, &k)| (b, !k)),
            &self.final_phases,
        ))
    }

    /// Logical unitary `P_rᵀ · U_circuit · P_cᵀ`.
    pub fn logical_unitary(&self) -> UnitaryMatrix {
        self.logical_unitary_with(&self.keep_mask())
    }

    pub fn logical_unitary_with(&self, keep: &[bool]) -> UnitaryMatrix {
        let phys = self.physical_unitary_with(keep);
        let m = permute_matrix(phys.matrix(), &self.permutations().inverse()).expect("validated permutations");
        UnitaryMatrix::new_unchecked(m)
    }

    /// Fidelity of the logical unitary against a reference.
    pub fn fidelity_against(&self, u: &UnitaryMatrix) -> Result<f64> {
        fidelity(&self.logical_unitary(), u)
    }

    pub fn keep_mask(&self) -> Vec<bool> {
        self.gates.iter().map(|g| !g.dropped).collect()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.gates.iter().map(|g| g.theta.abs()).collect()
    }

    /// Copy with the given keep mask.
    pub fn with_mask(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.gates.len() {
            return Err(Error::ShapeMismatch(format!("mask of {} for {} gates", keep.len(), self.gates.len())));
        }
        let mut c = self.clone();
        for (g, &k) in c.gates.iter_mut().zip(keep) {
            g.dropped = !k;
        }
        Ok(c)
    }

    /// Dropout model rebuilt from the stored record.
    pub fn dropout_model(&self) -> Result<DropoutModel> {
        let rec = self
            .dropout
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("circuit carries no dropout model".into()))?;
        let thetas = self.thetas();
        let probs = if rec.kept_count >= thetas.len() || rec.kept_count == 0 {
            vec![1.0 / thetas.len().max(1) as f64; thetas.len()]
        } else {
            build_distribution(&thetas, rec.theta_cut, rec.power_k)?
        };
        Ok(DropoutModel {
            tau: rec.tau,
            theta_cut: rec.theta_cut,
            kept_count: rec.kept_count,
            power_k: rec.power_k,
            probs,
            iterations: rec.iterations,
            mean_fidelity: rec.mean_fidelity,
            deterministic_fidelity: rec.deterministic_fidelity,
            candidates: Vec::new(),
            seed: rec.seed,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let c: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse(format!("{}: {}", e.path(), e.inner())))?;
        c.validate()?;
        Ok(c)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub fn gate_counts(c: &CompiledCircuit) -> GateCounts {
    GateCounts { bs_kept: c.gates.iter().filter(|g| !g.dropped).count(), ps_count: c.gates.len() + c.n }
}

/// Counts of `|θ|` per bin. Bin `i` is `[edges[i], edges[i+1])`, the last
/// bin is closed; values outside the range land in the first or last bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub const DEFAULT_BINS: usize = 50;

/// `bins` uniform bins over `[0, π/2]`.
pub fn default_bin_edges(bins: usize) -> Vec<f64> {
    let top = std::f64::consts::FRAC_PI_2;
    (0..=bins).map(|i| if i == bins { top } else { top * i as f64 / bins as f64 }).collect()
}

pub fn angle_histogram(thetas: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::InvalidArgument("histogram needs at least two bin edges".into()));
    }
    if edges.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for t in thetas.iter().map(|t| t.abs()) {
        // First edge strictly greater than t, minus one.
        let i = edges.partition_point(|&e| e <= t).saturating_sub(1).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { edges: edges.to_vec(), counts })
}

pub fn decomposition_histogram(d: &Decomposition, edges: &[f64]) -> Result<Histogram> {
    angle_histogram(&d.thetas(), edges)
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin_low,bin_high,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub decompose: f64,
    pub map: f64,
    pub dropout: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompileReport {
    pub mode: Mode,
    pub n: usize,
    pub device: Lattice,
    pub tau: Option<f64>,
    pub bs_total: usize,
    pub bs_kept: usize,
    pub bs_dropped: usize,
    pub ps_count: usize,
    pub small_angle_count: usize,
    pub fidelity_deterministic: f64,
    pub mean_sampled_fidelity: Option<f64>,
    pub theta_cut: Option<f64>,
    pub power_k: Option<u32>,
    pub power_k_scores: Vec<(u32, f64)>,
    pub map_k: Option<usize>,
    pub angle_histogram: Histogram,
    /// Excluded from determinism comparisons.
    pub timings: Timings,
}

impl CompileReport {
    pub fn bs_reduction(&self) -> f64 {
        self.bs_dropped as f64 / self.bs_total.max(1) as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

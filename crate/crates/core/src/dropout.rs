//! Probabilistic beamsplitter dropout.
//!
//! A deterministic angle cut fixes how many beamsplitters `M` survive at a
//! target fidelity. Each execution then keeps `M` distinct blocks drawn with
//! probability proportional to `|θ_i / Θ|^K`, with `K` chosen to maximize
//! the mean reconstruction fidelity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::decomposer::{reconstruct, Decomposition};
use crate::error::{Error, Result};
use crate::numerics::{fidelity, UnitaryMatrix};

pub const DEFAULT_ITERATIONS: usize = 50;
pub const DEFAULT_POWER_KS: [u32; 7] = [1, 2, 5, 10, 20, 50, 100];

/// Outcome of the deterministic threshold search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    /// Blocks with `|θ| < theta_cut` are dropped.
    pub theta_cut: f64,
    pub kept_count: usize,
    /// Fidelity of the deterministic cut.
    pub fidelity: f64,
}

/// Threshold plus the selection distribution for per-shot sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropoutModel {
    pub tau: f64,
    pub theta_cut: f64,
    pub kept_count: usize,
    pub power_k: u32,
    pub probs: Vec<f64>,
    pub iterations: usize,
    /// `τ_K` of the chosen `K`.
    pub mean_fidelity: f64,
    pub deterministic_fidelity: f64,
    /// `(K, τ_K)` for every candidate tried.
    pub candidates: Vec<(u32, f64)>,
    pub seed: u64,
}

/// Keep mask for `|θ| ≥ theta_cut`.
pub fn deterministic_cut(d: &Decomposition, theta_cut: f64) -> Vec<bool> {
    d.blocks.iter().map(|b| b.theta.abs() >= theta_cut).collect()
}

fn mask_fidelity(d: &Decomposition, u: &UnitaryMatrix, keep: &[bool]) -> Result<f64> {
    fidelity(&reconstruct(d, keep)?, u)
}

/// Largest angle cut whose deterministic drop still reaches `tau`.
///
/// Cuts are scanned in increasing order over the sorted `|θ|` values, stopping
/// at tie boundaries only. A coarse stride locates the first failing cut and
/// a linear pass inside the last stride pins it down; the cut just before it
/// is returned, so dropping the next group of blocks falls below `tau`.
/// Blocks with `θ = 0` are always dropped.
pub fn find_threshold(d: &Decomposition, u: &UnitaryMatrix, tau: f64) -> Result<Threshold> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau = {tau} outside (0, 1)")));
    }
    let mut sorted = d.thetas();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    let zeros = sorted.iter().take_while(|&&t| t == 0.0).count();

    // Number of dropped blocks at each admissible cut, and the cut itself.
    let mut positions: Vec<usize> = (zeros..=total)
        .filter(|&j| j == zeros || j == total || sorted[j - 1] < sorted[j])
        .collect();
    positions.dedup();
    let cut_at = |j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == total {
            sorted[total - 1].next_up()
        } else {
            sorted[j]
        }
    };
    let eval = |j: usize| mask_fidelity(d, u, &deterministic_cut(d, cut_at(j)));

    let base = eval(positions[0])?;
    if base < tau {
        return Err(Error::UnreachableFidelity { tau, best: base });
    }
    let stride = (positions.len() as f64).sqrt().ceil() as usize;
    let mut last_pass = (0usize, base);
    let mut first_fail = positions.len();
    let mut i = stride;
    while i < positions.len() {
        let f = eval(positions[i])?;
        if f < tau {
            first_fail = i;
            break;
        }
        last_pass = (i, f);
        i += stride;
    }
    let upper = first_fail.min(positions.len());
    for (i, &pos) in positions.iter().enumerate().take(upper).skip(last_pass.0 + 1) {
        let f = eval(pos)?;
        if f < tau {
            break;
        }
        last_pass = (i, f);
    }
    let j = positions[last_pass.0];
    Ok(Threshold { tau, theta_cut: cut_at(j), kept_count: total - j, fidelity: last_pass.1 })
}

/// `ln |θ_i|^K` up to a shared constant, `-∞` for zero angles.
fn log_weights(thetas: &[f64], power_k: u32) -> Vec<f64> {
    thetas.iter().map(|t| power_k as f64 * t.abs().ln()).collect()
}

/// `p_i = |θ_i/Θ|^K / Σ_j |θ_j/Θ|^K`, evaluated in log space so large `K`
/// neither overflows nor underflows.
pub fn build_distribution(thetas: &[f64], theta_cut: f64, power_k: u32) -> Result<Vec<f64>> {
    if theta_cut.is_nan() || theta_cut <= 0.0 || power_k == 0 {
        return Err(Error::InvalidArgument(format!("theta_cut = {theta_cut}, K = {power_k}")));
    }
    let lw: Vec<f64> = log_weights(thetas, power_k).iter().map(|l| l - power_k as f64 * theta_cut.ln()).collect();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::DegenerateDistribution("all rotation angles are zero".into()));
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// RNG for one independent stream under a master seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Weighted sampling of `m` distinct indices without replacement
/// (Efraimidis–Spirakis keys `u^{1/w}`, compared in log space).
fn weighted_subset(log_w: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut keys: Vec<(f64, usize)> = log_w
        .iter()
        .enumerate()
        .map(|(i, &lw)| {
            let u: f64 = rng.sample(Open01);
            // Smaller key = selected earlier.
            ((-u.ln()).ln() - lw, i)
        })
        .collect();
    let mut mask = vec![false; log_w.len()];
    if m == 0 {
        return mask;
    }
    if m < keys.len() {
        keys.select_nth_unstable_by(m - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    for &(_, i) in keys.iter().take(m) {
        mask[i] = true;
    }
    mask
}

fn log_probs(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| p.ln()).collect()
}

fn draw(log_w: &[f64], m: usize, seed: u64, stream: u64) -> Vec<bool> {
    weighted_subset(log_w, m, &mut stream_rng(seed, stream))
}

/// Chooses `K` by the mean fidelity of `iterations` sampled masks per
/// candidate; ties go to the larger `K`.
pub fn select_power_k(
    d: &Decomposition,
    u: &UnitaryMatrix,
    threshold: &Threshold,
    k_candidates: &[u32],
    iterations: usize,
    seed: u64,
) -> Result<DropoutModel> {
    if k_candidates.is_empty() || k_candidates.contains(&0) {
        return Err(Error::InvalidArgument("power K candidates must be non-empty and positive".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be positive".into()));
    }
    let thetas = d.thetas();
    let m = threshold.kept_count;
    let any_nonzero = thetas.iter().any(|&t| t > 0.0);
    // Θ cancels in p_i; fall back to the largest angle when nothing is cut.
    let cut = if threshold.theta_cut > 0.0 {
        threshold.theta_cut
    } else {
        thetas.iter().copied().fold(0.0, f64::max)
    };

    let mut candidates = Vec::with_capacity(k_candidates.len());
    let mut best: Option<(u32, f64, Vec<f64>)> = None;
    for (ki, &k) in k_candidates.iter().enumerate() {
        let probs = if any_nonzero { build_distribution(&thetas, cut, k)? } else { vec![0.0; thetas.len()] };
        let lw = log_probs(&probs);
        let mut sum = 0.0;
        for it in 0..iterations {
            let stream = ((ki as u64 + 1) << 32) | it as u64;
            let mask = if any_nonzero { draw(&lw, m, seed, stream) } else { vec![false; thetas.len()] };
            sum += mask_fidelity(d, u, &mask)?;
        }
        let mean = sum / iterations as f64;
        candidates.push((k, mean));
        let better = match &best {
            None => true,
            Some((bk, bm, _)) => mean > *bm || (mean == *bm && k > *bk),
        };
        if better {
            best = Some((k, mean, probs));
        }
    }
    let (power_k, mean_fidelity, probs) = best.expect("non-empty candidates");
    Ok(DropoutModel {
        tau: threshold.tau,
        theta_cut: threshold.theta_cut,
        kept_count: m,
        power_k,
        probs,
        iterations,
        mean_fidelity,
        deterministic_fidelity: threshold.fidelity,
        candidates,
        seed,
    })
}

/// Keep mask with exactly `kept_count` blocks for one execution.
pub fn sample_kept_set(model: &DropoutModel, seed: u64) -> Vec<bool> {
    sample_shot(model, seed, 0)
}

/// Mask for shot `shot`; shots under one seed are independent streams.
pub fn sample_shot(model: &DropoutModel, seed: u64, shot: u64) -> Vec<bool> {
    let n = model.probs.len();
    if model.kept_count >= n {
        return vec![true; n];
    }
    draw(&log_probs(&model.probs), model.kept_count, seed, shot)
}

//! Elimination engine.
//!
//! Decomposition right-multiplies a working copy of `U` by `T_{m,n}(θ,φ)^†`
//! once per step, each step zeroing entry `m` of the current row using entry
//! `n`. With `T_1 .. T_k` in elimination order, what remains is a diagonal
//! `Λ` of unit-modulus phases and
//!
//! ```text
//! U = Λ · T_k · … · T_1
//! ```
//!
//! which is also the circuit convention: blocks are listed first-applied
//! first, so a circuit `[T_1, …, T_k]` followed by the terminal phases `Λ`
//! implements `U` on the vector of annihilation operators.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, UnitaryMatrix};
use crate::topology::PatternTree;

/// Gate ordering used by compiled circuits.
pub const CIRCUIT_ORDER: &str = "gates are listed first-applied first; blocks [T_1, ..., T_k] followed by the \
     terminal phases realise U = diag(exp(i*final_phases)) * T_k * ... * T_1";

/// Off-diagonal mass tolerated after a full elimination.
pub const RESIDUAL_TOL: f64 = 1e-6;

/// One MZI: a phase shifter `R(φ)` on qumode `m` then `BS(θ, 0)` on `(m, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziBlock {
    pub m: usize,
    pub n: usize,
    pub theta: f64,
    pub phi: f64,
}

impl MziBlock {
    /// Full `N x N` matrix of `T_{m,n}(θ,φ)`, or of `T_{m,n}(0,φ)` when the
    /// beamsplitter is dropped.
    pub fn matrix(&self, dim: usize, dropped: bool) -> ComplexMatrix {
        let theta = if dropped { 0.0 } else { self.theta };
        let (s, c) = theta.sin_cos();
        let e = C64::from_polar(1.0, self.phi);
        let mut t = ComplexMatrix::identity(dim);
        t[(self.m, self.m)] = e * c;
        t[(self.m, self.n)] = C64::new(-s, 0.0);
        t[(self.n, self.m)] = e * s;
        t[(self.n, self.n)] = C64::new(c, 0.0);
        t
    }
}

/// `(θ, φ)` such that `T_{m,n}(θ,φ)^†` zeroes `u_m` against `u_n`:
/// `u_m e^{-iφ} cos θ - u_n sin θ = 0` with `θ ∈ [0, π/2]`, `φ ∈ (-π, π]`.
pub fn solve_elimination(u_m: C64, u_n: C64) -> (f64, f64) {
    let (a, b) = (u_m.norm(), u_n.norm());
    if a == 0.0 {
        return (0.0, 0.0);
    }
    if b == 0.0 {
        return (FRAC_PI_2, 0.0);
    }
    (a.atan2(b), wrap_phase(u_m.arg() - u_n.arg()))
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Column update `W ← W · T_{m,n}(θ,φ)^†` restricted to rows `0..rows`.
pub(crate) fn apply_t_dagger(w: &mut ComplexMatrix, rows: usize, m: usize, n: usize, theta: f64, phi: f64) {
    let (s, c) = theta.sin_cos();
    let e = C64::from_polar(1.0, -phi);
    let stride = w.n_cols();
    let data = w.data_mut();
    for r in 0..rows {
        let base = r * stride;
        let xm = data[base + m];
        let xn = data[base + n];
        data[base + m] = e * c * xm - s * xn;
        data[base + n] = e * s * xm + c * xn;
    }
}

/// One elimination: zero `U[row][m]` using `U[row][n]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub row: usize,
    pub m: usize,
    pub n: usize,
}

/// Ordering of a node's children when scheduling a row.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChildOrder {
    /// Main-path predecessor first (so the node has accumulated amplitude
    /// before it absorbs its branches), then short and long branches.
    #[default]
    MainFirst,
    /// Short branch, long branch, then the main-path child.
    BranchesFirst,
}

/// Ordered elimination steps for an `N`-qumode pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct EliminationPlan {
    pub steps: Vec<EliminationStep>,
    pub tree: PatternTree,
    pub n_qumodes: usize,
}

/// Schedules every row with the default [`ChildOrder`].
pub fn build_plan(tree: &PatternTree) -> Result<EliminationPlan> {
    build_plan_with(tree, ChildOrder::default())
}

/// For each row `r` from `N` down to 2, re-roots the subtree on labels
/// `{1..r}` at node `r` and emits its edges in post-order, children before
/// parents.
pub fn build_plan_with(tree: &PatternTree, order: ChildOrder) -> Result<EliminationPlan> {
    let n = tree.len();
    let adj = tree.adjacency();
    for (v, nbrs) in adj.iter().enumerate().skip(1) {
        if !nbrs.iter().any(|&u| u < v) {
            return Err(Error::InvalidPattern(format!("label prefix {{1..{}}} is disconnected", v + 1)));
        }
    }
    let main = tree.main_mask();
    let mut steps = Vec::with_capacity(n * n.saturating_sub(1) / 2);

    let mut parent = vec![usize::MAX; n];
    let mut size = vec![0usize; n];
    for row in (1..n).rev() {
        let limit = row + 1;
        // Pre-order from the root, then sizes bottom-up.
        let mut pre = Vec::with_capacity(limit);
        let mut stack = vec![row];
        parent[row] = usize::MAX;
        while let Some(v) = stack.pop() {
            pre.push(v);
            for &w in &adj[v] {
                if w < limit && w != parent[v] {
                    parent[w] = v;
                    stack.push(w);
                }
            }
        }
        debug_assert_eq!(pre.len(), limit);
        for &v in &pre {
            size[v] = 1;
        }
        for &v in pre.iter().rev() {
            if parent[v] != usize::MAX {
                size[parent[v]] += size[v];
            }
        }
        // Post-order with ordered children.
        let key = |w: usize| {
            let rank = match (order, main[w]) {
                (ChildOrder::MainFirst, true) | (ChildOrder::BranchesFirst, false) => 0,
                _ => 1,
            };
            (rank, size[w], w)
        };
        let mut stack: Vec<(usize, bool)> = vec![(row, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                if v != row {
                    steps.push(EliminationStep { row, m: v, n: parent[v] });
                }
                continue;
            }
            stack.push((v, true));
            let mut kids: Vec<usize> =
                adj[v].iter().copied().filter(|&w| w < limit && w != parent[v]).collect();
            kids.sort_by_key(|&w| key(w));
            for &w in kids.iter().rev() {
                stack.push((w, false));
            }
        }
    }
    Ok(EliminationPlan { steps, tree: tree.clone(), n_qumodes: n })
}

/// MZI blocks in elimination order plus the terminal phases `arg λ_kk`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub blocks: Vec<MziBlock>,
    pub final_phases: Vec<f64>,
    pub source_dim: usize,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.theta.abs()).collect()
    }

    /// Number of blocks with `|θ| < cut`.
    pub fn count_below(&self, cut: f64) -> usize {
        self.blocks.iter().filter(|b| b.theta.abs() < cut).count()
    }
}

/// Runs `plan` on `u`.
pub fn decompose(u: &UnitaryMatrix, plan: &EliminationPlan) -> Result<Decomposition> {
    let n = u.dim();
    if n != plan.n_qumodes {
        return Err(Error::ShapeMismatch(format!("{n}-dim unitary with a {}-qumode plan", plan.n_qumodes)));
    }
    let mut w = u.matrix().clone();
    let mut blocks = Vec::with_capacity(plan.steps.len());
    for step in &plan.steps {
        let (theta, phi) = solve_elimination(w[(step.row, step.m)], w[(step.row, step.n)]);
        // Rows below `step.row` are already reduced to their diagonal entry.
        apply_t_dagger(&mut w, step.row + 1, step.m, step.n, theta, phi);
        blocks.push(MziBlock { m: step.m, n: step.n, theta, phi });
    }

    let mut residual: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let z = w[(r, c)];
            let off = if r == c { (z.norm() - 1.0).abs() } else { z.norm() };
            residual = residual.max(off);
        }
    }
    if residual > RESIDUAL_TOL {
        return Err(Error::ResidualMass { residual });
    }
    let final_phases = (0..n).map(|k| w[(k, k)].arg()).collect();
    Ok(Decomposition { blocks, final_phases, source_dim: n })
}

/// `Λ · T_k · … · T_1` where blocks with `keep[i] == false` contribute
/// `T(0, φ_i)`: the beamsplitter is removed, the phase shifter stays.
pub fn reconstruct(d: &Decomposition, keep: &[bool]) -> Result<UnitaryMatrix> {
    if keep.len() != d.blocks.len() {
        return Err(Error::ShapeMismatch(format!("mask of {} for {} blocks", keep.len(), d.blocks.len())));
    }
    Ok(UnitaryMatrix::new_unchecked(circuit_matrix(
        d.source_dim,
        d.blocks.iter().zip(keep).map(|(b, &k)| (b, !k)),
        &d.final_phases,
    )))
}

/// Reconstruction with every block kept.
pub fn reconstruct_all(d: &Decomposition) -> UnitaryMatrix {
    reconstruct(d, &vec![true; d.blocks.len()]).expect("mask length matches")
}

/// Unitary of a gate list in application order, `(block, dropped)` pairs,
/// followed by terminal phases.
pub fn circuit_matrix<'a, I>(dim: usize, gates: I, final_phases: &[f64]) -> ComplexMatrix
where
    I: DoubleEndedIterator<Item = (&'a MziBlock, bool)>,
{
    let mut acc = ComplexMatrix::phase_diagonal(final_phases);
    debug_assert_eq!(acc.n_rows(), dim);
    for (b, dropped) in gates.rev() {
        let theta = if dropped { 0.0 } else { b.theta };
        let (s, c) = theta.sin_cos();
        let e = C64::from_polar(1.0, b.phi);
        // acc ← acc · T_{m,n}
        acc.mix_columns(b.m, b.n, e * c, C64::new(-s, 0.0), e * s, C64::new(c, 0.0));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fidelity, haar_random_unitary, matmul};
    use crate::topology::{bfs_label, build_chain_pattern, device_pattern, zigzag_embed, Lattice};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// Applies `T(θ,φ)^†` to a two-entry row directly from the matrix entries.
    fn rotate_pair(u_m: C64, u_n: C64, theta: f64, phi: f64) -> (C64, C64) {
        let b = MziBlock { m: 0, n: 1, theta, phi };
        let td = b.matrix(2, false).dagger();
        let row = ComplexMatrix::from_rows(&[vec![u_m, u_n]]).unwrap();
        let out = matmul(&row, &td).unwrap();
        (out[(0, 0)], out[(0, 1)])
    }

    #[test]
    fn solve_equal_real_amplitudes() {
        let (t, p) = solve_elimination(c(0.5, 0.0), c(0.5, 0.0));
        assert!((t - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn solve_degenerate_inputs() {
        assert_eq!(solve_elimination(c(0.0, 0.0), c(0.3, -0.2)), (0.0, 0.0));
        assert_eq!(solve_elimination(c(0.0, 0.0), c(0.0, 0.0)), (0.0, 0.0));
        assert_eq!(solve_elimination(c(0.1, 0.4), c(0.0, 0.0)), (FRAC_PI_2, 0.0));
    }

    #[test]
    fn solve_complex_case_zeroes_entry() {
        let (um, un) = (c(0.0, 0.3), c(0.4, 0.0));
        let (t, p) = solve_elimination(um, un);
        assert!((t - 0.75f64.atan()).abs() < 1e-15);
        assert!((t - 0.6435011087932844).abs() < 1e-15);
        assert!((p - FRAC_PI_2).abs() < 1e-15);
        let (m_after, n_after) = rotate_pair(um, un, t, p);
        assert!(m_after.norm() < 1e-12);
        assert!((n_after.norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_phase(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn chain_plan_order() {
        let plan = build_plan(&build_chain_pattern(3).unwrap()).unwrap();
        let s = |row, m, n| EliminationStep { row, m, n };
        assert_eq!(plan.steps, vec![s(2, 0, 1), s(2, 1, 2), s(1, 0, 1)]);
    }

    #[test]
    fn template_row_starts_with_start_branches() {
        // 3 x 8 pattern: labels 2 and 3 are the start's branches, 4 is the
        // next main-path node, 5 and 6 are its branches.
        let tree = bfs_label(&zigzag_embed(&Lattice::new(3, 8).unwrap()).unwrap());
        let plan = build_plan(&tree).unwrap();
        let first: Vec<(usize, usize)> = plan.steps[..6].iter().map(|s| (s.m, s.n)).collect();
        assert_eq!(first, vec![(1, 0), (2, 0), (0, 3), (4, 3), (5, 3), (3, 6)]);
    }

    #[test]
    fn branches_first_absorbs_branches_before_transfer() {
        let tree = bfs_label(&zigzag_embed(&Lattice::new(3, 8).unwrap()).unwrap());
        let plan = build_plan_with(&tree, ChildOrder::BranchesFirst).unwrap();
        // Row 24 is rooted at a branch (label 24) of main node 22.
        let first = plan.steps[0];
        assert_eq!((first.row, first.m, first.n), (23, 22, 21));
        let pos = |m: usize, n: usize| plan.steps.iter().position(|s| s.row == 23 && s.m == m && s.n == n).unwrap();
        assert!(pos(4, 3) < pos(0, 3));
    }

    /// Checks, per row segment, that an edge `(m, n)` appears only after every
    /// step whose accumulator is `m`, and that each row touches exactly the
    /// `row` edges of its re-rooted prefix tree.
    fn check_dependencies(plan: &EliminationPlan) {
        let n = plan.n_qumodes;
        assert_eq!(plan.steps.len(), n * (n - 1) / 2);
        for row in 1..n {
            let seg: Vec<&EliminationStep> = plan.steps.iter().filter(|s| s.row == row).collect();
            assert_eq!(seg.len(), row);
            for (i, s) in seg.iter().enumerate() {
                assert!(s.m <= row && s.n <= row);
                for later in &seg[i + 1..] {
                    assert_ne!(later.n, s.m, "row {row}: {} feeds {} after being eliminated", later.m, s.m);
                }
                assert!(seg[..i].iter().all(|p| p.m != s.m), "eliminated twice");
            }
            assert!(seg.iter().all(|s| s.m != row), "root eliminated in row {row}");
        }
    }

    #[test]
    fn dependencies_for_all_small_trees() {
        for (r, cc) in [(2, 3), (3, 2), (2, 2), (1, 6), (3, 3)] {
            let dev = Lattice::new(r, cc).unwrap();
            let tree = device_pattern(&dev, 6.min(dev.node_count())).unwrap();
            for order in [ChildOrder::MainFirst, ChildOrder::BranchesFirst] {
                check_dependencies(&build_plan_with(&tree, order).unwrap());
            }
        }
        for n in [6, 24, 36] {
            let tree = device_pattern(&Lattice::new(6, 6).unwrap(), n).unwrap();
            check_dependencies(&build_plan(&tree).unwrap());
        }
    }

    #[test]
    fn plan_edges_are_lattice_adjacent() {
        let tree = device_pattern(&Lattice::new(5, 7).unwrap(), 30).unwrap();
        let plan = build_plan(&tree).unwrap();
        for s in &plan.steps {
            assert!(tree.coord(s.m).is_adjacent(tree.coord(s.n)));
        }
    }

    #[test]
    fn block_count_for_twenty_four() {
        let tree = device_pattern(&Lattice::new(6, 6).unwrap(), 24).unwrap();
        let plan = build_plan(&tree).unwrap();
        let u = haar_random_unitary(24, 5).unwrap();
        let d = decompose(&u, &plan).unwrap();
        assert_eq!(d.len(), 276);
    }

    #[test]
    fn identity_decomposes_trivially() {
        let plan = build_plan(&device_pattern(&Lattice::new(3, 3).unwrap(), 9).unwrap()).unwrap();
        let d = decompose(&UnitaryMatrix::identity(9), &plan).unwrap();
        assert!(d.blocks.iter().all(|b| b.theta == 0.0 && b.phi == 0.0));
        assert!(d.final_phases.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn haar_round_trip() {
        let plan = build_plan(&device_pattern(&Lattice::new(3, 3).unwrap(), 8).unwrap()).unwrap();
        let u = haar_random_unitary(8, 21).unwrap();
        let d = decompose(&u, &plan).unwrap();
        let back = reconstruct_all(&d);
        assert!(fidelity(&back, &u).unwrap() >= 1.0 - 1e-9);
        assert!(back.matrix().max_abs_diff(u.matrix()) < 1e-10);
    }

    #[test]
    fn dimension_mismatch() {
        let plan = build_plan(&build_chain_pattern(4).unwrap()).unwrap();
        assert!(matches!(decompose(&UnitaryMatrix::identity(5), &plan), Err(Error::ShapeMismatch(_))));
        let d = decompose(&UnitaryMatrix::identity(4), &plan).unwrap();
        assert!(reconstruct(&d, &[true; 3]).is_err());
    }

    #[test]
    fn all_dropped_with_zero_phases_is_identity() {
        let d = Decomposition {
            blocks: vec![
                MziBlock { m: 0, n: 1, theta: 0.4, phi: 0.0 },
                MziBlock { m: 1, n: 2, theta: 1.1, phi: 0.0 },
            ],
            final_phases: vec![0.0; 3],
            source_dim: 3,
        };
        let r = reconstruct(&d, &[false, false]).unwrap();
        assert_eq!(*r.matrix(), ComplexMatrix::identity(3));
    }

    /// Independent oracle: dense product of full block matrices.
    fn product_oracle(d: &Decomposition, keep: &[bool]) -> ComplexMatrix {
        let n = d.source_dim;
        let mut acc = ComplexMatrix::phase_diagonal(&d.final_phases);
        for (b, &k) in d.blocks.iter().zip(keep).rev() {
            acc = matmul(&acc, &b.matrix(n, !k)).unwrap();
        }
        acc
    }

    #[test]
    fn single_drop_matches_dense_oracle() {
        let plan = build_plan(&device_pattern(&Lattice::new(2, 2).unwrap(), 4).unwrap()).unwrap();
        let u = haar_random_unitary(4, 13).unwrap();
        let d = decompose(&u, &plan).unwrap();
        let smallest = (0..d.len()).min_by(|&a, &b| d.blocks[a].theta.total_cmp(&d.blocks[b].theta)).unwrap();
        let mut keep = vec![true; d.len()];
        keep[smallest] = false;
        let fast = reconstruct(&d, &keep).unwrap();
        let slow = UnitaryMatrix::new(product_oracle(&d, &keep)).unwrap();
        assert!(fast.matrix().max_abs_diff(slow.matrix()) < 1e-12);
        let (f_fast, f_slow) = (fidelity(&fast, &u).unwrap(), fidelity(&slow, &u).unwrap());
        assert!((f_fast - f_slow).abs() < 1e-12);
    }

    #[test]
    fn circuit_order_two_blocks_by_hand() {
        let b1 = MziBlock { m: 0, n: 1, theta: 0.3, phi: 0.2 };
        let b2 = MziBlock { m: 1, n: 0, theta: 1.0, phi: -0.7 };
        let phases = [0.4, -1.2];
        let got = circuit_matrix(2, [(&b1, false), (&b2, false)].into_iter(), &phases);
        // Λ · T2 · T1, written out with explicit 2x2 products.
        let t1 = b1.matrix(2, false);
        let t2 = b2.matrix(2, false);
        let lam = ComplexMatrix::phase_diagonal(&phases);
        let mut expected = ComplexMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut z = C64::new(0.0, 0.0);
                for k in 0..2 {
                    for l in 0..2 {
                        z += lam[(i, k)] * t2[(k, l)] * t1[(l, j)];
                    }
                }
                expected[(i, j)] = z;
            }
        }
        assert!(got.max_abs_diff(&expected) < 1e-15);

        let single = circuit_matrix(2, [(&b1, false)].into_iter(), &phases);
        assert!(single.max_abs_diff(&matmul(&lam, &t1).unwrap()) < 1e-15);
        let empty = circuit_matrix(2, std::iter::empty(), &phases);
        assert_eq!(empty, lam);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn elimination_step_properties(
            re_m in -1.0f64..1.0, im_m in -1.0f64..1.0,
            re_n in -1.0f64..1.0, im_n in -1.0f64..1.0,
        ) {
            let (um, un) = (c(re_m, im_m), c(re_n, im_n));
            let (t, p) = solve_elimination(um, un);
            prop_assert!((0.0..=FRAC_PI_2).contains(&t));
            prop_assert!(p > -PI && p <= PI);
            let (m_after, n_after) = rotate_pair(um, un, t, p);
            prop_assert!(m_after.norm() < 1e-10);
            prop_assert!((n_after.norm_sqr() - (um.norm_sqr() + un.norm_sqr())).abs() < 1e-10);
            if un.norm() > 1e-12 {
                prop_assert!((t.tan() - um.norm() / un.norm()).abs() < 1e-8 * (1.0 + t.tan()));
            }
        }

        #[test]
        fn decomposition_round_trips(seed in any::<u64>(), n in 2usize..14) {
            let dev = Lattice::new(3, 5).unwrap();
            let plan = build_plan(&device_pattern(&dev, n).unwrap()).unwrap();
            let u = haar_random_unitary(n, seed).unwrap();
            let d = decompose(&u, &plan).unwrap();
            prop_assert_eq!(d.len(), n * (n - 1) / 2);
            prop_assert!(d.blocks.iter().all(|b| (0.0..=FRAC_PI_2).contains(&b.theta)));
            prop_assert!(fidelity(&reconstruct_all(&d), &u).unwrap() >= 1.0 - 1e-9);
        }
    }
}

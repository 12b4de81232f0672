//! Logical-to-physical qumode mapping via row and column permutations.
//!
//! Relabeling inputs and outputs costs no gates, so the compiler is free to
//! decompose `U_per = P_r U P_c` instead of `U`. The column permutation
//! pulls columns with large amplitudes onto the main path of the pattern,
//! the row permutation puts the rows with the most main-path weight at the
//! bottom, where elimination starts.

use serde::{Deserialize, Serialize};

use crate::decomposer::{decompose, Decomposition, EliminationPlan};
use crate::error::{Error, Result};
use crate::numerics::{apply_permutations, invert_permutation, PermutationPair, UnitaryMatrix};
use crate::topology::PatternTree;

/// Angle below which a beamsplitter counts as small when ranking mappings.
pub const SMALL_ANGLE: f64 = 0.1;

/// Column groups: region 0 is the main path in path order, then one region
/// per main-path node that carries branches, ordered from the start point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: Vec<Vec<usize>>,
}

impl RegionPartition {
    pub fn main(&self) -> &[usize] {
        &self.regions[0]
    }

    pub fn total_columns(&self) -> usize {
        self.regions.iter().map(Vec::len).sum()
    }
}

pub fn partition_columns(tree: &PatternTree) -> RegionPartition {
    let attach = tree.attachment();
    let main = tree.main_mask();
    let mut regions = vec![tree.main_path().to_vec()];
    for &m in tree.main_path() {
        let group: Vec<usize> = (0..tree.len()).filter(|&v| !main[v] && attach[v] == m).collect();
        if !group.is_empty() {
            regions.push(group);
        }
    }
    RegionPartition { regions }
}

/// `α_j = Σ_{c ∈ region} |U[j, c]|²` for every row `j`.
pub fn row_region_weights(u: &UnitaryMatrix, region: &[usize]) -> Vec<f64> {
    (0..u.dim()).map(|r| region.iter().map(|&c| u[(r, c)].norm_sqr()).sum()).collect()
}

/// `k`-th largest entry (1-based).
pub fn kth_largest(values: &[f64], k: usize) -> f64 {
    assert!(k >= 1 && k <= values.len(), "rank {k} out of 1..={}", values.len());
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Squared moduli, one vector per column.
fn column_weights(u: &UnitaryMatrix) -> Vec<Vec<f64>> {
    let n = u.dim();
    (0..n).map(|c| (0..n).map(|r| u[(r, c)].norm_sqr()).collect()).collect()
}

/// Greedy column exchange.
///
/// Regions are processed front to back. For each region, every column of a
/// later region is tried against every column of the current region, and a
/// swap is kept when it strictly increases the `map_k`-th largest row weight
/// over the current region. Returns the permuted matrix and the column
/// permutation in [`PermutationPair`] convention (`perm[logical] = slot`).
pub fn greedy_column_exchange(
    u: &UnitaryMatrix,
    partition: &RegionPartition,
    map_k: usize,
) -> Result<(UnitaryMatrix, Vec<usize>)> {
    let n = u.dim();
    check_partition(partition, n)?;
    if map_k == 0 || map_k > n {
        return Err(Error::InvalidArgument(format!("map_k = {map_k} outside 1..={n}")));
    }
    let weights = column_weights(u);
    // slot_content[slot] = logical column currently sitting in that slot.
    let mut slot_content: Vec<usize> = (0..n).collect();

    for (i, region) in partition.regions.iter().enumerate() {
        let later: Vec<usize> = partition.regions[i + 1..].iter().flatten().copied().collect();
        if later.is_empty() {
            break;
        }
        let mut alpha = vec![0.0; n];
        for &slot in region {
            for (a, w) in alpha.iter_mut().zip(&weights[slot_content[slot]]) {
                *a += w;
            }
        }
        let mut indicator = kth_largest(&alpha, map_k);
        let mut trial = vec![0.0; n];
        for &outside in &later {
            for &inside in region {
                let w_in = &weights[slot_content[inside]];
                let w_out = &weights[slot_content[outside]];
                for r in 0..n {
                    trial[r] = alpha[r] - w_in[r] + w_out[r];
                }
                let candidate = kth_largest(&trial, map_k);
                if candidate > indicator {
                    indicator = candidate;
                    std::mem::swap(&mut alpha, &mut trial);
                    slot_content.swap(inside, outside);
                }
            }
        }
    }

    let col_perm = invert_permutation(&slot_content);
    let p = PermutationPair { row_perm: (0..n).collect(), col_perm: col_perm.clone() };
    Ok((apply_permutations(u, &p)?, col_perm))
}

/// Stable sort of rows by main-path weight, ascending, so the heaviest row is
/// at the bottom. Returns the reordered matrix and `row_perm` with
/// `row_perm[i]` = source row now at position `i`.
pub fn row_reorder(u: &UnitaryMatrix, region0: &[usize]) -> Result<(UnitaryMatrix, Vec<usize>)> {
    let alpha = row_region_weights(u, region0);
    let mut order: Vec<usize> = (0..u.dim()).collect();
    order.sort_by(|&a, &b| alpha[a].total_cmp(&alpha[b]));
    let p = PermutationPair { row_perm: order.clone(), col_perm: (0..u.dim()).collect() };
    Ok((apply_permutations(u, &p)?, order))
}

/// Options for [`map_unitary`] and [`select_map_k`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapperOptions {
    /// After the greedy pass, reorder main-path columns so the ones with the
    /// most weight in the first-eliminated rows sit closest to the start.
    pub sort_main_path: bool,
}

/// A chosen relabeling and its effect.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingResult {
    pub permutations: PermutationPair,
    pub permuted_unitary: UnitaryMatrix,
    pub map_k: usize,
    /// `map_k`-th largest main-path row weight of `permuted_unitary`.
    pub indicator_value: f64,
    pub small_angle_count: usize,
    pub decomposition: Decomposition,
}

/// Greedy exchange plus row reordering for one `map_k`.
pub fn map_unitary(
    u: &UnitaryMatrix,
    partition: &RegionPartition,
    map_k: usize,
    options: MapperOptions,
) -> Result<(PermutationPair, UnitaryMatrix)> {
    let n = u.dim();
    let (_, mut col_perm) = greedy_column_exchange(u, partition, map_k)?;
    if options.sort_main_path {
        sort_main_columns(u, partition, map_k, &mut col_perm);
    }
    let cols_only = PermutationPair { row_perm: (0..n).collect(), col_perm: col_perm.clone() };
    let (_, row_perm) = row_reorder(&apply_permutations(u, &cols_only)?, partition.main())?;
    let p = PermutationPair::new(row_perm, col_perm)?;
    let per = apply_permutations(u, &p)?;
    Ok((p, per))
}

fn sort_main_columns(u: &UnitaryMatrix, partition: &RegionPartition, map_k: usize, col_perm: &mut [usize]) {
    let n = u.dim();
    let slot_content = invert_permutation(col_perm);
    let main = partition.main();
    let mut alpha = vec![0.0; n];
    for &slot in main {
        for (r, a) in alpha.iter_mut().enumerate() {
            *a += u[(r, slot_content[slot])].norm_sqr();
        }
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]));
    let heavy = &rows[..map_k];
    let mut logical: Vec<usize> = main.iter().map(|&s| slot_content[s]).collect();
    let score = |c: usize| heavy.iter().map(|&r| u[(r, c)].norm_sqr()).sum::<f64>();
    logical.sort_by(|&a, &b| score(b).total_cmp(&score(a)));
    for (&slot, &c) in main.iter().zip(&logical) {
        col_perm[c] = slot;
    }
}

/// Default `map_k` candidates `{⌊N/3⌋, ⌊N/2⌋, ⌊2N/3⌋}`, deduplicated, at least 1.
pub fn default_map_k_candidates(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [n / 3, n / 2, 2 * n / 3].into_iter().map(|k| k.clamp(1, n.max(1))).collect();
    ks.dedup();
    ks
}

/// Tries each `map_k` and keeps the mapping whose decomposition has the most
/// blocks with `|θ| < 0.1`; ties go to the smaller `map_k`.
pub fn select_map_k(
    u: &UnitaryMatrix,
    partition: &RegionPartition,
    plan: &EliminationPlan,
    candidates: &[usize],
    options: MapperOptions,
) -> Result<MappingResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no map_k candidates".into()));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<MappingResult> = None;
    for k in sorted {
        let (permutations, permuted_unitary) = map_unitary(u, partition, k, options)?;
        let decomposition = decompose(&permuted_unitary, plan)?;
        let small_angle_count = decomposition.count_below(SMALL_ANGLE);
        let indicator_value = kth_largest(&row_region_weights(&permuted_unitary, partition.main()), k);
        if best.as_ref().is_none_or(|b| small_angle_count > b.small_angle_count) {
            best = Some(MappingResult {
                permutations,
                permuted_unitary,
                map_k: k,
                indicator_value,
                small_angle_count,
                decomposition,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// `(input_map, output_map)`: logical input `i` is prepared on physical
/// qumode `input_map[i]`, and physical output `i` carries logical output
/// `output_map[i]`.
pub fn relabel_records(p: &PermutationPair) -> (Vec<usize>, Vec<usize>) {
    (p.col_perm.clone(), p.row_perm.clone())
}

fn check_partition(partition: &RegionPartition, n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &c in partition.regions.iter().flatten() {
        if c >= n || std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidArgument(format!("regions do not partition 0..{n}")));
        }
    }
    if seen.iter().any(|s| !s) || partition.regions.first().is_none_or(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("regions do not partition 0..{n}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::{build_plan, solve_elimination, MziBlock};
    use crate::numerics::{haar_random_unitary, ComplexMatrix};
    use crate::topology::{build_chain_pattern, device_pattern, Lattice};
    use num_complex::Complex64 as C64;
    use proptest::prelude::*;

    fn abs(z: C64) -> f64 {
        z.norm()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn partition_three_by_eight() {
        let tree = device_pattern(&Lattice::new(3, 8).unwrap(), 24).unwrap();
        let p = partition_columns(&tree);
        assert_eq!(p.main().len(), 8);
        assert_eq!(p.regions[1..].iter().map(Vec::len).sum::<usize>(), 16);
        assert!(p.regions[1..].iter().all(|r| (1..=2).contains(&r.len())));
        assert_eq!(p.total_columns(), 24);
        check_partition(&p, 24).unwrap();
    }

    #[test]
    fn partition_chain_single_region() {
        let p = partition_columns(&build_chain_pattern(7).unwrap());
        assert_eq!(p.regions, vec![(0..7).collect::<Vec<_>>()]);
    }

    #[test]
    fn partition_sums_to_n() {
        for n in [5, 13, 24, 36] {
            let tree = device_pattern(&Lattice::new(6, 6).unwrap(), n).unwrap();
            let p = partition_columns(&tree);
            assert_eq!(p.total_columns(), n);
            check_partition(&p, n).unwrap();
        }
    }

    #[test]
    fn weights_basic_cases() {
        let id = UnitaryMatrix::identity(5);
        assert!(row_region_weights(&id, &[0, 1, 2, 3, 4]).iter().all(|&a| a == 1.0));
        let u = haar_random_unitary(6, 3).unwrap();
        let w = row_region_weights(&u, &[4]);
        for r in 0..6 {
            assert_eq!(w[r], u[(r, 4)].norm_sqr());
        }
        let total: f64 = row_region_weights(&u, &[0, 2, 5]).iter().sum();
        assert!((total - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kth_largest_ranks() {
        let v = [0.1, 0.9, 0.5, 0.7];
        assert_eq!(kth_largest(&v, 1), 0.9);
        assert_eq!(kth_largest(&v, 2), 0.7);
        assert_eq!(kth_largest(&v, 4), 0.1);
    }

    #[test]
    fn greedy_keeps_optimal_layout() {
        let tree = device_pattern(&Lattice::new(2, 3).unwrap(), 6).unwrap();
        let p = partition_columns(&tree);
        for k in 1..=6 {
            let (_, perm) = greedy_column_exchange(&UnitaryMatrix::identity(6), &p, k).unwrap();
            assert_eq!(perm, (0..6).collect::<Vec<_>>());
        }
        assert!(greedy_column_exchange(&UnitaryMatrix::identity(6), &p, 0).is_err());
        assert!(greedy_column_exchange(&UnitaryMatrix::identity(6), &p, 7).is_err());
    }

    /// Column 5 is `e_0`; the other five columns are a 5-point DFT on rows 1..5.
    fn toy_unitary() -> UnitaryMatrix {
        let mut m = ComplexMatrix::zeros(6, 6);
        m[(0, 5)] = c(1.0, 0.0);
        for (j, col) in [0usize, 1, 2, 3, 4].into_iter().enumerate() {
            for r in 0..5 {
                let ang = 2.0 * std::f64::consts::PI * (r * j) as f64 / 5.0;
                m[(r + 1, col)] = C64::from_polar(1.0 / 5f64.sqrt(), ang);
            }
        }
        UnitaryMatrix::new(m).unwrap()
    }

    #[test]
    fn greedy_pulls_large_column_onto_main_path() {
        let tree = device_pattern(&Lattice::new(2, 3).unwrap(), 6).unwrap();
        let p = partition_columns(&tree);
        let u = toy_unitary();
        assert!(!p.main().contains(&5));
        let k = 1;
        let before = kth_largest(&row_region_weights(&u, p.main()), k);

        // Exhaustive single-swap oracle.
        let outside: Vec<usize> = (0..6).filter(|c| !p.main().contains(c)).collect();
        let mut best = before;
        for &a in p.main() {
            for &b in &outside {
                let region: Vec<usize> = p.main().iter().map(|&x| if x == a { b } else { x }).collect();
                best = best.max(kth_largest(&row_region_weights(&u, &region), k));
            }
        }
        assert!(best > before);

        let (per, perm) = greedy_column_exchange(&u, &p, k).unwrap();
        assert!(p.main().contains(&perm[5]), "column 5 should land on the main path");
        let after = kth_largest(&row_region_weights(&per, p.main()), k);
        assert!((after - best).abs() < 1e-12);
    }

    #[test]
    fn row_reorder_cases() {
        let n = 4;
        // Diagonal-in-region weights: identity with region {0,1} gives
        // alpha = [1,1,0,0]; reversing puts rows 2,3 first.
        let (_, perm) = row_reorder(&UnitaryMatrix::identity(n), &[2, 3]).unwrap();
        assert_eq!(perm, vec![0, 1, 2, 3]);
        let (_, perm) = row_reorder(&UnitaryMatrix::identity(n), &[0, 1]).unwrap();
        assert_eq!(perm, vec![2, 3, 0, 1]);

        // Strictly decreasing weights get fully reversed.
        let mut m = ComplexMatrix::zeros(3, 3);
        let w: [f64; 3] = [0.6, 0.3, 0.1];
        // Column 0 carries the weights; columns 1, 2 complete an orthonormal basis.
        let v0 = [w[0].sqrt(), w[1].sqrt(), w[2].sqrt()];
        let v1 = [w[1].sqrt(), -w[0].sqrt(), 0.0];
        let nv1 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
        let v1 = [v1[0] / nv1, v1[1] / nv1, 0.0];
        let v2 = [
            v0[1] * v1[2] - v0[2] * v1[1],
            v0[2] * v1[0] - v0[0] * v1[2],
            v0[0] * v1[1] - v0[1] * v1[0],
        ];
        for r in 0..3 {
            m[(r, 0)] = c(v0[r], 0.0);
            m[(r, 1)] = c(v1[r], 0.0);
            m[(r, 2)] = c(v2[r], 0.0);
        }
        let u = UnitaryMatrix::new(m).unwrap();
        let (_, perm) = row_reorder(&u, &[0]).unwrap();
        assert_eq!(perm, vec![2, 1, 0]);
    }

    #[test]
    fn row_reorder_matches_sort_oracle() {
        let u = haar_random_unitary(8, 17).unwrap();
        let region = [1, 4, 6];
        let alpha = row_region_weights(&u, &region);
        let (reordered, perm) = row_reorder(&u, &region).unwrap();
        let mut oracle: Vec<(f64, usize)> = alpha.iter().copied().zip(0..).collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        assert_eq!(perm, oracle.iter().map(|x| x.1).collect::<Vec<_>>());
        let after = row_region_weights(&reordered, &region);
        let max = after.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(after[7], max);
    }

    #[test]
    fn default_candidates() {
        assert_eq!(default_map_k_candidates(24), vec![8, 12, 16]);
        assert_eq!(default_map_k_candidates(2), vec![1]);
    }

    #[test]
    fn select_map_k_single_and_best() {
        let dev = Lattice::new(6, 6).unwrap();
        let tree = device_pattern(&dev, 24).unwrap();
        let p = partition_columns(&tree);
        let plan = build_plan(&tree).unwrap();
        let u = haar_random_unitary(24, 4).unwrap();
        let one = select_map_k(&u, &p, &plan, &[12], MapperOptions::default()).unwrap();
        assert_eq!(one.map_k, 12);

        let cands = default_map_k_candidates(24);
        let best = select_map_k(&u, &p, &plan, &cands, MapperOptions::default()).unwrap();
        for &k in &cands {
            let r = select_map_k(&u, &p, &plan, &[k], MapperOptions::default()).unwrap();
            assert!(best.small_angle_count >= r.small_angle_count);
        }
        assert!(select_map_k(&u, &p, &plan, &[], MapperOptions::default()).is_err());
    }

    #[test]
    fn relabel_records_definition() {
        let id = PermutationPair::identity(4);
        assert_eq!(relabel_records(&id), ((0..4).collect(), (0..4).collect()));
        let cyc = PermutationPair::new(vec![0, 1, 2], vec![1, 2, 0]).unwrap();
        let (input_map, output_map) = relabel_records(&cyc);
        assert_eq!(input_map, vec![1, 2, 0]);
        assert_eq!(output_map, vec![0, 1, 2]);
    }

    #[test]
    fn mapping_semantics_exact() {
        let dev = Lattice::new(3, 8).unwrap();
        let tree = device_pattern(&dev, 24).unwrap();
        let part = partition_columns(&tree);
        let u = haar_random_unitary(24, 9).unwrap();
        for sort_main_path in [false, true] {
            let (p, per) = map_unitary(&u, &part, 12, MapperOptions { sort_main_path }).unwrap();
            // U = P_r^T U_per P_c^T, entry by entry.
            for i in 0..24 {
                for j in 0..24 {
                    assert_eq!(per[(i, p.col_perm[j])], u[(p.row_perm[i], j)]);
                }
            }
            assert_eq!(apply_permutations(&per, &p.inverse()).unwrap(), u);
        }
    }

    #[test]
    fn small_eliminations_preserve_amplitude_order() {
        // Two rows over columns (a, b): large then small. Eliminating the
        // small entry of the second row with a small angle keeps the first
        // row's ordering.
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let a = C64::from_polar(0.8 + 0.2 * next(), std::f64::consts::TAU * next());
            let b = C64::from_polar(0.05 * next(), std::f64::consts::TAU * next());
            let cc = C64::from_polar(0.8 + 0.2 * next(), std::f64::consts::TAU * next());
            let d = C64::from_polar(0.05 * next(), std::f64::consts::TAU * next());
            // Eliminate d (column 1) with c (column 0): m = 1, n = 0.
            let (theta, phi) = solve_elimination(d, cc);
            assert!(theta < 0.1);
            let t = MziBlock { m: 1, n: 0, theta, phi }.matrix(2, false).dagger();
            let a_new = a * t[(0, 0)] + b * t[(1, 0)];
            let b_new = a * t[(0, 1)] + b * t[(1, 1)];
            assert!(abs(a_new) > abs(b_new));
            // Bounds used in the argument.
            assert!(abs(a_new) / abs(a) >= theta.cos() - abs(b) / abs(a) * theta.sin() - 1e-12);
            assert!(abs(b_new) / abs(a) <= theta.sin() + abs(b) / abs(a) * theta.cos() + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn greedy_never_lowers_indicator(seed in any::<u64>(), k in 1usize..=15) {
            let tree = device_pattern(&Lattice::new(3, 5).unwrap(), 15).unwrap();
            let p = partition_columns(&tree);
            let u = haar_random_unitary(15, seed).unwrap();
            let before = kth_largest(&row_region_weights(&u, p.main()), k);
            let (per, perm) = greedy_column_exchange(&u, &p, k).unwrap();
            let after = kth_largest(&row_region_weights(&per, p.main()), k);
            prop_assert!(after >= before);
            prop_assert!(crate::numerics::check_bijection(&perm).is_ok());
        }
    }
}

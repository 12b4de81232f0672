//! Dense complex matrix kernel.
//!
//! Matrices are stored row-major. Everything here is a pure function of its
//! inputs; random generation takes its seed explicitly and uses
//! [`ChaCha8Rng`] so that a given `(n, seed)` yields bit-identical output on
//! every platform.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::Path;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Max-norm tolerance on `U^dag U - I` accepted as unitary.
pub const UNITARITY_TOL: f64 = 1e-8;

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![C64::new(0.0, 0.0); n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m[(k, k)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Diagonal matrix with entries `exp(i * phase)`.
    pub fn phase_diagonal(phases: &[f64]) -> Self {
        let mut m = Self::zeros(phases.len(), phases.len());
        for (k, &p) in phases.iter().enumerate() {
            m[(k, k)] = C64::from_polar(1.0, p);
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<C64>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::InvalidDimension(format!("{n_rows}x{n_cols}")));
        }
        if data.len() != n_rows * n_cols {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { row: pos / n_cols, col: pos % n_cols });
        }
        Ok(Self { n_rows, n_cols, data })
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::from_vec(n_rows, n_cols, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn dagger(&self) -> Self {
        let mut out = Self::zeros(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, z: C64) -> Self {
        Self { n_rows: self.n_rows, n_cols: self.n_cols, data: self.data.iter().map(|&v| v * z).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n_rows.min(self.n_cols)).map(|k| self[(k, k)]).sum()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |(A^dag A - I)_ij|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.n_cols;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..self.n_rows {
                    acc += self[(r, i)].conj() * self[(r, j)];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    /// Right-multiplies in place by the 2x2 block `[[a, b], [c, d]]` acting on
    /// columns `(m, n)`: new col m = a*col_m + c*col_n, new col n = b*col_m + d*col_n.
    pub(crate) fn mix_columns(&mut self, m: usize, n: usize, a: C64, b: C64, c: C64, d: C64) {
        let stride = self.n_cols;
        for r in 0..self.n_rows {
            let base = r * stride;
            let xm = self.data[base + m];
            let xn = self.data[base + n];
            self.data[base + m] = a * xm + c * xn;
            self.data[base + n] = b * xm + d * xn;
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.n_cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.n_cols + c]
    }
}

impl fmt::Display for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.n_rows {
            let cells: Vec<String> =
                self.row(r).iter().map(|z| format!("{:+.4}{:+.4}i", z.re, z.im)).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

/// Standard matrix product.
pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.n_cols != b.n_rows {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} times {}x{}",
            a.n_rows, a.n_cols, b.n_rows, b.n_cols
        )));
    }
    let mut out = ComplexMatrix::zeros(a.n_rows, b.n_cols);
    for i in 0..a.n_rows {
        let out_row = &mut out.data[i * b.n_cols..(i + 1) * b.n_cols];
        for k in 0..a.n_cols {
            let aik = a.data[i * a.n_cols + k];
            if aik == C64::new(0.0, 0.0) {
                continue;
            }
            let b_row = &b.data[k * b.n_cols..(k + 1) * b.n_cols];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// A square matrix that passed the unitarity check on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

impl UnitaryMatrix {
    /// Validates `m` against [`UNITARITY_TOL`].
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!("{}x{} is not square", m.n_rows, m.n_cols)));
        }
        let deviation = m.unitarity_deviation();
        if deviation.is_nan() || deviation >= UNITARITY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n))
    }

    /// Skips the O(N^3) check. Only for matrices unitary by construction.
    pub(crate) fn new_unchecked(m: ComplexMatrix) -> Self {
        debug_assert!(m.is_square());
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.n_rows
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.dagger())
    }
}

impl Index<(usize, usize)> for UnitaryMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

/// Haar-random unitary: modified Gram-Schmidt (run twice for stability) on a
/// matrix of i.i.d. standard complex normals. Gram-Schmidt yields R with a
/// positive real diagonal, which is the phase correction needed for the Q
/// factor to be Haar distributed.
pub fn haar_random_unitary(n: usize, seed: u64) -> Result<UnitaryMatrix> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!("need n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major working copy.
    let mut cols: Vec<Vec<C64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re * scale, im * scale)
                })
                .collect()
        })
        .collect();

    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let proj: C64 = q.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
    }

    let mut m = ComplexMatrix::zeros(n, n);
    for (c, col) in cols.iter().enumerate() {
        for (r, &z) in col.iter().enumerate() {
            m[(r, c)] = z;
        }
    }
    Ok(UnitaryMatrix::new_unchecked(m))
}

/// `|tr(u_app * u^dag)| / N`, computed as `|sum_ij u_app[i,j] * conj(u[i,j])| / N`.
pub fn fidelity(u_app: &UnitaryMatrix, u: &UnitaryMatrix) -> Result<f64> {
    fidelity_raw(u_app.matrix(), u.matrix())
}

pub(crate) fn fidelity_raw(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.n_rows != b.n_rows || a.n_cols != b.n_cols {
        return Err(Error::ShapeMismatch(format!(
            "fidelity between {}x{} and {}x{}",
            a.n_rows, a.n_cols, b.n_rows, b.n_cols
        )));
    }
    let tr: C64 = a.data.iter().zip(&b.data).map(|(x, y)| x * y.conj()).sum();
    Ok(tr.norm() / a.n_rows as f64)
}

/// Row and column relabeling applied to a unitary.
///
/// `row_perm[i]` is the logical row read out at physical row `i`;
/// `col_perm[j]` is the physical column that hosts logical column `j`.
/// Hence `U_per[i][col_perm[j]] = U[row_perm[i]][j]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPair {
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
}

impl PermutationPair {
    pub fn identity(n: usize) -> Self {
        Self { row_perm: (0..n).collect(), col_perm: (0..n).collect() }
    }

    pub fn new(row_perm: Vec<usize>, col_perm: Vec<usize>) -> Result<Self> {
        check_bijection(&row_perm)?;
        check_bijection(&col_perm)?;
        if row_perm.len() != col_perm.len() {
            return Err(Error::InvalidPermutation(format!(
                "row/col lengths differ: {} vs {}",
                row_perm.len(),
                col_perm.len()
            )));
        }
        Ok(Self { row_perm, col_perm })
    }

    pub fn dim(&self) -> usize {
        self.row_perm.len()
    }

    pub fn inverse(&self) -> Self {
        Self { row_perm: invert_permutation(&self.row_perm), col_perm: invert_permutation(&self.col_perm) }
    }
}

pub fn invert_permutation(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &x) in p.iter().enumerate() {
        inv[x] = i;
    }
    inv
}

pub fn check_bijection(p: &[usize]) -> Result<()> {
    let mut seen = vec![false; p.len()];
    for &x in p {
        if x >= p.len() || std::mem::replace(&mut seen[x], true) {
            return Err(Error::InvalidPermutation(format!("{p:?} is not a bijection")));
        }
    }
    Ok(())
}

/// `U_per = P_r U P_c` with the index convention of [`PermutationPair`].
/// Entries are moved, never recomputed, so the result is unitary exactly
/// when `u` is.
pub fn apply_permutations(u: &UnitaryMatrix, p: &PermutationPair) -> Result<UnitaryMatrix> {
    Ok(UnitaryMatrix::new_unchecked(permute_matrix(u.matrix(), p)?))
}

pub(crate) fn permute_matrix(m: &ComplexMatrix, p: &PermutationPair) -> Result<ComplexMatrix> {
    let n = m.n_rows;
    if !m.is_square() || p.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "permutation of size {} applied to {}x{}",
            p.dim(),
            m.n_rows,
            m.n_cols
        )));
    }
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let src = m.row(p.row_perm[i]);
        for (j, &z) in src.iter().enumerate() {
            out[(i, p.col_perm[j])] = z;
        }
    }
    Ok(out)
}

/// On-disk unitary: `{"n": N, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitaryFile {
    n: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl UnitaryMatrix {
    pub fn to_json(&self) -> String {
        let n = self.dim();
        let file = UnitaryFile {
            n,
            re: (0..n).map(|r| self.0.row(r).iter().map(|z| z.re).collect()).collect(),
            im: (0..n).map(|r| self.0.row(r).iter().map(|z| z.im).collect()).collect(),
        };
        serde_json::to_string(&file).expect("plain numeric struct serializes")
    }

    /// Parses and validates; non-unitary input is rejected with its deviation.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: UnitaryFile = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse(format!("unitary file, field `{}`: {}", e.path(), e.inner())))?;
        let n = file.n;
        if n == 0 {
            return Err(Error::InvalidDimension("n = 0".into()));
        }
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !shape_ok(&file.re) || !shape_ok(&file.im) {
            return Err(Error::ShapeMismatch(format!("`re`/`im` must both be {n}x{n}")));
        }
        let data = file
            .re
            .iter()
            .flatten()
            .zip(file.im.iter().flatten())
            .map(|(&re, &im)| C64::new(re, im))
            .collect();
        Self::new(ComplexMatrix::from_vec(n, n, data)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

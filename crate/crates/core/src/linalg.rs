//! Dense linear algebra: row-major matrices, one-sided Jacobi SVD, numerical
//! rank, orthonormal nullspace bases and minimum-norm least squares.

use std::fmt;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative rank tolerance; the effective threshold is
/// `tol * max(rows, cols) * sigma_max`.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-15;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Finite vector of `f64`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps `entries`, rejecting NaN and infinities.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "vector entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(Vector(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Vector(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Vector(vec![value; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn select(&self, indices: &[usize]) -> Vector {
        Vector(indices.iter().map(|&i| self.0[i]).collect())
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl From<Vec<f64>> for Vector {
    /// Unchecked conversion; callers that ingest external data go through
    /// [`Vector::new`].
    fn from(v: Vec<f64>) -> Self {
        Vector(v)
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Vector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Vector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    // scaled to avoid overflow on large entries
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * a.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// Row-major dense matrix of finite `f64` entries.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix({}x{})", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "matrix entry ({}, {}) is not finite",
                i / cols.max(1),
                i % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from equally long rows; no rows gives a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dims(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        DenseMatrix::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::dims(format!(
                "{}x{} matrix applied to vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.row_iter().map(|r| dot(r, x)).collect())
    }

    /// Rows in the given order; an empty index list gives a `0 x cols` matrix.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copy with the rows in `indices` set to zero (the mask `D_I * self`).
    pub fn zero_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut out = self.clone();
        for &i in indices {
            out.row_mut(i).fill(0.0);
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::dims(format!(
                "cannot stack {} columns on {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DenseMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scaled(&self, factor: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::dims("matrix difference of unequal shapes"));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}

/// Descending singular values together with the threshold that separates
/// numerically zero values from the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularSpectrum {
    pub values: Vec<f64>,
    pub zero_tol: f64,
    pub num_nonzero: usize,
}

impl SingularSpectrum {
    pub fn new(mut values: Vec<f64>, zero_tol: f64) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let num_nonzero = values.iter().filter(|&&v| v > zero_tol).count();
        SingularSpectrum {
            values,
            zero_tol,
            num_nonzero,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Smallest value above `zero_tol`.
    pub fn sigma_min_nonzero(&self) -> Option<f64> {
        self.num_nonzero.checked_sub(1).map(|i| self.values[i])
    }

    pub fn nonzero(&self) -> &[f64] {
        &self.values[..self.num_nonzero]
    }
}

/// Thin SVD `M = U diag(S) Vt` with `U: m x r`, `Vt: r x n`, `r = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: SingularSpectrum,
    pub vt: DenseMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, v) in us.row_mut(i).iter_mut().enumerate() {
                *v *= self.s.values[j];
            }
        }
        us.matmul(&self.vt)
            .expect("svd factors have matching shapes")
    }
}

fn relative_zero_tol(rows: usize, cols: usize, sigma_max: f64, tol: f64) -> f64 {
    tol * rows.max(cols) as f64 * sigma_max
}

/// One-sided Jacobi on the columns of a tall (`m >= n`) matrix given in
/// column-major form. Returns orthogonalised columns and the accumulated
/// right rotations (column-major `n x n`).
fn jacobi_columns(mut cols: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (cols, v)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Replaces the marked columns with unit vectors orthogonal to every other
/// column (modified Gram-Schmidt on standard basis candidates).
fn complete_orthonormal(basis: &mut [Vec<f64>], missing: &[usize]) {
    let dim = basis.first().map_or(0, Vec::len);
    for &slot in missing {
        let mut best: Option<Vec<f64>> = None;
        let mut best_norm = 0.0;
        for e in 0..dim {
            let mut cand = vec![0.0; dim];
            cand[e] = 1.0;
            for _ in 0..2 {
                for (j, b) in basis.iter().enumerate() {
                    if j == slot {
                        continue;
                    }
                    let proj = dot(&cand, b);
                    for (c, bv) in cand.iter_mut().zip(b) {
                        *c -= proj * bv;
                    }
                }
            }
            let nrm = norm2(&cand);
            if nrm > best_norm {
                best_norm = nrm;
                best = Some(cand);
            }
            if best_norm > 0.5 {
                break;
            }
        }
        let mut cand = best.expect("complement exists while columns are missing");
        cand.iter_mut().for_each(|c| *c /= best_norm);
        basis[slot] = cand;
    }
}

/// Thin singular value decomposition via one-sided Jacobi rotations.
pub fn svd(m: &DenseMatrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("svd of a non-finite matrix".into()));
    }
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    let r = cols;
    let columns: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j).into_inner()).collect();
    let (w, v) = jacobi_columns(columns);

    let mut order: Vec<(usize, f64)> = w.iter().map(|c| norm2(c)).enumerate().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let sigma_max = order.first().map_or(0.0, |o| o.1);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut missing = Vec::new();
    let mut values = Vec::with_capacity(r);
    // columns at rounding level carry no reliable direction
    let noise = sigma_max * rows as f64 * f64::EPSILON;
    for (slot, &(j, sigma)) in order.iter().enumerate() {
        values.push(sigma);
        if sigma > noise && sigma > f64::MIN_POSITIVE * 1e10 {
            u_cols.push(w[j].iter().map(|x| x / sigma).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            missing.push(slot);
        }
    }
    if !missing.is_empty() {
        complete_orthonormal(&mut u_cols, &missing);
    }

    let mut u = DenseMatrix::zeros(rows, r);
    for (slot, col) in u_cols.iter().enumerate() {
        for i in 0..rows {
            u.set(i, slot, col[i]);
        }
    }
    let mut vt = DenseMatrix::zeros(r, cols);
    for (slot, &(j, _)) in order.iter().enumerate() {
        vt.row_mut(slot).copy_from_slice(&v[j]);
    }
    let zero_tol = relative_zero_tol(rows, cols, sigma_max, DEFAULT_RANK_TOL);
    Ok(Svd {
        u,
        s: SingularSpectrum::new(values, zero_tol),
        vt,
    })
}

/// Singular values with the default relative zero threshold.
pub fn singular_values(m: &DenseMatrix) -> Result<SingularSpectrum> {
    Ok(svd(m)?.s)
}

/// Number of singular values above `tol * max(rows, cols) * sigma_max`.
pub fn rank(m: &DenseMatrix, tol: f64) -> Result<usize> {
    if tol <= 0.0 {
        return Err(Error::InvalidInput(
            "rank tolerance must be positive".into(),
        ));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(0);
    }
    let s = svd(m)?.s;
    let thresh = relative_zero_tol(m.rows(), m.cols(), s.sigma_max(), tol);
    Ok(s.values.iter().filter(|&&v| v > thresh).count())
}

/// Rank together with an orthonormal basis (as rows) of the nullspace.
pub fn rank_and_nullspace(m: &DenseMatrix, tol: f64) -> Result<(usize, DenseMatrix)> {
    let (rows, n) = m.shape();
    if n == 0 {
        return Ok((0, DenseMatrix::zeros(0, 0)));
    }
    // Zero rows leave the nullspace unchanged and make the Jacobi V square.
    let padded = if rows < n {
        m.vstack(&DenseMatrix::zeros(n - rows, n))?
    } else {
        m.clone()
    };
    let dec = svd(&padded)?;
    let thresh = relative_zero_tol(rows, n, dec.s.sigma_max(), tol);
    let null_rows: Vec<usize> = (0..n).filter(|&i| !(dec.s.values[i] > thresh)).collect();
    Ok((n - null_rows.len(), dec.vt.select_rows(&null_rows)))
}

/// Orthonormal basis of `N(M)` stored as rows: `k = n - rank(M)` rows, `0 x n`
/// when `M` has full column rank.
pub fn nullspace_basis(m: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    Ok(rank_and_nullspace(m, tol)?.1)
}

/// Minimum-norm least-squares solution of `M x = rhs` (pseudoinverse applied
/// with the relative rank threshold `tol`).
pub fn min_norm_solve(m: &DenseMatrix, rhs: &[f64], tol: f64) -> Result<Vector> {
    if rhs.len() != m.rows() {
        return Err(Error::dims(format!(
            "right-hand side of length {} for {} rows",
            rhs.len(),
            m.rows()
        )));
    }
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vector::zeros(m.cols()));
    }
    let dec = svd(m)?;
    let thresh = relative_zero_tol(m.rows(), m.cols(), dec.s.sigma_max(), tol);
    let mut x = vec![0.0; m.cols()];
    for (j, &sigma) in dec.s.values.iter().enumerate() {
        if !(sigma > thresh) {
            continue;
        }
        let coef = (0..m.rows()).map(|i| dec.u.get(i, j) * rhs[i]).sum::<f64>() / sigma;
        for (xi, v) in x.iter_mut().zip(dec.vt.row(j)) {
            *xi += coef * v;
        }
    }
    Ok(Vector(x))
}

/// Largest singular value over the smallest nonzero one.
pub fn condition_number(s: &SingularSpectrum) -> Result<f64> {
    match s.sigma_min_nonzero() {
        Some(min) => Ok(s.sigma_max() / min),
        None => Err(Error::DegenerateSpectrum),
    }
}

/// Solves a square system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `pivot_tol` times the largest
/// entry of the matrix.
pub(crate) fn solve_square(a: &DenseMatrix, b: &[f64], pivot_tol: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let mut m = a.data().to_vec();
    let mut rhs = b.to_vec();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let piv =
            (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))?;
        if m[piv * n + col].abs() <= pivot_tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
            }
            rhs.swap(col, piv);
        }
        let d = m[col * n + col];
        for i in col + 1..n {
            let f = m[i * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[i * n + k] -= f * m[col * n + k];
            }
            rhs[i] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i * n + k] * x[k]).sum();
        x[i] = (rhs[i] - s) / m[i * n + i];
    }
    Some(x)
}

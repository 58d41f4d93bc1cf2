#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use relu_preimage::lp::{LpProblem, LpStatus};
use relu_preimage::model_io::ParseError;
use relu_preimage::preimage::AffineLayer;
use relu_preimage::stability::{Activation, MlpModel};
use relu_preimage::{DenseMatrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
    DenseMatrix::new(m, n, gaussian_vec(rng, m * n)).unwrap()
}

pub fn gaussian_layer(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AffineLayer {
    let w = gaussian_matrix(rng, m, n);
    AffineLayer::new(w, gaussian_vec(rng, m).into()).unwrap()
}

/// Gaussian weights with bias centred at -3, so that only a small share of
/// units fire for standard Gaussian inputs.
pub fn sparse_layer(rng: &mut ChaCha8Rng, m: usize, n: usize) -> AffineLayer {
    let w = gaussian_matrix(rng, m, n);
    let b: Vec<f64> = gaussian_vec(rng, m).into_iter().map(|v| v - 3.0).collect();
    AffineLayer::new(w, b.into()).unwrap()
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values as square roots of the eigenvalues of `M^T M` (or
/// `M M^T`, whichever is smaller), padded with zeros to `min(m, n)`.
pub fn oracle_singular_values(m: &DenseMatrix) -> Vec<f64> {
    let small = if m.rows() >= m.cols() {
        m.clone()
    } else {
        m.transpose()
    };
    let n = small.cols();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..small.rows())
                        .map(|r| small.get(r, i) * small.get(r, j))
                        .sum()
                })
                .collect()
        })
        .collect();
    symmetric_eigenvalues(gram)
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Box-bounded LP: maximise `c.x` s.t. `G x <= h`, `E x = f`, `l <= x <= u`.
#[derive(Clone, Debug)]
pub struct BoxLp {
    pub c: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<f64>,
    pub l: Vec<f64>,
    pub u: Vec<f64>,
}

impl BoxLp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn to_problem(&self) -> LpProblem {
        let mut p = LpProblem::new(self.n())
            .maximize(&self.c)
            .bounds(&self.l, &self.u);
        for (row, &h) in self.g.iter().zip(&self.h) {
            p = p.add_le(row, h).unwrap();
        }
        for (row, &f) in self.e.iter().zip(&self.f) {
            p = p.add_eq(row, f).unwrap();
        }
        p
    }

    /// Same feasible set, but each variable keeps only one of its bounds (or
    /// none) as a bound; the rest become explicit rows.
    pub fn to_problem_rows(&self, mode: &[u8]) -> LpProblem {
        let n = self.n();
        let mut lower = vec![f64::NEG_INFINITY; n];
        let mut upper = vec![f64::INFINITY; n];
        let mut p = LpProblem::new(n).maximize(&self.c);
        let mut extra = Vec::new();
        for j in 0..n {
            let mut e = vec![0.0; n];
            match mode[j] % 3 {
                0 => {
                    upper[j] = self.u[j];
                    e[j] = -1.0;
                    extra.push((e, -self.l[j]));
                }
                1 => {
                    lower[j] = self.l[j];
                    e[j] = 1.0;
                    extra.push((e, self.u[j]));
                }
                _ => {
                    let mut e2 = vec![0.0; n];
                    e[j] = 1.0;
                    e2[j] = -1.0;
                    extra.push((e, self.u[j]));
                    extra.push((e2, -self.l[j]));
                }
            }
        }
        p = p.bounds(&lower, &upper);
        for (row, &h) in self.g.iter().zip(&self.h) {
            p = p.add_le(row, h).unwrap();
        }
        for (row, h) in &extra {
            p = p.add_le(row, *h).unwrap();
        }
        for (row, &f) in self.e.iter().zip(&self.f) {
            p = p.add_eq(row, f).unwrap();
        }
        p
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        let dot = |a: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let mut v = 0.0f64;
        for (row, &h) in self.g.iter().zip(&self.h) {
            v = v.max(dot(row) - h);
        }
        for (row, &f) in self.e.iter().zip(&self.f) {
            v = v.max((dot(row) - f).abs());
        }
        for j in 0..x.len() {
            v = v.max(self.l[j] - x[j]).max(x[j] - self.u[j]);
        }
        v
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Optimum by enumerating every basic point: all equality rows, a subset of
/// the inequality rows and enough coordinates pinned at a bound.
pub fn brute_force(lp: &BoxLp) -> (LpStatus, Option<f64>) {
    let n = lp.n();
    let ne = lp.e.len();
    let mut best: Option<f64> = None;
    for s_size in 0..=lp.g.len().min(n.saturating_sub(ne)) {
        let pinned = n - ne - s_size;
        for s in subsets(lp.g.len(), s_size) {
            for fixed in subsets(n, pinned) {
                for mask in 0..(1u32 << pinned) {
                    let mut a = Vec::with_capacity(n);
                    let mut b = Vec::with_capacity(n);
                    for (row, &f) in lp.e.iter().zip(&lp.f) {
                        a.push(row.clone());
                        b.push(f);
                    }
                    for &i in &s {
                        a.push(lp.g[i].clone());
                        b.push(lp.h[i]);
                    }
                    for (t, &j) in fixed.iter().enumerate() {
                        let mut e = vec![0.0; n];
                        e[j] = 1.0;
                        a.push(e);
                        b.push(if mask >> t & 1 == 1 { lp.u[j] } else { lp.l[j] });
                    }
                    if let Some(x) = solve_dense(a, b) {
                        if lp.violation(&x) <= 1e-9 {
                            let v: f64 = lp.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                            best = Some(best.map_or(v, |b: f64| b.max(v)));
                        }
                    }
                }
            }
        }
    }
    match best {
        Some(v) => (LpStatus::Optimal, Some(v)),
        None => (LpStatus::Infeasible, None),
    }
}

/// Random box LP with up to `max_n` variables. Roughly one in five is built
/// to be infeasible.
pub fn random_box_lp(rng: &mut ChaCha8Rng, max_n: usize) -> BoxLp {
    let n = rng.gen_range(1..=max_n);
    let ng = rng.gen_range(0..=3usize);
    let ne = rng.gen_range(0..=2usize.min(n));
    let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let u: Vec<f64> = l.iter().map(|&lo| lo + rng.gen_range(0.5..4.0)).collect();
    let x0: Vec<f64> = l
        .iter()
        .zip(&u)
        .map(|(&a, &b)| rng.gen_range(a..b))
        .collect();
    let g: Vec<Vec<f64>> = (0..ng).map(|_| gaussian_vec(rng, n)).collect();
    let e: Vec<Vec<f64>> = (0..ne).map(|_| gaussian_vec(rng, n)).collect();
    let dot = |a: &[f64], x: &[f64]| a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    let infeasible = rng.gen_bool(0.2);
    let mut h: Vec<f64> = g
        .iter()
        .map(|r| dot(r, &x0) + rng.gen_range(0.0..1.0))
        .collect();
    let f: Vec<f64> = e.iter().map(|r| dot(r, &x0)).collect();
    if infeasible && !g.is_empty() {
        // push one halfspace entirely outside the box
        let i = rng.gen_range(0..g.len());
        let min_over_box: f64 = (0..n).map(|j| (g[i][j] * l[j]).min(g[i][j] * u[j])).sum();
        h[i] = min_over_box - rng.gen_range(0.1..1.0);
    }
    BoxLp {
        c: gaussian_vec(rng, n),
        g,
        h,
        e,
        f,
        l,
        u,
    }
}

pub fn vector(v: &[f64]) -> Vector {
    v.to_vec().into()
}

pub fn random_relu_model(rng: &mut ChaCha8Rng) -> MlpModel {
    let depth = rng.gen_range(1..=4);
    let mut dims = vec![rng.gen_range(1..=6)];
    for _ in 0..depth {
        dims.push(rng.gen_range(1..=8));
    }
    let layers = dims
        .windows(2)
        .map(|w| gaussian_layer(rng, w[1], w[0]))
        .collect();
    MlpModel::relu_mlp(layers).unwrap()
}

/// Smallest preactivation magnitude over every ReLU unit.
pub fn min_preactivation(model: &MlpModel, x: &[f64]) -> f64 {
    let mut h: Vector = x.to_vec().into();
    let mut worst = f64::INFINITY;
    for layer in model.layers() {
        h = layer.affine.preactivation(&h).unwrap();
        if layer.activation == Activation::Relu {
            worst = h.iter().fold(worst, |a, v| a.min(v.abs()));
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    worst
}

pub const GOOD: &str = "relu-mlp 1\nlayers 2\nlayer 1 2 2 relu text\n1 0\n0 1\n0 0\nlayer 2 1 2 none text\n1 1\n0.5\nend\n";

/// Each corruption of `GOOD` and the error it must produce.
pub fn corruptions() -> Vec<(&'static str, String, fn(&ParseError) -> bool)> {
    vec![
        ("bad magic", GOOD.replacen("relu-mlp", "relu-net", 1), |e| {
            matches!(e, ParseError::BadHeader { line: 1, .. })
        }),
        (
            "future version",
            GOOD.replacen("relu-mlp 1", "relu-mlp 7", 1),
            |e| matches!(e, ParseError::UnsupportedVersion { .. }),
        ),
        (
            "bad layer count",
            GOOD.replacen("layers 2", "layers two", 1),
            |e| matches!(e, ParseError::BadLayerCount { line: 2, .. }),
        ),
        (
            "unknown activation",
            GOOD.replacen("relu text", "tanh text", 1),
            |e| matches!(e, ParseError::UnknownActivation { line: 3, .. }),
        ),
        (
            "unknown encoding",
            GOOD.replacen("relu text", "relu hex", 1),
            |e| matches!(e, ParseError::UnknownEncoding { line: 3, .. }),
        ),
        (
            "garbage number",
            GOOD.replacen("1 0\n0 1", "1 0\n0 x1", 1),
            |e| matches!(e, ParseError::InvalidNumber { line: 5, .. }),
        ),
        ("nan weight", GOOD.replacen("1 0\n", "nan 0\n", 1), |e| {
            matches!(e, ParseError::NonFiniteValue { line: 4, .. })
        }),
        ("short row", GOOD.replacen("1 0\n", "1\n", 1), |e| {
            matches!(
                e,
                ParseError::RowLength {
                    line: 4,
                    expected: 2,
                    found: 1
                }
            )
        }),
        ("long bias", GOOD.replacen("0.5\n", "0.5 1\n", 1), |e| {
            matches!(
                e,
                ParseError::RowLength {
                    line: 9,
                    expected: 1,
                    found: 2
                }
            )
        }),
        (
            "chain mismatch",
            GOOD.replacen("layer 2 1 2", "layer 2 1 3", 1),
            |e| matches!(e, ParseError::DimensionMismatch { line: 7, .. }),
        ),
        (
            "truncated",
            GOOD[..GOOD.find("1 1\n").unwrap()].to_string(),
            |e| matches!(e, ParseError::UnexpectedEof { .. }),
        ),
        ("missing end", GOOD.replacen("end\n", "", 1), |e| {
            matches!(e, ParseError::UnexpectedEof { .. })
        }),
        (
            "extra layer",
            GOOD.replacen("layers 2", "layers 1", 1),
            |e| {
                matches!(
                    e,
                    ParseError::LayerCountMismatch {
                        declared: 1,
                        found: 2,
                        ..
                    }
                )
            },
        ),
        (
            "missing layer",
            GOOD.replacen("layers 2", "layers 3", 1),
            |e| {
                matches!(
                    e,
                    ParseError::LayerCountMismatch {
                        declared: 3,
                        found: 2,
                        ..
                    }
                )
            },
        ),
        (
            "wrong index",
            GOOD.replacen("layer 2 ", "layer 3 ", 1),
            |e| matches!(e, ParseError::LayerIndexMismatch { expected: 2, .. }),
        ),
        (
            "zero rows",
            GOOD.replacen("layer 2 1 2", "layer 2 0 2", 1),
            |e| matches!(e, ParseError::ZeroDimension { .. }),
        ),
        ("trailing data", format!("{GOOD}junk\n"), |e| {
            matches!(e, ParseError::TrailingData { line: 11 })
        }),
    ]
}

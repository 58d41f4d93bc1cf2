//! Preimages of a ReLU layer `y = relu(A x + b)`.
//!
//! Splitting the outputs into positive coordinates `P` and zero coordinates
//! `Z` turns the preimage into the polyhedron
//!
//! ```text
//! A|_P x + b|_P  = y|_P
//! A|_Z x + b|_Z <= 0
//! ```
//!
//! If `A|_P` has full column rank the preimage is a single point. Otherwise,
//! with `O` an orthonormal basis of `N(A|_P)` and `x_part` the minimum-norm
//! solution of the equality block, every preimage point is `x_part + O^T d`
//! where `Abar d + bbar <= 0`, `Abar = A|_Z O^T`, `bbar = b|_Z + A|_Z x_part`.
//! The preimage is bounded exactly when `Abar` is omnidirectional.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, DenseMatrix, Vector};
use crate::lp::{self, LpProblem, LpStatus};
use crate::omni;
use crate::Tolerances;

/// Outputs at or below this value count as zero.
pub const ACT_TOL: f64 = 1e-9;
/// Relative residual accepted when checking that `y` is a layer output.
pub const CONSISTENCY_TOL: f64 = 1e-7;
/// `relu(A point + b)` must reproduce `y` this closely for a singleton.
pub const MEMBERSHIP_TOL: f64 = 1e-6;
/// Largest reduced inequality count the singleton search accepts.
pub const MAX_EXHAUSTIVE_ROWS: usize = 20;
const MAX_EXHAUSTIVE_SUBSETS: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AffineLayer {
    pub weight: DenseMatrix,
    pub bias: Vector,
}

impl AffineLayer {
    pub fn new(weight: DenseMatrix, bias: Vector) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::dims(format!(
                "bias of length {} for a {}x{} weight",
                bias.len(),
                weight.rows(),
                weight.cols()
            )));
        }
        Ok(AffineLayer { weight, bias })
    }

    /// Layer without bias.
    pub fn linear(weight: DenseMatrix) -> Self {
        let bias = Vector::zeros(weight.rows());
        AffineLayer { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    /// `A x + b`.
    pub fn preactivation(&self, x: &[f64]) -> Result<Vector> {
        let mut z = self.weight.matvec(x)?;
        for (zi, bi) in z.iter_mut().zip(self.bias.iter()) {
            *zi += bi;
        }
        Ok(z)
    }
}

/// `relu(A x + b)`.
pub fn forward(layer: &AffineLayer, x: &[f64]) -> Result<Vector> {
    let mut z = layer.preactivation(x)?;
    z.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(z)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignPattern {
    pub positive: Vec<usize>,
    pub zero: Vec<usize>,
    pub act_tol: f64,
}

pub fn sign_pattern(y: &[f64], act_tol: f64) -> Result<SignPattern> {
    let mut positive = Vec::new();
    let mut zero = Vec::new();
    for (i, &v) in y.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!(
                "output entry {i} is not finite"
            )));
        }
        if v < -act_tol {
            return Err(Error::NotAReluOutput { index: i, value: v });
        }
        if v > act_tol {
            positive.push(i);
        } else {
            zero.push(i);
        }
    }
    Ok(SignPattern {
        positive,
        zero,
        act_tol,
    })
}

/// The inequality block in nullspace coordinates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReducedSystem {
    /// Orthonormal basis of `N(A|_P)` as rows (`k x n`).
    pub o: DenseMatrix,
    pub k: usize,
    /// `A|_Z O^T` (`ktilde x k`).
    pub abar: DenseMatrix,
    /// `b|_Z + A|_Z x_part`.
    pub bbar: Vector,
    pub ktilde: usize,
    /// Minimum-norm solution of the equality block.
    pub x_part: Vector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PreimageKind {
    Singleton,
    FiniteVolume,
    InfiniteVolume,
}

impl fmt::Display for PreimageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PreimageKind::Singleton => "Singleton",
            PreimageKind::FiniteVolume => "FiniteVolume",
            PreimageKind::InfiniteVolume => "InfiniteVolume",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreimageClass {
    pub kind: PreimageKind,
    pub reduced: Option<ReducedSystem>,
    pub point: Option<Vector>,
    pub diagnostics: String,
    /// Hull LP and cone test disagreed on `Abar`; the cone verdict was used
    /// and `diagnostics` carries the boundary margin.
    pub boundary_degenerate: bool,
}

/// Oracle verdict on the preimage polyhedron.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Boundedness {
    Singleton,
    Bounded,
    Unbounded,
}

/// Equality block data shared by the classifier and its companions.
struct Split {
    pattern: SignPattern,
    rank: usize,
    reduced: ReducedSystem,
}

fn split(layer: &AffineLayer, y: &[f64], tol: &Tolerances) -> Result<Split> {
    let (m, n) = layer.weight.shape();
    if y.len() != m {
        return Err(Error::dims(format!(
            "output of length {} for a layer with {m} units",
            y.len()
        )));
    }
    let pattern = sign_pattern(y, tol.act_tol)?;
    let a_p = layer.weight.select_rows(&pattern.positive);
    let a_z = layer.weight.select_rows(&pattern.zero);
    let rhs: Vec<f64> = pattern
        .positive
        .iter()
        .map(|&i| y[i] - layer.bias[i])
        .collect();

    let (rank, o) = linalg::rank_and_nullspace(&a_p, tol.rank_tol)?;
    let o = if n == 0 { DenseMatrix::zeros(0, 0) } else { o };
    let x_part = linalg::min_norm_solve(&a_p, &rhs, tol.rank_tol)?;

    let fitted = a_p.matvec(&x_part)?;
    let residual = fitted
        .iter()
        .zip(&rhs)
        .fold(0.0f64, |acc, (f, r)| acc.max((f - r).abs()));
    let rhs_scale = rhs.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    let scale = 1.0 + rhs_scale + a_p.max_abs() * x_part.norm_inf();
    if residual > CONSISTENCY_TOL * scale {
        return Err(Error::InconsistentOutput(format!(
            "equality block residual {residual:e} on the positive outputs"
        )));
    }

    let abar = a_z.matmul(&o.transpose())?;
    let mut bbar = a_z.matvec(&x_part)?;
    for (v, &i) in bbar.iter_mut().zip(&pattern.zero) {
        *v += layer.bias[i];
    }
    let reduced = ReducedSystem {
        k: o.rows(),
        ktilde: pattern.zero.len(),
        o,
        abar,
        bbar,
        x_part,
    };
    Ok(Split {
        pattern,
        rank,
        reduced,
    })
}

pub fn classify_preimage(layer: &AffineLayer, y: &[f64]) -> Result<PreimageClass> {
    classify_preimage_with(layer, y, &Tolerances::default())
}

/// Three-way classification of the preimage of `y`: full-rank equality block,
/// then the row-count short cut, then omnidirectionality of `Abar`.
pub fn classify_preimage_with(
    layer: &AffineLayer,
    y: &[f64],
    tol: &Tolerances,
) -> Result<PreimageClass> {
    let Split {
        pattern,
        rank,
        reduced,
    } = split(layer, y, tol)?;
    let n = layer.inputs();

    if rank == n {
        let point = reduced.x_part.clone();
        let pre = layer.preactivation(&point)?;
        let scale = 1.0 + layer.weight.max_abs() * point.norm_inf() + layer.bias.norm_inf();
        if let Some(&i) = pattern
            .zero
            .iter()
            .find(|&&i| pre[i] > CONSISTENCY_TOL * scale)
        {
            return Err(Error::InconsistentOutput(format!(
                "unique solution of the equality block activates unit {i} ({:e})",
                pre[i]
            )));
        }
        let image = forward(layer, &point)?;
        let gap = image
            .iter()
            .zip(y)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if gap > MEMBERSHIP_TOL * (1.0 + scale) {
            return Err(Error::InconsistentOutput(format!(
                "recovered point misses y by {gap:e}"
            )));
        }
        return Ok(PreimageClass {
            kind: PreimageKind::Singleton,
            reduced: None,
            point: Some(point),
            diagnostics: format!("rank(A|_P) = n = {n}: equality block determines x"),
            boundary_degenerate: false,
        });
    }

    if reduced.ktilde <= reduced.k {
        let diagnostics = format!(
            "ktilde = {} <= k = {}: too few inequality rows to bound the nullspace",
            reduced.ktilde, reduced.k
        );
        return Ok(PreimageClass {
            kind: PreimageKind::InfiniteVolume,
            reduced: Some(reduced),
            point: None,
            diagnostics,
            boundary_degenerate: false,
        });
    }

    let report = omni::omnidirectional_with(&reduced.abar, &tol.lp_options())?;
    let kind = if report.is_omni {
        PreimageKind::FiniteVolume
    } else {
        PreimageKind::InfiniteVolume
    };
    let mut diagnostics = format!(
        "k = {}, ktilde = {}: Abar {} omnidirectional (hull LP: {}, cone test: {})",
        reduced.k,
        reduced.ktilde,
        if report.is_omni { "is" } else { "is not" },
        report.hull.is_omni,
        report.cone.is_omni,
    );
    if report.disagreement {
        diagnostics.push_str(&format!(
            "; hull/cone disagreement, boundary margin {:e}{}",
            report.boundary_margin.unwrap_or(f64::NAN),
            if report.boundary_degenerate {
                " (boundary degenerate)"
            } else {
                ""
            }
        ));
    }
    Ok(PreimageClass {
        kind,
        reduced: Some(reduced),
        point: None,
        diagnostics,
        boundary_degenerate: report.disagreement,
    })
}

/// Independent boundedness check: maximises and minimises every coordinate
/// over the preimage polyhedron.
pub fn preimage_bounded_oracle(layer: &AffineLayer, y: &[f64]) -> Result<Boundedness> {
    preimage_bounded_oracle_with(layer, y, &Tolerances::default())
}

pub fn preimage_bounded_oracle_with(
    layer: &AffineLayer,
    y: &[f64],
    tol: &Tolerances,
) -> Result<Boundedness> {
    let (m, n) = layer.weight.shape();
    if y.len() != m {
        return Err(Error::dims(format!(
            "output of length {} for a layer with {m} units",
            y.len()
        )));
    }
    let pattern = sign_pattern(y, tol.act_tol)?;
    let base = preimage_program(layer, y, &pattern)?;
    let opts = tol.lp_options();
    let mut spread = 0.0f64;
    for j in 0..n {
        let mut range = [0.0; 2];
        for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
            let mut c = vec![0.0; n];
            c[j] = sign;
            let sol = lp::solve_with(&base.clone().maximize(&c), &opts)?;
            match sol.status {
                LpStatus::Infeasible => {
                    return Err(Error::InconsistentOutput(
                        "preimage polyhedron is empty".into(),
                    ))
                }
                LpStatus::Unbounded => return Ok(Boundedness::Unbounded),
                LpStatus::Optimal => range[slot] = sign * sol.objective_value.unwrap_or(0.0),
            }
        }
        spread = spread.max(range[0] - range[1]);
    }
    Ok(if spread <= 1e-7 {
        Boundedness::Singleton
    } else {
        Boundedness::Bounded
    })
}

/// `{x : A|_P x + b|_P = y|_P, A|_Z x + b|_Z <= 0}` with free variables.
fn preimage_program(layer: &AffineLayer, y: &[f64], pattern: &SignPattern) -> Result<LpProblem> {
    let n = layer.inputs();
    let eq_rhs: Vec<f64> = pattern
        .positive
        .iter()
        .map(|&i| y[i] - layer.bias[i])
        .collect();
    let le_rhs: Vec<f64> = pattern.zero.iter().map(|&i| -layer.bias[i]).collect();
    LpProblem::new(n)
        .equality(&layer.weight.select_rows(&pattern.positive), &eq_rhs)?
        .inequality(&layer.weight.select_rows(&pattern.zero), &le_rhs)
}

/// Searches for a point `p` of the reduced system and an index set of rows
/// whose hyperplanes meet at `p` with omnidirectional normals, which makes
/// `p` the only preimage point. `true` as well when the equality block alone
/// pins the preimage.
pub fn singleton_exhaustive(layer: &AffineLayer, y: &[f64]) -> Result<bool> {
    let Split { reduced, .. } = split(layer, y, &Tolerances::default())?;
    if reduced.k == 0 {
        return Ok(true);
    }
    singleton_in_reduced(&reduced.abar, &reduced.bbar)
}

/// Singleton test for `{d : abar d + bbar <= 0}`.
///
/// Any index set that is omnidirectional for a point contains `k` rows with
/// independent normals, so it suffices to visit the vertices spanned by
/// `k`-subsets and test the full active set at each feasible one.
pub fn singleton_in_reduced(abar: &DenseMatrix, bbar: &[f64]) -> Result<bool> {
    let (rows, k) = abar.shape();
    if bbar.len() != rows {
        return Err(Error::dims(
            "bbar length differs from the row count of abar",
        ));
    }
    if rows > MAX_EXHAUSTIVE_ROWS {
        return Err(Error::BudgetExceeded(format!(
            "{rows} reduced inequality rows exceed the limit of {MAX_EXHAUSTIVE_ROWS}"
        )));
    }
    if k == 0 {
        return Ok(bbar.iter().all(|&b| b <= CONSISTENCY_TOL));
    }
    if rows <= k {
        return Ok(false);
    }
    let scale = 1.0 + abar.max_abs() + bbar.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut visited = 0usize;
    let mut subset: Vec<usize> = (0..k).collect();
    loop {
        visited += 1;
        if visited > MAX_EXHAUSTIVE_SUBSETS {
            return Err(Error::BudgetExceeded(format!(
                "more than {MAX_EXHAUSTIVE_SUBSETS} candidate vertices"
            )));
        }
        let square = abar.select_rows(&subset);
        let rhs: Vec<f64> = subset.iter().map(|&i| -bbar[i]).collect();
        if let Some(p) = linalg::solve_square(&square, &rhs, 1e-10) {
            let slack: Vec<f64> = (0..rows).map(|i| dot(abar.row(i), &p) + bbar[i]).collect();
            let tol =
                CONSISTENCY_TOL * scale * (1.0 + p.iter().fold(0.0f64, |a, v| a.max(v.abs())));
            if slack.iter().all(|&s| s <= tol) {
                let active: Vec<usize> = (0..rows).filter(|&i| slack[i].abs() <= tol).collect();
                if active.len() > k
                    && omni::is_omnidirectional_cone(&abar.select_rows(&active))?.is_omni
                {
                    return Ok(true);
                }
            }
        }
        if !next_combination(&mut subset, rows) {
            return Ok(false);
        }
    }
}

fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Whether `x` is the only solution of `relu(A x) = relu(A x_observed)`.
///
/// `x` is recoverable when the positive rows span `R^n`, or when the rows
/// whose hyperplanes pass through `x` (`<a_i, x> = 0`), projected onto the
/// orthogonal complement `M^perp` of that span, are omnidirectional there.
/// Rows with `<a_i, x> < 0` stay inactive under small moves of `x` and play
/// no part.
pub fn retrieval_under_relu(a: &DenseMatrix, x: &[f64]) -> Result<bool> {
    retrieval_under_relu_with(a, x, &Tolerances::default())
}

pub fn retrieval_under_relu_with(a: &DenseMatrix, x: &[f64], tol: &Tolerances) -> Result<bool> {
    let pre = a.matvec(x)?;
    let n = a.cols();
    let positive: Vec<usize> = (0..a.rows()).filter(|&i| pre[i] > tol.act_tol).collect();
    let (rank, basis) = linalg::rank_and_nullspace(&a.select_rows(&positive), tol.rank_tol)?;
    if rank == n {
        return Ok(true);
    }
    let on_hyperplane: Vec<usize> = (0..a.rows())
        .filter(|&i| pre[i].abs() <= tol.act_tol)
        .collect();
    if on_hyperplane.is_empty() {
        return Ok(false);
    }
    let projected = a.select_rows(&on_hyperplane).matmul(&basis.transpose())?;
    Ok(omni::omnidirectional_with(&projected, &tol.lp_options())?.is_omni)
}

pub fn invariance_probe(
    layer: &AffineLayer,
    x_star: &[f64],
    c: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vector> {
    invariance_probe_with(layer, x_star, c, lower, upper, &Tolerances::default())
}

/// Maximises `<c, x>` over the preimage of `relu(A x_star + b)` intersected
/// with the box `[lower, upper]`.
pub fn invariance_probe_with(
    layer: &AffineLayer,
    x_star: &[f64],
    c: &[f64],
    lower: &[f64],
    upper: &[f64],
    tol: &Tolerances,
) -> Result<Vector> {
    let n = layer.inputs();
    for (name, len) in [
        ("x_star", x_star.len()),
        ("c", c.len()),
        ("lower", lower.len()),
        ("upper", upper.len()),
    ] {
        if len != n {
            return Err(Error::dims(format!(
                "{name} has length {len}, layer takes {n} inputs"
            )));
        }
    }
    if let Some(j) = (0..n).find(|&j| !(lower[j] <= x_star[j] && x_star[j] <= upper[j])) {
        return Err(Error::InvalidInput(format!(
            "x_star[{j}] = {} lies outside [{}, {}]",
            x_star[j], lower[j], upper[j]
        )));
    }
    let y_star = forward(layer, x_star)?;
    let pattern = sign_pattern(&y_star, tol.act_tol)?;
    let p = preimage_program(layer, &y_star, &pattern)?
        .maximize(c)
        .bounds(lower, upper);
    let sol = lp::solve_with(&p, &tol.lp_options())?;
    match sol.status {
        LpStatus::Optimal => Ok(sol.x.expect("optimal solutions carry a point")),
        LpStatus::Infeasible => Err(Error::ProbeInfeasible),
        LpStatus::Unbounded => Err(Error::InvalidInput(
            "objective is unbounded over the preimage; give finite bounds".into(),
        )),
    }
}

//! Omnidirectionality of a matrix `A in R^{m x n}`: every open linear
//! halfspace of `R^n` contains a row of `A`. Equivalent statements, each
//! tested by its own linear program here:
//!
//! * `0` lies in the interior of the convex hull of the rows (hull LP, with
//!   the row-count requirement `m > n`),
//! * `A d <= 0` forces `d = 0` (cone test, `2n` box-bounded LPs),
//! * Stiemke's alternative `A^T x = 0` with `x > 0` (diagnostic only; it is
//!   weaker than omnidirectionality when the rows do not span `R^n`).
//!
//! The hull LP cannot tell the interior from the boundary of the hull, so
//! [`omnidirectional`] uses the cone test as arbiter and reports any
//! disagreement together with the distance-like margin of `0` to the hull
//! boundary.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{DenseMatrix, Vector};
use crate::lp::{self, LpOptions, LpProblem, LpStatus};

/// An LP optimum at or below this value counts as zero in the cone test.
pub const TOL_ZERO: f64 = 1e-7;
/// Lower bound standing in for strict positivity in the Stiemke LP.
pub const EPS_POS: f64 = 1e-6;
/// Disagreements are certified degenerate when `|margin|` is at most this.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// Residual allowed in `A p + b = 0` for the point version.
pub const POINT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OmniMethod {
    HullLp,
    ConeTest,
    Stiemke,
}

/// Verdict of a single method. For a positive hull or Stiemke verdict the
/// witness holds the row weights `x` (`A^T x = 0`); for a negative cone
/// verdict it holds a nonzero `d` with `A d <= 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmniVerdict {
    pub is_omni: bool,
    pub method: OmniMethod,
    pub witness: Option<Vector>,
}

/// Hull and cone verdicts side by side; `is_omni` follows the cone test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OmniReport {
    pub is_omni: bool,
    pub hull: OmniVerdict,
    pub cone: OmniVerdict,
    /// Hull and cone disagree.
    pub disagreement: bool,
    /// Minimum of `max_i <a_i, d>` over `||d||_inf = 1`, computed on
    /// disagreement. Its magnitude bounds the Euclidean distance from `0`
    /// to the hull boundary from above.
    pub boundary_margin: Option<f64>,
    /// Disagreement with `|boundary_margin| <= BOUNDARY_TOL`.
    pub boundary_degenerate: bool,
}

fn nonzero_rows(a: &DenseMatrix) -> Vec<usize> {
    (0..a.rows())
        .filter(|&i| a.row(i).iter().any(|v| *v != 0.0))
        .collect()
}

pub fn is_omnidirectional_hull(a: &DenseMatrix) -> Result<OmniVerdict> {
    is_omnidirectional_hull_with(a, &LpOptions::default())
}

pub fn is_omnidirectional_hull_with(a: &DenseMatrix, opts: &LpOptions) -> Result<OmniVerdict> {
    let negative = OmniVerdict {
        is_omni: false,
        method: OmniMethod::HullLp,
        witness: None,
    };
    let n = a.cols();
    let keep = nonzero_rows(a);
    let m = keep.len();
    if n == 0 {
        return Ok(OmniVerdict {
            is_omni: true,
            ..negative
        });
    }
    if m <= n {
        return Ok(negative);
    }
    let reduced = a.select_rows(&keep);
    let ones = vec![1.0; m];
    let p = LpProblem::new(m)
        .maximize(&ones)
        .uniform_bounds(0.0, 1.0)
        .equality(&reduced.transpose(), &vec![0.0; n])?
        .add_eq(&ones, 1.0)?;
    let sol = lp::solve_with(&p, opts)?;
    Ok(match sol.x {
        Some(x) if sol.status == LpStatus::Optimal => {
            let mut w = Vector::zeros(a.rows());
            for (slot, &i) in keep.iter().enumerate() {
                w[i] = x[slot];
            }
            OmniVerdict {
                is_omni: true,
                method: OmniMethod::HullLp,
                witness: Some(w),
            }
        }
        _ => negative,
    })
}

pub fn is_omnidirectional_cone(a: &DenseMatrix) -> Result<OmniVerdict> {
    is_omnidirectional_cone_with(a, &LpOptions::default())
}

pub fn is_omnidirectional_cone_with(a: &DenseMatrix, opts: &LpOptions) -> Result<OmniVerdict> {
    let n = a.cols();
    let reduced = a.select_rows(&nonzero_rows(a));
    let base = LpProblem::new(n)
        .uniform_bounds(-1.0, 1.0)
        .inequality(&reduced, &vec![0.0; reduced.rows()])?;
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut objective = vec![0.0; n];
            objective[j] = sign;
            let sol = lp::solve_with(&base.clone().maximize(&objective), opts)?;
            // d = 0 is always feasible and the box bounds the program
            let value = sol.objective_value.unwrap_or(0.0);
            if value > TOL_ZERO {
                return Ok(OmniVerdict {
                    is_omni: false,
                    method: OmniMethod::ConeTest,
                    witness: sol.x,
                });
            }
        }
    }
    Ok(OmniVerdict {
        is_omni: true,
        method: OmniMethod::ConeTest,
        witness: None,
    })
}

pub fn is_omnidirectional_stiemke(a: &DenseMatrix) -> Result<OmniVerdict> {
    let (m, n) = a.shape();
    let p = LpProblem::new(m)
        .maximize(&vec![1.0; m])
        .uniform_bounds(EPS_POS, 1.0)
        .equality(&a.transpose(), &vec![0.0; n])?;
    let sol = lp::solve(&p)?;
    Ok(OmniVerdict {
        is_omni: sol.is_optimal(),
        method: OmniMethod::Stiemke,
        witness: sol.x,
    })
}

/// `(A, b)` is omnidirectional for `p` when every hyperplane `<a_i, x> + b_i = 0`
/// passes through `p` and the normals `a_i` are omnidirectional.
pub fn is_omnidirectional_for_point(a: &DenseMatrix, b: &[f64], p: &[f64]) -> Result<bool> {
    if b.len() != a.rows() {
        return Err(crate::Error::dims(format!(
            "bias of length {} for {} rows",
            b.len(),
            a.rows()
        )));
    }
    let mut residual = a.matvec(p)?;
    for (r, bi) in residual.iter_mut().zip(b) {
        *r += bi;
    }
    if residual.norm_inf() > POINT_TOL {
        return Ok(false);
    }
    Ok(is_omnidirectional_cone(a)?.is_omni)
}

/// Signed margin `min_{||d||_inf = 1} max_i <a_i, d>`; positive iff `0` is in
/// the interior of the hull, and `|margin|` is at least the Euclidean distance
/// from `0` to the hull boundary.
pub fn boundary_margin(a: &DenseMatrix, opts: &LpOptions) -> Result<f64> {
    let n = a.cols();
    let keep = nonzero_rows(a);
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    // variables (d, t): minimise t subject to A d - t <= 0, s d_j = 1
    let mut rows = a
        .select_rows(&keep)
        .data()
        .chunks(n)
        .map(|r| {
            let mut row = r.to_vec();
            row.push(-1.0);
            row
        })
        .collect::<Vec<_>>();
    if rows.is_empty() {
        // no nonzero rows: max over the empty set
        rows.push({
            let mut r = vec![0.0; n];
            r.push(-1.0);
            r
        });
    }
    let lhs = DenseMatrix::from_rows(&rows)?;
    let mut lower = vec![-1.0; n + 1];
    let mut upper = vec![1.0; n + 1];
    lower[n] = f64::NEG_INFINITY;
    upper[n] = f64::INFINITY;
    let mut objective = vec![0.0; n + 1];
    objective[n] = -1.0;
    let base = LpProblem::new(n + 1)
        .maximize(&objective)
        .bounds(&lower, &upper)
        .inequality(&lhs, &vec![0.0; lhs.rows()])?;
    let mut margin = f64::INFINITY;
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut pin = vec![0.0; n + 1];
            pin[j] = sign;
            let sol = lp::solve_with(&base.clone().add_eq(&pin, 1.0)?, opts)?;
            if let Some(v) = sol.objective_value {
                margin = margin.min(-v);
            }
        }
    }
    Ok(margin)
}

pub fn omnidirectional(a: &DenseMatrix) -> Result<OmniReport> {
    omnidirectional_with(a, &LpOptions::default())
}

/// Runs the hull LP and the cone test; the cone test decides.
pub fn omnidirectional_with(a: &DenseMatrix, opts: &LpOptions) -> Result<OmniReport> {
    let hull = is_omnidirectional_hull_with(a, opts)?;
    let cone = is_omnidirectional_cone_with(a, opts)?;
    let disagreement = hull.is_omni != cone.is_omni;
    let boundary_margin = if disagreement {
        Some(boundary_margin(a, opts)?)
    } else {
        None
    };
    let boundary_degenerate = boundary_margin.is_some_and(|m| m.abs() <= BOUNDARY_TOL);
    let enough_rows = nonzero_rows(a).len() > a.cols() || a.cols() == 0;
    Ok(OmniReport {
        is_omni: cone.is_omni && enough_rows,
        hull,
        cone,
        disagreement,
        boundary_margin,
        boundary_degenerate,
    })
}

//! Invertibility analysis for ReLU layers and rectifier MLPs.
//!
//! * [`omni`] decides whether a matrix is omnidirectional (its rows meet every
//!   open halfspace through the origin) by three independent LP routes.
//! * [`preimage`] classifies the preimage `{x : relu(Ax + b) = y}` as a single
//!   point, a bounded polytope or an unbounded set, and searches preimages
//!   for points that maximise a linear objective.
//! * [`stability`] builds the exact affine map a rectifier network computes on
//!   one activation region and studies how ReLU masks change its singular
//!   values.
//!
//! [`linalg`] and [`lp`] are the numerical kernels underneath; [`model_io`]
//! reads and writes the model and vector file formats; [`cli`] backs the
//! `relu-preimage` binary.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod model_io;
pub mod omni;
pub mod preimage;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SingularSpectrum, Vector};
pub use lp::{LpProblem, LpSolution, LpStatus};
pub use omni::{OmniMethod, OmniReport, OmniVerdict};
pub use preimage::{AffineLayer, PreimageClass, PreimageKind, ReducedSystem, SignPattern};
pub use stability::{Activation, LinearizationResult, MlpModel};

/// Numerical thresholds shared by the analyses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// An activation `y_i` counts as positive when `y_i > act_tol`.
    pub act_tol: f64,
    /// Relative numerical-rank tolerance (see [`linalg::rank`]).
    pub rank_tol: f64,
    /// Absolute LP constraint tolerance.
    pub feas_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            act_tol: preimage::ACT_TOL,
            rank_tol: linalg::DEFAULT_RANK_TOL,
            feas_tol: lp::FEAS_TOL,
        }
    }
}

impl Tolerances {
    pub fn lp_options(&self) -> lp::LpOptions {
        lp::LpOptions {
            feas_tol: self.feas_tol,
            ..Default::default()
        }
    }
}

//! Exact linearizations of rectifier MLPs and how ReLU masks reshape their
//! singular values.
//!
//! On the activation region containing `x` a rectifier network is affine,
//! `F(x) = A_P x + b_P` with
//! `A_P = A^L D_{I^{L-1}} A^{L-1} ... D_{I^1} A^1`, where `D_I` zeroes the
//! rows listed in `I` (the units switched off at that layer).

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm2, DenseMatrix, SingularSpectrum, Vector};
use crate::lp::{self, LpOptions, LpProblem, STRICT_EPS};
use crate::preimage::{AffineLayer, ACT_TOL};

/// Half-width of the box searched by [`is_admissible`].
pub const ADMISSIBLE_BOX: f64 = 1e3;
/// Bound comparisons for the singular value bounds.
pub const BOUND_TOL: f64 = 1e-9;
/// Relative residual for `a_k` lying in the row space of `D_I A`.
pub const ROWSPACE_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    None,
    /// Softmax head; treated as affine for every analysis.
    SoftmaxIgnored,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::None => "none",
            Activation::SoftmaxIgnored => "softmax_ignored",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "relu" => Some(Activation::Relu),
            "none" => Some(Activation::None),
            "softmax_ignored" | "softmax" => Some(Activation::SoftmaxIgnored),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelLayer {
    pub affine: AffineLayer,
    pub activation: Activation,
}

/// Chain of affine layers, each followed by its activation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlpModel {
    layers: Vec<ModelLayer>,
}

impl MlpModel {
    pub fn new(layers: Vec<ModelLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput(
                "a model needs at least one layer".into(),
            ));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            let (prev, next) = (&pair[0].affine, &pair[1].affine);
            if next.inputs() != prev.outputs() {
                return Err(Error::dims(format!(
                    "layer {} outputs {} values but layer {} takes {}",
                    l + 1,
                    prev.outputs(),
                    l + 2,
                    next.inputs()
                )));
            }
        }
        Ok(MlpModel { layers })
    }

    /// ReLU after every layer but the last.
    pub fn relu_mlp(layers: Vec<AffineLayer>) -> Result<Self> {
        let last = layers.len().saturating_sub(1);
        MlpModel::new(
            layers
                .into_iter()
                .enumerate()
                .map(|(l, affine)| ModelLayer {
                    affine,
                    activation: if l < last {
                        Activation::Relu
                    } else {
                        Activation::None
                    },
                })
                .collect(),
        )
    }

    pub fn layers(&self) -> &[ModelLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].affine.inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].affine.outputs()
    }

    /// Network output.
    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        self.forward_until(x, self.layers.len())
    }

    /// Output of the first `count` layers (the input itself for `count = 0`).
    pub fn forward_until(&self, x: &[f64], count: usize) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(Error::dims(format!(
                "input of length {} for a model taking {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h: Vector = x.to_vec().into();
        for layer in &self.layers[..count.min(self.layers.len())] {
            h = layer.affine.preactivation(&h)?;
            if layer.activation == Activation::Relu {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }
}

/// Deactivated units per layer. Layers without ReLU have an empty set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MaskChain {
    pub index_sets: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearizationResult {
    pub a_p: DenseMatrix,
    pub b_p: Vector,
    pub chain: MaskChain,
}

impl LinearizationResult {
    pub fn apply(&self, x: &[f64]) -> Result<Vector> {
        let mut out = self.a_p.matvec(x)?;
        for (o, b) in out.iter_mut().zip(self.b_p.iter()) {
            *o += b;
        }
        Ok(out)
    }
}

pub fn linearize(model: &MlpModel, x: &[f64]) -> Result<LinearizationResult> {
    linearize_with(model, x, ACT_TOL)
}

/// Affine map of the activation region containing `x`. A unit counts as
/// switched off when its preactivation is `<= act_tol`.
pub fn linearize_with(model: &MlpModel, x: &[f64], act_tol: f64) -> Result<LinearizationResult> {
    if x.len() != model.input_dim() {
        return Err(Error::dims(format!(
            "input of length {} for a model taking {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut h: Vector = x.to_vec().into();
    let mut a_p = DenseMatrix::identity(x.len());
    let mut b_p = Vector::zeros(x.len());
    let mut index_sets = Vec::with_capacity(model.layers.len());
    for layer in &model.layers {
        let w = &layer.affine.weight;
        a_p = w.matmul(&a_p)?;
        b_p = layer.affine.preactivation(&b_p)?;
        h = layer.affine.preactivation(&h)?;
        let mut off = Vec::new();
        if layer.activation == Activation::Relu {
            off = (0..h.len()).filter(|&i| h[i] <= act_tol).collect();
            for &i in &off {
                h[i] = 0.0;
                b_p[i] = 0.0;
            }
            a_p = a_p.zero_rows(&off);
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        index_sets.push(off);
    }
    Ok(LinearizationResult {
        a_p,
        b_p,
        chain: MaskChain { index_sets },
    })
}

fn check_indices(rows: usize, set: &[usize]) -> Result<Vec<usize>> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    if let Some(&bad) = v.iter().find(|&&i| i >= rows) {
        return Err(Error::InvalidInput(format!(
            "index {bad} out of range for {rows} rows"
        )));
    }
    Ok(v)
}

pub fn is_admissible(layer: &AffineLayer, off: &[usize]) -> Result<bool> {
    is_admissible_with(layer, off, &LpOptions::default())
}

/// Whether some input in `[-B, B]^n` switches off exactly the units in `off`
/// and keeps every other unit strictly active (margin `STRICT_EPS`).
pub fn is_admissible_with(layer: &AffineLayer, off: &[usize], opts: &LpOptions) -> Result<bool> {
    let (m, n) = layer.weight.shape();
    let off = check_indices(m, off)?;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let a = layer.weight.row(i);
        let b = layer.bias[i];
        if off.binary_search(&i).is_ok() {
            rows.push(a.to_vec());
            rhs.push(-b);
        } else {
            rows.push(a.iter().map(|v| -v).collect());
            rhs.push(b - STRICT_EPS);
        }
    }
    let lhs = if rows.is_empty() {
        DenseMatrix::zeros(0, n)
    } else {
        DenseMatrix::from_rows(&rows)?
    };
    let p = LpProblem::new(n)
        .uniform_bounds(-ADMISSIBLE_BOX, ADMISSIBLE_BOX)
        .inequality(&lhs, &rhs)?;
    lp::feasible_with(&p, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumEffect {
    pub before: SingularSpectrum,
    pub after: SingularSpectrum,
    /// Largest value after masking is at most the largest before.
    pub max_bound_holds: bool,
    /// `k = N - |I|` with `N` the nonzero count before masking; `None` when
    /// `k <= 0` or nothing survives the mask.
    pub k: Option<usize>,
    /// Smallest nonzero value after masking is at most `sigma_k` before.
    pub min_bound_holds: Option<bool>,
}

impl SpectrumEffect {
    pub fn holds(&self) -> bool {
        self.max_bound_holds && self.min_bound_holds.unwrap_or(true)
    }
}

/// Spectra of `A` and `D_I A` and the two global bounds relating them.
pub fn spectrum_effect(a: &DenseMatrix, off: &[usize]) -> Result<SpectrumEffect> {
    let off = check_indices(a.rows(), off)?;
    let before = linalg::singular_values(a)?;
    let after = linalg::singular_values(&a.zero_rows(&off))?;
    let max_bound_holds = after.sigma_max() <= before.sigma_max() + BOUND_TOL;
    let k = before.num_nonzero.checked_sub(off.len()).filter(|&k| k > 0);
    let min_bound_holds = match (k, after.sigma_min_nonzero()) {
        (Some(k), Some(min_after)) => Some(min_after <= before.values[k - 1] + BOUND_TOL),
        _ => None,
    };
    Ok(SpectrumEffect {
        before,
        after,
        max_bound_holds,
        k,
        min_bound_holds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationBound {
    /// Smallest `c` with `|<a_j, a_k>| <= c ||a_k|| / sqrt(M)` for all kept `j`.
    pub c_min: f64,
    /// Smallest nonzero singular value of `D_I A` (`None` if all are zero).
    pub sigma_min_after: Option<f64>,
    /// `a_k` lies in `N(D_I A)^perp`, the precondition of the bound.
    pub bound_applies: bool,
    pub m_remaining: usize,
}

impl CorrelationBound {
    /// `sigma_min_after <= c_min` whenever the precondition holds.
    pub fn holds(&self) -> bool {
        !self.bound_applies
            || self
                .sigma_min_after
                .is_some_and(|s| s <= self.c_min + BOUND_TOL)
    }
}

/// Bound on the smallest nonzero singular value of `D_I A` from how weakly the
/// removed row `a_k` correlates with the rows that remain.
pub fn correlation_bound(a: &DenseMatrix, off: &[usize], k: usize) -> Result<CorrelationBound> {
    let m = a.rows();
    let off = check_indices(m, off)?;
    if off.binary_search(&k).is_err() {
        return Err(Error::InvalidInput(format!(
            "row {k} is not in the removed set"
        )));
    }
    let m_remaining = m - off.len();
    if m_remaining == 0 {
        return Err(Error::InvalidInput("no rows remain after masking".into()));
    }
    let a_k = a.row(k);
    let norm_k = norm2(a_k);
    if norm_k == 0.0 {
        return Err(Error::DegenerateRow(k));
    }
    let sqrt_m = (m_remaining as f64).sqrt();
    let c_min = (0..m)
        .filter(|i| off.binary_search(i).is_err())
        .map(|j| dot(a.row(j), a_k).abs() * sqrt_m / norm_k)
        .fold(0.0f64, f64::max);

    let masked = a.zero_rows(&off);
    let sigma_min_after = linalg::singular_values(&masked)?.sigma_min_nonzero();
    let null = linalg::nullspace_basis(&masked, linalg::DEFAULT_RANK_TOL)?;
    let residual = null.matvec(a_k)?.norm();
    let bound_applies = sigma_min_after.is_some() && residual <= ROWSPACE_TOL * norm_k;
    Ok(CorrelationBound {
        c_min,
        sigma_min_after,
        bound_applies,
        m_remaining,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationSweep {
    pub c_grid: Vec<f64>,
    /// Removed rows considered as `a_k`, ascending.
    pub candidates: Vec<usize>,
    /// `counts[c][j]`: kept rows satisfying the condition for `candidates[j]`.
    pub counts: Vec<Vec<usize>>,
    /// Per grid point, the largest count over the candidates.
    pub max_counts: Vec<usize>,
    /// Candidate attaining `max_counts` (lowest index on ties).
    pub best_rows: Vec<usize>,
    pub m_remaining: usize,
    /// Level at which every kept row satisfies the condition.
    pub threshold_row_count: usize,
}

impl CorrelationSweep {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,max_count,best_row,m_remaining\n");
        for (i, c) in self.c_grid.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                crate::model_io::format_float(*c),
                self.max_counts[i],
                self.best_rows[i],
                self.m_remaining
            ));
        }
        out
    }
}

/// For every `c` on the grid and every removed row `a_k`, counts the kept rows
/// with `|<a_i, a_k>| <= c ||a_k|| / sqrt(M)`, then keeps the best `a_k`. The
/// row-space precondition on `a_k` is not checked here.
pub fn correlation_sweep(
    a: &DenseMatrix,
    off: &[usize],
    c_grid: &[f64],
) -> Result<CorrelationSweep> {
    let m = a.rows();
    let off = check_indices(m, off)?;
    if off.is_empty() {
        return Err(Error::NothingRemoved);
    }
    if c_grid.windows(2).any(|w| !(w[0] <= w[1])) || c_grid.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput(
            "c grid must be finite and ascending".into(),
        ));
    }
    let kept: Vec<usize> = (0..m).filter(|i| off.binary_search(i).is_err()).collect();
    let m_remaining = kept.len();
    let sqrt_m = (m_remaining.max(1) as f64).sqrt();
    // normalised correlations |<a_i, a_k>| sqrt(M) / ||a_k||, sorted per k
    let scores: Vec<Vec<f64>> = off
        .iter()
        .map(|&k| {
            let a_k = a.row(k);
            let norm_k = norm2(a_k);
            let mut s: Vec<f64> = kept
                .iter()
                .map(|&i| {
                    let ip = dot(a.row(i), a_k).abs();
                    if norm_k == 0.0 {
                        0.0
                    } else {
                        ip * sqrt_m / norm_k
                    }
                })
                .collect();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();

    let mut counts = Vec::with_capacity(c_grid.len());
    let mut max_counts = Vec::with_capacity(c_grid.len());
    let mut best_rows = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let row: Vec<usize> = scores
            .iter()
            .map(|s| s.partition_point(|&v| v <= c))
            .collect();
        let (best, &max) = row
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(&x.0)))
            .expect("candidate set is nonempty");
        max_counts.push(max);
        best_rows.push(off[best]);
        counts.push(row);
    }
    Ok(CorrelationSweep {
        c_grid: c_grid.to_vec(),
        candidates: off,
        counts,
        max_counts,
        best_rows,
        m_remaining,
        threshold_row_count: m_remaining,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Stage {
    Affine,
    Relu,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Affine => "affine",
            Stage::Relu => "relu",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Stat {
    SigmaMax,
    SigmaMinNonzero,
    NumNonzero,
    Cond,
}

impl Stat {
    pub const ALL: [Stat; 4] = [
        Stat::SigmaMax,
        Stat::SigmaMinNonzero,
        Stat::NumNonzero,
        Stat::Cond,
    ];
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stat::SigmaMax => "sigma_max",
            Stat::SigmaMinNonzero => "sigma_min_nonzero",
            Stat::NumNonzero => "num_nonzero",
            Stat::Cond => "cond",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    /// 1-based layer index.
    pub layer_index: usize,
    pub stage: Stage,
    pub stat: Stat,
    /// Median over the samples for which the statistic is defined.
    pub value: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub rows: Vec<ReportRow>,
}

impl SpectrumReport {
    pub const CSV_HEADER: &'static str = "layer_index,stage,stat,value,n_samples";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.layer_index,
                r.stage,
                r.stat,
                crate::model_io::format_float(r.value),
                r.n_samples
            ));
        }
        out
    }

    pub fn get(&self, layer_index: usize, stage: Stage, stat: Stat) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.layer_index == layer_index && r.stage == stage && r.stat == stat)
    }
}

/// Spectra of the accumulated linearization after every affine step and
/// every ReLU step, for one input.
pub fn stage_spectra(
    model: &MlpModel,
    x: &[f64],
    act_tol: f64,
) -> Result<Vec<(usize, Stage, SingularSpectrum)>> {
    if x.len() != model.input_dim() {
        return Err(Error::dims(format!(
            "input of length {} for a model taking {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut out = Vec::new();
    let mut h: Vector = x.to_vec().into();
    let mut acc: Option<DenseMatrix> = None;
    for (l, layer) in model.layers.iter().enumerate() {
        let w = &layer.affine.weight;
        let prod = match &acc {
            None => w.clone(),
            Some(prev) => w.matmul(prev)?,
        };
        out.push((l + 1, Stage::Affine, linalg::singular_values(&prod)?));
        h = layer.affine.preactivation(&h)?;
        let prod = if layer.activation == Activation::Relu {
            let off: Vec<usize> = (0..h.len()).filter(|&i| h[i] <= act_tol).collect();
            h.iter_mut().for_each(|v| *v = v.max(0.0));
            let masked = prod.zero_rows(&off);
            out.push((l + 1, Stage::Relu, linalg::singular_values(&masked)?));
            masked
        } else {
            prod
        };
        acc = Some(prod);
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn layerwise_report(model: &MlpModel, inputs: &[Vector]) -> Result<SpectrumReport> {
    layerwise_report_with(model, inputs, ACT_TOL)
}

/// Per-stage medians of the singular value statistics over `inputs`.
/// Undefined statistics (no nonzero singular value) are left out of the
/// median and of `n_samples`.
pub fn layerwise_report_with(
    model: &MlpModel,
    inputs: &[Vector],
    act_tol: f64,
) -> Result<SpectrumReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput(
            "layerwise report needs at least one input".into(),
        ));
    }
    let per_input: Vec<Vec<(usize, Stage, SingularSpectrum)>> = inputs
        .par_iter()
        .map(|x| stage_spectra(model, x, act_tol))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (s, &(layer_index, stage, _)) in per_input[0].iter().enumerate() {
        for stat in Stat::ALL {
            let mut values: Vec<f64> = per_input
                .iter()
                .filter_map(|stages| {
                    let spec = &stages[s].2;
                    match stat {
                        Stat::SigmaMax => Some(spec.sigma_max()),
                        Stat::SigmaMinNonzero => spec.sigma_min_nonzero(),
                        Stat::NumNonzero => Some(spec.num_nonzero as f64),
                        Stat::Cond => linalg::condition_number(spec).ok(),
                    }
                })
                .collect();
            if values.is_empty() {
                continue;
            }
            let n_samples = values.len();
            rows.push(ReportRow {
                layer_index,
                stage,
                stat,
                value: median(&mut values),
                n_samples,
            });
        }
    }
    Ok(SpectrumReport { rows })
}

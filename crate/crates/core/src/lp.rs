//! Dense two-phase simplex for bounded-variable linear programs.
//!
//! Problems are stated as
//!
//! ```text
//! maximize   <objective, x>
//! subject to eq_lhs   x  = eq_rhs
//!            ineq_lhs x <= ineq_rhs
//!            lower <= x <= upper        (entries may be infinite)
//! ```
//!
//! and rewritten into `A z = b, z >= 0` by shifting, reflecting or splitting
//! each variable according to which of its bounds are finite. A finite upper
//! bound on a shifted variable becomes an extra `<=` row. Pivoting follows
//! Bland's rule throughout, so the method terminates on degenerate problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_square, DenseMatrix, Vector};

/// Absolute tolerance on constraint residuals.
pub const FEAS_TOL: f64 = 1e-8;
/// Relative optimality tolerance.
pub const OPT_TOL: f64 = 1e-8;
/// Margin used to model strict inequalities `<a, x> > beta` as
/// `<a, x> >= beta + STRICT_EPS`.
pub const STRICT_EPS: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const ITERATION_FACTOR: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub objective: Vector,
    pub eq_lhs: DenseMatrix,
    pub eq_rhs: Vector,
    pub ineq_lhs: DenseMatrix,
    pub ineq_rhs: Vector,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Problem over `n` free variables with zero objective and no rows.
    pub fn new(n: usize) -> Self {
        LpProblem {
            objective: Vector::zeros(n),
            eq_lhs: DenseMatrix::zeros(0, n),
            eq_rhs: Vector::zeros(0),
            ineq_lhs: DenseMatrix::zeros(0, n),
            ineq_rhs: Vector::zeros(0),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn maximize(mut self, objective: &[f64]) -> Self {
        self.objective = objective.to_vec().into();
        self
    }

    pub fn bounds(mut self, lower: &[f64], upper: &[f64]) -> Self {
        self.lower = lower.to_vec();
        self.upper = upper.to_vec();
        self
    }

    pub fn uniform_bounds(mut self, lower: f64, upper: f64) -> Self {
        let n = self.num_vars();
        self.lower = vec![lower; n];
        self.upper = vec![upper; n];
        self
    }

    pub fn equality(mut self, lhs: &DenseMatrix, rhs: &[f64]) -> Result<Self> {
        self.eq_lhs = self.eq_lhs.vstack(lhs)?;
        self.eq_rhs.extend_rows(rhs);
        Ok(self)
    }

    pub fn inequality(mut self, lhs: &DenseMatrix, rhs: &[f64]) -> Result<Self> {
        self.ineq_lhs = self.ineq_lhs.vstack(lhs)?;
        self.ineq_rhs.extend_rows(rhs);
        Ok(self)
    }

    pub fn add_eq(self, row: &[f64], rhs: f64) -> Result<Self> {
        let lhs = DenseMatrix::from_rows(&[row])?;
        self.equality(&lhs, &[rhs])
    }

    pub fn add_le(self, row: &[f64], rhs: f64) -> Result<Self> {
        let lhs = DenseMatrix::from_rows(&[row])?;
        self.inequality(&lhs, &[rhs])
    }

    pub fn add_ge(self, row: &[f64], rhs: f64) -> Result<Self> {
        let neg: Vec<f64> = row.iter().map(|v| -v).collect();
        self.add_le(&neg, -rhs)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let bad = |msg: String| Err(Error::InvalidProblem(msg));
        if self.eq_lhs.cols() != n || self.ineq_lhs.cols() != n {
            return bad(format!(
                "constraint matrices have {} / {} columns for {n} variables",
                self.eq_lhs.cols(),
                self.ineq_lhs.cols()
            ));
        }
        if self.eq_lhs.rows() != self.eq_rhs.len() || self.ineq_lhs.rows() != self.ineq_rhs.len() {
            return bad("right-hand side length differs from row count".into());
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad(format!("bounds must have length {n}"));
        }
        if !(self.objective.iter().all(|v| v.is_finite())
            && self.eq_rhs.iter().all(|v| v.is_finite())
            && self.ineq_rhs.iter().all(|v| v.is_finite())
            && self.eq_lhs.is_finite()
            && self.ineq_lhs.is_finite())
        {
            return bad("non-finite coefficient".into());
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("invalid bounds [{l}, {u}] on variable {j}"));
            }
        }
        Ok(())
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (row, rhs) in self.eq_lhs.row_iter().zip(self.eq_rhs.iter()) {
            worst = worst.max((dot(row, x) - rhs).abs());
        }
        for (row, rhs) in self.ineq_lhs.row_iter().zip(self.ineq_rhs.iter()) {
            worst = worst.max(dot(row, x) - rhs);
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

trait ExtendRows {
    fn extend_rows(&mut self, rhs: &[f64]);
}

impl ExtendRows for Vector {
    fn extend_rows(&mut self, rhs: &[f64]) {
        let mut v = std::mem::take(self).into_inner();
        v.extend_from_slice(rhs);
        *self = v.into();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Option<Vector>,
    pub objective_value: Option<f64>,
    pub iterations: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            status,
            x: None,
            objective_value: None,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// The iteration cap is `iteration_factor * (columns + rows)` of the
    /// standard-form problem.
    pub iteration_factor: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: FEAS_TOL,
            opt_tol: OPT_TOL,
            iteration_factor: ITERATION_FACTOR,
        }
    }
}

pub fn solve(p: &LpProblem) -> Result<LpSolution> {
    solve_with(p, &LpOptions::default())
}

pub fn solve_with(p: &LpProblem, opts: &LpOptions) -> Result<LpSolution> {
    p.validate()?;
    let mut std = StandardForm::build(p, opts)?;
    let Some(mut tab) = std.tableau.take() else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    };
    if !tab.phase_one(opts)? {
        return Ok(LpSolution::without_point(
            LpStatus::Infeasible,
            tab.iterations,
        ));
    }
    let cost: Vec<f64> = std.cost.clone();
    if !tab.optimize(&cost)? {
        return Ok(LpSolution::without_point(
            LpStatus::Unbounded,
            tab.iterations,
        ));
    }
    let z = tab.polished_point(&std.scaled_rows, &std.scaled_rhs);
    let x = std.recover(&z, p);
    let value = dot(&p.objective, &x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: Some(value),
        x: Some(x),
        iterations: tab.iterations,
    })
}

/// Phase-1 feasibility; the objective is ignored.
pub fn feasible(p: &LpProblem) -> Result<bool> {
    feasible_with(p, &LpOptions::default())
}

pub fn feasible_with(p: &LpProblem, opts: &LpOptions) -> Result<bool> {
    p.validate()?;
    let std = StandardForm::build(p, opts)?;
    match std.tableau {
        None => Ok(false),
        Some(mut tab) => tab.phase_one(opts),
    }
}

/// Original variable `x_j = offset + sum(coef * z_col)`.
#[derive(Clone, Debug)]
struct VarMap {
    offset: f64,
    terms: Vec<(usize, f64)>,
}

struct StandardForm {
    maps: Vec<VarMap>,
    /// Cost of the minimisation over all tableau columns (artificials zero).
    cost: Vec<f64>,
    /// Row-scaled constraint matrix over the structural and slack columns,
    /// kept for the final basis re-solve.
    scaled_rows: Vec<Vec<f64>>,
    scaled_rhs: Vec<f64>,
    /// `None` when a constant row is already violated.
    tableau: Option<Tableau>,
}

impl StandardForm {
    fn build(p: &LpProblem, opts: &LpOptions) -> Result<Self> {
        let n = p.num_vars();
        let mut maps = Vec::with_capacity(n);
        let mut num_struct = 0usize;
        // (column, range) for shifted variables with both bounds finite
        let mut range_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (l, u) = (p.lower[j], p.upper[j]);
            let map = match (l.is_finite(), u.is_finite()) {
                (true, _) => {
                    let col = num_struct;
                    num_struct += 1;
                    if u.is_finite() {
                        range_rows.push((col, u - l));
                    }
                    VarMap {
                        offset: l,
                        terms: vec![(col, 1.0)],
                    }
                }
                (false, true) => {
                    let col = num_struct;
                    num_struct += 1;
                    VarMap {
                        offset: u,
                        terms: vec![(col, -1.0)],
                    }
                }
                (false, false) => {
                    let col = num_struct;
                    num_struct += 2;
                    VarMap {
                        offset: 0.0,
                        terms: vec![(col, 1.0), (col + 1, -1.0)],
                    }
                }
            };
            maps.push(map);
        }

        let transform = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; num_struct];
            let mut shift = 0.0;
            for (j, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                shift += a * maps[j].offset;
                for &(col, coef) in &maps[j].terms {
                    out[col] += a * coef;
                }
            }
            (out, rhs - shift)
        };

        // (coefficients, rhs, has_slack)
        let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
        let mut violated = false;
        let mut push = |coefs: Vec<f64>, rhs: f64, slack: bool| {
            let scale = coefs.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if scale == 0.0 {
                let ok = if slack {
                    rhs >= -opts.feas_tol
                } else {
                    rhs.abs() <= opts.feas_tol
                };
                violated |= !ok;
                return;
            }
            let coefs = coefs.into_iter().map(|v| v / scale).collect();
            rows.push((coefs, rhs / scale, slack));
        };
        for (row, &rhs) in p.eq_lhs.row_iter().zip(p.eq_rhs.iter()) {
            let (c, r) = transform(row, rhs);
            push(c, r, false);
        }
        for (row, &rhs) in p.ineq_lhs.row_iter().zip(p.ineq_rhs.iter()) {
            let (c, r) = transform(row, rhs);
            push(c, r, true);
        }
        for &(col, range) in &range_rows {
            let mut c = vec![0.0; num_struct];
            c[col] = 1.0;
            push(c, range, true);
        }

        let mut cost = vec![0.0; num_struct];
        for (j, map) in maps.iter().enumerate() {
            for &(col, coef) in &map.terms {
                cost[col] -= p.objective[j] * coef;
            }
        }

        let num_slack = rows.iter().filter(|r| r.2).count();
        let width = num_struct + num_slack;
        let mut scaled_rows = Vec::with_capacity(rows.len());
        let mut scaled_rhs = Vec::with_capacity(rows.len());
        let mut slack_col = num_struct;
        let mut slack_of_row = Vec::with_capacity(rows.len());
        for (coefs, rhs, slack) in &rows {
            let mut full = coefs.clone();
            full.resize(width, 0.0);
            if *slack {
                full[slack_col] = 1.0;
                slack_of_row.push(Some(slack_col));
                slack_col += 1;
            } else {
                slack_of_row.push(None);
            }
            scaled_rows.push(full);
            scaled_rhs.push(*rhs);
        }
        cost.resize(width, 0.0);

        let tableau = if violated {
            None
        } else {
            let cap = opts.iteration_factor * (width + rows.len()).max(1);
            Some(Tableau::new(
                &scaled_rows,
                &scaled_rhs,
                &slack_of_row,
                width,
                cap,
            ))
        };
        Ok(StandardForm {
            maps,
            cost,
            scaled_rows,
            scaled_rhs,
            tableau,
        })
    }

    fn recover(&self, z: &[f64], p: &LpProblem) -> Vector {
        self.maps
            .iter()
            .enumerate()
            .map(|(j, m)| {
                let v = m.offset + m.terms.iter().map(|&(c, coef)| coef * z[c]).sum::<f64>();
                v.clamp(p.lower[j], p.upper[j])
            })
            .collect()
    }
}

struct Tableau {
    /// Row-major `rows x cols`, columns = structural + slack + artificial.
    t: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    rows: usize,
    cols: usize,
    /// Columns `>= first_artificial` are artificial.
    first_artificial: usize,
    /// Columns barred from entering the basis.
    blocked: Vec<bool>,
    iterations: usize,
    cap: usize,
}

impl Tableau {
    fn new(
        rows_in: &[Vec<f64>],
        rhs_in: &[f64],
        slack_of_row: &[Option<usize>],
        width: usize,
        cap: usize,
    ) -> Self {
        let m = rows_in.len();
        let mut needs_art = Vec::with_capacity(m);
        let mut signs = Vec::with_capacity(m);
        for (i, &b) in rhs_in.iter().enumerate() {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            signs.push(sign);
            needs_art.push(!(slack_of_row[i].is_some() && sign > 0.0));
        }
        let num_art = needs_art.iter().filter(|&&a| a).count();
        let cols = width + num_art;
        let mut t = vec![0.0; m * cols];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut art = width;
        for i in 0..m {
            let row = &mut t[i * cols..(i + 1) * cols];
            for (dst, src) in row.iter_mut().zip(&rows_in[i]) {
                *dst = signs[i] * src;
            }
            rhs[i] = signs[i] * rhs_in[i];
            if needs_art[i] {
                row[art] = 1.0;
                basis[i] = art;
                art += 1;
            } else {
                basis[i] = slack_of_row[i].expect("slack row");
            }
        }
        Tableau {
            t,
            rhs,
            basis,
            rows: m,
            cols,
            first_artificial: width,
            blocked: vec![false; cols],
            iterations: 0,
            cap,
        }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = (0..self.cols)
            .map(|j| cost.get(j).copied().unwrap_or(0.0))
            .collect();
        for i in 0..self.rows {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * self.cols..(i + 1) * self.cols];
            for (dj, a) in d.iter_mut().zip(row) {
                *dj -= cb * a;
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, s: usize, d: &mut [f64]) {
        let cols = self.cols;
        let piv = self.t[r * cols + s];
        for v in &mut self.t[r * cols..(r + 1) * cols] {
            *v /= piv;
        }
        self.rhs[r] /= piv;
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * cols + s];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            row[s] = 0.0;
            self.rhs[i] -= f * self.rhs[r];
            if self.rhs[i].abs() < 1e-13 {
                self.rhs[i] = 0.0;
            }
        }
        let f = d[s];
        if f != 0.0 {
            for (dj, p) in d.iter_mut().zip(&pivot_row) {
                *dj -= f * p;
            }
            d[s] = 0.0;
        }
        self.basis[r] = s;
    }

    /// Minimises `cost` from the current feasible basis. Returns `false` when
    /// the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool> {
        let mut d = self.reduced_costs(cost);
        loop {
            // Bland: lowest-index improving column enters
            let Some(s) = (0..self.cols).find(|&j| !self.blocked[j] && d[j] < -COST_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.entry(i, s);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[r] {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Ok(false);
            };
            self.iterations += 1;
            if self.iterations > self.cap {
                return Err(Error::SolverStalled {
                    iterations: self.iterations - 1,
                });
            }
            self.pivot(r, s, &mut d);
        }
    }

    /// Runs phase 1 and, on success, removes artificial variables from the
    /// basis (dropping redundant rows). Returns feasibility.
    fn phase_one(&mut self, opts: &LpOptions) -> Result<bool> {
        if self.first_artificial == self.cols {
            return Ok(true);
        }
        let cost: Vec<f64> = (0..self.cols)
            .map(|j| if j >= self.first_artificial { 1.0 } else { 0.0 })
            .collect();
        let bounded = self.optimize(&cost)?;
        debug_assert!(bounded, "phase 1 objective is bounded below by zero");
        // rows have unit max coefficient, so this is an absolute violation
        let residual = (0..self.rows)
            .filter(|&i| self.basis[i] >= self.first_artificial)
            .fold(0.0f64, |acc, i| acc.max(self.rhs[i].abs()));
        if residual > opts.feas_tol {
            return Ok(false);
        }

        let mut dummy = vec![0.0; self.cols];
        let mut keep = vec![true; self.rows];
        for i in 0..self.rows {
            if self.basis[i] < self.first_artificial {
                continue;
            }
            let candidate = (0..self.first_artificial)
                .filter(|&j| self.entry(i, j).abs() > 1e-7)
                .max_by(|&a, &b| self.entry(i, a).abs().total_cmp(&self.entry(i, b).abs()));
            match candidate {
                Some(j) => {
                    self.rhs[i] = 0.0;
                    self.pivot(i, j, &mut dummy);
                }
                None => keep[i] = false,
            }
        }
        if keep.iter().any(|k| !k) {
            let cols = self.cols;
            let mut t = Vec::with_capacity(self.t.len());
            let mut rhs = Vec::new();
            let mut basis = Vec::new();
            for i in (0..self.rows).filter(|&i| keep[i]) {
                t.extend_from_slice(&self.t[i * cols..(i + 1) * cols]);
                rhs.push(self.rhs[i]);
                basis.push(self.basis[i]);
            }
            self.rows = basis.len();
            self.t = t;
            self.rhs = rhs;
            self.basis = basis;
        }
        for j in self.first_artificial..self.cols {
            self.blocked[j] = true;
        }
        Ok(true)
    }

    /// Basic solution over the structural and slack columns, re-solved from
    /// the original rows of the final basis to shed accumulated pivot error.
    fn polished_point(&self, rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
        let width = self.first_artificial;
        let mut z = vec![0.0; width];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < width {
                z[b] = self.rhs[i].max(0.0);
            }
        }
        let m = rows.len();
        let basic: Vec<usize> = self.basis.iter().copied().filter(|&b| b < width).collect();
        if basic.len() != m || m == 0 {
            return z;
        }
        let mut b_mat = DenseMatrix::zeros(m, m);
        for (i, row) in rows.iter().enumerate() {
            for (k, &col) in basic.iter().enumerate() {
                b_mat.set(i, k, row[col]);
            }
        }
        if let Some(sol) = solve_square(&b_mat, rhs, 1e-12) {
            if sol.iter().all(|v| *v >= -1e-9) {
                for (k, &col) in basic.iter().enumerate() {
                    z[col] = sol[k].max(0.0);
                }
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn single_bound_constraint() {
        let p = LpProblem::new(2)
            .maximize(&[1.0, 0.0])
            .uniform_bounds(0.0, 10.0)
            .add_le(&[1.0, 0.0], 2.0)
            .unwrap();
        let s = solve(&p).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!(approx(s.x.unwrap()[0], 2.0));
    }

    #[test]
    fn contradictory_equalities() {
        let p = LpProblem::new(1)
            .maximize(&[1.0])
            .add_eq(&[1.0], 1.0)
            .unwrap()
            .add_eq(&[1.0], 2.0)
            .unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn simplex_vertex_is_one_of_two() {
        let p = LpProblem::new(2)
            .maximize(&[1.0, 1.0])
            .uniform_bounds(0.0, f64::INFINITY)
            .add_le(&[1.0, 1.0], 1.0)
            .unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.objective_value.unwrap(), 1.0));
        let x = s.x.unwrap();
        let is_vertex = |a: f64, b: f64| approx(x[0], a) && approx(x[1], b);
        assert!(is_vertex(1.0, 0.0) || is_vertex(0.0, 1.0), "{x:?}");
    }

    #[test]
    fn unbounded_ray() {
        let p = LpProblem::new(2)
            .maximize(&[1.0, 0.0])
            .add_le(&[0.0, 1.0], 1.0)
            .unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn feasibility_examples() {
        let base = LpProblem::new(2).uniform_bounds(0.0, 1.0);
        assert!(feasible(&base.clone().add_eq(&[1.0, 1.0], 1.0).unwrap()).unwrap());
        assert!(!feasible(&base.add_eq(&[1.0, 1.0], 3.0).unwrap()).unwrap());
    }

    #[test]
    fn hull_program_for_triangle() {
        // A^T x = 0, sum x = 1, x in [0,1]^3 with rows (1,0), (0,1), (-1,-1)
        let at =
            DenseMatrix::from_rows(&[[1.0, 0.0, -1.0], [0.0, 1.0, -1.0], [1.0, 1.0, 1.0]]).unwrap();
        let p = LpProblem::new(3)
            .maximize(&[1.0, 1.0, 1.0])
            .uniform_bounds(0.0, 1.0)
            .equality(&at, &[0.0, 0.0, 1.0])
            .unwrap();
        assert!(feasible(&p).unwrap());
        let x = solve(&p).unwrap().x.unwrap();
        for v in x.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reflected_and_free_variables() {
        // x0 has only an upper bound, x1 is free
        let p = LpProblem::new(2)
            .maximize(&[-1.0, 1.0])
            .bounds(
                &[f64::NEG_INFINITY, f64::NEG_INFINITY],
                &[3.0, f64::INFINITY],
            )
            .add_le(&[-1.0, 1.0], 1.0)
            .unwrap()
            .add_ge(&[1.0, 0.0], -2.0)
            .unwrap()
            .add_le(&[0.0, 1.0], 0.5)
            .unwrap();
        let s = solve(&p).unwrap();
        let x = s.x.unwrap();
        // the edge x1 - x0 = 1 is optimal throughout
        assert!(p.max_violation(&x) < 1e-9, "{x:?}");
        assert!(approx(s.objective_value.unwrap(), 1.0));
    }

    #[test]
    fn rejects_malformed_problems() {
        let mut p = LpProblem::new(2);
        p.lower[0] = 1.0;
        p.upper[0] = 0.0;
        assert!(matches!(solve(&p), Err(Error::InvalidProblem(_))));
        let q = LpProblem::new(2);
        assert!(q.add_le(&[1.0], 0.0).is_err());
    }

    #[test]
    fn zero_rows_are_checked_not_solved() {
        let p = LpProblem::new(1)
            .uniform_bounds(0.0, 1.0)
            .add_le(&[0.0], -1.0)
            .unwrap();
        assert_eq!(solve(&p).unwrap().status, LpStatus::Infeasible);
        let q = LpProblem::new(1)
            .uniform_bounds(0.0, 1.0)
            .add_eq(&[0.0], 0.0)
            .unwrap();
        assert!(feasible(&q).unwrap());
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let p = LpProblem::new(2)
            .maximize(&[1.0, 2.0])
            .uniform_bounds(0.0, 5.0)
            .add_eq(&[1.0, 1.0], 2.0)
            .unwrap()
            .add_eq(&[2.0, 2.0], 4.0)
            .unwrap();
        let s = solve(&p).unwrap();
        assert!(approx(s.objective_value.unwrap(), 4.0));
    }

    #[test]
    fn iteration_cap_reports_stall() {
        let p = LpProblem::new(3)
            .maximize(&[1.0, 1.0, 1.0])
            .uniform_bounds(0.0, 1.0);
        let opts = LpOptions {
            iteration_factor: 0,
            ..Default::default()
        };
        assert!(matches!(
            solve_with(&p, &opts),
            Err(Error::SolverStalled { .. })
        ));
    }
}

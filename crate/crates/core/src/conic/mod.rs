//! Small conic programs over Hermitian PSD matrices and real scalars.
//!
//! A [`ConicProblem`] minimizes a real-linear objective
//! `Σ_j Tr(C_j X_j) + Σ_i c_i s_i + const` over Hermitian PSD matrices `X_j`
//! and free real scalars `s_i`, subject to linear equalities (`expr = rhs`)
//! and inequalities (`expr ≤ rhs`). Coefficient matrices must be Hermitian.
//!
//! Problems serialize to JSON for offline debugging. Complex numbers are
//! written as `[re, im]` pairs and matrices as
//! `{"rows": r, "cols": c, "data": [...]}` in row-major order; see
//! [`ConicProblem::to_json`].

mod admm;
mod ipm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, HERMITIAN_TOL};


/// Algorithm used by [`solve_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// Operator-splitting ADMM on the homogeneous self-dual embedding.
    Admm,
    /// Primal-dual path following (HKM direction, Mehrotra corrector).
    InteriorPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub backend: Backend,
    /// Relative tolerance on the primal residual, dual residual and gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Residuals must fall below `stop_fraction * tol` before stopping.
    pub stop_fraction: f64,
    /// Threshold for accepting an infeasibility or unboundedness certificate.
    pub infeasibility_tol: f64,
    /// ADMM over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// ADMM weight of the `x` block in the linear system.
    pub rho_x: f64,
    pub check_every: usize,
    pub equilibration_passes: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            backend: Backend::Admm,
            tol: 1e-7,
            max_iters: 100_000,
            stop_fraction: 0.1,
            infeasibility_tol: 1e-7,
            alpha: 1.5,
            rho_x: 1e-3,
            check_every: 10,
            equilibration_passes: 20,
        }
    }
}

impl Settings {
    pub fn interior_point() -> Self {
        Self { backend: Backend::InteriorPoint, max_iters: 200, ..Self::default() }
    }
}

/// Solves `p` with the ADMM backend.
pub fn solve(p: &ConicProblem, tol: f64, max_iters: usize) -> Result<ConicSolution> {
    solve_with(p, &Settings { tol, max_iters, ..Settings::default() })
}

pub fn solve_with(p: &ConicProblem, st: &Settings) -> Result<ConicSolution> {
    p.validate()?;
    let ok = st.tol > 0.0
        && st.alpha > 0.0
        && st.alpha < 2.0
        && st.rho_x > 0.0
        && st.stop_fraction > 0.0
        && st.stop_fraction <= 1.0
        && st.check_every > 0;
    if !ok {
        return Err(Error::invalid("solver settings out of range"));
    }
    match st.backend {
        Backend::Admm => admm::solve_admm(p, st),
        Backend::InteriorPoint => ipm::solve_ipm(p, st),
    }
}

/// A Hermitian PSD matrix variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdVar {
    pub name: String,
    pub dim: usize,
}

/// Real-linear functional over the problem variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    /// Terms `Tr(C X_j)` as `(j, C)`.
    pub psd: Vec<(usize, CMatrix)>,
    /// Terms `c s_i` as `(i, c)`.
    pub scalar: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn psd(mut self, var: usize, coef: CMatrix) -> Self {
        self.psd.push((var, coef));
        self
    }

    pub fn scalar(mut self, var: usize, coef: f64) -> Self {
        self.scalar.push((var, coef));
        self
    }

    pub fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn negated(&self) -> Self {
        Self {
            psd: self.psd.iter().map(|(j, c)| (*j, c.scale_real(-1.0))).collect(),
            scalar: self.scalar.iter().map(|(i, c)| (*i, -c)).collect(),
            constant: -self.constant,
        }
    }

    /// Evaluates the functional at the given point.
    pub fn eval(&self, psd: &[CMatrix], scalars: &[f64]) -> f64 {
        let mut v = self.constant;
        for (j, c) in &self.psd {
            v += c.trace_product(&psd[*j]).re;
        }
        for (i, c) in &self.scalar {
            v += c * scalars[*i];
        }
        v
    }
}

/// `expr = rhs` or `expr ≤ rhs` depending on the list it lives in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: LinExpr,
    pub rhs: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub psd_vars: Vec<PsdVar>,
    pub scalar_vars: Vec<String>,
    pub objective: LinExpr,
    pub eq_constraints: Vec<Constraint>,
    /// Constraints of the form `expr ≤ rhs`.
    pub ineq_constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_psd(&mut self, name: impl Into<String>, dim: usize) -> usize {
        self.psd_vars.push(PsdVar { name: name.into(), dim });
        self.psd_vars.len() - 1
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> usize {
        self.scalar_vars.push(name.into());
        self.scalar_vars.len() - 1
    }

    pub fn set_objective(&mut self, e: LinExpr) {
        self.objective = e;
    }

    pub fn add_eq(&mut self, label: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.eq_constraints.push(Constraint { expr, rhs, label: label.into() });
    }

    pub fn add_le(&mut self, label: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.ineq_constraints.push(Constraint { expr, rhs, label: label.into() });
    }

    pub fn add_ge(&mut self, label: impl Into<String>, expr: LinExpr, rhs: f64) {
        self.ineq_constraints.push(Constraint {
            expr: expr.negated(),
            rhs: -rhs,
            label: label.into(),
        });
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: &LinExpr, what: &str| -> Result<()> {
            if !e.constant.is_finite() {
                return Err(Error::invalid(format!("{what}: non-finite constant")));
            }
            for (j, c) in &e.psd {
                let v = self
                    .psd_vars
                    .get(*j)
                    .ok_or_else(|| Error::invalid(format!("{what}: unknown PSD variable {j}")))?;
                if c.rows() != v.dim || c.cols() != v.dim {
                    return Err(Error::invalid(format!(
                        "{what}: coefficient is {}x{} but {} is {}x{}",
                        c.rows(),
                        c.cols(),
                        v.name,
                        v.dim,
                        v.dim
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::invalid(format!("{what}: non-finite coefficient")));
                }
                if c.hermitian_residual() > HERMITIAN_TOL * c.max_abs().max(f64::MIN_POSITIVE) {
                    return Err(Error::invalid(format!("{what}: coefficient for {} is not Hermitian", v.name)));
                }
            }
            for (i, c) in &e.scalar {
                if *i >= self.scalar_vars.len() {
                    return Err(Error::invalid(format!("{what}: unknown scalar variable {i}")));
                }
                if !c.is_finite() {
                    return Err(Error::invalid(format!("{what}: non-finite coefficient")));
                }
            }
            Ok(())
        };
        if self.psd_vars.iter().any(|v| v.dim == 0) {
            return Err(Error::invalid("PSD variables must have positive dimension"));
        }
        check(&self.objective, "objective")?;
        for (k, c) in self.eq_constraints.iter().chain(&self.ineq_constraints).enumerate() {
            let what = format!("constraint {k} ({})", c.label);
            check(&c.expr, &what)?;
            if !c.rhs.is_finite() {
                return Err(Error::invalid(format!("{what}: non-finite right-hand side")));
            }
        }
        Ok(())
    }

    /// Serializes the problem as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("problem dump: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    /// Largest violation of any constraint at the given point, each measured
    /// relative to `1 + |rhs|`.
    pub fn max_violation(&self, psd: &[CMatrix], scalars: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.eq_constraints {
            worst = worst.max((c.expr.eval(psd, scalars) - c.rhs).abs() / (1.0 + c.rhs.abs()));
        }
        for c in &self.ineq_constraints {
            worst = worst.max((c.expr.eval(psd, scalars) - c.rhs).max(0.0) / (1.0 + c.rhs.abs()));
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: Status,
    pub psd_values: Vec<CMatrix>,
    pub scalar_values: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Multipliers of the equality constraints.
    pub eq_duals: Vec<f64>,
    /// Nonnegative multipliers of the inequality constraints.
    pub ineq_duals: Vec<f64>,
}

impl ConicSolution {
    /// Optimal, or stopped early with every residual and the gap within `tol`.
    pub fn usable(&self, tol: f64) -> bool {
        match self.status {
            Status::Optimal => true,
            Status::MaxIters => self.primal_residual <= tol && self.dual_residual <= tol && self.gap <= tol,
            _ => false,
        }
    }
}

/// Isometric real coordinates of a Hermitian matrix: the diagonal, then
/// `√2 Re X_ij` and `√2 Im X_ij` for `i < j`. `Tr(C X) = hvec(C)·hvec(X)`.
pub fn hvec(x: &CMatrix) -> Vec<f64> {
    let n = x.rows();
    let mut out = Vec::with_capacity(n * n);
    hvec_into(x, &mut out);
    out
}

fn hvec_into(x: &CMatrix, out: &mut Vec<f64>) {
    let n = x.rows();
    let s2 = std::f64::consts::SQRT_2;
    for i in 0..n {
        out.push(x[(i, i)].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let z = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
            out.push(s2 * z.re);
            out.push(s2 * z.im);
        }
    }
}

/// Inverse of [`hvec`].
pub fn hmat(v: &[f64], n: usize) -> CMatrix {
    use crate::numerics::C64;
    let mut x = CMatrix::zeros(n, n);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        x[(i, i)] = C64::new(v[i], 0.0);
    }
    let mut k = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = C64::new(v[k] * r, v[k + 1] * r);
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
            k += 2;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;

    #[test]
    fn hvec_is_isometric() {
        let a = CMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(i as f64 + 1.0, 0.0)
            } else if i < j {
                C64::new(0.5 * j as f64, 0.25 * i as f64 + 0.1)
            } else {
                C64::new(0.5 * i as f64, -(0.25 * j as f64 + 0.1))
            }
        });
        let b = CMatrix::from_fn(3, 3, |i, j| if i == j { C64::new(2.0, 0.0) } else if i < j { C64::new(0.3, -0.7) } else { C64::new(0.3, 0.7) });
        let lhs: f64 = hvec(&a).iter().zip(hvec(&b)).map(|(x, y)| x * y).sum();
        assert!((lhs - a.trace_product(&b).re).abs() < 1e-14);
        assert!((&hmat(&hvec(&a), 3) - &a).max_abs() < 1e-15);
    }

    #[test]
    fn validation_catches_bad_references() {
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", 2);
        p.add_eq("bad", LinExpr::new().psd(x, CMatrix::identity(3)), 1.0);
        assert!(p.validate().is_err());
        let mut p = ConicProblem::new();
        p.add_eq("bad", LinExpr::new().scalar(4, 1.0), 1.0);
        assert!(p.validate().is_err());
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", 2);
        let nh = CMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        p.set_objective(LinExpr::new().psd(x, nh));
        assert!(p.validate().is_err());
    }
}

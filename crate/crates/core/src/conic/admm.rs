//! Operator-splitting ADMM on the homogeneous self-dual embedding.
//!
//! The problem is put in the standard form `min cᵀx s.t. Ax + s = b, s ∈ K`
//! where `K` is a product of a zero cone (equalities), a nonnegative orthant
//! (inequalities) and one PSD cone per matrix variable. Matrix variables are
//! carried in [`hvec`](super::hvec) coordinates; their cone rows are `-I`.

use super::{hmat, hvec_into, ConicProblem, ConicSolution, Settings, Status};
use crate::error::Result;
use crate::numerics::{cholesky, cholesky_solve, hermitian_cholesky, psd_project, CMatrix};

pub(super) fn solve_admm(p: &ConicProblem, st: &Settings) -> Result<ConicSolution> {
    let data = Data::build(p, st.equilibration_passes);
    let sys = LinSys::new(&data, st.rho_x)?;
    Admm::new(&data, &sys, st).run(p)
}

#[derive(Clone, Copy, Debug)]
struct Block {
    off: usize,
    dim: usize,
}

/// Equilibrated standard-form data.
struct Data {
    n: usize,
    n_psd: usize,
    m_lin: usize,
    n_eq: usize,
    /// Linear rows, `m_lin × n` row-major, scaled.
    l: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    blocks: Vec<Block>,
    row_d: Vec<f64>,
    col_e: Vec<f64>,
    sb: f64,
    sc: f64,
}

const MIN_SCALE: f64 = 1e-4;
const MAX_SCALE: f64 = 1e4;

impl Data {
    fn build(p: &ConicProblem, passes: usize) -> Self {
        let mut blocks = Vec::with_capacity(p.psd_vars.len());
        let mut off = 0;
        for v in &p.psd_vars {
            blocks.push(Block { off, dim: v.dim });
            off += v.dim * v.dim;
        }
        let n_psd = off;
        let n = n_psd + p.scalar_vars.len();
        let n_eq = p.eq_constraints.len();
        let m_lin = n_eq + p.ineq_constraints.len();

        let mut scratch = Vec::new();
        let mut fill = |e: &super::LinExpr, row: &mut [f64]| {
            for (j, cm) in &e.psd {
                scratch.clear();
                hvec_into(cm, &mut scratch);
                let o = blocks[*j].off;
                for (k, v) in scratch.iter().enumerate() {
                    row[o + k] += v;
                }
            }
            for (i, cf) in &e.scalar {
                row[n_psd + i] += cf;
            }
        };

        let mut l = vec![0.0; m_lin * n];
        let mut b = vec![0.0; m_lin];
        for (r, con) in p.eq_constraints.iter().chain(&p.ineq_constraints).enumerate() {
            fill(&con.expr, &mut l[r * n..(r + 1) * n]);
            b[r] = con.rhs - con.expr.constant;
        }
        let mut c = vec![0.0; n];
        fill(&p.objective, &mut c);

        let mut row_d = vec![1.0; m_lin];
        let mut col_e = vec![1.0; n];
        for _ in 0..passes {
            for r in 0..m_lin {
                let row = &mut l[r * n..(r + 1) * n];
                let nrm = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if nrm > 0.0 {
                    let f = (1.0 / nrm.sqrt()).clamp(MIN_SCALE / row_d[r], MAX_SCALE / row_d[r]);
                    row_d[r] *= f;
                    row.iter_mut().for_each(|v| *v *= f);
                }
            }
            let mut cn = vec![0.0f64; n];
            for r in 0..m_lin {
                for (j, v) in l[r * n..(r + 1) * n].iter().enumerate() {
                    cn[j] = cn[j].max(v.abs());
                }
            }
            for bl in &blocks {
                let range = bl.off..bl.off + bl.dim * bl.dim;
                let m = cn[range.clone()].iter().fold(0.0f64, |a, v| a.max(*v));
                cn[range].iter_mut().for_each(|v| *v = m);
            }
            let mut f = vec![1.0; n];
            for j in 0..n {
                if cn[j] > 0.0 {
                    f[j] = (1.0 / cn[j].sqrt()).clamp(MIN_SCALE / col_e[j], MAX_SCALE / col_e[j]);
                    col_e[j] *= f[j];
                }
            }
            for r in 0..m_lin {
                for (j, v) in l[r * n..(r + 1) * n].iter_mut().enumerate() {
                    *v *= f[j];
                }
            }
        }
        for r in 0..m_lin {
            b[r] *= row_d[r];
        }
        for j in 0..n {
            c[j] *= col_e[j];
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = norm(&b);
        let nc = norm(&c);
        let sb = if nb > 0.0 { (1.0 / nb).clamp(MIN_SCALE, MAX_SCALE) } else { 1.0 };
        let sc = if nc > 0.0 { (1.0 / nc).clamp(MIN_SCALE, MAX_SCALE) } else { 1.0 };
        b.iter_mut().for_each(|v| *v *= sb);
        c.iter_mut().for_each(|v| *v *= sc);
        Self { n, n_psd, m_lin, n_eq, l, b, c, blocks, row_d, col_e, sb, sc }
    }

    fn m(&self) -> usize {
        self.m_lin + self.n_psd
    }

    /// `[c; b]` over all rows.
    fn h(&self) -> Vec<f64> {
        let mut h = self.c.clone();
        h.extend_from_slice(&self.b);
        h.resize(self.n + self.m(), 0.0);
        h
    }

    /// `out = A x`.
    fn a_mul(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for r in 0..self.m_lin {
            out[r] = dot(&self.l[r * n..(r + 1) * n], x);
        }
        for k in 0..self.n_psd {
            out[self.m_lin + k] = -x[k];
        }
    }

    /// `out = Aᵀ y`.
    fn at_mul(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.m_lin {
            let yr = y[r];
            if yr != 0.0 {
                for (o, a) in out.iter_mut().zip(&self.l[r * n..(r + 1) * n]) {
                    *o += a * yr;
                }
            }
        }
        for k in 0..self.n_psd {
            out[k] -= y[self.m_lin + k];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Factorization of `K = ρI + AᵀA`.
enum Factor {
    Dense(Vec<f64>),
    /// Woodbury form around the diagonal part, factor of `I + L D⁻¹ Lᵀ`.
    Woodbury(Vec<f64>),
}

struct LinSys {
    diag: Vec<f64>,
    factor: Factor,
}

impl LinSys {
    fn new(d: &Data, rho: f64) -> Result<Self> {
        let n = d.n;
        let m = d.m_lin;
        let diag: Vec<f64> = (0..n).map(|j| rho + if j < d.n_psd { 1.0 } else { 0.0 }).collect();
        let factor = if n <= m {
            let mut k = vec![0.0; n * n];
            for r in 0..m {
                let row = &d.l[r * n..(r + 1) * n];
                for i in 0..n {
                    if row[i] == 0.0 {
                        continue;
                    }
                    for j in 0..=i {
                        k[i * n + j] += row[i] * row[j];
                    }
                }
            }
            for i in 0..n {
                k[i * n + i] += diag[i];
                for j in 0..i {
                    k[j * n + i] = k[i * n + j];
                }
            }
            Factor::Dense(cholesky(&k, n)?)
        } else {
            let mut s = vec![0.0; m * m];
            for r in 0..m {
                let a = &d.l[r * n..(r + 1) * n];
                for q in 0..=r {
                    let bq = &d.l[q * n..(q + 1) * n];
                    let v: f64 = (0..n).map(|j| a[j] * bq[j] / diag[j]).sum();
                    s[r * m + q] = v;
                    s[q * m + r] = v;
                }
                s[r * m + r] += 1.0;
            }
            Factor::Woodbury(cholesky(&s, m)?)
        };
        Ok(Self { diag, factor })
    }

    fn apply_inv(&self, d: &Data, r: &mut [f64]) {
        match &self.factor {
            Factor::Dense(l) => cholesky_solve(l, d.n, r),
            Factor::Woodbury(l) => {
                let n = d.n;
                for (v, dg) in r.iter_mut().zip(&self.diag) {
                    *v /= dg;
                }
                let mut t: Vec<f64> = (0..d.m_lin).map(|q| dot(&d.l[q * n..(q + 1) * n], r)).collect();
                cholesky_solve(l, d.m_lin, &mut t);
                for (q, tq) in t.iter().enumerate() {
                    for (j, a) in d.l[q * n..(q + 1) * n].iter().enumerate() {
                        r[j] -= a * tq / self.diag[j];
                    }
                }
            }
        }
    }

    fn apply_k(&self, d: &Data, z: &[f64], out: &mut [f64]) {
        let n = d.n;
        for j in 0..n {
            out[j] = self.diag[j] * z[j];
        }
        for q in 0..d.m_lin {
            let row = &d.l[q * n..(q + 1) * n];
            let t = dot(row, z);
            if t != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * t;
                }
            }
        }
    }

    /// Solves `K z = r` in place with one refinement step.
    fn solve(&self, d: &Data, r: &mut [f64], work: &mut [f64]) {
        let rhs = r.to_vec();
        self.apply_inv(d, r);
        self.apply_k(d, r, work);
        for (w, b) in work.iter_mut().zip(&rhs) {
            *w = b - *w;
        }
        self.apply_inv(d, work);
        for (z, w) in r.iter_mut().zip(work.iter()) {
            *z += w;
        }
    }
}

struct Admm<'a> {
    d: &'a Data,
    sys: &'a LinSys,
    st: &'a Settings,
    rho: f64,
    h_p: Vec<f64>,
    h_hp: f64,
}

struct Check {
    pres: f64,
    dres: f64,
    gap: f64,
    done: bool,
}

impl<'a> Admm<'a> {
    fn new(d: &'a Data, sys: &'a LinSys, st: &'a Settings) -> Self {
        let mut s = Self { d, sys, st, rho: st.rho_x, h_p: Vec::new(), h_hp: 0.0 };
        let h = d.h();
        let mut p = h.clone();
        s.solve_m(&mut p);
        s.h_hp = dot(&h, &p);
        s.h_p = p;
        s
    }

    /// Solves `[[ρI, Aᵀ], [-A, I]] z = a` in place.
    fn solve_m(&self, a: &mut [f64]) {
        let d = self.d;
        let n = d.n;
        let (ax, ay) = a.split_at_mut(n);
        let mut t = vec![0.0; n];
        d.at_mul(ay, &mut t);
        for (x, v) in ax.iter_mut().zip(&t) {
            *x -= v;
        }
        self.sys.solve(d, ax, &mut t);
        let mut az = vec![0.0; d.m()];
        d.a_mul(ax, &mut az);
        for (y, v) in ay.iter_mut().zip(&az) {
            *y += v;
        }
    }

    fn project(&self, u: &mut [f64]) {
        let d = self.d;
        let n = d.n;
        let y = &mut u[n..n + d.m()];
        for v in &mut y[d.n_eq..d.m_lin] {
            *v = v.max(0.0);
        }
        for bl in &d.blocks {
            let o = d.m_lin + bl.off;
            project_psd_hvec(&mut y[o..o + bl.dim * bl.dim], bl.dim);
        }
        let t = n + d.m();
        u[t] = u[t].max(0.0);
    }

    fn run(&self, p: &ConicProblem) -> Result<ConicSolution> {
        let d = self.d;
        let n = d.n;
        let m = d.m();
        let len = n + m + 1;
        let mut u = vec![0.0; len];
        let mut v = vec![0.0; len];
        u[len - 1] = 1.0;
        v[len - 1] = 1.0;
        let mut w = vec![0.0; len];
        let mut ur = vec![0.0; len];
        let alpha = self.st.alpha;
        let h = d.h();
        let mut last = Check { pres: f64::INFINITY, dres: f64::INFINITY, gap: f64::INFINITY, done: false };
        let mut iters = 0;
        let mut status = Status::MaxIters;
        while iters < self.st.max_iters {
            iters += 1;
            for i in 0..len {
                w[i] = u[i] + v[i];
            }
            let wt = w[len - 1];
            let z = &mut w[..len - 1];
            z[..n].iter_mut().for_each(|x| *x *= self.rho);
            self.solve_m(z);
            let ut = (wt + dot(&h, z)) / (1.0 + self.h_hp);
            for i in 0..len - 1 {
                let ui = z[i] - ut * self.h_p[i];
                ur[i] = alpha * ui + (1.0 - alpha) * u[i];
            }
            ur[len - 1] = alpha * ut + (1.0 - alpha) * u[len - 1];
            for i in 0..len {
                u[i] = ur[i] - v[i];
            }
            self.project(&mut u);
            for i in 0..len {
                v[i] += u[i] - ur[i];
            }
            if iters % self.st.check_every == 0 || iters == self.st.max_iters {
                if let Some(s) = self.certificates(&u, &v) {
                    status = s;
                    break;
                }
                last = self.residuals(&u, &v);
                if last.done {
                    status = Status::Optimal;
                    break;
                }
            }
        }
        if status != Status::Optimal {
            last = self.residuals(&u, &v);
        }
        Ok(self.extract(p, &u, &v, status, last, iters))
    }

    fn residuals(&self, u: &[f64], v: &[f64]) -> Check {
        let d = self.d;
        let n = d.n;
        let m = d.m();
        let tau = u[n + m];
        if !(tau > 0.0) {
            return Check { pres: f64::INFINITY, dres: f64::INFINITY, gap: f64::INFINITY, done: false };
        }
        let fx = 1.0 / (tau * d.sb);
        let fy = 1.0 / (tau * d.sc);
        let x: Vec<f64> = u[..n].iter().map(|v| v * fx).collect();
        let y: Vec<f64> = u[n..n + m].iter().map(|v| v * fy).collect();
        let s: Vec<f64> = v[n..n + m].iter().map(|v| v * fx).collect();
        let b: Vec<f64> = d.b.iter().map(|v| v / d.sb).collect();
        let c: Vec<f64> = d.c.iter().map(|v| v / d.sc).collect();

        let mut ax = vec![0.0; m];
        d.a_mul(&x, &mut ax);
        let mut pr = 0.0f64;
        for i in 0..m {
            let bi = if i < d.m_lin { b[i] } else { 0.0 };
            pr = pr.max((ax[i] + s[i] - bi).abs());
        }
        let pscale = 1.0 + norm_inf(&ax).max(norm_inf(&s)).max(norm_inf(&b));
        let mut aty = vec![0.0; n];
        d.at_mul(&y, &mut aty);
        let dr = aty.iter().zip(&c).fold(0.0f64, |a, (p, q)| a.max((p + q).abs()));
        let dscale = 1.0 + norm_inf(&aty).max(norm_inf(&c));
        let pobj = dot(&c, &x);
        let dobj = -dot(&b, &y[..d.m_lin]);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        let pres = pr / pscale;
        let dres = dr / dscale;
        let tol = self.st.tol * self.st.stop_fraction;
        Check { pres, dres, gap, done: pres <= tol && dres <= tol && gap <= tol }
    }

    fn certificates(&self, u: &[f64], v: &[f64]) -> Option<Status> {
        let d = self.d;
        let n = d.n;
        let m = d.m();
        let eps = self.st.infeasibility_tol;
        let by = dot(&d.b, &u[n..n + d.m_lin]);
        if by < 0.0 {
            let mut aty = vec![0.0; n];
            d.at_mul(&u[n..n + m], &mut aty);
            if norm_inf(&aty) / -by <= eps {
                return Some(Status::Infeasible);
            }
        }
        let cx = dot(&d.c, &u[..n]);
        if cx < 0.0 {
            let mut ax = vec![0.0; m];
            d.a_mul(&u[..n], &mut ax);
            let r = ax.iter().zip(&v[n..n + m]).fold(0.0f64, |a, (p, q)| a.max((p + q).abs()));
            if r / -cx <= eps {
                return Some(Status::Unbounded);
            }
        }
        None
    }

    fn extract(&self, p: &ConicProblem, u: &[f64], v: &[f64], status: Status, chk: Check, iters: usize) -> ConicSolution {
        let d = self.d;
        let n = d.n;
        let tau = u[n + d.m()];
        let feasible_point = matches!(status, Status::Optimal | Status::MaxIters) && tau > 0.0;
        let fx = if feasible_point { 1.0 / (tau * d.sb) } else { 0.0 };
        let fy = if feasible_point { 1.0 / (tau * d.sc) } else { 0.0 };
        let psd_values: Vec<CMatrix> = d
            .blocks
            .iter()
            .map(|bl| {
                let k = bl.dim * bl.dim;
                let s: Vec<f64> = (0..k)
                    .map(|j| d.col_e[bl.off + j] * v[n + d.m_lin + bl.off + j] * fx)
                    .collect();
                hmat(&s, bl.dim)
            })
            .collect();
        let scalar_values: Vec<f64> = (d.n_psd..n).map(|j| d.col_e[j] * u[j] * fx).collect();
        let duals: Vec<f64> = (0..d.m_lin).map(|r| d.row_d[r] * u[n + r] * fy).collect();
        let objective = if feasible_point { p.objective.eval(&psd_values, &scalar_values) } else { f64::NAN };
        ConicSolution {
            status,
            psd_values,
            scalar_values,
            objective,
            primal_residual: chk.pres,
            dual_residual: chk.dres,
            gap: chk.gap,
            iterations: iters,
            eq_duals: duals[..d.n_eq].to_vec(),
            ineq_duals: duals[d.n_eq..].to_vec(),
        }
    }
}

/// Projects a Hermitian matrix given in hvec coordinates onto the PSD cone.
fn project_psd_hvec(v: &mut [f64], n: usize) {
    if n == 1 {
        v[0] = v[0].max(0.0);
        return;
    }
    let x = hmat(v, n);
    if hermitian_cholesky(&x).is_ok() {
        return;
    }
    if hermitian_cholesky(&x.scale_real(-1.0)).is_ok() {
        v.iter_mut().for_each(|t| *t = 0.0);
        return;
    }
    let p = psd_project(&x).expect("hvec blocks are Hermitian and finite");
    let mut out = Vec::with_capacity(n * n);
    hvec_into(&p, &mut out);
    v.copy_from_slice(&out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{hvec, solve, LinExpr};
    use crate::numerics::C64;

    #[test]
    fn hvec_projection_matches_matrix_projection() {
        let a = CMatrix::from_fn(3, 3, |i, j| {
            let base = C64::new((i as f64 - j as f64) * 0.7 + 0.2, 0.3 * (i * j) as f64);
            if i == j {
                C64::new(1.0 - 1.5 * i as f64, 0.0)
            } else if i < j {
                base
            } else {
                C64::new((j as f64 - i as f64) * 0.7 + 0.2, -0.3 * (i * j) as f64)
            }
        });
        let mut v = hvec(&a);
        project_psd_hvec(&mut v, 3);
        let want = psd_project(&a).unwrap();
        assert!((&hmat(&v, 3) - &want).max_abs() < 1e-12);
    }

    #[test]
    fn diag_example() {
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", 2);
        p.set_objective(LinExpr::new().psd(x, CMatrix::from_real_diag(&[1.0, 3.0])));
        p.add_eq("trace", LinExpr::new().psd(x, CMatrix::identity(2)), 1.0);
        let s = solve(&p, 1e-8, 100_000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6, "{}", s.objective);
        assert!((s.psd_values[0][(0, 0)].re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_lp() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
        let mut p = ConicProblem::new();
        let x = p.add_scalar("x");
        let y = p.add_scalar("y");
        p.set_objective(LinExpr::new().scalar(x, -1.0).scalar(y, -1.0));
        p.add_le("a", LinExpr::new().scalar(x, 1.0).scalar(y, 2.0), 4.0);
        p.add_le("b", LinExpr::new().scalar(x, 3.0).scalar(y, 1.0), 6.0);
        p.add_ge("x", LinExpr::new().scalar(x, 1.0), 0.0);
        p.add_ge("y", LinExpr::new().scalar(y, 1.0), 0.0);
        let s = solve(&p, 1e-9, 100_000).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.scalar_values[0] - 1.6).abs() < 1e-6);
        assert!((s.scalar_values[1] - 1.2).abs() < 1e-6);
    }

    #[test]
    fn unbounded_is_detected() {
        let mut p = ConicProblem::new();
        let x = p.add_scalar("x");
        p.set_objective(LinExpr::new().scalar(x, -1.0));
        p.add_ge("x", LinExpr::new().scalar(x, 1.0), 0.0);
        let s = solve(&p, 1e-7, 100_000).unwrap();
        assert_eq!(s.status, Status::Unbounded);
    }
}

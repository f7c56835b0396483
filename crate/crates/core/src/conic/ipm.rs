//! Infeasible-start primal-dual interior-point method.
//!
//! Works on `min ⟨C, X⟩ s.t. 𝒜(X) = b, X ∈ K` where `K` is a product of
//! Hermitian PSD blocks and one nonnegative orthant (one slack per
//! inequality), plus free scalars that enter through an augmented Newton
//! system. Search directions use the HKM scaling with a Mehrotra corrector.

use super::{ConicProblem, ConicSolution, LinExpr, Settings, Status};
use crate::error::Result;
use crate::numerics::{cholesky, cholesky_solve, hermitian_cholesky, hermitian_eigvals_fast, hermitian_pd_inverse, lower_inverse, CMatrix, C64};

enum Coef {
    /// Real diagonal matrix given by its nonzero entries.
    Diag(Vec<(usize, f64)>),
    Dense(CMatrix),
}

impl Coef {
    fn from_matrix(a: &CMatrix) -> Option<Self> {
        let n = a.rows();
        let mut off = false;
        let mut diag = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let z = a[(i, j)];
                if i == j {
                    if z.re != 0.0 {
                        diag.push((i, z.re));
                    }
                } else if z != C64::new(0.0, 0.0) {
                    off = true;
                }
            }
        }
        if off {
            Some(Coef::Dense(a.hermitian_part()))
        } else if diag.is_empty() {
            None
        } else {
            Some(Coef::Diag(diag))
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            Coef::Diag(d) => d.iter().fold(0.0f64, |m, (_, v)| m.max(v.abs())),
            Coef::Dense(a) => a.max_abs(),
        }
    }

    fn fro(&self) -> f64 {
        match self {
            Coef::Diag(d) => d.iter().map(|(_, v)| v * v).sum::<f64>().sqrt(),
            Coef::Dense(a) => a.fro_norm(),
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            Coef::Diag(d) => d.iter_mut().for_each(|(_, v)| *v *= s),
            Coef::Dense(a) => *a = a.scale_real(s),
        }
    }

    /// `Re Tr(A H)`.
    fn inner(&self, h: &CMatrix) -> f64 {
        match self {
            Coef::Diag(d) => d.iter().map(|&(p, v)| v * h[(p, p)].re).sum(),
            Coef::Dense(a) => a.trace_product(h).re,
        }
    }

    fn add_to(&self, out: &mut CMatrix, s: f64) {
        match self {
            Coef::Diag(d) => {
                for &(p, v) in d {
                    out[(p, p)] += C64::new(v * s, 0.0);
                }
            }
            Coef::Dense(a) => {
                let n = a.rows();
                for i in 0..n {
                    for j in 0..n {
                        out[(i, j)] += a[(i, j)] * s;
                    }
                }
            }
        }
    }
}

struct Row {
    psd: Vec<(usize, Coef)>,
    lp: Vec<(usize, f64)>,
    b: f64,
}

struct Model {
    dims: Vec<usize>,
    n_lp: usize,
    n_scalar: usize,
    /// Free-scalar coefficients, `m × n_scalar` row-major.
    bf: Vec<f64>,
    c_free: Vec<f64>,
    n_eq: usize,
    rows: Vec<Row>,
    row_scale: Vec<f64>,
    c_psd: Vec<Option<Coef>>,
    c_lp: Vec<f64>,
    c_scale: f64,
    /// Rows touching each PSD block.
    block_rows: Vec<Vec<usize>>,
}

fn lin_terms(e: &LinExpr, dims: &[usize]) -> Vec<Option<CMatrix>> {
    let mut acc: Vec<Option<CMatrix>> = vec![None; dims.len()];
    for (j, c) in &e.psd {
        match &mut acc[*j] {
            Some(m) => *m += c,
            slot => *slot = Some(c.clone()),
        }
    }
    acc
}

impl Model {
    fn build(p: &ConicProblem) -> Self {
        let dims: Vec<usize> = p.psd_vars.iter().map(|v| v.dim).collect();
        let n_scalar = p.scalar_vars.len();
        let n_eq = p.eq_constraints.len();
        let n_lp = p.ineq_constraints.len();
        let m = n_eq + n_lp;
        let mut bf = vec![0.0; m * n_scalar];
        let mut rows = Vec::new();
        for (r, con) in p.eq_constraints.iter().chain(&p.ineq_constraints).enumerate() {
            let psd: Vec<(usize, Coef)> = lin_terms(&con.expr, &dims)
                .into_iter()
                .enumerate()
                .filter_map(|(j, m)| m.and_then(|m| Coef::from_matrix(&m)).map(|c| (j, c)))
                .collect();
            for (i, c) in &con.expr.scalar {
                bf[r * n_scalar + i] += c;
            }
            let mut lp = Vec::new();
            if r >= n_eq {
                lp.push((r - n_eq, 1.0));
            }
            rows.push(Row { psd, lp, b: con.rhs - con.expr.constant });
        }
        let mut row_scale = Vec::with_capacity(rows.len());
        for (r, row) in rows.iter_mut().enumerate() {
            let fr = &mut bf[r * n_scalar..(r + 1) * n_scalar];
            let mut m = row.lp.iter().fold(0.0f64, |a, (_, v)| a.max(v.abs()));
            m = fr.iter().fold(m, |a, v| a.max(v.abs()));
            for (_, c) in &row.psd {
                m = m.max(c.max_abs());
            }
            let s = if m > 0.0 { 1.0 / m } else { 1.0 };
            for (_, c) in &mut row.psd {
                c.scale(s);
            }
            fr.iter_mut().for_each(|v| *v *= s);
            row.lp.iter_mut().for_each(|(_, v)| *v *= s);
            row.b *= s;
            row_scale.push(s);
        }
        let mut c_psd: Vec<Option<Coef>> = lin_terms(&p.objective, &dims)
            .into_iter()
            .map(|m| m.and_then(|m| Coef::from_matrix(&m)))
            .collect();
        let mut c_lp = vec![0.0; n_lp];
        let mut c_free = vec![0.0; n_scalar];
        for (i, c) in &p.objective.scalar {
            c_free[*i] += c;
        }
        let mut cm = c_free.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for c in c_psd.iter().flatten() {
            cm = cm.max(c.max_abs());
        }
        let c_scale = if cm > 0.0 { 1.0 / cm } else { 1.0 };
        for c in c_psd.iter_mut().flatten() {
            c.scale(c_scale);
        }
        c_lp.iter_mut().for_each(|v| *v *= c_scale);
        c_free.iter_mut().for_each(|v| *v *= c_scale);
        let mut block_rows = vec![Vec::new(); dims.len()];
        for (r, row) in rows.iter().enumerate() {
            for (j, _) in &row.psd {
                block_rows[*j].push(r);
            }
        }
        Self { dims, n_lp, n_scalar, bf, c_free, n_eq, rows, row_scale, c_psd, c_lp, c_scale, block_rows }
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn nu(&self) -> f64 {
        (self.dims.iter().sum::<usize>() + self.n_lp) as f64
    }

    fn coef(&self, r: usize, j: usize) -> &Coef {
        &self.rows[r].psd.iter().find(|(b, _)| *b == j).expect("row touches block").1
    }

    fn b_mul(&self, f: &[f64]) -> Vec<f64> {
        let k = self.n_scalar;
        (0..self.m()).map(|r| (0..k).map(|i| self.bf[r * k + i] * f[i]).sum()).collect()
    }

    fn bt_mul(&self, y: &[f64]) -> Vec<f64> {
        let k = self.n_scalar;
        (0..k).map(|i| (0..self.m()).map(|r| self.bf[r * k + i] * y[r]).sum()).collect()
    }

    /// `𝒜(X)` with general (possibly non-Hermitian) blocks, real part.
    fn a_op(&self, x: &[CMatrix], xl: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| {
                let mut v: f64 = row.lp.iter().map(|&(l, a)| a * xl[l]).sum();
                for (j, c) in &row.psd {
                    v += c.inner(&x[*j]);
                }
                v
            })
            .collect()
    }

    fn at_op(&self, y: &[f64]) -> (Vec<CMatrix>, Vec<f64>) {
        let mut out: Vec<CMatrix> = self.dims.iter().map(|&n| CMatrix::zeros(n, n)).collect();
        let mut ol = vec![0.0; self.n_lp];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (j, c) in &row.psd {
                c.add_to(&mut out[*j], yi);
            }
            for &(l, a) in &row.lp {
                ol[l] += a * yi;
            }
        }
        (out, ol)
    }

    fn c_block(&self, j: usize) -> CMatrix {
        let n = self.dims[j];
        let mut c = CMatrix::zeros(n, n);
        if let Some(cf) = &self.c_psd[j] {
            cf.add_to(&mut c, 1.0);
        }
        c
    }

    fn b(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.b).collect()
    }
}

struct Point {
    x: Vec<CMatrix>,
    z: Vec<CMatrix>,
    xl: Vec<f64>,
    zl: Vec<f64>,
    f: Vec<f64>,
    y: Vec<f64>,
}

struct Dir {
    x: Vec<CMatrix>,
    z: Vec<CMatrix>,
    xl: Vec<f64>,
    zl: Vec<f64>,
    f: Vec<f64>,
    y: Vec<f64>,
}

/// Factored Newton system.
struct Factored {
    chol: Vec<f64>,
    /// `M⁻¹ B` column by column and the factor of `Bᵀ M⁻¹ B`.
    free: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

fn regularized_cholesky(s: &[f64], m: usize) -> Option<Vec<f64>> {
    let dmax = (0..m).map(|i| s[i * m + i]).fold(0.0f64, f64::max).max(1e-300);
    let mut reg = 1e-14 * dmax;
    for _ in 0..6 {
        let mut t = s.to_vec();
        for i in 0..m {
            t[i * m + i] += reg;
        }
        if let Ok(l) = cholesky(&t, m) {
            return Some(l);
        }
        reg *= 100.0;
    }
    None
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn re_inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.trace_product(b).re
}

/// Largest step keeping `X + α ΔX` positive semidefinite.
fn max_step_psd(x: &CMatrix, dx: &CMatrix) -> Option<f64> {
    let li = lower_inverse(&hermitian_cholesky(x).ok()?);
    let s = (&(&li * dx) * &li.adjoint()).hermitian_part();
    let lam = hermitian_eigvals_fast(&s).ok()?[0];
    Some(if lam < 0.0 { -1.0 / lam } else { f64::INFINITY })
}

fn max_step_lp(x: &[f64], dx: &[f64]) -> f64 {
    x.iter()
        .zip(dx)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

struct Residuals {
    rp: Vec<f64>,
    rd: Vec<CMatrix>,
    rdl: Vec<f64>,
    rf: Vec<f64>,
    pinf: f64,
    dinf: f64,
    gap: f64,
    pobj: f64,
    dobj: f64,
    mu: f64,
}

struct Ipm<'a> {
    md: &'a Model,
    st: &'a Settings,
    b: Vec<f64>,
    c: Vec<CMatrix>,
    nb: f64,
    nc: f64,
}

impl<'a> Ipm<'a> {
    fn residuals(&self, pt: &Point) -> Residuals {
        let md = self.md;
        let ax = md.a_op(&pt.x, &pt.xl);
        let bfv = md.b_mul(&pt.f);
        let rp: Vec<f64> = (0..md.m()).map(|r| self.b[r] - ax[r] - bfv[r]).collect();
        let (aty, atyl) = md.at_op(&pt.y);
        let mut rd = Vec::with_capacity(md.dims.len());
        let mut dn2 = 0.0;
        let mut pobj = 0.0;
        let mut xz = 0.0;
        for j in 0..md.dims.len() {
            let r = &(&self.c[j] - &aty[j]) - &pt.z[j];
            dn2 += r.fro_norm().powi(2);
            rd.push(r);
            pobj += re_inner(&self.c[j], &pt.x[j]);
            xz += re_inner(&pt.x[j], &pt.z[j]);
        }
        let rdl: Vec<f64> = (0..md.n_lp).map(|l| md.c_lp[l] - atyl[l] - pt.zl[l]).collect();
        dn2 += rdl.iter().map(|v| v * v).sum::<f64>();
        let bty = md.bt_mul(&pt.y);
        let rf: Vec<f64> = (0..md.n_scalar).map(|i| md.c_free[i] - bty[i]).collect();
        dn2 += rf.iter().map(|v| v * v).sum::<f64>();
        pobj += md.c_lp.iter().zip(&pt.xl).map(|(c, x)| c * x).sum::<f64>();
        pobj += md.c_free.iter().zip(&pt.f).map(|(c, x)| c * x).sum::<f64>();
        xz += pt.xl.iter().zip(&pt.zl).map(|(x, z)| x * z).sum::<f64>();
        let dobj: f64 = self.b.iter().zip(&pt.y).map(|(b, y)| b * y).sum();
        Residuals {
            pinf: norm2(&rp) / (1.0 + self.nb),
            dinf: dn2.sqrt() / (1.0 + self.nc),
            gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
            rp,
            rd,
            rdl,
            rf,
            pobj,
            dobj,
            mu: xz / md.nu(),
        }
    }

    fn schur(&self, pt: &Point, zinv: &[CMatrix]) -> Vec<f64> {
        let md = self.md;
        let m = md.m();
        let mut s = vec![0.0; m * m];
        for (j, rows) in md.block_rows.iter().enumerate() {
            let x = &pt.x[j];
            let zi = &zinv[j];
            let p: Vec<Option<CMatrix>> = rows
                .iter()
                .map(|&r| match md.coef(r, j) {
                    Coef::Dense(a) => Some(&(x * a) * zi),
                    Coef::Diag(_) => None,
                })
                .collect();
            for (a, &ri) in rows.iter().enumerate() {
                for (bb, &rk) in rows.iter().enumerate().skip(a) {
                    let v = if let Some(pk) = &p[bb] {
                        md.coef(ri, j).inner(pk)
                    } else if let Some(pi) = &p[a] {
                        md.coef(rk, j).inner(pi)
                    } else {
                        let (Coef::Diag(da), Coef::Diag(db)) = (md.coef(ri, j), md.coef(rk, j)) else {
                            unreachable!()
                        };
                        let mut acc = 0.0;
                        for &(pp, va) in da {
                            for &(q, vb) in db {
                                acc += va * vb * (x[(pp, q)] * zi[(q, pp)]).re;
                            }
                        }
                        acc
                    };
                    s[ri * m + rk] += v;
                    if ri != rk {
                        s[rk * m + ri] += v;
                    }
                }
            }
        }
        if md.n_lp > 0 {
            let w: Vec<f64> = pt.xl.iter().zip(&pt.zl).map(|(x, z)| x / z).collect();
            let mut g = vec![0.0; m * md.n_lp];
            for (r, row) in md.rows.iter().enumerate() {
                for &(l, a) in &row.lp {
                    g[r * md.n_lp + l] += a;
                }
            }
            for r in 0..m {
                let gr = &g[r * md.n_lp..(r + 1) * md.n_lp];
                for k in r..m {
                    let gk = &g[k * md.n_lp..(k + 1) * md.n_lp];
                    let v: f64 = (0..md.n_lp).map(|l| gr[l] * gk[l] * w[l]).sum();
                    if v != 0.0 {
                        s[r * m + k] += v;
                        if r != k {
                            s[k * m + r] += v;
                        }
                    }
                }
            }
        }
        s
    }

    fn factor(&self, s: &[f64]) -> Option<Factored> {
        let md = self.md;
        let chol = regularized_cholesky(s, md.m())?;
        let k = md.n_scalar;
        if k == 0 {
            return Some(Factored { chol, free: None });
        }
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut c: Vec<f64> = (0..md.m()).map(|r| md.bf[r * k + i]).collect();
                cholesky_solve(&chol, md.m(), &mut c);
                c
            })
            .collect();
        let mut g = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                g[i * k + j] = (0..md.m()).map(|r| md.bf[r * k + i] * cols[j][r]).sum();
            }
        }
        for i in 0..k {
            for j in 0..i {
                let v = 0.5 * (g[i * k + j] + g[j * k + i]);
                g[i * k + j] = v;
                g[j * k + i] = v;
            }
        }
        let gf = regularized_cholesky(&g, k)?;
        Some(Factored { chol, free: Some((cols, gf)) })
    }

    /// Solves the Newton system for a given complementarity right-hand side
    /// `Rc` (per block) and `rc` (orthant).
    fn direction(&self, pt: &Point, res: &Residuals, zinv: &[CMatrix], fac: &Factored, rc: &[CMatrix], rcl: &[f64]) -> Dir {
        let md = self.md;
        let h: Vec<CMatrix> = (0..md.dims.len())
            .map(|j| &(&rc[j] - &(&pt.x[j] * &res.rd[j])) * &zinv[j])
            .collect();
        let hl: Vec<f64> = (0..md.n_lp).map(|l| (rcl[l] - pt.xl[l] * res.rdl[l]) / pt.zl[l]).collect();
        let ah = md.a_op(&h, &hl);
        let mut dy: Vec<f64> = res.rp.iter().zip(&ah).map(|(r, a)| r - a).collect();
        cholesky_solve(&fac.chol, md.m(), &mut dy);
        let mut df = vec![0.0; md.n_scalar];
        if let Some((cols, gf)) = &fac.free {
            let bt = md.bt_mul(&dy);
            for i in 0..md.n_scalar {
                df[i] = bt[i] - res.rf[i];
            }
            cholesky_solve(gf, md.n_scalar, &mut df);
            for (i, c) in cols.iter().enumerate() {
                for (y, v) in dy.iter_mut().zip(c) {
                    *y -= v * df[i];
                }
            }
        }
        let (atdy, atdyl) = md.at_op(&dy);
        let dz: Vec<CMatrix> = (0..md.dims.len()).map(|j| &res.rd[j] - &atdy[j]).collect();
        let dzl: Vec<f64> = (0..md.n_lp).map(|l| res.rdl[l] - atdyl[l]).collect();
        let dx: Vec<CMatrix> = (0..md.dims.len())
            .map(|j| (&(&rc[j] - &(&pt.x[j] * &dz[j])) * &zinv[j]).hermitian_part())
            .collect();
        let dxl: Vec<f64> = (0..md.n_lp).map(|l| (rcl[l] - pt.xl[l] * dzl[l]) / pt.zl[l]).collect();
        Dir { x: dx, z: dz, xl: dxl, zl: dzl, f: df, y: dy }
    }

    fn steps(&self, pt: &Point, d: &Dir) -> Option<(f64, f64)> {
        let mut ap = max_step_lp(&pt.xl, &d.xl);
        let mut ad = max_step_lp(&pt.zl, &d.zl);
        for j in 0..self.md.dims.len() {
            ap = ap.min(max_step_psd(&pt.x[j], &d.x[j])?);
            ad = ad.min(max_step_psd(&pt.z[j], &d.z[j])?);
        }
        Some((ap, ad))
    }

    fn initial_point(&self) -> Point {
        let md = self.md;
        let mut x = Vec::new();
        let mut z = Vec::new();
        for (j, &n) in md.dims.iter().enumerate() {
            let nf = n as f64;
            let mut xi = 10.0f64.max(nf.sqrt());
            let mut eta = 10.0f64.max(nf.sqrt()).max(self.c[j].fro_norm());
            for &r in &md.block_rows[j] {
                let a = md.coef(r, j).fro();
                xi = xi.max(nf * (1.0 + md.rows[r].b.abs()) / (1.0 + a));
                eta = eta.max(a);
            }
            x.push(CMatrix::identity(n).scale_real(xi));
            z.push(CMatrix::identity(n).scale_real(eta));
        }
        let nl = md.n_lp as f64;
        let mut xi = 10.0f64.max(nl.sqrt());
        let mut eta = 10.0f64.max(nl.sqrt()).max(norm2(&md.c_lp));
        for row in &md.rows {
            let a = norm2(&row.lp.iter().map(|(_, v)| *v).collect::<Vec<_>>());
            if a > 0.0 {
                xi = xi.max((1.0 + row.b.abs()) / (1.0 + a));
                eta = eta.max(a);
            }
        }
        Point { x, z, xl: vec![xi; md.n_lp], zl: vec![eta; md.n_lp], f: vec![0.0; md.n_scalar], y: vec![0.0; md.m()] }
    }

    fn run(&self) -> (Status, Point, Residuals, usize) {
        let md = self.md;
        let nblk = md.dims.len();
        let mut pt = self.initial_point();
        let target = self.st.tol * self.st.stop_fraction;
        let mut it = 0;
        loop {
            let res = self.residuals(&pt);
            if res.pinf <= target && res.dinf <= target && res.gap <= target {
                return (Status::Optimal, pt, res, it);
            }
            if let Some(s) = self.certificate(&res) {
                return (s, pt, res, it);
            }
            let accept_stall = |res: Residuals, pt: Point, it: usize| {
                let tol = self.st.tol;
                let s = if res.pinf <= tol && res.dinf <= tol && res.gap <= tol { Status::Optimal } else { Status::MaxIters };
                (s, pt, res, it)
            };
            if it >= self.st.max_iters {
                return accept_stall(res, pt, it);
            }
            it += 1;
            let zinv: Option<Vec<CMatrix>> = pt.z.iter().map(|z| hermitian_pd_inverse(z).ok()).collect();
            let Some(zinv) = zinv else { return accept_stall(res, pt, it) };
            let s = self.schur(&pt, &zinv);
            let Some(fac) = self.factor(&s) else { return accept_stall(res, pt, it) };

            let rc_aff: Vec<CMatrix> = (0..nblk).map(|j| (&pt.x[j] * &pt.z[j]).scale_real(-1.0)).collect();
            let rcl_aff: Vec<f64> = pt.xl.iter().zip(&pt.zl).map(|(x, z)| -x * z).collect();
            let aff = self.direction(&pt, &res, &zinv, &fac, &rc_aff, &rcl_aff);
            let Some((ap, ad)) = self.steps(&pt, &aff) else { return accept_stall(res, pt, it) };
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let mut mu_aff = 0.0;
            for j in 0..nblk {
                let xa = &pt.x[j] + &aff.x[j].scale_real(ap);
                let za = &pt.z[j] + &aff.z[j].scale_real(ad);
                mu_aff += re_inner(&xa, &za);
            }
            for l in 0..md.n_lp {
                mu_aff += (pt.xl[l] + ap * aff.xl[l]) * (pt.zl[l] + ad * aff.zl[l]);
            }
            mu_aff /= md.nu();
            let sigma = (mu_aff / res.mu).clamp(0.0, 1.0).powi(3);
            let smu = sigma * res.mu;
            let rc: Vec<CMatrix> = (0..nblk)
                .map(|j| {
                    let n = md.dims[j];
                    let mut r = &CMatrix::identity(n).scale_real(smu) - &(&pt.x[j] * &pt.z[j]);
                    r -= &(&aff.x[j] * &aff.z[j]);
                    r
                })
                .collect();
            let rcl: Vec<f64> = (0..md.n_lp)
                .map(|l| smu - pt.xl[l] * pt.zl[l] - aff.xl[l] * aff.zl[l])
                .collect();
            let d = self.direction(&pt, &res, &zinv, &fac, &rc, &rcl);
            let Some((mp, mdl)) = self.steps(&pt, &d) else { return accept_stall(res, pt, it) };
            let gamma = 0.9 + 0.09 * ap.min(ad);
            let sp = (gamma * mp).min(1.0);
            let sd = (gamma * mdl).min(1.0);
            if sp < 1e-12 && sd < 1e-12 {
                return accept_stall(res, pt, it);
            }
            for j in 0..nblk {
                pt.x[j] = (&pt.x[j] + &d.x[j].scale_real(sp)).hermitian_part();
                pt.z[j] = (&pt.z[j] + &d.z[j].scale_real(sd)).hermitian_part();
            }
            for l in 0..md.n_lp {
                pt.xl[l] += sp * d.xl[l];
                pt.zl[l] += sd * d.zl[l];
            }
            for (f, df) in pt.f.iter_mut().zip(&d.f) {
                *f += sp * df;
            }
            for (y, dy) in pt.y.iter_mut().zip(&d.y) {
                *y += sd * dy;
            }
        }
    }

    fn certificate(&self, res: &Residuals) -> Option<Status> {
        let eps = self.st.infeasibility_tol;
        if res.dobj > 0.0 {
            let mut r2 = 0.0;
            for j in 0..self.md.dims.len() {
                r2 += (&self.c[j] - &res.rd[j]).fro_norm().powi(2);
            }
            for l in 0..self.md.n_lp {
                r2 += (self.md.c_lp[l] - res.rdl[l]).powi(2);
            }
            for i in 0..self.md.n_scalar {
                r2 += (self.md.c_free[i] - res.rf[i]).powi(2);
            }
            if r2.sqrt() / res.dobj <= eps {
                return Some(Status::Infeasible);
            }
        }
        if res.pobj < 0.0 {
            let ax: Vec<f64> = self.b.iter().zip(&res.rp).map(|(b, r)| b - r).collect();
            if norm2(&ax) / -res.pobj <= eps {
                return Some(Status::Unbounded);
            }
        }
        None
    }
}

pub(super) fn solve_ipm(p: &ConicProblem, st: &Settings) -> Result<ConicSolution> {
    let md = Model::build(p);
    let c: Vec<CMatrix> = (0..md.dims.len()).map(|j| md.c_block(j)).collect();
    let b = md.b();
    let nb = norm2(&b);
    let nc = (c.iter().map(|m| m.fro_norm().powi(2)).sum::<f64>() + md.c_free.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let ipm = Ipm { md: &md, st, b, c, nb, nc };
    let (status, pt, res, iters) = ipm.run();
    let good = matches!(status, Status::Optimal | Status::MaxIters);
    let psd_values: Vec<CMatrix> = if good {
        pt.x.clone()
    } else {
        md.dims.iter().map(|&n| CMatrix::zeros(n, n)).collect()
    };
    let scalar_values: Vec<f64> = (0..md.n_scalar)
        .map(|k| if good { pt.f[k] } else { 0.0 })
        .collect();
    let duals: Vec<f64> = (0..md.m())
        .map(|r| if good { -pt.y[r] * md.row_scale[r] / md.c_scale } else { 0.0 })
        .collect();
    let objective = if good { p.objective.eval(&psd_values, &scalar_values) } else { f64::NAN };
    Ok(ConicSolution {
        status,
        psd_values,
        scalar_values,
        objective,
        primal_residual: res.pinf,
        dual_residual: res.dinf,
        gap: res.gap,
        iterations: iters,
        eq_duals: duals[..md.n_eq].to_vec(),
        ineq_duals: duals[md.n_eq..].to_vec(),
    })
}

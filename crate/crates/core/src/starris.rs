//! Surface subproblem: the sensing ratio written as quartic forms in the
//! lifted transmission vector `ν_t = [φ_t; 1]`, its first-order surrogate,
//! rank-one tightening of `V_t`, `V_r` and coefficient recovery.
//!
//! With `X = ν νᴴ`, every factor `(νᴴ A ν)(νᴴ B ν)` equals
//! `vec(X)ᴴ (Bᵀ ⊗ A) vec(X)`, so the Dinkelbach objective is the quadratic
//! form `ν̂ᴴ F ν̂ + ωN` in `ν̂ = vec(X)`. Linearizing it at the incoming point
//! gives `Tr(V_t (Δψ + Δψᴴ)) + const`, which is what the conic solver sees.

use crate::beamform::{
    assign_shares, evaluate_rates, ACCEPT_TOL, link_ratios, state_gamma, sum_beams, AccessConfig, IterRecord, SrocrState,
    SrocrTrack,
};
use crate::conic::{self, ConicProblem, LinExpr, Settings};
use crate::error::{Error, Result};
use crate::model::{build_a1_b1, build_ai1_bi1, lifted_gt_gain, wrap_phase, BeamformingState, SensingParams, StarRisState};
use crate::numerics::{hermitian_eig_max, kron, rank_one_residual, vec, CMatrix, CVector, C64, ONE};
use crate::scenario::{response_matrix, ChannelSet, Scenario};

/// Smallest `e_max/Tr` accepted when reading coefficients off a lifted matrix.
pub const MIN_EXTRACTION_RATIO: f64 = 0.9;

const MIN_DELTA: f64 = 1e-12;

/// Which surface elements serve each side and how their amplitudes relate.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceLayout {
    pub num_elements: usize,
    /// Elements that transmit.
    pub t_elems: Vec<usize>,
    /// Elements that reflect.
    pub r_elems: Vec<usize>,
    /// `β^t_m + β^r_m = 1` on every element (energy splitting). Otherwise
    /// each active element has unit amplitude.
    pub paired: bool,
}

impl SurfaceLayout {
    /// Every element both transmits and reflects.
    pub fn star(m: usize) -> Self {
        Self { num_elements: m, t_elems: (0..m).collect(), r_elems: (0..m).collect(), paired: true }
    }

    /// First half transmits, second half reflects, unit amplitudes.
    pub fn split(m: usize) -> Result<Self> {
        if !m.is_multiple_of(2) {
            return Err(Error::invalid(format!("a split surface needs an even element count, got {m}")));
        }
        Ok(Self { num_elements: m, t_elems: (0..m / 2).collect(), r_elems: (m / 2..m).collect(), paired: false })
    }

    /// Rows of the lifted vector kept on the transmission side.
    pub fn t_index(&self) -> Vec<usize> {
        self.t_elems.iter().copied().chain([self.num_elements]).collect()
    }

    pub fn r_index(&self) -> Vec<usize> {
        self.r_elems.iter().copied().chain([self.num_elements]).collect()
    }

    /// Surface obtained by projecting two lifted vectors (last entry 1) onto
    /// the admissible coefficients.
    pub fn project(&self, nu_t: &CVector, nu_r: &CVector) -> Result<StarRisState> {
        let m = self.num_elements;
        if nu_t.len() != m + 1 || nu_r.len() != m + 1 {
            return Err(Error::invalid(format!("lifted vectors must have length {}", m + 1)));
        }
        let phase = |z: C64| if z.norm() > 0.0 { wrap_phase(z.arg()) } else { 0.0 };
        let theta_t: Vec<f64> = (0..m).map(|i| phase(nu_t[i])).collect();
        let theta_r: Vec<f64> = (0..m).map(|i| phase(nu_r[i])).collect();
        let mut beta_t = vec![0.0; m];
        let mut beta_r = vec![0.0; m];
        if self.paired {
            for i in 0..m {
                let bt = nu_t[i].norm_sqr().min(1.0);
                let br = nu_r[i].norm_sqr().min(1.0);
                beta_t[i] = ((bt - br + 1.0) / 2.0).clamp(0.0, 1.0);
                beta_r[i] = 1.0 - beta_t[i];
            }
        } else {
            for &i in &self.t_elems {
                beta_t[i] = 1.0;
            }
            for &i in &self.r_elems {
                beta_r[i] = 1.0;
            }
        }
        Ok(StarRisState::from_amplitude_phase(&beta_t, &theta_t, &beta_r, &theta_r))
    }

    fn check(&self, st: &StarRisState) -> Result<()> {
        if st.num_elements() != self.num_elements || st.phi_r.len() != self.num_elements {
            return Err(Error::invalid("surface state does not match the layout"));
        }
        Ok(())
    }
}

fn reduce(a: &CMatrix, idx: &[usize]) -> CMatrix {
    CMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

fn expand(v: &CMatrix, idx: &[usize], dim: usize) -> CMatrix {
    let mut out = CMatrix::zeros(dim, dim);
    for (i, &p) in idx.iter().enumerate() {
        for (j, &q) in idx.iter().enumerate() {
            out[(p, q)] = v[(i, j)];
        }
    }
    out
}

/// `weight · (νᴴ A ν)(νᴴ B ν)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticTerm {
    pub weight: f64,
    pub a: CMatrix,
    pub b: CMatrix,
}

impl QuarticTerm {
    pub fn value(&self, nu: &CVector) -> f64 {
        self.weight * self.a.quad_form(nu).re * self.b.quad_form(nu).re
    }
}

/// First-order model of `ν̂ᴴ F ν̂ + ωN` around `ν_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    /// `F = Σ_j weight_j (B_jᵀ ⊗ A_j)`.
    pub terms: Vec<QuarticTerm>,
    pub nu0: CVector,
    pub omega: f64,
    /// `unvec(F ν̂_0)ᴴ`.
    pub delta_psi: CMatrix,
    /// `−ν̂_0ᴴ F ν̂_0`.
    pub constant: f64,
    /// `ωN`.
    pub offset: f64,
}

impl Surrogate {
    /// The full `(M+1)² × (M+1)²` matrix `F`.
    pub fn lifted_matrix(&self) -> CMatrix {
        let d = self.nu0.len();
        let mut f = CMatrix::zeros(d * d, d * d);
        for t in &self.terms {
            f += &kron(&t.b.transpose(), &t.a).scale_real(t.weight);
        }
        f
    }

    /// `ψ = F ν̂_0`, read from the closed form.
    pub fn psi(&self) -> CVector {
        vec(&self.delta_psi.adjoint())
    }

    /// `ν̂ᴴ F ν̂` through the quartic factors.
    pub fn quartic(&self, nu: &CVector) -> f64 {
        self.terms.iter().map(|t| t.value(nu)).sum()
    }

    /// Dinkelbach value `ω·den − num` at `ν`.
    pub fn exact(&self, nu: &CVector) -> f64 {
        self.quartic(nu) + self.offset
    }

    /// `Δψ + Δψᴴ`.
    pub fn gradient(&self) -> CMatrix {
        (&self.delta_psi + &self.delta_psi.adjoint()).hermitian_part()
    }

    /// `Tr(V (Δψ + Δψᴴ)) − ν̂_0ᴴ F ν̂_0`.
    pub fn linear(&self, v: &CMatrix) -> f64 {
        self.gradient().trace_product(v).re + self.constant
    }

    /// Linear surrogate plus `ωN`.
    pub fn value(&self, v: &CMatrix) -> f64 {
        self.linear(v) + self.offset
    }
}

/// Builds the surrogate of the sensing objective at `ν_t^(l)` for a fixed
/// transmit covariance `Q`.
pub fn build_surrogate(ch: &ChannelSet, q: &CMatrix, omega: f64, nu_t0: &CVector, sc: &Scenario) -> Result<Surrogate> {
    let (n, m) = (ch.num_antennas(), ch.num_elements());
    if nu_t0.len() != m + 1 {
        return Err(Error::invalid(format!("ν_t has length {}, expected {}", nu_t0.len(), m + 1)));
    }
    if (nu_t0[m] - ONE).norm() > 1e-12 {
        return Err(Error::invalid("ν_t must end with 1"));
    }
    if q.rows() != n || q.cols() != n {
        return Err(Error::invalid("covariance does not match the antenna count"));
    }
    let p = SensingParams::new(sc, ch);
    let g = p.gamma();
    let steer = |theta: f64, beta: C64| {
        let a = response_matrix(theta, beta, n);
        (&(&a * q) * &a.adjoint()).hermitian_part()
    };
    let mut terms = Vec::with_capacity(1 + p.theta_i.len());
    let (a1, b1) = build_a1_b1(ch, &steer(p.theta_0, p.beta_0));
    terms.push(QuarticTerm { weight: -g, a: a1, b: b1 });
    for (i, (&th, &b)) in p.theta_i.iter().zip(&p.beta_i).enumerate() {
        let (ai, bi) = build_ai1_bi1(ch, &steer(th, b), i);
        terms.push(QuarticTerm { weight: omega * g, a: ai, b: bi });
    }
    let d = m + 1;
    let mut delta_psi = CMatrix::zeros(d, d);
    let mut quartic = 0.0;
    for t in &terms {
        let bn = t.b.mul_vec(nu_t0);
        let an = t.a.mul_vec(nu_t0);
        delta_psi += &bn.outer(&an).scale_real(t.weight);
        quartic += t.value(nu_t0);
    }
    Ok(Surrogate {
        terms,
        nu0: nu_t0.clone(),
        omega,
        delta_psi,
        constant: -quartic,
        offset: omega * n as f64,
    })
}

/// A lifted matrix in the program: a reduced full variable, or `t·uuᴴ`.
#[derive(Clone, Debug)]
struct LiftVar {
    var: usize,
    idx: Vec<usize>,
    basis: Option<CVector>,
}

impl LiftVar {
    fn coef(&self, full: &CMatrix) -> CMatrix {
        let r = reduce(full, &self.idx);
        match &self.basis {
            None => r,
            Some(u) => CMatrix::from_real_diag(&[r.quad_form(u).re]),
        }
    }

    fn value(&self, x: &CMatrix, dim: usize) -> CMatrix {
        let v = match &self.basis {
            None => x.clone(),
            Some(u) => u.outer(u).scale_real(x[(0, 0)].re.max(0.0)),
        };
        expand(&v, &self.idx, dim)
    }
}

/// Variable map of an assembled surface program.
#[derive(Clone, Debug)]
pub struct B2Layout {
    t: LiftVar,
    r: LiftVar,
    dim: usize,
    /// Factor dividing the objective handed to the solver.
    pub objective_scale: f64,
}

impl B2Layout {
    /// Full-size `(V_t, V_r)` from a solution.
    pub fn extract(&self, sol: &conic::ConicSolution) -> (CMatrix, CMatrix) {
        (self.t.value(&sol.psd_values[self.t.var], self.dim), self.r.value(&sol.psd_values[self.r.var], self.dim))
    }

    /// Surrogate value of a solution.
    pub fn objective(&self, sol: &conic::ConicSolution) -> f64 {
        sol.objective * self.objective_scale
    }
}

fn unit(dim: usize, m: usize) -> CMatrix {
    let mut e = CMatrix::zeros(dim, dim);
    e[(m, m)] = ONE;
    e
}

/// Assembles the convex surface program for fixed covariances and shares.
///
/// `srocr` holds the transmission track first, then the reflection track,
/// both in the reduced coordinates of `layout`.
#[allow(clippy::too_many_arguments)]
pub fn build_b2_problem(
    sur: &Surrogate,
    ch: &ChannelSet,
    st: &BeamformingState,
    surface: &StarRisState,
    srocr: &SrocrState,
    sc: &Scenario,
    cfg: &AccessConfig,
    layout: &SurfaceLayout,
) -> Result<(ConicProblem, B2Layout)> {
    layout.check(surface)?;
    let m = layout.num_elements;
    let dim = m + 1;
    if sur.delta_psi.rows() != dim || ch.num_elements() != m {
        return Err(Error::invalid("surrogate, channels and layout disagree on the element count"));
    }
    if srocr.tracks.len() != 2 || st.c.len() != sc.num_gts || st.w_p.len() != sc.num_gts {
        return Err(Error::invalid("surface program needs two SROCR tracks and one share per terminal"));
    }
    let mut p = ConicProblem::new();
    let make = |p: &mut ConicProblem, name: &str, idx: Vec<usize>, t: &SrocrTrack| {
        let basis = t.exact(srocr.exact_above).then(|| t.u.clone());
        let d = if basis.is_some() { 1 } else { idx.len() };
        LiftVar { var: p.add_psd(name, d), idx, basis }
    };
    let vt = make(&mut p, "V_t", layout.t_index(), &srocr.tracks[0]);
    let vr = make(&mut p, "V_r", layout.r_index(), &srocr.tracks[1]);

    if layout.paired {
        for i in 0..m {
            let e = unit(dim, i);
            p.add_eq(format!("pairing {i}"), LinExpr::new().psd(vt.var, vt.coef(&e)).psd(vr.var, vr.coef(&e)), 1.0);
        }
        let e = unit(dim, m);
        p.add_eq("V_t last", LinExpr::new().psd(vt.var, vt.coef(&e)), 1.0);
        p.add_eq("V_r last", LinExpr::new().psd(vr.var, vr.coef(&e)), 1.0);
    } else {
        for (side, v) in [("t", &vt), ("r", &vr)] {
            for &i in &v.idx {
                p.add_eq(format!("unit {side}{i}"), LinExpr::new().psd(v.var, v.coef(&unit(dim, i))), 1.0);
            }
        }
    }

    let rho = sc.rho();
    let nu_r0 = surface.nu_r();
    for (i, r) in link_ratios(cfg, sc, &st.c).iter().enumerate() {
        let mn = lifted_gt_gain(ch, r.user, &sum_beams(st, &r.num));
        let md = lifted_gt_gain(ch, r.user, &sum_beams(st, &r.den));
        let g = 2f64.powf(r.exponent);
        let d0 = rho * md.quad_form(&nu_r0).re + 1.0;
        let scale = 1.0 / (g * d0);
        let coef = (&mn.scale_real(rho * scale) - &md.scale_real(rho * g * scale)).hermitian_part();
        let e = LinExpr::new().psd(vr.var, vr.coef(&coef)).constant((1.0 - g) * scale);
        p.add_ge(format!("rate {i} at GT {}", r.user), e, 0.0);
    }

    for (v, t, name) in [(&vt, &srocr.tracks[0], "V_t"), (&vr, &srocr.tracks[1], "V_r")] {
        if t.active && v.basis.is_none() {
            let d = v.idx.len();
            let row = &t.u.outer(&t.u) - &CMatrix::identity(d).scale_real(t.tau);
            p.add_ge(format!("rank-one {name}"), LinExpr::new().psd(v.var, row), 0.0);
        }
    }

    let scale = sur.offset.abs().max(sur.constant.abs()).max(f64::MIN_POSITIVE);
    let grad = sur.gradient().scale_real(1.0 / scale);
    p.set_objective(LinExpr::new().psd(vt.var, vt.coef(&grad)).constant((sur.constant + sur.offset) / scale));
    Ok((p, B2Layout { t: vt, r: vr, dim, objective_scale: scale }))
}

/// Coefficients read off a pair of lifted matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Extracted {
    /// `√e_max u_max`, gauged so that the last entry is exactly 1.
    pub nu_t: CVector,
    pub nu_r: CVector,
    /// Projection onto admissible coefficients.
    pub surface: StarRisState,
}

fn gauged_factor(v: &CMatrix) -> Result<CVector> {
    let tr = v.trace_re();
    if !(tr > 0.0) {
        return Err(Error::Extraction(format!("lifted matrix has trace {tr:.3e}")));
    }
    let (e, u) = hermitian_eig_max(v)?;
    if e / tr < MIN_EXTRACTION_RATIO {
        return Err(Error::Extraction(format!("largest eigenvalue carries only {:.4} of the trace", e / tr)));
    }
    let nu = u.scale(C64::new(e.sqrt(), 0.0));
    let last = nu[nu.len() - 1];
    if last.norm() <= 1e-9 * nu.norm() {
        return Err(Error::Extraction("dominant eigenvector has no weight on the last entry".into()));
    }
    let mut out = nu.scale(last.inv());
    let k = out.len() - 1;
    out[k] = ONE;
    Ok(out)
}

/// Recovers surface coefficients from nearly rank-one lifted matrices.
pub fn extract_coeffs(v_t: &CMatrix, v_r: &CMatrix, layout: &SurfaceLayout) -> Result<Extracted> {
    let dim = layout.num_elements + 1;
    if v_t.rows() != dim || v_r.rows() != dim {
        return Err(Error::invalid(format!("lifted matrices must be {dim}×{dim}")));
    }
    let factor = |v: &CMatrix, idx: &[usize]| -> Result<CVector> {
        let r = gauged_factor(&reduce(v, idx))?;
        let mut full = CVector::zeros(dim);
        for (i, &p) in idx.iter().enumerate() {
            full[p] = r[i];
        }
        Ok(full)
    };
    let nu_t = factor(v_t, &layout.t_index())?;
    let nu_r = factor(v_r, &layout.r_index())?;
    let surface = layout.project(&nu_t, &nu_r)?;
    Ok(Extracted { nu_t, nu_r, surface })
}

#[derive(Clone, Debug)]
pub struct B2Options {
    pub max_iters: usize,
    /// Surrogate rebuilds per call.
    pub max_rounds: usize,
    /// Step sizes `1, 1/2, …` tried along the extracted direction.
    pub line_search_steps: usize,
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    pub solver: Settings,
    pub accept_tol: f64,
}

impl B2Options {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            max_iters: 100,
            max_rounds: 10,
            line_search_steps: 7,
            epsilon_1: sc.epsilon_1,
            epsilon_2: sc.epsilon_2,
            solver: Settings::interior_point(),
            accept_tol: ACCEPT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct B2Outcome {
    pub surface: StarRisState,
    /// Shares re-validated against the new reflection coefficients.
    pub c: Vec<f64>,
    pub gamma: f64,
    /// `(τ_t, τ_r)` of the last accepted lifted solution.
    pub taus: [f64; 2],
    /// `e_max/Tr` of the last accepted lifted `V_t`, `V_r`.
    pub ratios: [f64; 2],
    /// Relative distance of the same matrices to rank one.
    pub residuals: [f64; 2],
    pub rounds: usize,
    pub iterations: usize,
    pub converged: bool,
    /// No candidate improved on the incoming surface.
    pub kept_start: bool,
    pub trace: Vec<IterRecord>,
}

/// Lifted solution of one surrogate.
struct Lifted {
    v_t: CMatrix,
    v_r: CMatrix,
    taus: [f64; 2],
    ratios: [f64; 2],
    residuals: [f64; 2],
    iterations: usize,
    converged: bool,
}

/// Relaxed solve followed by rank-one tightening for one surrogate.
#[allow(clippy::too_many_arguments)]
fn solve_lifted(
    sur: &Surrogate,
    ch: &ChannelSet,
    st: &BeamformingState,
    surface: &StarRisState,
    sc: &Scenario,
    cfg: &AccessConfig,
    layout: &SurfaceLayout,
    opts: &B2Options,
    gamma: f64,
    trace: &mut Vec<IterRecord>,
) -> Result<Lifted> {
    let d = layout.t_index().len();
    let mut srocr = SrocrState::relaxed(2, d);
    srocr.exact_above = f64::INFINITY;
    let mut last: Option<(CMatrix, CMatrix)> = None;
    let mut objective = f64::NAN;
    let ratio = |v: &CMatrix, idx: &[usize]| -> Result<f64> {
        let r = reduce(v, idx);
        Ok((hermitian_eig_max(&r)?.0 / r.trace_re()).min(1.0))
    };
    let (ti, ri) = (layout.t_index(), layout.r_index());
    for it in 0..opts.max_iters {
        let (p, lay) = build_b2_problem(sur, ch, st, surface, &srocr, sc, cfg, layout)?;
        let sol = conic::solve_with(&p, &opts.solver)?;
        let ok = sol.usable(opts.accept_tol);
        let mut record = IterRecord {
            iter: trace.len(),
            omega: sur.omega,
            objective: if ok { lay.objective(&sol) } else { f64::NAN },
            gamma,
            taus: srocr.tracks.iter().map(|t| if t.active { t.tau } else { 1.0 }).collect(),
            max_delta: srocr.max_delta(),
            feasible: ok,
            phase: if it == 0 { "relaxed" } else { "srocr" },
        };
        if !ok {
            trace.push(record);
            let Some((vt, vr)) = &last else {
                return Err(Error::Stall(format!("relaxed surface problem returned {:?}", sol.status)));
            };
            for t in srocr.tracks.iter_mut().filter(|t| t.active) {
                t.delta /= 2.0;
            }
            if srocr.max_delta() < MIN_DELTA {
                break;
            }
            for (t, (v, idx)) in srocr.tracks.iter_mut().zip([(vt, &ti), (vr, &ri)]) {
                if t.active {
                    t.advance(&reduce(v, idx))?;
                }
            }
            continue;
        }
        let (vt, vr) = lay.extract(&sol);
        if let Ok(ex) = extract_coeffs(&vt, &vr, layout) {
            record.gamma = state_gamma(sc, ch, &ex.surface.phi_t, st)?;
        } else {
            record.gamma = f64::NAN;
        }
        trace.push(record);
        let new_obj = lay.objective(&sol);
        for (t, (v, idx)) in srocr.tracks.iter_mut().zip([(&vt, &ti), (&vr, &ri)]) {
            t.follow(&reduce(v, idx), 0.0, opts.epsilon_1)?;
        }
        let rank_one = srocr.tracks.iter().all(|t| t.ratio >= 1.0 - opts.epsilon_1);
        let settled = (new_obj - objective).abs() <= opts.epsilon_2 * sur.offset.abs().max(new_obj.abs());
        objective = new_obj;
        last = Some((vt, vr));
        if rank_one && (settled || srocr.tracks.iter().all(|t| !t.active)) {
            break;
        }
    }
    let (v_t, v_r) = last.expect("at least one solve succeeded");
    let taus = [srocr.tracks[0].tau, srocr.tracks[1].tau].map(|t| t.max(0.0));
    let ratios = [ratio(&v_t, &ti)?, ratio(&v_r, &ri)?];
    let residuals = [rank_one_residual(&reduce(&v_t, &ti))?, rank_one_residual(&reduce(&v_r, &ri))?];
    let converged = ratios.iter().all(|r| *r >= 1.0 - opts.epsilon_1);
    let taus = [0, 1].map(|i| if srocr.tracks[i].active { taus[i] } else { ratios[i] });
    Ok(Lifted { v_t, v_r, taus, ratios, residuals, iterations: trace.len(), converged })
}

/// Candidate surfaces along `ν_0 + α(ν* − ν_0)` for `α = 1, 1/2, …`; returns
/// the best one that improves `γ` and keeps every threshold reachable.
#[allow(clippy::too_many_arguments)]
fn line_search(
    from: &StarRisState,
    target: &Extracted,
    ch: &ChannelSet,
    st: &BeamformingState,
    sc: &Scenario,
    cfg: &AccessConfig,
    layout: &SurfaceLayout,
    steps: usize,
    gamma0: f64,
) -> Result<Option<(StarRisState, Vec<f64>, f64)>> {
    let (t0, r0) = (from.nu_t(), from.nu_r());
    let mut best: Option<(StarRisState, Vec<f64>, f64)> = None;
    let mut alpha = 1.0;
    for _ in 0..steps.max(1) {
        let mix = |a: &CVector, b: &CVector| CVector::from_fn(a.len(), |i| a[i] + (b[i] - a[i]) * alpha);
        let cand = layout.project(&mix(&t0, &target.nu_t), &mix(&r0, &target.nu_r))?;
        let rates = evaluate_rates(cfg, sc, ch, &cand.phi_r, st)?;
        if let Some(c) = assign_shares(cfg, sc, &rates, Some(&st.c)) {
            let g = state_gamma(sc, ch, &cand.phi_t, st)?;
            if g > gamma0 && best.as_ref().is_none_or(|b| g > b.2) {
                best = Some((cand, c, g));
            }
        }
        alpha /= 2.0;
    }
    Ok(best)
}

/// Improves the surface for fixed covariances: repeated surrogate rounds,
/// each a relaxed solve plus rank-one tightening, coefficient extraction
/// and a backtracking step that is only taken when `γ` increases.
#[allow(clippy::too_many_arguments)]
pub fn solve_b2(
    sc: &Scenario,
    ch: &ChannelSet,
    cfg: &AccessConfig,
    layout: &SurfaceLayout,
    st: &BeamformingState,
    surface: &StarRisState,
    opts: &B2Options,
) -> Result<B2Outcome> {
    layout.check(surface)?;
    let mut cur = surface.clone();
    let mut c = st.c.clone();
    let mut gamma = state_gamma(sc, ch, &cur.phi_t, st)?;
    let mut trace = Vec::new();
    let mut taus = [f64::NAN; 2];
    let mut ratios = [f64::NAN; 2];
    let mut residuals = [f64::NAN; 2];
    let mut rounds = 0;
    let mut converged = false;
    let mut kept_start = true;
    let mut iterations = 0;
    for _ in 0..opts.max_rounds.max(1) {
        rounds += 1;
        let here = BeamformingState { c: c.clone(), ..st.clone() };
        let sur = build_surrogate(ch, &here.q(), gamma, &cur.nu_t(), sc)?;
        let lifted = solve_lifted(&sur, ch, &here, &cur, sc, cfg, layout, opts, gamma, &mut trace)?;
        iterations = lifted.iterations;
        let ex = extract_coeffs(&lifted.v_t, &lifted.v_r, layout)?;
        match line_search(&cur, &ex, ch, &here, sc, cfg, layout, opts.line_search_steps, gamma)? {
            Some((next, shares, g)) => {
                let gain = (g - gamma) / gamma.abs().max(f64::MIN_POSITIVE);
                cur = next;
                c = shares;
                gamma = g;
                taus = lifted.taus;
                ratios = lifted.ratios;
                residuals = lifted.residuals;
                kept_start = false;
                if gain <= opts.epsilon_2 {
                    converged = lifted.converged;
                    break;
                }
            }
            None => {
                converged = lifted.converged;
                break;
            }
        }
    }
    Ok(B2Outcome { surface: cur, c, gamma, taus, ratios, residuals, rounds, iterations, converged, kept_start, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_layout_needs_even_count() {
        assert!(SurfaceLayout::split(5).is_err());
        let l = SurfaceLayout::split(4).unwrap();
        assert_eq!(l.t_index(), vec![0, 1, 4]);
        assert_eq!(l.r_index(), vec![2, 3, 4]);
    }

    #[test]
    fn projection_restores_pairing() {
        let l = SurfaceLayout::star(2);
        let t = CVector::from_vec(vec![C64::new(0.9, 0.0), C64::new(0.0, 0.3), ONE]);
        let r = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, -1.2), ONE]);
        let s = l.project(&t, &r).unwrap();
        assert!(s.pairing_error() < 1e-15);
        assert!((s.beta_r()[1] - 0.955).abs() < 1e-12);
        assert!(s.theta_t().iter().chain(&s.theta_r()).all(|p| (0.0..2.0 * std::f64::consts::PI).contains(p)));
    }

    #[test]
    fn extraction_rejects_spread_spectrum() {
        let l = SurfaceLayout::star(1);
        let v = CMatrix::identity(2);
        assert!(matches!(extract_coeffs(&v, &v, &l), Err(Error::Extraction(_))));
    }
}

//! Beamforming subproblem: Dinkelbach objective, tangent-bounded rate
//! constraints and sequential rank-one constraint relaxation (SROCR).
//!
//! Rate constraints of the rate-splitting scheme are written with slack
//! variables `a_k`, `b_k`:
//!
//! - `ρ Tr(H_k Q1) + 1 ≥ 2^{a_k}` and `ρ Tr(H_k Q2) + 1 ≥ 2^{b_k}` are
//!   enforced through the concave minorant `ln L ≥ ln L0 + 1 − L0/L`, which
//!   is a 2×2 linear matrix inequality and is exact at `L = L0`;
//! - `2^{a_k − Σc} ≥ ρ Tr(H_k Q2) + 1` and `2^{b_k + c_k − R_k} ≥ ρ Tr(H_k Q3) + 1`
//!   use the first-order Taylor expansion of the exponential.
//!
//! Space-division and NOMA schemes have fixed thresholds, so their rate
//! constraints are linear in the covariances and need no approximation.

use std::fmt::Write as _;
use std::f64::consts::LN_2;

use crate::conic::{self, ConicProblem, LinExpr, Settings};
use crate::error::{Error, Result};
use crate::model::{composite_gt_channel, covariance_rate, sensing_gains, BeamformingState, SensingParams};
use crate::numerics::{hermitian_eig_max, CMatrix, CVector, C64};
use crate::scenario::{ChannelSet, Scenario};

/// Covariances whose trace is below this fraction of `P_max` are treated as
/// switched off: they carry no rank-one row and are replaced by their
/// dominant rank-one part on output.
pub const VANISHING_TRACE: f64 = 1e-8;

/// A rank-one row with `τ` this close to one is imposed by restricting the
/// covariance to `t·uuᴴ`.
const EXACT_RANK_ONE: f64 = 1e-10;

/// Smallest step size before persistent infeasibility is reported.
const MIN_DELTA: f64 = 1e-12;

/// Tolerance, in bit/s/Hz, when checking that a point meets its thresholds.
pub const RATE_TOL: f64 = 1e-7;

/// Early-stopped solves with residuals and gap below this are still used;
/// every accepted point is re-checked against the exact constraints.
pub const ACCEPT_TOL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Access {
    /// Common stream plus one private stream per terminal.
    Rsma,
    /// Private streams only, cross-streams treated as noise.
    Sdma,
    /// Superposition coding with successive interference cancellation.
    Noma,
}

/// Multiple-access layout of the downlink.
#[derive(Clone, Debug, PartialEq)]
pub struct AccessConfig {
    pub access: Access,
    /// Whether a dedicated sensing covariance `W_0` is optimized.
    pub with_w0: bool,
    /// NOMA decoding order, weakest terminal first.
    pub sic_order: Vec<usize>,
}

impl AccessConfig {
    pub fn rsma(with_w0: bool) -> Self {
        Self { access: Access::Rsma, with_w0, sic_order: Vec::new() }
    }

    pub fn sdma() -> Self {
        Self { access: Access::Sdma, with_w0: false, sic_order: Vec::new() }
    }

    pub fn noma(sic_order: Vec<usize>) -> Self {
        Self { access: Access::Noma, with_w0: false, sic_order }
    }

    pub fn has_common(&self) -> bool {
        self.access == Access::Rsma
    }

    /// Beams carried by this layout, in variable order.
    pub fn beams(&self, k: usize) -> Vec<Beam> {
        let mut out = Vec::with_capacity(k + 2);
        if self.has_common() {
            out.push(Beam::Common);
        }
        out.extend((0..k).map(Beam::Private));
        if self.with_w0 {
            out.push(Beam::Sensing);
        }
        out
    }

    fn check(&self, k: usize) -> Result<()> {
        if self.access == Access::Noma {
            let mut seen = vec![false; k];
            for &j in &self.sic_order {
                if j >= k || std::mem::replace(&mut seen[j], true) {
                    return Err(Error::invalid("SIC order must be a permutation of the terminals"));
                }
            }
            if self.sic_order.len() != k {
                return Err(Error::invalid("SIC order must list every terminal"));
            }
        }
        Ok(())
    }
}

/// One transmit covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Beam {
    Common,
    Private(usize),
    Sensing,
}

impl Beam {
    pub fn get<'a>(&self, st: &'a BeamformingState) -> Option<&'a CMatrix> {
        match self {
            Beam::Common => Some(&st.w_c),
            Beam::Private(k) => st.w_p.get(*k),
            Beam::Sensing => st.w_0.as_ref(),
        }
    }

    fn set(&self, st: &mut BeamformingState, w: CMatrix) {
        match self {
            Beam::Common => st.w_c = w,
            Beam::Private(k) => st.w_p[*k] = w,
            Beam::Sensing => st.w_0 = Some(w),
        }
    }

    fn label(&self) -> String {
        match self {
            Beam::Common => "W_c".into(),
            Beam::Private(k) => format!("W_p{k}"),
            Beam::Sensing => "W_0".into(),
        }
    }
}

/// Rate requirement `ρ Tr(H_j Σ num) + 1 ≥ 2^e (ρ Tr(H_j Σ den) + 1)` at
/// terminal `j`, i.e. `log2(1 + S/(I + σ²)) ≥ e` with `S + I = Σ num`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkRatio {
    pub user: usize,
    pub num: Vec<Beam>,
    pub den: Vec<Beam>,
    pub exponent: f64,
}

/// Rate requirements that are linear once the common-rate shares are fixed.
pub fn link_ratios(cfg: &AccessConfig, sc: &Scenario, c: &[f64]) -> Vec<LinkRatio> {
    let k = sc.num_gts;
    let sensing: Vec<Beam> = if cfg.with_w0 { vec![Beam::Sensing] } else { Vec::new() };
    let privates = |skip: Option<usize>| -> Vec<Beam> {
        (0..k).filter(|j| Some(*j) != skip).map(Beam::Private).chain(sensing.iter().copied()).collect()
    };
    let mut out = Vec::new();
    match cfg.access {
        Access::Rsma => {
            let total: f64 = c.iter().sum();
            for j in 0..k {
                let mut num = vec![Beam::Common];
                num.extend(privates(None));
                out.push(LinkRatio { user: j, num, den: privates(None), exponent: total });
            }
            for j in 0..k {
                out.push(LinkRatio {
                    user: j,
                    num: privates(None),
                    den: privates(Some(j)),
                    exponent: sc.rate_threshold(j) - c[j],
                });
            }
        }
        Access::Sdma => {
            for j in 0..k {
                out.push(LinkRatio {
                    user: j,
                    num: privates(None),
                    den: privates(Some(j)),
                    exponent: sc.rate_threshold(j),
                });
            }
        }
        Access::Noma => {
            for (pos, &msg) in cfg.sic_order.iter().enumerate() {
                let later: Vec<usize> = cfg.sic_order[pos + 1..].to_vec();
                let mut den: Vec<Beam> = later.iter().map(|&m| Beam::Private(m)).collect();
                den.extend(sensing.iter().copied());
                let mut num = den.clone();
                num.push(Beam::Private(msg));
                for &j in std::iter::once(&msg).chain(&later) {
                    out.push(LinkRatio { user: j, num: num.clone(), den: den.clone(), exponent: sc.rate_threshold(msg) });
                }
            }
        }
    }
    out
}

/// Per-terminal rates of a beamforming state.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// Common-stream rates `R_c,k` (zero without a common stream).
    pub common: Vec<f64>,
    /// Private-stream rates; for NOMA the smallest rate at which the
    /// terminal's message is decoded along the SIC chain.
    pub private: Vec<f64>,
}

impl RateReport {
    /// Rate delivered to each terminal given the common shares.
    pub fn achieved(&self, c: &[f64]) -> Vec<f64> {
        self.private.iter().enumerate().map(|(k, r)| r + c.get(k).copied().unwrap_or(0.0)).collect()
    }
}

pub(crate) fn sum_beams(st: &BeamformingState, beams: &[Beam]) -> CMatrix {
    let n = st.num_antennas();
    let mut q = CMatrix::zeros(n, n);
    for b in beams {
        if let Some(w) = b.get(st) {
            q += w;
        }
    }
    q
}

pub fn evaluate_rates(
    cfg: &AccessConfig,
    sc: &Scenario,
    ch: &ChannelSet,
    phi_r: &CVector,
    st: &BeamformingState,
) -> Result<RateReport> {
    let k = sc.num_gts;
    let noise = sc.noise_gt_watts;
    let w0 = if cfg.with_w0 { st.w_0.as_ref() } else { None };
    let hs: Vec<CVector> = (0..k).map(|j| composite_gt_channel(ch, phi_r, j)).collect::<Result<_>>()?;
    let mut common = vec![0.0; k];
    let mut private = vec![0.0; k];
    match cfg.access {
        Access::Rsma | Access::Sdma => {
            for j in 0..k {
                let mut interf: Vec<&CMatrix> = st.w_p.iter().collect();
                interf.extend(w0);
                if cfg.has_common() {
                    common[j] = covariance_rate(&hs[j], &st.w_c, &interf, noise);
                }
                interf.remove(j);
                private[j] = covariance_rate(&hs[j], &st.w_p[j], &interf, noise);
            }
        }
        Access::Noma => {
            let mut best = vec![f64::INFINITY; k];
            for (pos, &msg) in cfg.sic_order.iter().enumerate() {
                let later = &cfg.sic_order[pos + 1..];
                let mut interf: Vec<&CMatrix> = later.iter().map(|&m| &st.w_p[m]).collect();
                interf.extend(w0);
                for &j in std::iter::once(&msg).chain(later) {
                    let r = covariance_rate(&hs[j], &st.w_p[msg], &interf, noise);
                    best[msg] = best[msg].min(r);
                }
            }
            private = best;
        }
    }
    Ok(RateReport { common, private })
}

/// Common-rate shares meeting every threshold, or `None` when no split
/// exists. Valid `current` shares are kept; otherwise each terminal gets
/// its deficit plus half of an equal share of the spare common rate.
pub fn assign_shares(cfg: &AccessConfig, sc: &Scenario, rates: &RateReport, current: Option<&[f64]>) -> Option<Vec<f64>> {
    let k = sc.num_gts;
    if !cfg.has_common() {
        let ok = (0..k).all(|j| rates.private[j] >= sc.rate_threshold(j) - RATE_TOL);
        return ok.then(|| vec![0.0; k]);
    }
    let cap = rates.common.iter().cloned().fold(f64::INFINITY, f64::min);
    let need: Vec<f64> = (0..k).map(|j| (sc.rate_threshold(j) - rates.private[j]).max(0.0)).collect();
    let total: f64 = need.iter().sum();
    if total > cap {
        return None;
    }
    if let Some(c) = current {
        let ok = c.len() == k
            && c.iter().zip(&need).all(|(ci, ni)| *ci >= 0.0 && *ci >= *ni - RATE_TOL)
            && c.iter().sum::<f64>() <= cap;
        if ok {
            return Some(c.to_vec());
        }
    }
    let spare = (cap - total) / (2.0 * k as f64);
    Some(need.iter().map(|n| n + spare).collect())
}

/// `ω = Tr(A_t) / Tr(B_t + I_N)`.
pub fn update_omega(a_t: &CMatrix, b_t: &CMatrix, n: usize) -> f64 {
    a_t.trace_re() / (b_t.trace_re() + n as f64)
}

/// `τ = min(1, e_max(W)/Tr(W) + δ)`.
pub fn srocr_update(w: &CMatrix, delta: f64) -> Result<f64> {
    let tr = w.trace_re();
    if tr <= 0.0 || !tr.is_finite() {
        return Err(Error::invalid(format!("SROCR update needs a positive trace, got {tr:.3e}")));
    }
    let (lam, _) = hermitian_eig_max(w)?;
    Ok((lam / tr + delta).min(1.0))
}

/// Rank-one tightening parameters of one covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct SrocrTrack {
    pub tau: f64,
    pub delta: f64,
    /// Dominant unit eigenvector of the reference matrix.
    pub u: CVector,
    /// `e_max / Tr` of the reference matrix.
    pub ratio: f64,
    /// `false` for a relaxed (row-free) solve or a vanishing covariance.
    pub active: bool,
}

impl SrocrTrack {
    pub fn inactive(n: usize) -> Self {
        Self { tau: 0.0, delta: 0.0, u: CVector::zeros(n), ratio: 1.0, active: false }
    }

    /// Fresh track with `δ` at the midpoint of `[0, 1 − e_max/Tr]`.
    pub fn start(w: &CMatrix) -> Result<Self> {
        let (lam, u) = hermitian_eig_max(w)?;
        let ratio = (lam / w.trace_re()).min(1.0);
        let delta = (1.0 - ratio) / 2.0;
        Ok(Self { tau: (ratio + delta).min(1.0), delta, u, ratio, active: true })
    }

    /// Moves the reference to `w`, keeping `δ`.
    pub fn advance(&mut self, w: &CMatrix) -> Result<()> {
        let (lam, u) = hermitian_eig_max(w)?;
        self.ratio = (lam / w.trace_re()).min(1.0);
        self.u = u;
        self.tau = srocr_update(w, self.delta)?;
        Ok(())
    }

    /// Updates the track after a successful solve returned `w`. A track is
    /// switched on the first time its covariance is clearly not rank one
    /// and stays on afterwards; vanishing covariances switch it off.
    pub fn follow(&mut self, w: &CMatrix, floor: f64, eps1: f64) -> Result<()> {
        if w.trace_re() <= floor {
            *self = Self::inactive(w.rows());
        } else if self.active {
            self.advance(w)?;
        } else {
            let (lam, u) = hermitian_eig_max(w)?;
            let ratio = (lam / w.trace_re()).min(1.0);
            if ratio < 1.0 - eps1 {
                *self = Self::start(w)?;
            } else {
                self.ratio = ratio;
                self.u = u;
            }
        }
        Ok(())
    }

    pub(crate) fn exact(&self, above: f64) -> bool {
        self.active && self.tau >= above
    }
}

/// SROCR parameters for every covariance, in [`AccessConfig::beams`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct SrocrState {
    pub tracks: Vec<SrocrTrack>,
    /// Rows with `τ` at or above this value are imposed exactly.
    pub exact_above: f64,
}

impl SrocrState {
    /// No rank-one rows at all (plain semidefinite relaxation).
    pub fn relaxed(beams: usize, n: usize) -> Self {
        Self { tracks: vec![SrocrTrack::inactive(n); beams], exact_above: 1.0 - EXACT_RANK_ONE }
    }

    /// Tracks started from the given covariances; vanishing ones stay inactive.
    pub fn start(ws: &[&CMatrix], floor: f64) -> Result<Self> {
        let tracks = ws
            .iter()
            .map(|w| if w.trace_re() <= floor { Ok(SrocrTrack::inactive(w.rows())) } else { SrocrTrack::start(w) })
            .collect::<Result<_>>()?;
        Ok(Self { tracks, exact_above: 1.0 - EXACT_RANK_ONE })
    }

    pub fn max_delta(&self) -> f64 {
        self.tracks.iter().filter(|t| t.active).map(|t| t.delta).fold(0.0, f64::max)
    }
}

/// A covariance in the conic program: a full `N×N` variable, or `t·uuᴴ`
/// through a 1×1 variable when its rank-one row is exact.
#[derive(Clone, Debug)]
struct BeamVar {
    beam: Beam,
    var: usize,
    basis: Option<CVector>,
}

impl BeamVar {
    fn coef(&self, c: &CMatrix) -> CMatrix {
        match &self.basis {
            None => c.clone(),
            Some(u) => CMatrix::from_real_diag(&[c.quad_form(u).re]),
        }
    }

    fn trace_coef(&self, n: usize) -> CMatrix {
        match &self.basis {
            None => CMatrix::identity(n),
            Some(_) => CMatrix::from_real_diag(&[1.0]),
        }
    }

    fn value(&self, x: &CMatrix) -> CMatrix {
        match &self.basis {
            None => x.clone(),
            Some(u) => u.outer(u).scale_real(x[(0, 0)].re.max(0.0)),
        }
    }
}

/// Sum of `Tr(C_j X_j)` terms, merged per variable.
struct Terms {
    psd: Vec<Option<CMatrix>>,
    scalar: Vec<(usize, f64)>,
    constant: f64,
}

impl Terms {
    fn new(vars: usize) -> Self {
        Self { psd: vec![None; vars], scalar: Vec::new(), constant: 0.0 }
    }

    fn add(&mut self, var: usize, c: CMatrix) {
        match &mut self.psd[var] {
            Some(m) => *m += &c,
            slot => *slot = Some(c),
        }
    }

    fn beam(&mut self, bv: &BeamVar, c: &CMatrix, s: f64) {
        self.add(bv.var, bv.coef(c).scale_real(s));
    }

    fn scalar(mut self, i: usize, c: f64) -> Self {
        self.scalar.push((i, c));
        self
    }

    fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    fn build(self) -> LinExpr {
        let mut e = LinExpr::new().constant(self.constant);
        for (j, c) in self.psd.into_iter().enumerate() {
            if let Some(c) = c {
                e = e.psd(j, c);
            }
        }
        for (i, c) in self.scalar {
            e = e.scalar(i, c);
        }
        e
    }
}

/// Variable map of an assembled beamforming program.
#[derive(Clone, Debug)]
pub struct B1Layout {
    beams: Vec<BeamVar>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
    /// Constraint margin of the feasibility phase.
    pub margin: Option<usize>,
}

impl B1Layout {
    /// Reads the beamforming state out of a solution.
    pub fn extract(&self, sol: &conic::ConicSolution, template: &BeamformingState) -> BeamformingState {
        let mut st = template.clone();
        for bv in &self.beams {
            bv.beam.set(&mut st, bv.value(&sol.psd_values[bv.var]));
        }
        let k = st.w_p.len();
        let get = |ix: &[usize]| -> Vec<f64> {
            if ix.is_empty() {
                vec![0.0; k]
            } else {
                ix.iter().map(|&i| sol.scalar_values[i]).collect()
            }
        };
        st.a = get(&self.a);
        st.b = get(&self.b);
        st.c = get(&self.c).into_iter().map(|x| x.max(0.0)).collect();
        st
    }
}

fn check_state(st: &BeamformingState, sc: &Scenario, cfg: &AccessConfig) -> Result<()> {
    let (n, k) = (sc.num_antennas, sc.num_gts);
    let sq = |w: &CMatrix| w.rows() == n && w.cols() == n;
    let ok = sq(&st.w_c)
        && st.w_p.len() == k
        && st.w_p.iter().all(sq)
        && st.c.len() == k
        && st.a.len() == k
        && st.b.len() == k
        && st.w_0.as_ref().is_none_or(sq)
        && (!cfg.with_w0 || st.w_0.is_some());
    if !ok {
        return Err(Error::invalid("beamforming state does not match the scenario dimensions"));
    }
    cfg.check(k)
}

/// Sensing gains `(G_A, G_B)` with `Tr(A_t) = Tr(G_A Q)`, `Tr(B_t) = Tr(G_B Q)`.
fn gains(sc: &Scenario, ch: &ChannelSet, phi_t: &CVector) -> Result<(CMatrix, CMatrix)> {
    sensing_gains(ch, phi_t, &SensingParams::new(sc, ch))
}

/// Sensing SINR of a state through the Dinkelbach ratio.
pub fn state_gamma(sc: &Scenario, ch: &ChannelSet, phi_t: &CVector, st: &BeamformingState) -> Result<f64> {
    let (ga, gb) = gains(sc, ch, phi_t)?;
    let q = st.q();
    Ok(ga.trace_product(&q).re / (gb.trace_product(&q).re + sc.num_antennas as f64))
}

/// Assembles the convex beamforming program around `state`.
///
/// The objective is `ω Tr(B_t + I_N) − Tr(A_t)`. With `feasibility` set,
/// the objective is replaced by a margin `s` that relaxes every threshold
/// row, and minimizing it drives an infeasible start toward feasibility.
#[allow(clippy::too_many_arguments)]
pub fn build_b1_problem(
    state: &BeamformingState,
    srocr: &SrocrState,
    omega: f64,
    ch: &ChannelSet,
    phi_t: &CVector,
    phi_r: &CVector,
    sc: &Scenario,
    cfg: &AccessConfig,
    feasibility: bool,
) -> Result<(ConicProblem, B1Layout)> {
    check_state(state, sc, cfg)?;
    let (n, k) = (sc.num_antennas, sc.num_gts);
    let beams = cfg.beams(k);
    if srocr.tracks.len() != beams.len() {
        return Err(Error::invalid("one SROCR track per covariance is required"));
    }
    let rho = sc.rho();
    let mut p = ConicProblem::new();
    let mut vars = Vec::with_capacity(beams.len());
    for (b, t) in beams.iter().zip(&srocr.tracks) {
        let basis = t.exact(srocr.exact_above).then(|| t.u.clone());
        let dim = if basis.is_some() { 1 } else { n };
        vars.push(BeamVar { beam: *b, var: p.add_psd(b.label(), dim), basis });
    }
    let find = |b: Beam| vars.iter().find(|v| v.beam == b).expect("beam has a variable");

    let hs: Vec<CVector> = (0..k).map(|j| composite_gt_channel(ch, phi_r, j)).collect::<Result<_>>()?;
    let hk: Vec<CMatrix> = hs.iter().map(|h| h.outer(h).scale_real(rho)).collect();
    let t_of = |j: usize, bs: &[Beam]| -> f64 { hk[j].trace_product(&sum_beams(state, bs)).re };

    let mut layout = B1Layout { beams: Vec::new(), a: Vec::new(), b: Vec::new(), c: Vec::new(), margin: None };
    let margin = feasibility.then(|| p.add_scalar("s"));
    layout.margin = margin;

    // Relaxed threshold rows: Σ num − 2^e Σ den ≥ 2^e − 1, scaled by 2^e·D0.
    let add_ratio = |p: &mut ConicProblem, r: &LinkRatio, label: String, psd_count: usize| {
        let g = 2f64.powf(r.exponent);
        let d0 = t_of(r.user, &r.den) + 1.0;
        let scale = 1.0 / (g * d0);
        let mut e = Terms::new(psd_count);
        for b in &r.num {
            e.beam(find(*b), &hk[r.user], scale);
        }
        for b in &r.den {
            e.beam(find(*b), &hk[r.user], -g * scale);
        }
        let mut e = e.constant((1.0 - g) * scale);
        if let Some(s) = margin {
            e = e.scalar(s, 1.0);
        }
        p.add_ge(label, e.build(), 0.0);
    };

    match cfg.access {
        Access::Sdma | Access::Noma => {
            let psd_count = p.psd_vars.len();
            for (i, r) in link_ratios(cfg, sc, &state.c).iter().enumerate() {
                add_ratio(&mut p, r, format!("rate {i} at GT {}", r.user), psd_count);
            }
        }
        Access::Rsma => {
            let all_p: Vec<Beam> = (0..k).map(Beam::Private).collect();
            let w0: Vec<Beam> = if cfg.with_w0 { vec![Beam::Sensing] } else { Vec::new() };
            let q1: Vec<Beam> = beams.clone();
            let q2: Vec<Beam> = all_p.iter().chain(&w0).copied().collect();
            // 2×2 blocks for the log minorants are added after the beams.
            let mut blocks = Vec::new();
            for j in 0..k {
                blocks.push(p.add_psd(format!("Za{j}"), 2));
                blocks.push(p.add_psd(format!("Zb{j}"), 2));
            }
            let psd_count = p.psd_vars.len();
            for j in 0..k {
                layout.a.push(p.add_scalar(format!("a{j}")));
                layout.b.push(p.add_scalar(format!("b{j}")));
                layout.c.push(p.add_scalar(format!("c{j}")));
            }
            let c_prev: f64 = state.c.iter().sum();
            let e11 = CMatrix::from_real_diag(&[1.0, 0.0]);
            let e22 = CMatrix::from_real_diag(&[0.0, 1.0]);
            let mut e12 = CMatrix::zeros(2, 2);
            e12[(0, 1)] = C64::new(0.5, 0.0);
            e12[(1, 0)] = C64::new(0.5, 0.0);
            let mut f12 = CMatrix::zeros(2, 2);
            f12[(0, 1)] = C64::new(0.0, 0.5);
            f12[(1, 0)] = C64::new(0.0, -0.5);
            // ln L ≥ ln L0 + 1 − L0/L  ⇔  [[L/L0, 1], [1, ln L0 + 1 − x ln2]] ⪰ 0.
            let log_block = |p: &mut ConicProblem, z: usize, j: usize, bs: &[Beam], x: usize, tag: &str| {
                let l0 = t_of(j, bs) + 1.0;
                let mut e = Terms::new(psd_count);
                e.add(z, e11.clone());
                for b in bs {
                    e.beam(find(*b), &hk[j], -1.0 / l0);
                }
                p.add_eq(format!("{tag}{j} signal"), e.build(), 1.0 / l0);
                let e = LinExpr::new().psd(z, e22.clone()).scalar(x, LN_2);
                p.add_eq(format!("{tag}{j} log"), e, l0.ln() + 1.0);
                p.add_eq(format!("{tag}{j} re"), LinExpr::new().psd(z, e12.clone()), 1.0);
                p.add_eq(format!("{tag}{j} im"), LinExpr::new().psd(z, f12.clone()), 0.0);
                l0
            };
            for j in 0..k {
                let l1 = log_block(&mut p, blocks[2 * j], j, &q1, layout.a[j], "a");
                let l2 = log_block(&mut p, blocks[2 * j + 1], j, &q2, layout.b[j], "b");
                let a0 = l1.log2();
                let b0 = l2.log2();
                // 2^{a − Σc} ≥ T(Q2) + 1, linearized at (a0, Σc_prev) and divided by its value there.
                let g = 2f64.powf(a0 - c_prev);
                let mut e = Terms::new(psd_count);
                for b in &q2 {
                    e.beam(find(*b), &hk[j], -1.0 / g);
                }
                let mut e = e.scalar(layout.a[j], LN_2).constant(1.0 - 1.0 / g - LN_2 * (a0 - c_prev));
                for &ci in &layout.c {
                    e = e.scalar(ci, -LN_2);
                }
                p.add_ge(format!("common rate {j}"), e.build(), 0.0);
                // 2^{b + c_k − R} ≥ T(Q3) + 1, linearized at (b0, c_k prev).
                let q3: Vec<Beam> = q2.iter().copied().filter(|b| *b != Beam::Private(j)).collect();
                let x0 = b0 + state.c[j] - sc.rate_threshold(j);
                let f = 2f64.powf(x0);
                let mut e = Terms::new(psd_count);
                for b in &q3 {
                    e.beam(find(*b), &hk[j], -1.0 / f);
                }
                let mut e = e
                    .scalar(layout.b[j], LN_2)
                    .scalar(layout.c[j], LN_2)
                    .constant(1.0 - 1.0 / f - LN_2 * (b0 + state.c[j]));
                if let Some(s) = margin {
                    e = e.scalar(s, 1.0);
                }
                p.add_ge(format!("private rate {j}"), e.build(), 0.0);
                p.add_ge(format!("c{j} nonnegative"), LinExpr::new().scalar(layout.c[j], 1.0), 0.0);
            }
        }
    }
    let psd_count = p.psd_vars.len();

    let mut power = Terms::new(psd_count);
    for bv in &vars {
        power.add(bv.var, bv.trace_coef(n));
    }
    p.add_le("power", power.build(), sc.p_max_watts);

    for (bv, t) in vars.iter().zip(&srocr.tracks) {
        if t.active && bv.basis.is_none() {
            let row = &t.u.outer(&t.u) - &CMatrix::identity(n).scale_real(t.tau);
            p.add_ge(format!("rank-one {}", bv.beam.label()), LinExpr::new().psd(bv.var, row), 0.0);
        }
    }

    match margin {
        Some(s) => {
            p.set_objective(LinExpr::new().scalar(s, 1.0));
            p.add_ge("margin floor", LinExpr::new().scalar(s, 1.0), -1.0);
        }
        None => {
            let (ga, gb) = gains(sc, ch, phi_t)?;
            let g = &gb.scale_real(omega) - &ga;
            let mut obj = Terms::new(psd_count);
            for bv in &vars {
                obj.beam(bv, &g, 1.0);
            }
            p.set_objective(obj.constant(omega * n as f64).build());
        }
    }
    layout.beams = vars;
    Ok((p, layout))
}

/// Starting point: maximum-ratio covariances with half the power on the
/// common stream (when present) and the rest split equally.
pub fn initial_state(sc: &Scenario, ch: &ChannelSet, phi_r: &CVector, cfg: &AccessConfig) -> Result<BeamformingState> {
    let (n, k) = (sc.num_antennas, sc.num_gts);
    let hs: Vec<CVector> = (0..k).map(|j| composite_gt_channel(ch, phi_r, j)).collect::<Result<_>>()?;
    let dir = |h: &CVector| -> CVector {
        let nrm = h.norm();
        if nrm > 0.0 {
            h.scale(C64::new(1.0 / nrm, 0.0))
        } else {
            CVector::basis(n, 0)
        }
    };
    let p = sc.p_max_watts;
    let private_share = if cfg.has_common() { p / (2.0 * k as f64) } else { p / k as f64 };
    let w_p: Vec<CMatrix> = hs.iter().map(|h| {
        let u = dir(h);
        u.outer(&u).scale_real(private_share)
    }).collect();
    let w_c = if cfg.has_common() {
        let mut avg = CVector::zeros(n);
        for h in &hs {
            avg = &avg + &dir(h);
        }
        let u = dir(&avg);
        u.outer(&u).scale_real(p / 2.0)
    } else {
        CMatrix::zeros(n, n)
    };
    let mut st = BeamformingState {
        w_c,
        w_p,
        w_0: cfg.with_w0.then(|| CMatrix::zeros(n, n)),
        c: vec![0.0; k],
        a: vec![0.0; k],
        b: vec![0.0; k],
    };
    let rates = evaluate_rates(cfg, sc, ch, phi_r, &st)?;
    if let Some(c) = assign_shares(cfg, sc, &rates, None) {
        st.c = c;
    } else if cfg.has_common() {
        let cap = rates.common.iter().cloned().fold(f64::INFINITY, f64::min);
        st.c = vec![cap / k as f64; k];
    }
    Ok(st)
}

/// Folding of a sensing covariance into the communication
/// covariances: `W̄_c = Ŵ_c + ζ_c Ŵ_0`, `W̄_p,k = Ŵ_p,k + ζ_k Ŵ_0`.
pub fn reconstruct_no_sensing(
    w_c: &CMatrix,
    w_p: &[CMatrix],
    w_0: &CMatrix,
    zeta_c: f64,
    zeta: &[f64],
) -> Result<(CMatrix, Vec<CMatrix>)> {
    if zeta.len() != w_p.len() {
        return Err(Error::invalid("one ζ per private covariance is required"));
    }
    let total = zeta_c + zeta.iter().sum::<f64>();
    if zeta_c < 0.0 || zeta.iter().any(|z| *z < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("ζ weights must be nonnegative and sum to 1, got {total}")));
    }
    let wc = w_c + &w_0.scale_real(zeta_c);
    let wp = w_p.iter().zip(zeta).map(|(w, z)| w + &w_0.scale_real(*z)).collect();
    Ok((wc, wp))
}

/// One row of the iterate trace.
#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub omega: f64,
    /// Solver objective; in the feasibility phase, the optimal margin.
    pub objective: f64,
    pub gamma: f64,
    pub taus: Vec<f64>,
    pub max_delta: f64,
    pub feasible: bool,
    pub phase: &'static str,
}

/// Renders an iterate trace as CSV.
pub fn trace_csv(records: &[IterRecord]) -> String {
    let width = records.iter().map(|r| r.taus.len()).max().unwrap_or(0);
    let mut s = String::from("iter,phase,omega,objective,gamma,max_delta,feasible");
    for i in 0..width {
        let _ = write!(s, ",tau_{i}");
    }
    s.push('\n');
    for r in records {
        let _ = write!(
            s,
            "{},{},{:e},{:e},{:e},{:e},{}",
            r.iter, r.phase, r.omega, r.objective, r.gamma, r.max_delta, r.feasible
        );
        for i in 0..width {
            match r.taus.get(i) {
                Some(t) => {
                    let _ = write!(s, ",{t:e}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct B1Options {
    pub max_iters: usize,
    pub max_feasibility_iters: usize,
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    pub solver: Settings,
    /// Residual and gap bound under which an early-stopped solve is used.
    pub accept_tol: f64,
}

impl B1Options {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            max_iters: 100,
            max_feasibility_iters: 60,
            epsilon_1: sc.epsilon_1,
            epsilon_2: sc.epsilon_2,
            solver: Settings::interior_point(),
            accept_tol: ACCEPT_TOL,
        }
    }
}

#[derive(Clone, Debug)]
pub struct B1Outcome {
    pub state: BeamformingState,
    pub gamma: f64,
    /// Final `τ` per covariance (1 for vanishing ones); empty when the start
    /// point is kept.
    pub taus: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The incoming state was kept because the new one was worse.
    pub kept_start: bool,
    pub trace: Vec<IterRecord>,
}

fn beam_refs<'a>(st: &'a BeamformingState, beams: &[Beam]) -> Vec<&'a CMatrix> {
    beams.iter().map(|b| b.get(st).expect("beam present")).collect()
}

fn is_rank_one(st: &BeamformingState, beams: &[Beam], floor: f64, eps1: f64) -> Result<bool> {
    for w in beam_refs(st, beams) {
        if w.trace_re() > floor {
            let (lam, _) = hermitian_eig_max(w)?;
            if lam / w.trace_re() < 1.0 - eps1 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn clamp_power(st: &mut BeamformingState, p_max: f64) {
    let total = st.total_power();
    if total > p_max {
        st.scale_power(p_max / total);
    }
}

/// Replaces vanishing covariances by their dominant rank-one part.
fn settle_vanishing(st: &mut BeamformingState, beams: &[Beam], floor: f64) -> Result<()> {
    for b in beams {
        let w = b.get(st).expect("beam present").clone();
        if w.trace_re() <= floor && w.fro_norm() > 0.0 {
            let (lam, u) = hermitian_eig_max(&w)?;
            b.set(st, u.outer(&u).scale_real(lam.max(0.0)));
        }
    }
    Ok(())
}

/// Runs the feasibility phase; returns a state meeting every threshold.
fn restore_feasibility(
    start: &BeamformingState,
    sc: &Scenario,
    ch: &ChannelSet,
    surf: (&CVector, &CVector),
    cfg: &AccessConfig,
    opts: &B1Options,
    trace: &mut Vec<IterRecord>,
) -> Result<BeamformingState> {
    let beams = cfg.beams(sc.num_gts);
    let relaxed = SrocrState::relaxed(beams.len(), sc.num_antennas);
    let mut st = start.clone();
    let mut last = f64::INFINITY;
    for it in 0..opts.max_feasibility_iters {
        let (p, layout) = build_b1_problem(&st, &relaxed, 0.0, ch, surf.0, surf.1, sc, cfg, true)?;
        let sol = conic::solve_with(&p, &opts.solver)?;
        let ok = sol.usable(opts.accept_tol);
        trace.push(IterRecord {
            iter: trace.len(),
            omega: 0.0,
            objective: sol.objective,
            gamma: f64::NAN,
            taus: Vec::new(),
            max_delta: 0.0,
            feasible: ok,
            phase: "feasibility",
        });
        if !ok {
            return Err(Error::Stall(format!(
                "feasibility subproblem {it} ended with status {:?}",
                sol.status
            )));
        }
        let mut next = layout.extract(&sol, &st);
        clamp_power(&mut next, sc.p_max_watts);
        let rates = evaluate_rates(cfg, sc, ch, surf.1, &next)?;
        if let Some(c) = assign_shares(cfg, sc, &rates, Some(&next.c)) {
            next.c = c;
            return Ok(next);
        }
        let s = sol.objective;
        if (last - s).abs() <= 1e-9 * (1.0 + s.abs()) || s >= last {
            return Err(Error::Stall(format!("rate thresholds unreachable: best margin {s:.3e}")));
        }
        last = s;
        st = next;
        let fallback = assign_shares(cfg, sc, &rates, None);
        if let Some(c) = fallback {
            st.c = c;
        }
    }
    Err(Error::Stall("feasibility phase hit its iteration cap".into()))
}

/// Alternates Dinkelbach updates of `ω` with convex solves, tightening the
/// rank-one rows until every covariance is rank one and `γ` settles.
///
/// The first solve is the plain relaxation. Infeasible subproblems keep the
/// previous covariances and halve every `δ`. An incoming state that already
/// meets its thresholds is returned unchanged if the result would be worse.
pub fn solve_b1(
    sc: &Scenario,
    ch: &ChannelSet,
    phi_t: &CVector,
    phi_r: &CVector,
    cfg: &AccessConfig,
    start: &BeamformingState,
    opts: &B1Options,
) -> Result<B1Outcome> {
    check_state(start, sc, cfg)?;
    let (n, k) = (sc.num_antennas, sc.num_gts);
    let beams = cfg.beams(k);
    let floor = VANISHING_TRACE * sc.p_max_watts;
    let mut trace = Vec::new();

    let rates = evaluate_rates(cfg, sc, ch, phi_r, start)?;
    let start_shares = assign_shares(cfg, sc, &rates, Some(&start.c));
    let start_ok = start_shares.is_some() && is_rank_one(start, &beams, floor, opts.epsilon_1)?;
    let start_c = start_shares.clone();
    let mut st = match start_shares {
        Some(c) => BeamformingState { c, ..start.clone() },
        None => restore_feasibility(start, sc, ch, (phi_t, phi_r), cfg, opts, &mut trace)?,
    };
    let mut gamma = state_gamma(sc, ch, phi_t, &st)?;
    let mut srocr = SrocrState::relaxed(beams.len(), n);
    srocr.exact_above = 1.0 - opts.epsilon_1;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iters {
        iterations = it + 1;
        let omega = gamma;
        let (p, layout) = build_b1_problem(&st, &srocr, omega, ch, phi_t, phi_r, sc, cfg, false)?;
        let sol = conic::solve_with(&p, &opts.solver)?;
        // A point is taken only if it meets the exact rate constraints.
        let candidate = if sol.usable(opts.accept_tol) {
            let mut next = layout.extract(&sol, &st);
            clamp_power(&mut next, sc.p_max_watts);
            let new_rates = evaluate_rates(cfg, sc, ch, phi_r, &next)?;
            assign_shares(cfg, sc, &new_rates, Some(&next.c)).map(|c| BeamformingState { c, ..next })
        } else {
            None
        };
        let mut record = IterRecord {
            iter: trace.len(),
            omega,
            objective: sol.objective,
            gamma,
            taus: srocr.tracks.iter().map(|t| if t.active { t.tau } else { 1.0 }).collect(),
            max_delta: srocr.max_delta(),
            feasible: candidate.is_some(),
            phase: if it == 0 { "relaxed" } else { "srocr" },
        };
        let Some(next) = candidate else {
            trace.push(record);
            for t in srocr.tracks.iter_mut().filter(|t| t.active) {
                t.delta /= 2.0;
            }
            if srocr.max_delta() < MIN_DELTA {
                // Nothing left to relax: finish with the last feasible point.
                break;
            }
            let refs: Vec<CMatrix> = beam_refs(&st, &beams).into_iter().cloned().collect();
            for (t, w) in srocr.tracks.iter_mut().zip(&refs) {
                if t.active {
                    t.advance(w)?;
                }
            }
            continue;
        };
        let new_gamma = state_gamma(sc, ch, phi_t, &next)?;
        record.gamma = new_gamma;
        trace.push(record);

        for (t, w) in srocr.tracks.iter_mut().zip(beam_refs(&next, &beams)) {
            t.follow(w, floor, opts.epsilon_1)?;
        }
        let rank_one = srocr.tracks.iter().all(|t| t.ratio >= 1.0 - opts.epsilon_1);
        let settled = (new_gamma - gamma).abs() <= opts.epsilon_2 * gamma.abs().max(f64::MIN_POSITIVE);
        st = next;
        gamma = new_gamma;
        if rank_one && settled {
            converged = true;
            break;
        }
    }

    settle_vanishing(&mut st, &beams, floor)?;
    let rates = evaluate_rates(cfg, sc, ch, phi_r, &st)?;
    let shares = assign_shares(cfg, sc, &rates, Some(&st.c));
    let final_ok = shares.is_some() && is_rank_one(&st, &beams, floor, opts.epsilon_1)?;
    if let Some(c) = shares {
        st.c = c;
    }
    gamma = state_gamma(sc, ch, phi_t, &st)?;
    let start_gamma = state_gamma(sc, ch, phi_t, start)?;
    if start_ok && (!final_ok || gamma < start_gamma) {
        return Ok(B1Outcome {
            gamma: start_gamma,
            taus: Vec::new(),
            state: BeamformingState { c: start_c.expect("start meets its thresholds"), ..start.clone() },
            iterations,
            converged,
            kept_start: true,
            trace,
        });
    }
    if !final_ok {
        return Err(Error::Stall("beamforming iterations did not reach a rank-one feasible point".into()));
    }
    let taus = beam_refs(&st, &beams)
        .iter()
        .zip(&srocr.tracks)
        .map(|(w, t)| if w.trace_re() <= floor { Ok(1.0) } else { srocr_update(w, t.delta) })
        .collect::<Result<_>>()?;
    Ok(B1Outcome { state: st, gamma, taus, iterations, converged, kept_start: false, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_examples() {
        let a = CMatrix::identity(2);
        let b = CMatrix::zeros(2, 2);
        assert_eq!(update_omega(&a, &b, 2), 1.0);
        assert_eq!(update_omega(&b, &b, 2), 0.0);
    }

    #[test]
    fn srocr_examples() {
        let u = CVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        assert!((srocr_update(&u.outer(&u), 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((srocr_update(&CMatrix::identity(2), 0.25).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(srocr_update(&CMatrix::from_real_diag(&[3.0, 1.0, 1.0]), 1.0).unwrap(), 1.0);
        assert!(srocr_update(&CMatrix::zeros(2, 2), 0.1).is_err());
    }

    #[test]
    fn reconstruction_special_cases() {
        let wc = CMatrix::from_real_diag(&[1.0, 0.0]);
        let wp = vec![CMatrix::from_real_diag(&[0.0, 2.0])];
        let z = CMatrix::zeros(2, 2);
        let (c, p) = reconstruct_no_sensing(&wc, &wp, &z, 0.3, &[0.7]).unwrap();
        assert_eq!(c, wc);
        assert_eq!(p, wp);
        let w0 = CMatrix::identity(2);
        let (c, p) = reconstruct_no_sensing(&wc, &wp, &w0, 1.0, &[0.0]).unwrap();
        assert_eq!(c, &wc + &w0);
        assert_eq!(p, wp);
        assert!(reconstruct_no_sensing(&wc, &wp, &w0, 0.5, &[0.4]).is_err());
    }

    #[test]
    fn noma_ratios_follow_decoding_order() {
        let sc = Scenario { num_gts: 3, ..Scenario::desk() };
        let cfg = AccessConfig::noma(vec![2, 0, 1]);
        let r = link_ratios(&cfg, &sc, &[0.0; 3]);
        assert_eq!(r.len(), 3 + 2 + 1);
        assert_eq!(r[0].user, 2);
        assert_eq!(r[0].den, vec![Beam::Private(0), Beam::Private(1)]);
        assert_eq!(r[1].user, 0);
        assert_eq!(r[5].den, Vec::<Beam>::new());
    }
}

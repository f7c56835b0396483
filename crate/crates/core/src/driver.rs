//! Alternating optimization of beamforming and surface, the benchmark
//! schemes and the final constraint audit.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::{
    evaluate_rates, initial_state, solve_b1, state_gamma, AccessConfig, B1Options, IterRecord, RateReport,
};
use crate::error::{Error, Result};
use crate::model::{composite_gt_channel, StarRisState};
use crate::numerics::{rank_one_residual, CVector};
use crate::scenario::{gen_channels, scheme_rng, steering_vector, ChannelSet, Scenario};
use crate::starris::{solve_b2, B2Options, SurfaceLayout};

/// Audit tolerances.
pub const COMMON_RATE_SLACK: f64 = 1e-6;
pub const THRESHOLD_SLACK: f64 = 1e-6;
pub const POWER_SLACK: f64 = 1e-8;
pub const PAIRING_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Rate splitting with a dedicated sensing covariance.
    StarRsma,
    /// Rate splitting, sensing served by the communication beams only.
    StarRsmaNoSensing,
    StarNoma,
    StarSdma,
    /// Separate transmitting and reflecting halves with unit amplitudes.
    TraditionalRisRsma,
    /// Surface drawn at random once and held fixed.
    RandomRisRsma,
    /// No surface.
    NoRisRsma,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::StarRsma,
        Scheme::StarRsmaNoSensing,
        Scheme::StarNoma,
        Scheme::StarSdma,
        Scheme::TraditionalRisRsma,
        Scheme::RandomRisRsma,
        Scheme::NoRisRsma,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::StarRsma => "star_rsma",
            Scheme::StarRsmaNoSensing => "star_rsma_no_sensing",
            Scheme::StarNoma => "star_noma",
            Scheme::StarSdma => "star_sdma",
            Scheme::TraditionalRisRsma => "traditional_ris_rsma",
            Scheme::RandomRisRsma => "random_ris_rsma",
            Scheme::NoRisRsma => "no_ris_rsma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown scheme '{s}'")))
    }
}

/// How the surface is treated by a scheme.
#[derive(Clone, Debug, PartialEq)]
pub enum SurfacePolicy {
    Optimized(SurfaceLayout),
    /// Held at the initial coefficients.
    Fixed,
}

/// Scheme-specific constraints of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub access: AccessConfig,
    pub surface: SurfacePolicy,
    pub initial_surface: StarRisState,
}

/// Phases aligning each cascaded path with the direct one: toward the
/// target on the transmission side, summed over terminals on the reflection
/// side.
pub fn aligned_phases(sc: &Scenario, ch: &ChannelSet) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (sc.num_antennas, sc.num_elements);
    let a0 = steering_vector(ch.theta_target, n);
    let direct = a0.dot(&ch.h_bt).arg();
    let col = |j: usize| ch.h_br.column(j);
    let theta_t = (0..m)
        .map(|j| direct - a0.dot(&col(j).scale(ch.h_rt[j])).arg())
        .collect();
    let theta_r = (0..m)
        .map(|j| {
            let s = (0..sc.num_gts).fold(crate::numerics::ZERO, |acc, k| acc + col(j).scale(ch.h_rk[k][j]).dot(&ch.h_bk[k]));
            s.arg()
        })
        .collect();
    (theta_t, theta_r)
}

/// Coefficients of the random benchmark: per element `β_t ~ U[0,1]`, then
/// the transmission phase, then the reflection phase, all uniform.
pub fn random_surface(sc: &Scenario) -> StarRisState {
    let mut rng = scheme_rng(sc.seed);
    let m = sc.num_elements;
    let tau = 2.0 * std::f64::consts::PI;
    let (mut bt, mut tt, mut br, mut tr) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..m {
        let b: f64 = rng.random_range(0.0..=1.0);
        bt.push(b);
        br.push(1.0 - b);
        tt.push(rng.random_range(0.0..tau));
        tr.push(rng.random_range(0.0..tau));
    }
    StarRisState::from_amplitude_phase(&bt, &tt, &br, &tr)
}

/// SIC order for NOMA: weakest composite channel decoded first.
pub fn noma_order(sc: &Scenario, ch: &ChannelSet, phi_r: &CVector) -> Result<Vec<usize>> {
    let gains: Vec<f64> = (0..sc.num_gts)
        .map(|k| composite_gt_channel(ch, phi_r, k).map(|h| h.norm_sqr()))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..sc.num_gts).collect();
    order.sort_by(|a, b| gains[*a].total_cmp(&gains[*b]).then(a.cmp(b)));
    Ok(order)
}

/// Constraints and starting surface of `scheme`.
pub fn apply_scheme(scheme: Scheme, sc: &Scenario, ch: &ChannelSet) -> Result<SchemeConfig> {
    let m = sc.num_elements;
    let (tt, tr) = aligned_phases(sc, ch);
    let star = || StarRisState::from_amplitude_phase(&vec![0.5; m], &tt, &vec![0.5; m], &tr);
    let (access, surface, initial_surface) = match scheme {
        Scheme::StarRsma => (AccessConfig::rsma(true), SurfacePolicy::Optimized(SurfaceLayout::star(m)), star()),
        Scheme::StarRsmaNoSensing => (AccessConfig::rsma(false), SurfacePolicy::Optimized(SurfaceLayout::star(m)), star()),
        Scheme::StarSdma => (AccessConfig::sdma(), SurfacePolicy::Optimized(SurfaceLayout::star(m)), star()),
        Scheme::StarNoma => {
            let s = star();
            (AccessConfig::noma(noma_order(sc, ch, &s.phi_r)?), SurfacePolicy::Optimized(SurfaceLayout::star(m)), s)
        }
        Scheme::TraditionalRisRsma => {
            let layout = SurfaceLayout::split(m)?;
            let bt: Vec<f64> = (0..m).map(|j| if j < m / 2 { 1.0 } else { 0.0 }).collect();
            let br: Vec<f64> = bt.iter().map(|b| 1.0 - b).collect();
            let s = StarRisState::from_amplitude_phase(&bt, &tt, &br, &tr);
            (AccessConfig::rsma(false), SurfacePolicy::Optimized(layout), s)
        }
        Scheme::RandomRisRsma => (AccessConfig::rsma(false), SurfacePolicy::Fixed, random_surface(sc)),
        Scheme::NoRisRsma => (AccessConfig::rsma(false), SurfacePolicy::Fixed, StarRisState::zero(m)),
    };
    Ok(SchemeConfig { scheme, access, surface, initial_surface })
}

#[derive(Clone, Debug)]
pub struct DriverOptions {
    pub max_outer: usize,
    pub epsilon: f64,
    pub b1: B1Options,
    pub b2: B2Options,
}

impl DriverOptions {
    pub fn from_scenario(sc: &Scenario) -> Self {
        Self {
            max_outer: 100,
            epsilon: sc.epsilon_outer,
            b1: B1Options::from_scenario(sc),
            b2: B2Options::from_scenario(sc),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Relative change of `ω` fell below the tolerance.
    Converged,
    IterationCap,
    /// A subproblem stalled after a feasible point was found; the best
    /// point so far is reported.
    Degraded,
    /// No point meeting the rate thresholds was found.
    Infeasible,
}

/// Per-terminal rates of the final point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtRates {
    pub c: f64,
    pub common: f64,
    pub private: f64,
}

/// Direct re-evaluation of every constraint at a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// `Σc_k − min_k R_c,k`.
    pub common_excess: f64,
    /// `max_k R_th,k − (c_k + R_p,k)`.
    pub threshold_deficit: f64,
    /// Total power over `P_max`.
    pub power_ratio: f64,
    /// Largest `|β^t + β^r − 1|` on paired surfaces, largest deviation from
    /// the prescribed amplitudes otherwise.
    pub amplitude_error: f64,
    /// Largest negative share.
    pub negative_share: f64,
    /// Largest `‖W − e_max uuᴴ‖_F / ‖W‖_F` over nonzero covariances.
    pub rank_residual: f64,
}

impl Audit {
    pub fn passed(&self) -> bool {
        self.common_excess <= COMMON_RATE_SLACK
            && self.threshold_deficit <= THRESHOLD_SLACK
            && self.power_ratio <= 1.0 + POWER_SLACK
            && self.amplitude_error <= PAIRING_SLACK
            && self.negative_share <= 0.0
    }
}

/// Re-evaluates the rate, power and surface constraints directly.
pub fn audit(
    sc: &Scenario,
    ch: &ChannelSet,
    cfg: &SchemeConfig,
    st: &crate::model::BeamformingState,
    surface: &StarRisState,
) -> Result<(Audit, RateReport)> {
    let rates = evaluate_rates(&cfg.access, sc, ch, &surface.phi_r, st)?;
    let k = sc.num_gts;
    let min_common = rates.common.iter().cloned().fold(f64::INFINITY, f64::min);
    let common_excess = if cfg.access.has_common() { st.c.iter().sum::<f64>() - min_common } else { 0.0 };
    let achieved = rates.achieved(&st.c);
    let threshold_deficit = (0..k).map(|j| sc.rate_threshold(j) - achieved[j]).fold(f64::NEG_INFINITY, f64::max);
    let amplitude_error = match &cfg.surface {
        SurfacePolicy::Optimized(l) if !l.paired => {
            let bt = surface.beta_t();
            let br = surface.beta_r();
            (0..sc.num_elements).fold(0.0f64, |e, j| {
                let want_t = if l.t_elems.contains(&j) { 1.0 } else { 0.0 };
                let want_r = if l.r_elems.contains(&j) { 1.0 } else { 0.0 };
                e.max((bt[j] - want_t).abs()).max((br[j] - want_r).abs())
            })
        }
        _ if cfg.scheme == Scheme::NoRisRsma => surface.phi_t.max_abs().max(surface.phi_r.max_abs()),
        _ => surface.pairing_error(),
    };
    let mut rank_residual = 0.0f64;
    let ws = std::iter::once(&st.w_c).chain(&st.w_p).chain(st.w_0.as_ref());
    for w in ws {
        if w.fro_norm() > 0.0 {
            rank_residual = rank_residual.max(rank_one_residual(w)?);
        }
    }
    let negative_share = st.c.iter().fold(0.0f64, |m, c| m.max(-c));
    let a = Audit {
        common_excess,
        threshold_deficit,
        power_ratio: st.total_power() / sc.p_max_watts,
        amplitude_error,
        negative_share,
        rank_residual,
    };
    Ok((a, rates))
}

/// Output of one optimization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: Scheme,
    pub seed: u64,
    pub status: RunStatus,
    /// Sensing SINR at the starting point (may violate the thresholds).
    pub initial_gamma: f64,
    /// `ω` after each outer iteration.
    pub omega_trace: Vec<f64>,
    pub gamma: f64,
    pub outer_iters: usize,
    pub rates: Vec<GtRates>,
    pub trace_w0: f64,
    pub beta_t: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub beta_r: Vec<f64>,
    pub theta_r: Vec<f64>,
    /// Final `τ` of every covariance in the beamforming solve behind the
    /// returned covariances; empty while the initial point stands.
    pub beam_taus: Vec<f64>,
    /// `(τ_t, τ_r)`, `e_max/Tr` and rank-one residual of the lifted solution
    /// behind the returned surface; `None` while the initial surface stands.
    pub surface_taus: Option<[f64; 2]>,
    pub surface_ratios: Option<[f64; 2]>,
    pub surface_residuals: Option<[f64; 2]>,
    pub audit: Audit,
    pub beamforming: crate::model::BeamformingState,
    pub surface: StarRisState,
    /// Inner iterate records of every subproblem, in order.
    #[serde(skip)]
    pub inner_trace: Vec<(usize, &'static str, IterRecord)>,
    pub messages: Vec<String>,
    pub wall_ms: f64,
}

impl RunResult {
    /// A run is feasible when it produced a point that passes the audit.
    pub fn feasible(&self) -> bool {
        self.status != RunStatus::Infeasible && self.audit.passed()
    }

    pub fn gamma_db(&self) -> f64 {
        10.0 * self.gamma.log10()
    }

    pub fn sum_c(&self) -> f64 {
        self.rates.iter().map(|r| r.c).sum()
    }

    /// Rate delivered to each terminal.
    pub fn achieved_rates(&self) -> Vec<f64> {
        self.rates.iter().map(|r| r.c + r.private).collect()
    }
}

/// Generates the channels of `sc` and runs `scheme` with default options.
pub fn optimize(sc: &Scenario, scheme: Scheme) -> Result<RunResult> {
    sc.validate()?;
    let ch = gen_channels(sc)?;
    optimize_with(sc, &ch, scheme, &DriverOptions::from_scenario(sc))
}

/// Alternates beamforming and surface solves until the relative change of
/// `ω` is at most `opts.epsilon` or `opts.max_outer` iterations have run.
pub fn optimize_with(sc: &Scenario, ch: &ChannelSet, scheme: Scheme, opts: &DriverOptions) -> Result<RunResult> {
    let clock = Instant::now();
    let cfg = apply_scheme(scheme, sc, ch)?;
    let mut surface = cfg.initial_surface.clone();
    let mut st = initial_state(sc, ch, &surface.phi_r, &cfg.access)?;
    let initial_gamma = state_gamma(sc, ch, &surface.phi_t, &st)?;
    let mut omega_trace = Vec::new();
    let mut inner_trace = Vec::new();
    let mut messages = Vec::new();
    let mut status = RunStatus::IterationCap;
    let mut beam_taus = Vec::new();
    let mut surface_taus = None;
    let mut surface_ratios = None;
    let mut surface_residuals = None;
    let mut feasible_found = false;
    let mut prev = initial_gamma;

    for outer in 0..opts.max_outer {
        let b1 = match solve_b1(sc, ch, &surface.phi_t, &surface.phi_r, &cfg.access, &st, &opts.b1) {
            Ok(b) => b,
            Err(e @ (Error::Stall(_) | Error::Numerical(_))) => {
                log::warn!("{scheme} seed {}: outer {outer}: beamforming: {e}", sc.seed);
                messages.push(format!("outer {outer}: beamforming: {e}"));
                status = if feasible_found { RunStatus::Degraded } else { RunStatus::Infeasible };
                break;
            }
            Err(e) => return Err(e),
        };
        inner_trace.extend(b1.trace.into_iter().map(|r| (outer, "beamforming", r)));
        st = b1.state;
        if !b1.kept_start {
            beam_taus = b1.taus;
        }
        feasible_found = true;
        if let SurfacePolicy::Optimized(layout) = &cfg.surface {
            match solve_b2(sc, ch, &cfg.access, layout, &st, &surface, &opts.b2) {
                Ok(b2) => {
                    inner_trace.extend(b2.trace.into_iter().map(|r| (outer, "surface", r)));
                    if !b2.kept_start {
                        surface = b2.surface;
                        st.c = b2.c;
                        surface_taus = Some(b2.taus);
                        surface_ratios = Some(b2.ratios);
                        surface_residuals = Some(b2.residuals);
                    }
                }
                Err(e @ (Error::Stall(_) | Error::Extraction(_) | Error::Numerical(_))) => {
                    log::debug!("{scheme} seed {}: outer {outer}: surface kept: {e}", sc.seed);
                    messages.push(format!("outer {outer}: surface kept: {e}"));
                }
                Err(e) => return Err(e),
            }
        }
        let omega = state_gamma(sc, ch, &surface.phi_t, &st)?;
        log::debug!("{scheme} seed {}: outer {outer} omega {omega:.9e}", sc.seed);
        omega_trace.push(omega);
        let change = (omega - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        prev = omega;
        if change <= opts.epsilon {
            status = RunStatus::Converged;
            break;
        }
    }

    let (audit, rates) = audit(sc, ch, &cfg, &st, &surface)?;
    let gamma = state_gamma(sc, ch, &surface.phi_t, &st)?;
    let rates = (0..sc.num_gts)
        .map(|k| GtRates { c: st.c[k], common: rates.common[k], private: rates.private[k] })
        .collect();
    Ok(RunResult {
        scheme,
        seed: sc.seed,
        status,
        initial_gamma,
        outer_iters: omega_trace.len(),
        omega_trace,
        gamma,
        rates,
        trace_w0: st.trace_w0(),
        beta_t: surface.beta_t(),
        theta_t: surface.theta_t(),
        beta_r: surface.beta_r(),
        theta_r: surface.theta_r(),
        beam_taus,
        surface_taus,
        surface_ratios,
        surface_residuals,
        audit,
        beamforming: st,
        surface,
        inner_trace,
        messages,
        wall_ms: clock.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("star".parse::<Scheme>().is_err());
        assert_eq!("Star-RSMA".parse::<Scheme>().unwrap(), Scheme::StarRsma);
    }

    #[test]
    fn odd_split_surface_is_rejected() {
        let sc = Scenario { num_elements: 7, ..Scenario::desk() };
        let ch = gen_channels(&sc).unwrap();
        assert!(apply_scheme(Scheme::TraditionalRisRsma, &sc, &ch).is_err());
    }
}

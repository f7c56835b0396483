//! Scene geometry, path loss, steering vectors and seeded Rician channels.
//!
//! Channels are drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Every link uses its own stream (`set_stream`), and
//! surface-side entries are drawn element by element, so a scenario with
//! more surface elements extends the channels of a smaller one instead of
//! redrawing them.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, C64};

/// Stream identifiers for the per-link random generators.
pub mod streams {
    pub const BS_GT: u64 = 0x100;
    pub const RIS_GT: u64 = 0x200;
    pub const BS_RIS: u64 = 0x300;
    pub const BS_TARGET: u64 = 0x400;
    pub const RIS_TARGET: u64 = 0x500;
    pub const BS_SCATTERER: u64 = 0x600;
    pub const RIS_SCATTERER: u64 = 0x700;
    pub const RANDOM_SURFACE: u64 = 0x800;
}

/// Simulation parameters. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// BS antennas N.
    pub num_antennas: usize,
    /// STAR-RIS elements M.
    pub num_elements: usize,
    /// Ground terminals K.
    pub num_gts: usize,
    /// Clutter scatterers I.
    pub num_scatterers: usize,
    pub p_max_watts: f64,
    pub noise_gt_watts: f64,
    pub noise_sensing_watts: f64,
    /// Per-terminal rate thresholds in bit/s/Hz; a single value applies to all.
    pub rate_thresholds: Vec<f64>,
    pub ref_gain_db: f64,
    pub pl_exp_bs_gt: f64,
    pub pl_exp_bs_target: f64,
    pub pl_exp_ris: f64,
    /// Rician factor in dB; `inf` gives pure line-of-sight channels.
    pub rician_db: f64,
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub target_position: [f64; 3],
    /// Terminal positions; defaults to a circle of radius 20 m whose center
    /// is 40 m from the BS on the reflection side of the surface.
    pub gt_positions: Option<Vec<[f64; 3]>>,
    /// Scatterer positions; defaults to points 10 m from the target.
    pub scatterer_positions: Option<Vec<[f64; 3]>>,
    /// Scatterer angles relative to the target angle, in degrees; defaults to
    /// ±30°, ±60°, ...
    pub scatterer_angle_offsets_deg: Option<Vec<f64>>,
    /// Unit axis of the BS uniform linear array.
    pub bs_array_axis: [f64; 3],
    /// Unit axis of the surface, modelled as a linear array.
    pub ris_array_axis: [f64; 3],
    /// Complex target reflection factor as `[re, im]`.
    pub target_rcs: [f64; 2],
    /// Complex scatterer reflection factor as `[re, im]`.
    pub scatterer_rcs: [f64; 2],
    pub seed: u64,
    pub epsilon_1: f64,
    pub epsilon_2: f64,
    pub epsilon_outer: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::desk()
    }
}

impl Scenario {
    /// Small default instance: N=4, M=8, K=2, I=2, 1 W, 2 bit/s/Hz.
    pub fn desk() -> Self {
        Self {
            num_antennas: 4,
            num_elements: 8,
            num_gts: 2,
            num_scatterers: 2,
            p_max_watts: 1.0,
            noise_gt_watts: 1e-10,
            noise_sensing_watts: 1e-12,
            rate_thresholds: vec![2.0],
            ref_gain_db: -15.0,
            pl_exp_bs_gt: 2.7,
            pl_exp_bs_target: 2.6,
            pl_exp_ris: 2.8,
            rician_db: 6.0,
            bs_position: [0.0, 0.0, 0.0],
            ris_position: [10.0, 90.0, 10.0],
            target_position: [89.0, 36.0, 0.0],
            gt_positions: None,
            scatterer_positions: None,
            scatterer_angle_offsets_deg: None,
            bs_array_axis: [0.0, 1.0, 0.0],
            ris_array_axis: [0.0, 1.0, 0.0],
            target_rcs: [1.0, 0.0],
            scatterer_rcs: [1.0, 0.0],
            seed: 1,
            epsilon_1: 1e-5,
            epsilon_2: 1e-5,
            epsilon_outer: 1e-5,
        }
    }

    /// The full-size parameter table: N=6, M=64, K=4, 10 W, 5 bit/s/Hz.
    pub fn full_size() -> Self {
        Self {
            num_antennas: 6,
            num_elements: 64,
            num_gts: 4,
            p_max_watts: 10.0,
            rate_thresholds: vec![5.0],
            ..Self::desk()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Rate threshold of terminal `k`.
    pub fn rate_threshold(&self, k: usize) -> f64 {
        if self.rate_thresholds.len() == 1 {
            self.rate_thresholds[0]
        } else {
            self.rate_thresholds[k]
        }
    }

    /// Sets the same threshold for every terminal.
    pub fn set_rate_threshold(&mut self, r: f64) {
        self.rate_thresholds = vec![r];
    }

    pub fn rho(&self) -> f64 {
        1.0 / self.noise_gt_watts
    }

    pub fn gamma_sensing(&self) -> f64 {
        1.0 / self.noise_sensing_watts
    }

    pub fn target_rcs(&self) -> C64 {
        C64::new(self.target_rcs[0], self.target_rcs[1])
    }

    pub fn scatterer_rcs(&self) -> C64 {
        C64::new(self.scatterer_rcs[0], self.scatterer_rcs[1])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.num_antennas == 0 || self.num_gts == 0 {
            return bad("num_antennas and num_gts must be at least 1".into());
        }
        if !(self.p_max_watts > 0.0) || !self.p_max_watts.is_finite() {
            return bad(format!("p_max_watts must be positive, got {}", self.p_max_watts));
        }
        if !(self.noise_gt_watts > 0.0) || !(self.noise_sensing_watts > 0.0) {
            return bad("noise powers must be positive".into());
        }
        for (name, a) in [
            ("pl_exp_bs_gt", self.pl_exp_bs_gt),
            ("pl_exp_bs_target", self.pl_exp_bs_target),
            ("pl_exp_ris", self.pl_exp_ris),
        ] {
            if !(a > 0.0) {
                return bad(format!("{name} must be positive, got {a}"));
            }
        }
        if self.rate_thresholds.is_empty()
            || (self.rate_thresholds.len() != 1 && self.rate_thresholds.len() != self.num_gts)
        {
            return bad(format!(
                "rate_thresholds must hold 1 or {} values, got {}",
                self.num_gts,
                self.rate_thresholds.len()
            ));
        }
        if self.rate_thresholds.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return bad("rate thresholds must be finite and nonnegative".into());
        }
        if let Some(p) = &self.gt_positions {
            if p.len() != self.num_gts {
                return bad(format!("gt_positions holds {} entries, expected {}", p.len(), self.num_gts));
            }
        }
        if let Some(p) = &self.scatterer_positions {
            if p.len() != self.num_scatterers {
                return bad(format!(
                    "scatterer_positions holds {} entries, expected {}",
                    p.len(),
                    self.num_scatterers
                ));
            }
        }
        if let Some(o) = &self.scatterer_angle_offsets_deg {
            if o.len() != self.num_scatterers {
                return bad(format!(
                    "scatterer_angle_offsets_deg holds {} entries, expected {}",
                    o.len(),
                    self.num_scatterers
                ));
            }
        }
        let offsets = self.scatterer_offsets_deg();
        if offsets.iter().any(|o| o.rem_euclid(360.0).abs() < 1e-12) {
            return bad("scatterer angles must differ from the target angle".into());
        }
        for (name, ax) in [("bs_array_axis", self.bs_array_axis), ("ris_array_axis", self.ris_array_axis)] {
            if norm3(ax) < 1e-12 {
                return bad(format!("{name} must be nonzero"));
            }
        }
        for e in [self.epsilon_1, self.epsilon_2, self.epsilon_outer] {
            if !(e > 0.0) {
                return bad("convergence accuracies must be positive".into());
            }
        }
        if self.rician_db.is_nan() {
            return bad("rician_db must not be NaN".into());
        }
        Ok(())
    }

    /// Terminal positions, explicit or default.
    pub fn gt_positions(&self) -> Vec<[f64; 3]> {
        if let Some(p) = &self.gt_positions {
            return p.clone();
        }
        let center_dir = 120f64.to_radians();
        let center = [
            self.bs_position[0] + 40.0 * center_dir.cos(),
            self.bs_position[1] + 40.0 * center_dir.sin(),
            self.bs_position[2],
        ];
        (0..self.num_gts)
            .map(|k| {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / self.num_gts as f64;
                [center[0] + 20.0 * phi.cos(), center[1] + 20.0 * phi.sin(), center[2]]
            })
            .collect()
    }

    fn scatterer_offsets_deg(&self) -> Vec<f64> {
        if let Some(o) = &self.scatterer_angle_offsets_deg {
            return o.clone();
        }
        (0..self.num_scatterers)
            .map(|i| {
                let mag = 30.0 * (1 + i / 2) as f64;
                if i % 2 == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect()
    }

    /// Target angle seen from the BS array.
    pub fn target_angle(&self) -> f64 {
        array_angle(self.bs_position, self.target_position, self.bs_array_axis)
    }

    /// Scatterer angles seen from the BS array.
    pub fn scatterer_angles(&self) -> Vec<f64> {
        let t0 = self.target_angle();
        self.scatterer_offsets_deg().iter().map(|o| t0 + o.to_radians()).collect()
    }

    /// Scatterer positions, explicit or default (10 m from the target, on the
    /// side matching the sign of the angular offset).
    pub fn scatterer_positions(&self) -> Vec<[f64; 3]> {
        if let Some(p) = &self.scatterer_positions {
            return p.clone();
        }
        let d = sub3(self.target_position, self.bs_position);
        let horiz = norm3([d[0], d[1], 0.0]).max(1e-12);
        let perp = [-d[1] / horiz, d[0] / horiz, 0.0];
        self.scatterer_offsets_deg()
            .iter()
            .map(|o| {
                let s = 10.0 * o.signum();
                [
                    self.target_position[0] + s * perp[0],
                    self.target_position[1] + s * perp[1],
                    self.target_position[2],
                ]
            })
            .collect()
    }
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(sub3(a, b))
}

/// Angle from broadside of an array with axis `axis` located at `from`
/// towards the point `to`.
pub fn array_angle(from: [f64; 3], to: [f64; 3], axis: [f64; 3]) -> f64 {
    let d = sub3(to, from);
    let nd = norm3(d);
    let na = norm3(axis);
    if nd == 0.0 || na == 0.0 {
        return 0.0;
    }
    let s = (d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2]) / (nd * na);
    s.clamp(-1.0, 1.0).asin()
}

/// Half-wavelength ULA response `[1, e^{jπ sinθ}, ..., e^{jπ(N-1) sinθ}]`.
pub fn steering_vector(theta: f64, n: usize) -> CVector {
    let s = std::f64::consts::PI * theta.sin();
    CVector::from_fn(n, |i| C64::from_polar(1.0, s * i as f64))
}

/// Point-target response `β a(θ) a(θ)ᴴ`.
pub fn response_matrix(theta: f64, beta: C64, n: usize) -> CMatrix {
    let a = steering_vector(theta, n);
    a.outer(&a).scale(beta)
}

/// Large-scale gain `10^{ι0/10} / d^α`.
pub fn path_loss(d: f64, alpha: f64, ref_gain_db: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::invalid(format!("path_loss: distance must be positive, got {d}")));
    }
    Ok(10f64.powf(ref_gain_db / 10.0) / d.powf(alpha))
}

/// All channels of one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// BS → terminal k, length N.
    pub h_bk: Vec<CVector>,
    /// Surface → terminal k, length M.
    pub h_rk: Vec<CVector>,
    /// Surface → BS cascade matrix, N×M.
    pub h_br: CMatrix,
    /// BS → target, length N.
    pub h_bt: CVector,
    /// Surface → target, length M.
    pub h_rt: CVector,
    /// BS → scatterer i, length N.
    pub h_bi: Vec<CVector>,
    /// Surface → scatterer i, length M.
    pub h_ri: Vec<CVector>,
    /// Target angle θ0 seen from the BS.
    pub theta_target: f64,
    /// Scatterer angles θ_i seen from the BS.
    pub theta_scatterers: Vec<f64>,
}

impl ChannelSet {
    pub fn num_antennas(&self) -> usize {
        self.h_bt.len()
    }

    pub fn num_elements(&self) -> usize {
        self.h_rt.len()
    }

    pub fn num_gts(&self) -> usize {
        self.h_bk.len()
    }

    pub fn num_scatterers(&self) -> usize {
        self.h_bi.len()
    }
}

struct Link {
    rng: ChaCha8Rng,
    amp: f64,
    los: f64,
    nlos: f64,
}

impl Link {
    fn new(seed: u64, stream: u64, beta: f64, kappa: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let (los, nlos) = if kappa.is_infinite() {
            (1.0, 0.0)
        } else {
            ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
        };
        Self {
            rng,
            amp: beta.sqrt(),
            los,
            nlos,
        }
    }

    fn draw(&mut self, los_entry: C64) -> C64 {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        let g = C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        (los_entry * self.los + g * self.nlos) * self.amp
    }

    fn vector(&mut self, los: &CVector) -> CVector {
        CVector::from_fn(los.len(), |i| self.draw(los[i]))
    }
}

/// Draws every channel of the scenario from its seed.
pub fn gen_channels(s: &Scenario) -> Result<ChannelSet> {
    s.validate()?;
    let (n, m) = (s.num_antennas, s.num_elements);
    let kappa = 10f64.powf(s.rician_db / 10.0);
    let bs = s.bs_position;
    let ris = s.ris_position;
    let pl = |a: [f64; 3], b: [f64; 3], alpha: f64| path_loss(dist(a, b), alpha, s.ref_gain_db);
    let bs_to = |p: [f64; 3]| steering_vector(array_angle(bs, p, s.bs_array_axis), n);
    let ris_to = |p: [f64; 3]| steering_vector(array_angle(ris, p, s.ris_array_axis), m);

    let gts = s.gt_positions();
    let mut h_bk = Vec::with_capacity(s.num_gts);
    let mut h_rk = Vec::with_capacity(s.num_gts);
    for (k, &p) in gts.iter().enumerate() {
        let mut l = Link::new(s.seed, streams::BS_GT + k as u64, pl(bs, p, s.pl_exp_bs_gt)?, kappa);
        h_bk.push(l.vector(&bs_to(p)));
        let mut l = Link::new(s.seed, streams::RIS_GT + k as u64, pl(ris, p, s.pl_exp_ris)?, kappa);
        h_rk.push(l.vector(&ris_to(p)));
    }

    // Column-major draw so that element m's column does not depend on M.
    let a_bs = bs_to(ris);
    let a_ris = ris_to(bs);
    let mut l = Link::new(s.seed, streams::BS_RIS, pl(bs, ris, s.pl_exp_ris)?, kappa);
    let mut h_br = CMatrix::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            h_br[(i, j)] = l.draw(a_bs[i] * a_ris[j].conj());
        }
    }

    let t = s.target_position;
    let mut l = Link::new(s.seed, streams::BS_TARGET, pl(bs, t, s.pl_exp_bs_target)?, kappa);
    let h_bt = l.vector(&bs_to(t));
    let mut l = Link::new(s.seed, streams::RIS_TARGET, pl(ris, t, s.pl_exp_ris)?, kappa);
    let h_rt = l.vector(&ris_to(t));

    let mut h_bi = Vec::with_capacity(s.num_scatterers);
    let mut h_ri = Vec::with_capacity(s.num_scatterers);
    for (i, &p) in s.scatterer_positions().iter().enumerate() {
        let mut l = Link::new(s.seed, streams::BS_SCATTERER + i as u64, pl(bs, p, s.pl_exp_bs_target)?, kappa);
        h_bi.push(l.vector(&bs_to(p)));
        let mut l = Link::new(s.seed, streams::RIS_SCATTERER + i as u64, pl(ris, p, s.pl_exp_ris)?, kappa);
        h_ri.push(l.vector(&ris_to(p)));
    }

    Ok(ChannelSet {
        h_bk,
        h_rk,
        h_br,
        h_bt,
        h_rt,
        h_bi,
        h_ri,
        theta_target: s.target_angle(),
        theta_scatterers: s.scatterer_angles(),
    })
}

/// Random generator for scheme-level draws (e.g. random surface settings).
pub fn scheme_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(streams::RANDOM_SURFACE);
    rng
}

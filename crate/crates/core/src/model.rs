//! Composite channels, rates, sensing SINR and the lifted helper matrices.
//!
//! Surface coefficients are stored as the diagonals of `Φ_t` and `Φ_r`.
//! The lifted vectors append a trailing one, `ν = [φ_1, ..., φ_M, 1]`, so
//! that `h = [H_br diag(h_r), h_b] ν`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, C64, ONE};
use crate::scenario::{response_matrix, ChannelSet, Scenario};

/// Transmit covariances and the auxiliary rate variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamformingState {
    pub w_c: CMatrix,
    pub w_p: Vec<CMatrix>,
    /// Dedicated sensing covariance; `None` when the mode omits it.
    pub w_0: Option<CMatrix>,
    /// Common-rate shares c_k.
    pub c: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl BeamformingState {
    pub fn num_antennas(&self) -> usize {
        self.w_c.rows()
    }

    /// `Q = W_c + Σ W_p,k (+ W_0)`.
    pub fn q(&self) -> CMatrix {
        let mut q = self.w_c.clone();
        for w in &self.w_p {
            q += w;
        }
        if let Some(w0) = &self.w_0 {
            q += w0;
        }
        q
    }

    /// Sum of the private covariances.
    pub fn private_sum(&self) -> CMatrix {
        let mut q = CMatrix::zeros(self.num_antennas(), self.num_antennas());
        for w in &self.w_p {
            q += w;
        }
        q
    }

    pub fn total_power(&self) -> f64 {
        self.w_c.trace_re()
            + self.w_p.iter().map(|w| w.trace_re()).sum::<f64>()
            + self.w_0.as_ref().map_or(0.0, |w| w.trace_re())
    }

    pub fn trace_w0(&self) -> f64 {
        self.w_0.as_ref().map_or(0.0, |w| w.trace_re())
    }

    /// Multiplies every covariance by `s`.
    pub fn scale_power(&mut self, s: f64) {
        self.w_c = self.w_c.scale_real(s);
        for w in &mut self.w_p {
            *w = w.scale_real(s);
        }
        if let Some(w0) = &mut self.w_0 {
            *w0 = w0.scale_real(s);
        }
    }
}

/// Surface configuration: transmission and reflection coefficients plus
/// their lifted matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarRisState {
    /// Diagonal of Φ_t.
    pub phi_t: CVector,
    /// Diagonal of Φ_r.
    pub phi_r: CVector,
    /// Lifted transmission matrix, `(M+1)×(M+1)`.
    pub v_t: CMatrix,
    /// Lifted reflection matrix, `(M+1)×(M+1)`.
    pub v_r: CMatrix,
}

impl StarRisState {
    /// State whose lifted matrices are the exact outer products of the
    /// coefficient vectors.
    pub fn from_coefficients(phi_t: CVector, phi_r: CVector) -> Self {
        let nt = lift(&phi_t);
        let nr = lift(&phi_r);
        Self {
            v_t: nt.outer(&nt),
            v_r: nr.outer(&nr),
            phi_t,
            phi_r,
        }
    }

    /// Amplitudes `√β` and phases in `[0, 2π)`.
    pub fn from_amplitude_phase(beta_t: &[f64], theta_t: &[f64], beta_r: &[f64], theta_r: &[f64]) -> Self {
        let mk = |b: &[f64], t: &[f64]| {
            CVector::from_fn(b.len(), |m| C64::from_polar(b[m].max(0.0).sqrt(), t[m]))
        };
        Self::from_coefficients(mk(beta_t, theta_t), mk(beta_r, theta_r))
    }

    /// Surface with every coefficient zero.
    pub fn zero(m: usize) -> Self {
        Self::from_coefficients(CVector::zeros(m), CVector::zeros(m))
    }

    pub fn num_elements(&self) -> usize {
        self.phi_t.len()
    }

    pub fn nu_t(&self) -> CVector {
        lift(&self.phi_t)
    }

    pub fn nu_r(&self) -> CVector {
        lift(&self.phi_r)
    }

    pub fn phi_t_matrix(&self) -> CMatrix {
        CMatrix::from_diag(self.phi_t.as_slice())
    }

    pub fn phi_r_matrix(&self) -> CMatrix {
        CMatrix::from_diag(self.phi_r.as_slice())
    }

    /// Energy-splitting coefficients β^t_m = |φ^t_m|².
    pub fn beta_t(&self) -> Vec<f64> {
        self.phi_t.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn beta_r(&self) -> Vec<f64> {
        self.phi_r.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Phases in `[0, 2π)`.
    pub fn theta_t(&self) -> Vec<f64> {
        self.phi_t.iter().map(|z| wrap_phase(z.arg())).collect()
    }

    pub fn theta_r(&self) -> Vec<f64> {
        self.phi_r.iter().map(|z| wrap_phase(z.arg())).collect()
    }

    /// Largest deviation of `β^t_m + β^r_m` from one.
    pub fn pairing_error(&self) -> f64 {
        self.beta_t()
            .iter()
            .zip(self.beta_r())
            .fold(0.0, |m, (a, b)| m.max((a + b - 1.0).abs()))
    }
}

pub fn wrap_phase(p: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = p.rem_euclid(two_pi);
    if w >= two_pi {
        0.0
    } else {
        w
    }
}

/// `[φ; 1]`.
pub fn lift(phi: &CVector) -> CVector {
    let mut v = phi.clone().into_vec();
    v.push(ONE);
    CVector::from_vec(v)
}

fn check_len(phi: &CVector, ch: &ChannelSet) -> Result<()> {
    if phi.len() != ch.num_elements() {
        return Err(Error::invalid(format!(
            "surface has {} coefficients, channels expect {}",
            phi.len(),
            ch.num_elements()
        )));
    }
    Ok(())
}

/// `h_b + H_br diag(φ) h_r`.
pub fn cascade(ch: &ChannelSet, phi: &CVector, h_b: &CVector, h_r: &CVector) -> Result<CVector> {
    check_len(phi, ch)?;
    Ok(&ch.h_br.mul_vec(&phi.hadamard(h_r)) + h_b)
}

/// Composite reflection-side channel of terminal `k`.
pub fn composite_gt_channel(ch: &ChannelSet, phi_r: &CVector, k: usize) -> Result<CVector> {
    cascade(ch, phi_r, &ch.h_bk[k], &ch.h_rk[k])
}

/// Composite transmission-side channel of the target.
pub fn composite_target_channel(ch: &ChannelSet, phi_t: &CVector) -> Result<CVector> {
    cascade(ch, phi_t, &ch.h_bt, &ch.h_rt)
}

/// Composite transmission-side channel of scatterer `i`.
pub fn composite_scatterer_channel(ch: &ChannelSet, phi_t: &CVector, i: usize) -> Result<CVector> {
    cascade(ch, phi_t, &ch.h_bi[i], &ch.h_ri[i])
}

/// `log2(1 + hᴴ S h / (Σ hᴴ I_j h + σ²))`.
pub fn covariance_rate(h: &CVector, signal: &CMatrix, interference: &[&CMatrix], noise: f64) -> f64 {
    let s = signal.quad_form(h).re.max(0.0);
    let i: f64 = interference.iter().map(|w| w.quad_form(h).re.max(0.0)).sum();
    (1.0 + s / (i + noise)).log2()
}

/// Common-stream rate at terminal `k`.
pub fn common_rate(
    k: usize,
    ch: &ChannelSet,
    phi_r: &CVector,
    w_c: &CMatrix,
    w_p: &[CMatrix],
    w_0: Option<&CMatrix>,
    noise: f64,
) -> Result<f64> {
    let h = composite_gt_channel(ch, phi_r, k)?;
    let mut interf: Vec<&CMatrix> = w_p.iter().collect();
    if let Some(w0) = w_0 {
        interf.push(w0);
    }
    Ok(covariance_rate(&h, w_c, &interf, noise))
}

/// Private-stream rate at terminal `k` after removing the common stream.
pub fn private_rate(
    k: usize,
    ch: &ChannelSet,
    phi_r: &CVector,
    w_p: &[CMatrix],
    w_0: Option<&CMatrix>,
    noise: f64,
) -> Result<f64> {
    let h = composite_gt_channel(ch, phi_r, k)?;
    let mut interf: Vec<&CMatrix> = w_p.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, w)| w).collect();
    if let Some(w0) = w_0 {
        interf.push(w0);
    }
    Ok(covariance_rate(&h, &w_p[k], &interf, noise))
}

/// Target and clutter description used by the sensing SINR.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingParams {
    pub theta_0: f64,
    pub theta_i: Vec<f64>,
    pub beta_0: C64,
    pub beta_i: Vec<C64>,
    pub sigma_s2: f64,
}

impl SensingParams {
    pub fn new(s: &Scenario, ch: &ChannelSet) -> Self {
        Self {
            theta_0: ch.theta_target,
            theta_i: ch.theta_scatterers.clone(),
            beta_0: s.target_rcs(),
            beta_i: vec![s.scatterer_rcs(); ch.num_scatterers()],
            sigma_s2: s.noise_sensing_watts,
        }
    }

    pub fn gamma(&self) -> f64 {
        1.0 / self.sigma_s2
    }
}

/// Sensing SINR in its direct form:
/// `‖h_t‖² Tr(h_t h_tᴴ A0 Q A0ᴴ) / Tr(Σ_i ‖h_i‖² h_i h_iᴴ A_i Q A_iᴴ + σ_s² I)`.
pub fn sensing_sinr(ch: &ChannelSet, phi_t: &CVector, q: &CMatrix, p: &SensingParams) -> Result<f64> {
    let n = ch.num_antennas();
    let ht = composite_target_channel(ch, phi_t)?;
    let a0 = response_matrix(p.theta_0, p.beta_0, n);
    let num = ht.norm_sqr() * (&(&a0 * q) * &a0.adjoint()).quad_form(&ht).re;
    let mut den = p.sigma_s2 * n as f64;
    for (i, (&th, &b)) in p.theta_i.iter().zip(&p.beta_i).enumerate() {
        let hi = composite_scatterer_channel(ch, phi_t, i)?;
        let ai = response_matrix(th, b, n);
        den += hi.norm_sqr() * (&(&ai * q) * &ai.adjoint()).quad_form(&hi).re;
    }
    Ok(num / den)
}

/// Matrices `A_t = γ0 H_t H_tᴴ A0 Q A0ᴴ` and `B_t = Σ γ_i H_i H_iᴴ A_i Q A_iᴴ`
/// with `H = h hᴴ`.
pub fn sensing_matrices(
    ch: &ChannelSet,
    phi_t: &CVector,
    q: &CMatrix,
    p: &SensingParams,
) -> Result<(CMatrix, CMatrix)> {
    let n = ch.num_antennas();
    let g = p.gamma();
    let ht = composite_target_channel(ch, phi_t)?;
    let hh = ht.outer(&ht);
    let a0 = response_matrix(p.theta_0, p.beta_0, n);
    let at = (&(&(&hh * &hh) * &a0) * &(q * &a0.adjoint())).scale_real(g);
    let mut bt = CMatrix::zeros(n, n);
    for (i, (&th, &b)) in p.theta_i.iter().zip(&p.beta_i).enumerate() {
        let hi = composite_scatterer_channel(ch, phi_t, i)?;
        let hhi = hi.outer(&hi);
        let ai = response_matrix(th, b, n);
        bt += &(&(&(&hhi * &hhi) * &ai) * &(q * &ai.adjoint())).scale_real(g);
    }
    Ok((at, bt))
}

/// Hermitian `G_A`, `G_B` with `Tr(A_t) = Tr(G_A Q)` and `Tr(B_t) = Tr(G_B Q)`.
pub fn sensing_gains(ch: &ChannelSet, phi_t: &CVector, p: &SensingParams) -> Result<(CMatrix, CMatrix)> {
    let n = ch.num_antennas();
    let g = p.gamma();
    let term = |h: &CVector, theta: f64, beta: C64| {
        let a = response_matrix(theta, beta, n);
        let v = a.adjoint().mul_vec(h);
        v.outer(&v).scale_real(g * h.norm_sqr())
    };
    let ht = composite_target_channel(ch, phi_t)?;
    let ga = term(&ht, p.theta_0, p.beta_0);
    let mut gb = CMatrix::zeros(n, n);
    for (i, (&th, &b)) in p.theta_i.iter().zip(&p.beta_i).enumerate() {
        let hi = composite_scatterer_channel(ch, phi_t, i)?;
        gb += &term(&hi, th, b);
    }
    Ok((ga.hermitian_part(), gb.hermitian_part()))
}

/// `[H_br diag(h_r), h_b]`, the `N×(M+1)` map with `G ν = h_b + H_br diag(φ) h_r`.
pub fn cascade_matrix(ch: &ChannelSet, h_b: &CVector, h_r: &CVector) -> CMatrix {
    let (n, m) = (ch.num_antennas(), ch.num_elements());
    CMatrix::from_fn(n, m + 1, |i, j| if j < m { ch.h_br[(i, j)] * h_r[j] } else { h_b[i] })
}

fn gram(g: &CMatrix, q: Option<&CMatrix>) -> CMatrix {
    let gh = g.adjoint();
    match q {
        Some(q) => (&(&gh * q) * g).hermitian_part(),
        None => (&gh * g).hermitian_part(),
    }
}

/// Target blocks `(A_1, B_1)` with `νᴴ A_1 ν = ‖h_t‖²` and `νᴴ B_1 ν = h_tᴴ Q h_t`.
pub fn build_a1_b1(ch: &ChannelSet, q: &CMatrix) -> (CMatrix, CMatrix) {
    let g = cascade_matrix(ch, &ch.h_bt, &ch.h_rt);
    (gram(&g, None), gram(&g, Some(q)))
}

/// Scatterer blocks `(A_i1, B_i1)`.
pub fn build_ai1_bi1(ch: &ChannelSet, q: &CMatrix, i: usize) -> (CMatrix, CMatrix) {
    let g = cascade_matrix(ch, &ch.h_bi[i], &ch.h_ri[i]);
    (gram(&g, None), gram(&g, Some(q)))
}

/// Lifted gain `M_Q` with `Tr(M_Q ν νᴴ) = h_kᴴ Q h_k` for terminal `k`.
pub fn lifted_gt_gain(ch: &ChannelSet, k: usize, q: &CMatrix) -> CMatrix {
    gram(&cascade_matrix(ch, &ch.h_bk[k], &ch.h_rk[k]), Some(q))
}

/// `(M_Q1, M_Q2, M_Q3)` for `Q1 = W_c + ΣW_p`, `Q2 = ΣW_p`, `Q3 = Σ_{j≠k} W_p`.
pub fn build_mq(ch: &ChannelSet, k: usize, w_c: &CMatrix, w_p: &[CMatrix]) -> (CMatrix, CMatrix, CMatrix) {
    let n = ch.num_antennas();
    let mut q2 = CMatrix::zeros(n, n);
    let mut q3 = CMatrix::zeros(n, n);
    for (j, w) in w_p.iter().enumerate() {
        q2 += w;
        if j != k {
            q3 += w;
        }
    }
    let q1 = w_c + &q2;
    (
        lifted_gt_gain(ch, k, &q1),
        lifted_gt_gain(ch, k, &q2),
        lifted_gt_gain(ch, k, &q3),
    )
}

/// Rank-one factor `√λ u` of a PSD matrix (zero vector for a zero matrix).
pub fn rank_one_factor(w: &CMatrix) -> Result<CVector> {
    if w.fro_norm() == 0.0 {
        return Ok(CVector::zeros(w.rows()));
    }
    let (lam, u) = crate::numerics::hermitian_eig_max(w)?;
    Ok(u.scale(C64::new(lam.max(0.0).sqrt(), 0.0)))
}

/// Magnitude-form rate `log2(1 + |hᴴ w_s|² / (Σ |hᴴ w_j|² + σ²))`.
pub fn magnitude_rate(h: &CVector, signal: &CVector, interference: &[&CVector], noise: f64) -> f64 {
    let s = h.dot(signal).norm_sqr();
    let i: f64 = interference.iter().map(|w| h.dot(w).norm_sqr()).sum();
    (1.0 + s / (i + noise)).log2()
}

/// Zero covariance of dimension `n`.
pub fn zero_cov(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ZERO;
    use crate::scenario::{gen_channels, Scenario};

    #[test]
    fn closed_form_rate_examples() {
        let h = CVector::from_vec(vec![ONE, ZERO]);
        let wc = CMatrix::from_real_diag(&[1.0, 0.0]);
        let z = zero_cov(2);
        assert!((covariance_rate(&h, &wc, &[&z, &z], 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(covariance_rate(&h, &z, &[], 1.0), 0.0);
        // Single user, no interference: log2(1 + SNR).
        let wp = CMatrix::from_real_diag(&[3.0, 0.0]);
        assert!((covariance_rate(&h, &wp, &[], 1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_surface_gives_direct_links() {
        let s = Scenario::desk();
        let ch = gen_channels(&s).unwrap();
        let z = CVector::zeros(s.num_elements);
        assert_eq!(composite_gt_channel(&ch, &z, 1).unwrap(), ch.h_bk[1]);
        assert_eq!(composite_target_channel(&ch, &z).unwrap(), ch.h_bt);
    }

    #[test]
    fn lifted_blocks_with_zero_surface_channel() {
        let s = Scenario::desk();
        let mut ch = gen_channels(&s).unwrap();
        ch.h_rt = CVector::zeros(s.num_elements);
        let q = CMatrix::identity(s.num_antennas);
        let (a1, b1) = build_a1_b1(&ch, &q);
        let m = s.num_elements;
        for i in 0..=m {
            for j in 0..=m {
                if i < m || j < m {
                    assert_eq!(a1[(i, j)], ZERO);
                    assert_eq!(b1[(i, j)], ZERO);
                }
            }
        }
        assert!((a1[(m, m)].re - ch.h_bt.norm_sqr()).abs() < 1e-20);
    }

    #[test]
    fn mq_degenerate_cases() {
        let s = Scenario { num_gts: 1, ..Scenario::desk() };
        let ch = gen_channels(&s).unwrap();
        let n = s.num_antennas;
        let (_, m2, m3) = build_mq(&ch, 0, &CMatrix::identity(n), &[zero_cov(n)]);
        assert_eq!(m2.max_abs(), 0.0);
        assert_eq!(m3.max_abs(), 0.0);
        let (_, _, m3) = build_mq(&ch, 0, &CMatrix::identity(n), &[CMatrix::identity(n)]);
        assert_eq!(m3.max_abs(), 0.0);
    }
}

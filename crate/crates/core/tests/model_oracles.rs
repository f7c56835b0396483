use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_isac::model::*;
use star_isac::numerics::*;
use star_isac::scenario::*;

fn rc(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
    CVector::from_fn(n, |_| rc(rng) * scale)
}

fn rand_phi(rng: &mut ChaCha8Rng, m: usize) -> CVector {
    CVector::from_fn(m, |_| C64::from_polar(rng.random_range(0.0..1.0f64).sqrt(), rng.random_range(0.0..std::f64::consts::TAU)))
}

fn rand_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMatrix {
    let mut w = CMatrix::zeros(n, n);
    for _ in 0..rank {
        let v = rand_vec(rng, n, 1.0);
        w += &v.outer(&v);
    }
    w
}

fn scenario_with(seed: u64) -> (Scenario, ChannelSet) {
    let s = Scenario { seed, ..Scenario::desk() };
    let ch = gen_channels(&s).unwrap();
    (s, ch)
}

#[test]
fn single_element_expansion() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = Scenario { num_elements: 1, ..Scenario::desk() };
    let ch = gen_channels(&s).unwrap();
    let phi = C64::from_polar(0.6, 1.1);
    let pv = CVector::from_vec(vec![phi]);
    let h = composite_gt_channel(&ch, &pv, 0).unwrap();
    for n in 0..s.num_antennas {
        let expect = ch.h_bk[0][n] + ch.h_br[(n, 0)] * phi * ch.h_rk[0][0];
        assert!((h[n] - expect).norm() <= 1e-15 * expect.norm().max(1e-30));
    }
    let t = composite_target_channel(&ch, &pv).unwrap();
    for n in 0..s.num_antennas {
        let expect = ch.h_bt[n] + ch.h_br[(n, 0)] * phi * ch.h_rt[0];
        assert!((t[n] - expect).norm() <= 1e-15 * expect.norm().max(1e-30));
    }
    let _ = rng.random::<u8>();
}

#[test]
fn composite_channels_are_affine_in_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (s, ch) = scenario_with(4);
    let m = s.num_elements;
    let p1 = rand_phi(&mut rng, m);
    let p2 = rand_phi(&mut rng, m);
    let sum = &p1 + &p2;
    for k in 0..s.num_gts {
        let h1 = composite_gt_channel(&ch, &p1, k).unwrap();
        let h2 = composite_gt_channel(&ch, &p2, k).unwrap();
        let h12 = composite_gt_channel(&ch, &sum, k).unwrap();
        // h(φ1+φ2) = h(φ1) + h(φ2) - h_b.
        let lin = &(&h1 + &h2) - &ch.h_bk[k];
        assert!((&h12 - &lin).norm() <= 1e-12 * h12.norm());
    }
    let t1 = composite_target_channel(&ch, &p1).unwrap();
    let t2 = composite_target_channel(&ch, &p2).unwrap();
    let t12 = composite_target_channel(&ch, &sum).unwrap();
    assert!((&t12 - &(&(&t1 + &t2) - &ch.h_bt)).norm() <= 1e-12 * t12.norm());
}

#[test]
fn covariance_rates_match_magnitude_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (s, ch) = scenario_with(5);
    let (n, k) = (s.num_antennas, s.num_gts);
    for _ in 0..1000 {
        let phi = rand_phi(&mut rng, s.num_elements);
        let w_c = rand_psd(&mut rng, n, 1).scale_real(1e-2);
        let w_p: Vec<CMatrix> = (0..k).map(|_| rand_psd(&mut rng, n, 1).scale_real(1e-2)).collect();
        let w_0 = rand_psd(&mut rng, n, 1).scale_real(1e-3);
        let f_c = rank_one_factor(&w_c).unwrap();
        let f_p: Vec<CVector> = w_p.iter().map(|w| rank_one_factor(w).unwrap()).collect();
        let f_0 = rank_one_factor(&w_0).unwrap();
        for kk in 0..k {
            let h = composite_gt_channel(&ch, &phi, kk).unwrap();
            let rc_cov = common_rate(kk, &ch, &phi, &w_c, &w_p, Some(&w_0), s.noise_gt_watts).unwrap();
            let mut interf: Vec<&CVector> = f_p.iter().collect();
            interf.push(&f_0);
            let rc_mag = magnitude_rate(&h, &f_c, &interf, s.noise_gt_watts);
            assert!((rc_cov - rc_mag).abs() <= 1e-9 * rc_mag.max(1.0));
            let rp_cov = private_rate(kk, &ch, &phi, &w_p, None, s.noise_gt_watts).unwrap();
            let others: Vec<&CVector> = f_p.iter().enumerate().filter(|(j, _)| *j != kk).map(|(_, v)| v).collect();
            let rp_mag = magnitude_rate(&h, &f_p[kk], &others, s.noise_gt_watts);
            assert!((rp_cov - rp_mag).abs() <= 1e-9 * rp_mag.max(1.0));
        }
    }
}

#[test]
fn sensing_sinr_direct_matches_trace_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000u64 {
        let (s, ch) = scenario_with(100 + trial % 7);
        let p = SensingParams::new(&s, &ch);
        let phi = rand_phi(&mut rng, s.num_elements);
        let q = rand_psd(&mut rng, s.num_antennas, 1 + (trial as usize % 3));
        let direct = sensing_sinr(&ch, &phi, &q, &p).unwrap();
        let (at, bt) = sensing_matrices(&ch, &phi, &q, &p).unwrap();
        let ratio = at.trace_re() / (bt.trace_re() + s.num_antennas as f64);
        assert!((direct - ratio).abs() <= 1e-9 * direct, "{direct} vs {ratio}");
        let (ga, gb) = sensing_gains(&ch, &phi, &p).unwrap();
        let ratio2 = ga.trace_product(&q).re / (gb.trace_product(&q).re + s.num_antennas as f64);
        assert!((direct - ratio2).abs() <= 1e-9 * direct);
    }
}

#[test]
fn sensing_sinr_scalar_case() {
    let s = Scenario {
        num_antennas: 1,
        num_scatterers: 0,
        num_elements: 0,
        ..Scenario::desk()
    };
    let ch = gen_channels(&s).unwrap();
    let p = SensingParams::new(&s, &ch);
    let q = CMatrix::from_real_diag(&[0.7]);
    let h = ch.h_bt[0].norm();
    let g = sensing_sinr(&ch, &CVector::zeros(0), &q, &p).unwrap();
    let expect = h.powi(4) * 1.0 * 0.7 / s.noise_sensing_watts;
    assert!((g - expect).abs() <= 1e-12 * expect);
    assert_eq!(sensing_sinr(&ch, &CVector::zeros(0), &CMatrix::zeros(1, 1), &p).unwrap(), 0.0);
}

#[test]
fn lifted_blocks_reproduce_composite_quantities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (s, ch) = scenario_with(7);
    for _ in 0..200 {
        let phi = rand_phi(&mut rng, s.num_elements);
        let nu = lift(&phi);
        let q = rand_psd(&mut rng, s.num_antennas, 2);
        let (a1, b1) = build_a1_b1(&ch, &q);
        let ht = composite_target_channel(&ch, &phi).unwrap();
        assert!((a1.quad_form(&nu).re - ht.norm_sqr()).abs() <= 1e-9 * ht.norm_sqr());
        let hq = q.quad_form(&ht).re;
        assert!((b1.quad_form(&nu).re - hq).abs() <= 1e-9 * hq);
        assert!(a1.hermitian_residual() <= 1e-12 * a1.max_abs());
        assert!(hermitian_eigvals(&b1).unwrap()[0] >= -1e-10 * b1.fro_norm());
        for i in 0..s.num_scatterers {
            let (ai, bi) = build_ai1_bi1(&ch, &q, i);
            let hi = composite_scatterer_channel(&ch, &phi, i).unwrap();
            assert!((ai.quad_form(&nu).re - hi.norm_sqr()).abs() <= 1e-9 * hi.norm_sqr());
            assert!((bi.quad_form(&nu).re - q.quad_form(&hi).re).abs() <= 1e-9 * q.quad_form(&hi).re);
        }
        let w_c = rand_psd(&mut rng, s.num_antennas, 1);
        let w_p: Vec<CMatrix> = (0..s.num_gts).map(|_| rand_psd(&mut rng, s.num_antennas, 1)).collect();
        for k in 0..s.num_gts {
            let (m1, m2, m3) = build_mq(&ch, k, &w_c, &w_p);
            let h = composite_gt_channel(&ch, &phi, k).unwrap();
            let v = nu.outer(&nu);
            let q2: CMatrix = w_p.iter().fold(CMatrix::zeros(4, 4), |a, w| &a + w);
            let q1 = &q2 + &w_c;
            let q3 = &q2 - &w_p[k];
            for (mm, qq) in [(&m1, &q1), (&m2, &q2), (&m3, &q3)] {
                let direct = qq.quad_form(&h).re;
                assert!((mm.trace_product(&v).re - direct).abs() <= 1e-9 * direct);
            }
        }
    }
}

proptest! {
    #[test]
    fn sensing_sinr_phase_invariance_and_scaling(seed in any::<u64>(), phase in 0.0f64..std::f64::consts::TAU, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = Scenario { num_scatterers: 0, ..Scenario::desk() };
        let mut ch = gen_channels(&s).unwrap();
        let p = SensingParams::new(&s, &ch);
        let phi = rand_phi(&mut rng, s.num_elements);
        let q = rand_psd(&mut rng, s.num_antennas, 2);
        let g = sensing_sinr(&ch, &phi, &q, &p).unwrap();
        let gc = sensing_sinr(&ch, &phi, &q.scale_real(c), &p).unwrap();
        prop_assert!((gc - c * g).abs() <= 1e-9 * c * g);
        let rot = C64::from_polar(1.0, phase);
        ch.h_bt = ch.h_bt.scale(rot);
        ch.h_rt = ch.h_rt.scale(rot);
        let gr = sensing_sinr(&ch, &phi, &q, &p).unwrap();
        prop_assert!((gr - g).abs() <= 1e-9 * g);
    }

    #[test]
    fn rates_are_nonnegative_and_monotone_in_signal(seed in any::<u64>(), boost in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, ch) = scenario_with(seed % 5);
        let phi = rand_phi(&mut rng, s.num_elements);
        let w_c = rand_psd(&mut rng, 4, 1).scale_real(1e-2);
        let w_p: Vec<CMatrix> = (0..2).map(|_| rand_psd(&mut rng, 4, 1).scale_real(1e-2)).collect();
        let r = common_rate(0, &ch, &phi, &w_c, &w_p, None, s.noise_gt_watts).unwrap();
        let rb = common_rate(0, &ch, &phi, &w_c.scale_real(boost), &w_p, None, s.noise_gt_watts).unwrap();
        prop_assert!(r >= 0.0 && rb >= r - 1e-12);
    }
}

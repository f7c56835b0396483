use num_complex::Complex64 as C64;
use proptest::prelude::*;
use star_isac::scenario::*;

fn tiny() -> Scenario {
    Scenario {
        num_antennas: 1,
        num_elements: 1,
        num_gts: 1,
        num_scatterers: 1,
        ..Scenario::desk()
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[test]
fn monte_carlo_entry_power_matches_path_loss() {
    let base = tiny();
    let gt = base.gt_positions()[0];
    let sc = base.scatterer_positions()[0];
    let g = |d: f64, a: f64| 10f64.powf(-1.5) / d.powf(a);
    let expected = [
        g(dist(base.bs_position, gt), 2.7),
        g(dist(base.ris_position, gt), 2.8),
        g(dist(base.bs_position, base.ris_position), 2.8),
        g(dist(base.bs_position, base.target_position), 2.6),
        g(dist(base.ris_position, base.target_position), 2.8),
        g(dist(base.bs_position, sc), 2.6),
        g(dist(base.ris_position, sc), 2.8),
    ];
    let draws = 100_000u64;
    let mut acc = [0.0f64; 7];
    for seed in 0..draws {
        let s = Scenario { seed, ..base.clone() };
        let ch = gen_channels(&s).unwrap();
        let vals = [
            ch.h_bk[0][0],
            ch.h_rk[0][0],
            ch.h_br[(0, 0)],
            ch.h_bt[0],
            ch.h_rt[0],
            ch.h_bi[0][0],
            ch.h_ri[0][0],
        ];
        for (a, v) in acc.iter_mut().zip(vals) {
            *a += v.norm_sqr();
        }
    }
    for (a, e) in acc.iter().zip(expected) {
        let mean = a / draws as f64;
        assert!((mean / e - 1.0).abs() < 0.02, "mean {mean:.4e} vs {e:.4e}");
    }
}

#[test]
fn pure_los_limit_is_deterministic_steering() {
    let s = Scenario {
        rician_db: f64::INFINITY,
        ..Scenario::desk()
    };
    let a = gen_channels(&s).unwrap();
    let b = gen_channels(&Scenario { seed: 99, ..s.clone() }).unwrap();
    assert_eq!(a, b);
    let gt = s.gt_positions()[0];
    let beta = path_loss(dist(s.bs_position, gt), s.pl_exp_bs_gt, s.ref_gain_db).unwrap();
    let theta = array_angle(s.bs_position, gt, s.bs_array_axis);
    let los = steering_vector(theta, s.num_antennas);
    for i in 0..s.num_antennas {
        assert!((a.h_bk[0][i] - los[i] * beta.sqrt()).norm() < 1e-15);
        assert!((a.h_bk[0][i].norm() - beta.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn same_seed_is_bit_identical() {
    let s = Scenario::desk();
    assert_eq!(gen_channels(&s).unwrap(), gen_channels(&s).unwrap());
    let other = gen_channels(&Scenario { seed: 2, ..s.clone() }).unwrap();
    assert_ne!(gen_channels(&s).unwrap().h_bt, other.h_bt);
}

#[test]
fn surface_channels_nest_across_element_counts() {
    let small = gen_channels(&Scenario { num_elements: 8, ..Scenario::desk() }).unwrap();
    let large = gen_channels(&Scenario { num_elements: 32, ..Scenario::desk() }).unwrap();
    for m in 0..8 {
        assert_eq!(small.h_rt[m], large.h_rt[m]);
        assert_eq!(small.h_rk[1][m], large.h_rk[1][m]);
        for n in 0..4 {
            assert_eq!(small.h_br[(n, m)], large.h_br[(n, m)]);
        }
    }
    assert_eq!(small.h_bk, large.h_bk);
    assert_eq!(small.h_bt, large.h_bt);
}

#[test]
fn dimensions_follow_scenario() {
    let s = Scenario {
        num_antennas: 3,
        num_elements: 5,
        num_gts: 4,
        num_scatterers: 3,
        ..Scenario::desk()
    };
    let ch = gen_channels(&s).unwrap();
    assert_eq!(ch.h_bk.len(), 4);
    assert!(ch.h_bk.iter().all(|h| h.len() == 3));
    assert!(ch.h_rk.iter().all(|h| h.len() == 5));
    assert_eq!((ch.h_br.rows(), ch.h_br.cols()), (3, 5));
    assert_eq!(ch.h_bi.len(), 3);
    assert_eq!(ch.h_ri.len(), 3);
    assert_eq!(ch.theta_scatterers.len(), 3);
    assert!(ch.theta_scatterers.iter().all(|t| (t - ch.theta_target).abs() > 1e-6));
}

#[test]
fn toml_roundtrip_and_diagnostics() {
    let s = Scenario::desk();
    let text = s.to_toml_string();
    assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    let partial = "num_gts = 3\nrate_thresholds = [1.0, 2.0, 3.0]\np_max_watts = 5.0\n";
    let p = Scenario::from_toml_str(partial).unwrap();
    assert_eq!(p.num_gts, 3);
    assert_eq!(p.rate_threshold(2), 3.0);
    assert_eq!(p.num_elements, 8);
    let err = Scenario::from_toml_str("num_gts = 2\nnum_elements = \"eight\"\n").unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");
    assert!(Scenario::from_toml_str("bogus_key = 1\n").is_err());
}

proptest! {
    #[test]
    fn steering_entries_unit_modulus_with_constant_ratio(theta in -3.2f64..3.2, n in 1usize..12) {
        let a = steering_vector(theta, n);
        let r = C64::from_polar(1.0, std::f64::consts::PI * theta.sin());
        for i in 0..n {
            prop_assert!((a[i].norm() - 1.0).abs() < 1e-14);
            if i + 1 < n {
                prop_assert!((a[i + 1] / a[i] - r).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn response_matrix_is_rank_one(theta in -1.5f64..1.5, n in 1usize..8, re in -2.0f64..2.0, im in -2.0f64..2.0) {
        let beta = C64::new(re, im);
        let r = response_matrix(theta, beta, n);
        // Rank one: every 2x2 minor vanishes.
        for i in 0..n { for j in 0..n { for k in 0..n { for l in 0..n {
            let minor = r[(i, k)] * r[(j, l)] - r[(i, l)] * r[(j, k)];
            prop_assert!(minor.norm() <= 1e-12 * (1.0 + beta.norm_sqr()));
        }}}}
    }
}

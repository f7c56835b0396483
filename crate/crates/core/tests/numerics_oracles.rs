#![allow(clippy::needless_range_loop)]

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_isac::numerics::*;

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn rand_herm(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| rand_c(rng));
    (&a + &a.adjoint()).scale_real(0.5)
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| rand_c(rng))
}

/// Number of eigenvalues of a Hermitian matrix below `sigma`, by counting
/// negative pivots of an unpivoted LDLᴴ factorization of `A - sigma I`.
fn count_below(a: &CMatrix, sigma: f64) -> usize {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)] - if i == j { sigma } else { 0.0 }).collect())
        .collect();
    let mut neg = 0;
    for k in 0..n {
        let mut p = m[k][k].re;
        if p == 0.0 {
            p = -1e-300;
        }
        if p < 0.0 {
            neg += 1;
        }
        for i in (k + 1)..n {
            let f = m[i][k] / p;
            for j in (k + 1)..n {
                let t = f * m[k][j];
                m[i][j] -= t;
            }
        }
    }
    neg
}

fn bisection_eigs(a: &CMatrix) -> Vec<f64> {
    let n = a.rows();
    let r = a.fro_norm() + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-r, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(a, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

#[test]
fn eigenvalues_match_bisection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let a = rand_herm(&mut rng, 4);
        let ours = hermitian_eigvals(&a).unwrap();
        let oracle = bisection_eigs(&a);
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "{ours:?} vs {oracle:?}");
        }
        let (lmax, _) = hermitian_eig_max(&a).unwrap();
        assert!((lmax - oracle[3]).abs() < 1e-8);
    }
}

#[test]
fn eig_max_residual_and_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for n in 1..=12 {
        for _ in 0..20 {
            let a = rand_herm(&mut rng, n);
            let (l, u) = hermitian_eig_max(&a).unwrap();
            let r = &a.mul_vec(&u) - &u.scale(C64::new(l, 0.0));
            assert!(r.norm() <= 1e-9 * a.fro_norm());
            assert!((u.norm() - 1.0).abs() < 1e-12);
            let big = u.iter().fold(C64::new(0.0, 0.0), |m, z| if z.norm() > m.norm() { *z } else { m });
            assert!(big.im.abs() < 1e-14 && big.re >= 0.0);
        }
    }
}

#[test]
fn repeated_eigenvalues_are_handled() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let q = {
        let a = rand_mat(&mut rng, 3, 3);
        // Unitary from Gram-Schmidt on random columns.
        let mut cols: Vec<CVector> = Vec::new();
        for j in 0..3 {
            let mut v = a.column(j);
            for u in &cols {
                let p = u.dot(&v);
                v = &v - &u.scale(p);
            }
            let nv = v.norm();
            cols.push(v.scale(C64::new(1.0 / nv, 0.0)));
        }
        CMatrix::from_fn(3, 3, |i, j| cols[j][i])
    };
    let d = CMatrix::from_real_diag(&[2.0, 2.0, -1.0]);
    let a = (&(&q * &d) * &q.adjoint()).hermitian_part();
    let ev = hermitian_eigvals(&a).unwrap();
    assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12 && (ev[2] - 2.0).abs() < 1e-12);
    let p = psd_project(&a).unwrap();
    let oracle = (&(&q * &CMatrix::from_real_diag(&[2.0, 2.0, 0.0])) * &q.adjoint()).hermitian_part();
    assert!((&p - &oracle).max_abs() < 1e-12);
}

#[test]
fn psd_project_matches_clip_oracle() {
    // Oracle: eigenvectors from the bisection eigenvalues via inverse iteration.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let n = 4;
        let a = rand_herm(&mut rng, n);
        let eigs = bisection_eigs(&a);
        let mut oracle = CMatrix::zeros(n, n);
        for &lam in eigs.iter().filter(|&&l| l > 0.0) {
            let shifted = &a - &CMatrix::identity(n).scale_real(lam + 1e-10);
            let mut v = CVector::from_fn(n, |i| C64::new(1.0 + i as f64, 0.3));
            for _ in 0..4 {
                v = solve(&shifted, &v);
                let nv = v.norm();
                v = v.scale(C64::new(1.0 / nv, 0.0));
            }
            oracle += &v.outer(&v).scale_real(lam);
        }
        let p = psd_project(&a).unwrap();
        assert!((&p - &oracle).max_abs() < 1e-9);
        let emin = hermitian_eigvals(&p).unwrap()[0];
        assert!(emin >= -1e-10 * a.fro_norm());
    }
}

fn solve(a: &CMatrix, b: &CVector) -> CVector {
    let n = a.rows();
    let mut m: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
    let mut x: Vec<C64> = b.iter().copied().collect();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| m[i][k].norm().partial_cmp(&m[j][k].norm()).unwrap()).unwrap();
        m.swap(k, p);
        x.swap(k, p);
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                let t = f * m[k][j];
                m[i][j] -= t;
            }
            let t = f * x[k];
            x[i] -= t;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s -= m[k][j] * x[j];
        }
        x[k] = s / m[k][k];
    }
    CVector::from_vec(x)
}

#[test]
fn kron_vec_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let a = rand_mat(&mut rng, 3, 3);
        let b = rand_mat(&mut rng, 3, 3);
        let x = rand_mat(&mut rng, 3, 3);
        let lhs = kron(&b.transpose(), &a).mul_vec(&vec(&x));
        let rhs = vec(&(&(&a * &x) * &b));
        assert!((&lhs - &rhs).norm() <= 1e-12 * rhs.norm());
    }
}

#[test]
fn trace_quartic_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let e = rand_herm(&mut rng, 3);
        let f = rand_herm(&mut rng, 3);
        let x = rand_herm(&mut rng, 3);
        let direct = (&(&(&e * &x) * &f) * &x).trace();
        let vx = vec(&x);
        let lifted = vx.dot(&kron(&f.transpose(), &e).mul_vec(&vx));
        assert!((direct - lifted).norm() <= 1e-10 * (1.0 + direct.norm()));
    }
}

#[test]
fn kron_of_hermitians_is_hermitian() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let n = rng.random_range(1..5);
        let e = rand_herm(&mut rng, n);
        let f = rand_herm(&mut rng, n);
        let k = kron(&f.transpose(), &e);
        assert!(k.hermitian_residual() <= 1e-14 * k.max_abs().max(1.0));
    }
}

proptest! {
    #[test]
    fn vec_unvec_roundtrip(r in 1usize..6, c in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_mat(&mut rng, r, c);
        prop_assert_eq!(unvec(&vec(&a), r, c).unwrap(), a);
    }

    #[test]
    fn psd_projection_is_idempotent_and_psd(n in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_herm(&mut rng, n);
        let p = psd_project(&a).unwrap();
        let emin = hermitian_eigvals(&p).unwrap()[0];
        prop_assert!(emin >= -1e-10 * a.fro_norm());
        let pp = psd_project(&p).unwrap();
        prop_assert!((&pp - &p).max_abs() <= 1e-10 * (1.0 + a.fro_norm()));
        // Projection residual is negative semidefinite.
        let r = &a - &p;
        let emax = hermitian_eigvals(&r).unwrap()[n - 1];
        prop_assert!(emax <= 1e-10 * (1.0 + a.fro_norm()));
    }

    #[test]
    fn eigenvalues_sum_to_trace(n in 1usize..9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_herm(&mut rng, n);
        let ev = hermitian_eigvals(&a).unwrap();
        let s: f64 = ev.iter().sum();
        prop_assert!((s - a.trace_re()).abs() <= 1e-10 * (1.0 + a.fro_norm()));
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
    }
}

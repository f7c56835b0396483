//! Quick oracle checks that run inside the binary.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_isac::conic::{self, ConicProblem, LinExpr, Settings, Status};
use star_isac::driver::{optimize, Scheme};
use star_isac::model::{sensing_matrices, sensing_sinr, SensingParams};
use star_isac::numerics::{hermitian_eigvals, kron, vec, CMatrix, CVector};
use star_isac::scenario::{gen_channels, Scenario};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&g + &g.adjoint()).scale_real(0.5)
}

fn min_eigenvalue() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut optimal = true;
    for inst in 0..10 {
        let n = 2 + inst % 5;
        let c = random_hermitian(&mut rng, n);
        let want = hermitian_eigvals(&c).map(|e| e[0]).unwrap_or(f64::NAN);
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", n);
        p.set_objective(LinExpr::new().psd(x, c));
        p.add_eq("trace", LinExpr::new().psd(x, CMatrix::identity(n)), 1.0);
        for st in [Settings::default(), Settings::interior_point()] {
            match conic::solve_with(&p, &st) {
                Ok(s) => {
                    optimal &= s.status == Status::Optimal;
                    worst = worst.max((s.objective - want).abs());
                }
                Err(_) => optimal = false,
            }
        }
    }
    Check { name: "conic minimum eigenvalue", pass: optimal && worst <= 1e-5, detail: format!("max error {worst:.2e}") }
}

fn infeasibility() -> Check {
    let mut p = ConicProblem::new();
    let x = p.add_psd("X", 3);
    p.add_eq("negative trace", LinExpr::new().psd(x, CMatrix::identity(3)), -1.0);
    let statuses: Vec<Status> = [Settings::default(), Settings::interior_point()]
        .iter()
        .filter_map(|st| conic::solve_with(&p, st).ok().map(|s| s.status))
        .collect();
    let pass = statuses.len() == 2 && statuses.iter().all(|s| *s == Status::Infeasible);
    Check { name: "conic infeasibility certificate", pass, detail: format!("{statuses:?}") }
}

fn kronecker_trace() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(1..5);
        let (e, f, x) = (random_hermitian(&mut rng, n), random_hermitian(&mut rng, n), random_hermitian(&mut rng, n));
        let direct = (&(&(&e * &x) * &f) * &x).trace();
        let vx = vec(&x);
        let lifted = vx.dot(&kron(&f.transpose(), &e).mul_vec(&vx));
        worst = worst.max((direct - lifted).norm() / (e.fro_norm() * f.fro_norm() * x.fro_norm().powi(2)));
    }
    Check { name: "kronecker trace identity", pass: worst <= 1e-9, detail: format!("max relative error {worst:.1e}") }
}

fn sensing_forms() -> Check {
    let sc = Scenario::desk();
    let Ok(ch) = gen_channels(&sc) else {
        return Check { name: "sensing SINR forms", pass: false, detail: "channel generation failed".into() };
    };
    let p = SensingParams::new(&sc, &ch);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let phi = CVector::from_fn(sc.num_elements, |_| C64::from_polar(rng.random_range(0.0..1.0), rng.random_range(0.0..std::f64::consts::TAU)));
        let v = CVector::from_fn(sc.num_antennas, |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let q = v.outer(&v);
        let (Ok(direct), Ok((a, b))) = (sensing_sinr(&ch, &phi, &q, &p), sensing_matrices(&ch, &phi, &q, &p)) else {
            worst = f64::INFINITY;
            break;
        };
        let ratio = a.trace_re() / (b.trace_re() + sc.num_antennas as f64);
        worst = worst.max((direct - ratio).abs() / direct);
    }
    Check { name: "sensing SINR forms", pass: worst <= 1e-9, detail: format!("max relative error {worst:.1e}") }
}

fn desk_run() -> Check {
    match optimize(&Scenario::desk(), Scheme::StarRsma) {
        Ok(r) => {
            let trace: Vec<f64> = std::iter::once(r.initial_gamma).chain(r.omega_trace.iter().copied()).collect();
            let monotone = trace.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6));
            Check {
                name: "desk-scale optimization",
                pass: r.feasible() && monotone,
                detail: format!("{:?}, gamma {:.6e}, {} outer iterations", r.status, r.gamma, r.outer_iters),
            }
        }
        Err(e) => Check { name: "desk-scale optimization", pass: false, detail: e.to_string() },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![min_eigenvalue(), infeasibility(), kronecker_trace(), sensing_forms(), desk_run()]
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use star_isac::conic::{self, ConicProblem, ConicSolution, LinExpr, Settings, Status};
use star_isac::numerics::{hermitian_eigvals, CMatrix, C64};

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&g + &g.adjoint()).scale_real(0.5)
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    &(&g * &g.adjoint()) + &CMatrix::identity(n).scale_real(0.1)
}

fn backends() -> [Settings; 2] {
    [Settings::default(), Settings::interior_point()]
}

fn run(p: &ConicProblem, st: &Settings) -> ConicSolution {
    conic::solve_with(p, st).unwrap()
}

fn min_eig_problem(c: &CMatrix) -> ConicProblem {
    let mut p = ConicProblem::new();
    let x = p.add_psd("X", c.rows());
    p.set_objective(LinExpr::new().psd(x, c.clone()));
    p.add_eq("trace", LinExpr::new().psd(x, CMatrix::identity(c.rows())), 1.0);
    p
}

#[test]
fn smallest_eigenvalue_family() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for inst in 0..50 {
        let n = 2 + inst % 7;
        let c = random_hermitian(&mut rng, n);
        let want = hermitian_eigvals(&c).unwrap()[0];
        for st in backends() {
            let s = run(&min_eig_problem(&c), &st);
            let tag = format!("instance {inst} with {:?}", st.backend);
            assert_eq!(s.status, Status::Optimal, "{tag}");
            assert!((s.objective - want).abs() <= 1e-5, "{tag}: {} vs {want}", s.objective);
            assert!(s.objective >= want - 1e-7 * (1.0 + want.abs()), "{tag}: below optimum by {:e}", want - s.objective);
            let ev = hermitian_eigvals(&s.psd_values[0]).unwrap();
            assert!(ev[0] >= -1e-7, "{tag}");
        }
    }
}

#[test]
fn diagonal_example_picks_first_axis() {
    let c = CMatrix::from_real_diag(&[1.0, 3.0]);
    for st in backends() {
        let s = run(&min_eig_problem(&c), &st);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6);
        let x = &s.psd_values[0];
        assert!((x[(0, 0)].re - 1.0).abs() < 1e-5 && x[(1, 1)].re.abs() < 1e-5);
    }
}

fn infeasible_program(kind: usize, rng: &mut ChaCha8Rng) -> ConicProblem {
    let n = rng.random_range(2..6);
    let mut p = ConicProblem::new();
    let x = p.add_psd("X", n);
    let id = CMatrix::identity(n);
    match kind % 5 {
        0 => {
            let a = rng.random_range(0.5..2.0);
            p.add_eq("t1", LinExpr::new().psd(x, id.clone()), a);
            p.add_eq("t2", LinExpr::new().psd(x, id), a + rng.random_range(0.5..2.0));
        }
        1 => {
            p.add_eq("neg trace", LinExpr::new().psd(x, id), -rng.random_range(0.1..3.0));
        }
        2 => {
            let mut e = CMatrix::zeros(n, n);
            e[(0, 0)] = C64::new(1.0, 0.0);
            p.add_ge("corner", LinExpr::new().psd(x, e), 1.0);
            p.add_le("trace", LinExpr::new().psd(x, id), rng.random_range(0.1..0.9));
        }
        3 => {
            let s = p.add_scalar("s");
            p.add_ge("lo", LinExpr::new().scalar(s, 1.0), 2.0);
            p.add_le("hi", LinExpr::new().scalar(s, 1.0).psd(x, id.clone()), 1.0);
            p.set_objective(LinExpr::new().psd(x, id));
        }
        _ => {
            let c = random_psd(rng, n);
            p.add_le("psd form", LinExpr::new().psd(x, c), -rng.random_range(0.1..1.0));
        }
    }
    p
}

#[test]
fn contradictory_programs_are_certified_infeasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for k in 0..20 {
        let p = infeasible_program(k, &mut rng);
        for st in backends() {
            let s = run(&p, &st);
            assert_eq!(s.status, Status::Infeasible, "program {k} with {:?}", st.backend);
        }
    }
}

#[test]
fn inequality_solutions_respect_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.random_range(2..6);
        let mut p = ConicProblem::new();
        let x = p.add_psd("X", n);
        let t = p.add_scalar("t");
        let a = random_psd(&mut rng, n);
        let b = random_hermitian(&mut rng, n);
        p.set_objective(LinExpr::new().psd(x, b).scalar(t, -1.0));
        p.add_le("power", LinExpr::new().psd(x, CMatrix::identity(n)), 2.0);
        p.add_ge("gain", LinExpr::new().psd(x, a).scalar(t, -1.0), 0.5);
        p.add_le("cap", LinExpr::new().scalar(t, 1.0), 1.0);
        let mut objs = Vec::new();
        for st in backends() {
            let s = run(&p, &st);
            assert_eq!(s.status, Status::Optimal, "{:?} it={} p={:e} d={:e} g={:e}", st.backend, s.iterations, s.primal_residual, s.dual_residual, s.gap);
            for c in &p.ineq_constraints {
                let v = c.expr.eval(&s.psd_values, &s.scalar_values);
                assert!(v <= c.rhs + 1e-7 * (1.0 + c.rhs.abs()), "{}: {v} > {}", c.label, c.rhs);
            }
            objs.push(s.objective);
        }
        assert!((objs[0] - objs[1]).abs() <= 1e-5 * (1.0 + objs[1].abs()), "{objs:?}");
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_hermitian(&mut rng, 5);
    let p = min_eig_problem(&c);
    for st in backends() {
        assert_eq!(run(&p, &st), run(&p, &st));
    }
}

#[test]
fn malformed_problem_is_rejected() {
    let mut p = ConicProblem::new();
    let x = p.add_psd("X", 2);
    p.add_eq("bad", LinExpr::new().psd(x + 1, CMatrix::identity(2)), 1.0);
    assert!(conic::solve(&p, 1e-7, 100).is_err());
}

#[test]
fn json_dump_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = random_hermitian(&mut rng, 3);
    let mut p = min_eig_problem(&c);
    let s = p.add_scalar("s");
    p.add_ge("s", LinExpr::new().scalar(s, 2.0).constant(1.0), 0.0);
    let back = ConicProblem::from_json(&p.to_json()).unwrap();
    assert_eq!(back, p);
}

#[test]
fn max_iters_returns_best_iterate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = random_hermitian(&mut rng, 6);
    let s = conic::solve(&min_eig_problem(&c), 1e-12, 20).unwrap();
    assert_eq!(s.status, Status::MaxIters);
    assert_eq!(s.iterations, 20);
    assert_eq!(s.psd_values[0].rows(), 6);
}

use std::f64::consts::PI;

use caplp_core::continuation::{newton, HomotopyProblem, Iterate, NewtonSettings};
use caplp_core::field::{CapField, CapGrid};
use caplp_core::audit::estimates_audit;
use caplp_core::geometry::{ell_at, CapParams};
use caplp_core::rotsym::{barrier_height_check, rotsym_sigma_k, solve_rotsym, RotProblem, RotProfile};
use caplp_core::solver::SolverSettings;

fn lift(profile: &RotProfile, n_phi: usize) -> CapField {
    let grid = CapGrid::new(profile.n_nodes(), n_phi, profile.theta).unwrap();
    CapField::from_fn(grid, |b, _| profile.value(b))
}

#[test]
fn manufactured_profiles_in_several_dimensions() {
    let theta = PI / 3.0;
    for (n, k, p) in [(2, 1, 1.5), (3, 2, 2.0), (4, 3, 2.5)] {
        let params = CapParams::new(n, k, p, theta).unwrap();
        let r: f64 = 1.3;
        let c = params.binom_nk() * r.powf(k as f64 + 1.0 - p);
        let mut errs = Vec::new();
        for nodes in [128, 256] {
            let (prof, rep) = solve_rotsym(|b| c * ell_at(theta, b).powf(1.0 - p), &params, nodes, &SolverSettings::default()).unwrap();
            assert!(rep.residual <= 1e-9);
            let err = (0..nodes).map(|i| (prof.s[i] - r * ell_at(theta, prof.beta(i))).abs()).fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[1] < 1e-4 && errs[0] / errs[1] > 3.5, "n={n} k={k}: {errs:?}");
    }
}

#[test]
fn unit_data_at_q_one_gives_model() {
    let theta = 0.9;
    let params = CapParams::new(3, 2, 2.0, theta).unwrap();
    let problem = RotProblem::fixed(params, 256, 1.0, |_| params.binom_nk(), 1e-10).unwrap();
    let mut x = Iterate::new((0..=256).map(|i| 1.1 * ell_at(theta, (i as f64 + 0.5) * theta / 256.0)).collect());
    let out = newton(&problem, 0.0, &mut x, &NewtonSettings::default());
    assert!(out.converged && problem.admissibility(&x).admissible);
    let v = x.values();
    let err = (0..256).map(|i| (v[i] - ell_at(theta, (i as f64 + 0.5) * theta / 256.0)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn bump_solution_passes_audits() {
    let theta = PI / 4.0;
    let params = CapParams::new(3, 2, 2.0, theta).unwrap();
    let phi = |b: f64| 1.0 + 0.5 * (-(b / 0.3).powi(2)).exp();
    let (prof, _) = solve_rotsym(phi, &params, 256, &SolverSettings::default()).unwrap();
    let s = lift(&prof, 16);
    let phi_field = CapField::from_fn(s.grid, |b, _| phi(b));
    let audit = estimates_audit(&s, &phi_field, &params).unwrap();
    assert!(audit.passed(), "{:?}", audit.failures());
    let barrier = barrier_height_check(&prof, &params);
    assert!(barrier.pass, "{barrier:?}");
    let sk = rotsym_sigma_k(&prof, &params);
    for (i, v) in sk.iter().enumerate() {
        let si = prof.s[i];
        assert!((v - si * phi(prof.beta(i))).abs() < 1e-8);
    }
}

#[test]
fn pole_becomes_umbilic_under_refinement() {
    let theta = PI / 3.0;
    let params = CapParams::new(2, 1, 1.5, theta).unwrap();
    let phi = |b: f64| 1.0 + 0.3 * (1.0 - b.cos());
    let gaps: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&nodes| {
            let (prof, _) = solve_rotsym(phi, &params, nodes, &SolverSettings::default()).unwrap();
            let (lr, lt) = prof.node_lambdas(0);
            (lr - lt).abs()
        })
        .collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn barrier_holds_along_a_data_family() {
    let theta = PI / 3.0;
    let params = CapParams::new(2, 1, 1.5, theta).unwrap();
    for a in [0.0, 1.0, 3.0, 9.0, 27.0] {
        let phi = |b: f64| 1.0 + a * (1.0 - b.cos()) / (1.0 - theta.cos());
        let (prof, _) = solve_rotsym(phi, &params, 256, &SolverSettings::default()).unwrap();
        let rep = barrier_height_check(&prof, &params);
        assert!(rep.pass && rep.margin >= 0.0, "a = {a}: {rep:?}");
    }
}

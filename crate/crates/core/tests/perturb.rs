mod common;

use common::*;
use proptest::prelude::*;
use specter_core::fixpoint::{solve_qbar, FixpointProblem, DEFAULT_MAX_ITER, DEFAULT_TOL};
use specter_core::perturb::*;
use specter_core::spectra::eig_sym_top;
use specter_core::{DenseMatrix, Error};

const SQRT_5: f64 = 2.236_067_977_499_79;

fn spiked(seed: u64, d: usize, lambdas: &[f64], noise: f64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = rng(seed);
    let v = orthonormal(&mut rng, d, lambdas.len());
    (with_spectrum(&v, lambdas), symmetric(&mut rng, d).scale(noise))
}

fn rect_instance(seed: u64, d1: usize, d2: usize, sigma: &[f64], noise: f64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = rng(seed);
    let u = orthonormal(&mut rng, d1, sigma.len());
    let v = orthonormal(&mut rng, d2, sigma.len());
    let us = DenseMatrix::from_fn(d1, sigma.len(), |i, j| u[(i, j)] * sigma[j]);
    (us.matmul_t(&v), gaussian(&mut rng, d1, d2).scale(noise))
}

#[test]
fn empirical_err_examples() {
    let mut rng = rng(1);
    let v = orthonormal(&mut rng, 6, 2);
    assert_eq!(empirical_err(&v, &v).unwrap(), 0.0);
    assert_eq!(empirical_err(&v, &v.scale(-1.0)).unwrap(), 0.0);

    let d = 10;
    let e1 = DenseMatrix::from_fn(d, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let tilted = DenseMatrix::from_fn(d, 1, |i, _| match i {
        0 => 2.0 / SQRT_5,
        1 => 1.0 / SQRT_5,
        _ => 0.0,
    });
    // Aligned: max(|2/√5 − 1|, 1/√5); flipped: 2/√5 + 1. The first wins.
    let expect = (2.0 / SQRT_5 - 1.0).abs().max(1.0 / SQRT_5);
    for hat in [tilted.clone(), tilted.scale(-1.0)] {
        assert!((empirical_err(&e1, &hat).unwrap() - expect).abs() < 1e-15);
    }
    // The single-coordinate gap quoted for this example.
    assert!(((2.0 / SQRT_5 - 1.0).abs() - 0.1056).abs() < 1e-4);

    assert!(matches!(
        empirical_err(&e1, &v),
        Err(Error::DimensionMismatch(_))
    ));
}

#[test]
fn zero_noise_gives_zero_bounds() {
    let (a, _) = spiked(2, 30, &[30.0, 20.0, 10.0], 0.0);
    let e = DenseMatrix::zeros(30, 30);
    assert_eq!(bound_sym_bulk(&a, &e, 3).unwrap(), (0.0, true));
    let (indiv, ok) = bound_sym_indiv(&a, &e, 3, None).unwrap();
    assert_eq!(indiv, 0.0);
    assert!(ok);
    let (w, valid) = bound_l2_wedin(&a, &e, 3).unwrap();
    assert_eq!(w, 0.0);
    assert!(valid);

    let (ra, _) = rect_instance(3, 12, 20, &[9.0, 4.0], 0.0);
    let re = DenseMatrix::zeros(12, 20);
    let b = bound_rect(&ra, &re, 2, None).unwrap();
    assert_eq!((b.bound_u, b.bound_v), (0.0, 0.0));
    assert!(b.precond);
}

#[test]
fn bounds_are_scale_invariant() {
    let (a, e) = spiked(4, 40, &[500.0, 300.0], 0.05);
    let (a2, e2) = (a.scale(2.0), e.scale(2.0));
    let (b1, p1) = bound_sym_indiv(&a, &e, 2, None).unwrap();
    let (b2, p2) = bound_sym_indiv(&a2, &e2, 2, None).unwrap();
    assert_eq!(p1, p2);
    assert!((b1 - b2).abs() <= 1e-12 * b1);
    let (c1, q1) = bound_sym_bulk(&a, &e, 2).unwrap();
    let (c2, q2) = bound_sym_bulk(&a2, &e2, 2).unwrap();
    assert_eq!(q1, q2);
    assert!((c1 - c2).abs() <= 1e-12 * c1);
}

#[test]
fn noise_scaling_is_linear_and_bounds_monotone() {
    let (a, e) = spiked(5, 35, &[400.0, 250.0, 100.0], 0.2);
    let base = SymmetricQuantities::new(&a, &e, 3, None).unwrap();
    let mut last = (0.0, 0.0, 0.0);
    for k in 1..=10 {
        let t = k as f64 / 10.0;
        let q = SymmetricQuantities::new(&a, &e.scale(t), 3, None).unwrap();
        for (x, y) in [(q.tau, base.tau), (q.kappa, base.kappa), (q.e_spectral, base.e_spectral)] {
            assert!((x - t * y).abs() <= 1e-12 * y, "{x} vs {t}·{y}");
        }
        let now = (q.bound_bulk(), q.bound_indiv(), q.bound_l2_wedin().0);
        assert!(now.0 >= last.0 && now.1 >= last.1 && now.2 >= last.2);
        last = now;
    }
}

#[test]
fn small_isolation_radius_fails_precondition() {
    let (a, e) = spiked(6, 30, &[1000.0, 600.0], 0.01);
    let q = SymmetricQuantities::new(&a, &e, 2, None).unwrap();
    let (b, ok) = bound_sym_indiv(&a, &e, 2, Some(0.5 * q.e_spectral)).unwrap();
    assert!(!ok);
    assert!(b.is_finite() && b > q.bound_indiv());
}

#[test]
fn negative_gap_gives_infinite_bounds() {
    // A rank-six tail of size 0.9 carries more ∞-norm mass than λ1 = 1.
    let (a, e) = spiked(7, 20, &[1.0, 0.9, 0.9, 0.9, 0.9, 0.9], 0.1);
    let q = SymmetricQuantities::new(&a, &e, 1, None).unwrap();
    assert!(q.gap() <= 0.0);
    assert_eq!(q.omega(), f64::INFINITY);
    assert_eq!(q.bound_indiv(), f64::INFINITY);
    assert!(!q.precond_bulk() && !q.precond_indiv());
}

#[test]
fn wedin_boundary() {
    let a = DenseMatrix::from_diag(&[2.0, 0.0, 0.0]);
    let e = DenseMatrix::from_diag(&[0.0, 0.0, 1.0]);
    let (b, valid) = bound_l2_wedin(&a, &e, 1).unwrap();
    assert!((b - std::f64::consts::SQRT_2).abs() < 1e-12);
    assert!(valid);
    let (_, invalid) = bound_l2_wedin(&a, &e.scale(1.5), 1).unwrap();
    assert!(!invalid);
}

#[test]
fn report_invariants() {
    let (a, e) = spiked(8, 50, &[900.0, 500.0, 200.0], 0.1);
    let rep = PerturbationReport::compute(&a, &e, 3, BoundMode::Sym, None).unwrap();
    let r = rep.r as f64;
    assert!(rep.kappa <= (r * rep.mu).sqrt() * rep.tau * (1.0 + 1e-10));
    let gap = 200.0 - rep.epsilon;
    let omega = 8.0 * (1.0 + r * rep.mu) * rep.kappa / gap;
    assert!((rep.omega - omega).abs() <= 1e-8 * omega);
    assert_eq!(rep.bound_indiv_u, rep.bound_indiv_v);
    assert_eq!(rep.err_empirical_u, rep.err_empirical_v);
    // Symmetric identities between the plain and balanced quantities.
    assert!((rep.mu0 - rep.mu).abs() < 1e-12);
    assert!((rep.tau0 - rep.tau).abs() <= 1e-12 * rep.tau);
    assert!((rep.kappa0 - rep.kappa).abs() <= 1e-12 * rep.kappa);

    let json = serde_json::to_value(&rep).unwrap();
    for key in [
        "d1", "d2", "r", "mu", "mu0", "tau", "tau0", "kappa", "kappa0", "epsilon", "epsilon0",
        "gamma0", "delta", "delta0", "omega", "omega0", "E_spectral", "bound_bulk", "bound_indiv",
        "bound_l2_wedin", "precond_bulk", "precond_indiv", "precond_match", "err_empirical_u",
        "err_empirical_v",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn symmetric_pair_through_rect_path() {
    let (a, e) = spiked(9, 30, &[800.0, 400.0], 0.02);
    let rect = PerturbationReport::compute(&a, &e, 2, BoundMode::Rect, None).unwrap();
    assert_eq!(rect.bound_indiv_u, rect.bound_indiv_v);
    let sym = PerturbationReport::compute(&a, &e, 2, BoundMode::Sym, None).unwrap();
    for (x, y) in [
        (rect.mu0, sym.mu0),
        (rect.tau0, sym.tau0),
        (rect.kappa0, sym.kappa0),
        (rect.epsilon0, sym.epsilon0),
        (rect.delta0, sym.delta0),
        (rect.omega0, sym.omega0),
        (rect.gamma0, sym.gamma0),
        (rect.e_spectral, sym.e_spectral),
    ] {
        assert!((x - y).abs() <= 1e-8 * (1.0 + y.abs()), "{x} vs {y}");
    }
    assert!((rect.bound_indiv - sym_rect_bound(&sym)).abs() <= 1e-8 * rect.bound_indiv);
}

// The rectangular bound formula evaluated on the symmetric report's fields;
// the instance has σ_r = 400.
fn sym_rect_bound(s: &PerturbationReport) -> f64 {
    let r = s.r as f64;
    let w = 107.0 * r.powf(2.5) * s.mu0.sqrt() * (1.0 + r * s.mu0) * s.kappa0 / (400.0 - s.epsilon0)
        + 12.0 * r.powf(1.5) * s.mu0.sqrt() * s.e_spectral / s.delta0;
    std::f64::consts::SQRT_2 * w / (s.d1 as f64).sqrt()
}

#[test]
fn incoherent_counterexample() {
    let d = 10;
    let mut a = DenseMatrix::zeros(d, d);
    a[(0, 0)] = d as f64;
    let mut e = DenseMatrix::zeros(d, d);
    e[(1, 0)] = d as f64 / 2.0;
    let rep = PerturbationReport::compute(&a, &e, 1, BoundMode::Rect, None).unwrap();
    assert_eq!(rep.mu0, d as f64);
    assert!(!rep.precond_indiv && !rep.precond_match);
    assert!(rep.err_empirical_u > 0.4);
    assert_eq!(rep.tau0, 5.0);
}

#[test]
fn sqrt_d_separation_from_wedin() {
    let mut ratios = Vec::new();
    let ds = [100usize, 200, 400, 800];
    for &d in &ds {
        let mut rng = rng(10 + d as u64);
        let v = orthonormal(&mut rng, d, 3);
        let a = with_spectrum(&v, &[300.0, 200.0, 100.0]);
        let e = sparse_rows_noise(&mut rng, d, 10, 3.0);
        let q = SymmetricQuantities::new(&a, &e, 3, None).unwrap();
        ratios.push(q.bound_l2_wedin().0 / q.bound_indiv());
    }
    for (k, &d) in ds.iter().enumerate() {
        let growth = ratios[k] / ratios[0];
        let expect = (d as f64 / 100.0).sqrt();
        assert!(growth <= 4.0 * expect && growth >= expect / 4.0, "d={d}: {growth} vs {expect}");
    }
}

fn sym_case(seed: u64, d: usize, r: usize, noise: f64) -> Result<bool, TestCaseError> {
    let base = 1e5;
    let lambdas: Vec<f64> = (0..r).map(|i| base * (r - i) as f64).collect();
    let (a, e) = spiked(seed, d, &lambdas, noise);
    let rep = PerturbationReport::compute(&a, &e, r, BoundMode::Sym, None).unwrap();
    if rep.precond_indiv {
        prop_assert!(rep.err_empirical_u <= rep.bound_indiv, "{} > {}", rep.err_empirical_u, rep.bound_indiv);
    }
    if rep.wedin_valid {
        prop_assert!(rep.err_l2_empirical <= rep.bound_l2_wedin);
    }
    let p = FixpointProblem::new(&a, &e, r).unwrap();
    let q = SymmetricQuantities::new(&a, &e, r, None).unwrap();
    if q.precond_bulk() {
        let sol = solve_qbar(&p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        prop_assert!(sol.vbar.sub(&p.v).max_abs() <= q.bound_bulk());
    }
    Ok(rep.precond_indiv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn symmetric_bound_dominates(seed in any::<u64>(), d in 10usize..60, r in 1usize..4, log_noise in -4.0f64..1.0) {
        sym_case(seed, d, r, 10f64.powf(log_noise))?;
    }

    #[test]
    fn rectangular_bound_dominates(
        seed in any::<u64>(), d1 in 8usize..40, d2 in 8usize..40, r in 1usize..3, log_noise in -4.0f64..0.0,
    ) {
        let sigma: Vec<f64> = (0..r).map(|i| 1e5 * (r - i) as f64).collect();
        let (a, e) = rect_instance(seed, d1, d2, &sigma, 10f64.powf(log_noise));
        let rep = PerturbationReport::compute(&a, &e, r, BoundMode::Rect, None).unwrap();
        if rep.precond_indiv {
            prop_assert!(rep.err_empirical_u <= rep.bound_indiv_u);
            prop_assert!(rep.err_empirical_v <= rep.bound_indiv_v);
        }
        if rep.wedin_valid {
            prop_assert!(rep.err_l2_empirical <= rep.bound_l2_wedin);
        }
    }
}

#[test]
fn dominance_preconditions_are_reachable() {
    let hits = (0..40u64)
        .filter(|&s| sym_case(s, 30, 2, 0.01).unwrap())
        .count();
    assert!(hits >= 30, "precondition held in only {hits}/40 cases");
    let (a, e) = spiked(99, 30, &[2e5, 1e5], 0.01);
    let top = eig_sym_top(&a.add(&e), 2).unwrap();
    assert_eq!(top.values.len(), 2);
}

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use specter_core::robust::*;
use specter_core::spectra::{eig_sym_top, subspace_distance};
use specter_core::{DenseMatrix, Error};

fn panel(rows: &[&[f64]]) -> DataPanel {
    DataPanel::new(DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap())
        .unwrap()
}

fn huber_objective(z: &[f64], alpha: f64, mu: f64) -> f64 {
    z.iter()
        .map(|x| {
            let r = (x - mu).abs();
            if r <= alpha {
                r * r
            } else {
                2.0 * alpha * r - alpha * alpha
            }
        })
        .sum()
}

/// Grid search with step 1e-5: a coarse pass, then a fine pass around the
/// coarse winner (valid because the objective is convex). When the minimum is
/// attained on a flat stretch, the midpoint of that stretch is returned.
fn grid_minimiser(z: &[f64], alpha: f64) -> f64 {
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let grid = |a: f64, b: f64, step: f64| -> Vec<(f64, f64)> {
        let steps = ((b - a) / step).ceil() as usize;
        (0..=steps)
            .map(|k| {
                let mu = (a + k as f64 * step).min(b);
                (mu, huber_objective(z, alpha, mu))
            })
            .collect()
    };
    let flat_mid = |pts: &[(f64, f64)]| {
        let best = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * (1.0 + best.abs());
        let near: Vec<f64> = pts.iter().filter(|p| p.1 <= best + tol).map(|p| p.0).collect();
        (near[0], near[near.len() - 1])
    };
    let (a, b) = flat_mid(&grid(lo, hi, 1e-2));
    let (a, _) = flat_mid(&grid((a - 2e-2).max(lo), (a + 2e-2).min(hi), 1e-5));
    let (_, b) = flat_mid(&grid((b - 2e-2).max(lo), (b + 2e-2).min(hi), 1e-5));
    0.5 * (a + b)
}

#[test]
fn huber_entry_examples() {
    assert_eq!(huber_entry(&[3.5; 7], 0.1), 3.5);
    let z = [1.0, 4.0, -2.0, 9.0];
    let mean = z.iter().sum::<f64>() / 4.0;
    assert!((huber_entry(&z, 100.0) - mean).abs() < 1e-10);
    assert_eq!(huber_entry(&z, f64::INFINITY), mean);

    let z = [0.0, 0.0, 0.0, 100.0];
    let got = huber_entry(&z, 1.0);
    assert!((got - grid_minimiser(&z, 1.0)).abs() <= 1e-4);
    // Stationarity by hand: three residuals −μ inside the band, one clipped at
    // +1, so −3μ + 1 = 0.
    assert!((got - 1.0 / 3.0).abs() < 1e-10);
}

#[test]
fn huber_entry_matches_grid_search() {
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(3..25);
        let z: Vec<f64> = (0..n)
            .map(|_| {
                let t: f64 = StudentT::new(2.5).unwrap().sample(&mut rng);
                t * 2.0
            })
            .collect();
        let alpha = rng.random_range(0.1..5.0);
        worst = worst.max((huber_entry(&z, alpha) - grid_minimiser(&z, alpha)).abs());
    }
    assert!(worst <= 1e-4, "worst {worst:e}");
}

#[test]
fn huber_entry_flat_segment_midpoint() {
    // Two points 10 apart with α = 1: ψ vanishes on [1, 9].
    let got = huber_entry(&[0.0, 10.0], 1.0);
    assert!((got - 5.0).abs() < 1e-10);
}

proptest! {
    #[test]
    fn huber_translation_equivariant(
        z in prop::collection::vec(-50.0f64..50.0, 1..30), alpha in 0.05f64..20.0, c in -100.0f64..100.0,
    ) {
        let shifted: Vec<f64> = z.iter().map(|x| x + c).collect();
        let tol = 1e-10 * (1.0 + 200.0);
        prop_assert!((huber_entry(&shifted, alpha) - huber_entry(&z, alpha) - c).abs() <= tol);
    }

    #[test]
    fn huber_monotone_in_each_point(
        z in prop::collection::vec(-50.0f64..50.0, 2..20), alpha in 0.05f64..20.0, k in any::<prop::sample::Index>(), bump in 0.0f64..30.0,
    ) {
        let mut up = z.clone();
        let i = k.index(z.len());
        up[i] += bump;
        prop_assert!(huber_entry(&up, alpha) >= huber_entry(&z, alpha) - 1e-10 * 100.0);
    }

    #[test]
    fn kendall_invariant_under_monotone_maps(seed in any::<u64>(), n in 2usize..25, d in 1usize..5) {
        let mut rng = rng(seed);
        let x = gaussian(&mut rng, n, d);
        let mapped = DenseMatrix::from_fn(n, d, |t, j| match j % 3 {
            0 => x[(t, j)].exp(),
            1 => x[(t, j)].powi(3) + 2.0,
            _ => x[(t, j)].atan(),
        });
        let a = kendall_tau_matrix(&DataPanel::new(x).unwrap()).unwrap();
        let b = kendall_tau_matrix(&DataPanel::new(mapped).unwrap()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn spatial_is_shift_and_scale_invariant(seed in any::<u64>(), n in 2usize..15, d in 1usize..5, k in -4i32..5) {
        let mut rng = rng(seed);
        // Small integers keep differences exact, and power-of-two scaling is exact.
        let x = DenseMatrix::from_fn(n, d, |_, _| rng.random_range(-20i32..20) as f64);
        let shift: Vec<f64> = (0..d).map(|_| rng.random_range(-1000i32..1000) as f64).collect();
        let s = 2f64.powi(k);
        let moved = DenseMatrix::from_fn(n, d, |t, j| (x[(t, j)] + shift[j]) * s);
        let a = kendall_spatial(&DataPanel::new(x).unwrap());
        let b = kendall_spatial(&DataPanel::new(moved).unwrap());
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert!((a.trace() - 1.0).abs() < 1e-12);
                prop_assert!(a.is_symmetric(0.0));
            }
            (Err(Error::Degenerate(_)), Err(Error::Degenerate(_))) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

#[test]
fn sample_cov_examples() {
    let s = sample_cov(&panel(&[&[1.0, 0.0], &[-1.0, 0.0]]), false);
    assert_eq!(s.sigma_hat, DenseMatrix::from_diag(&[1.0, 0.0]));
    assert_eq!(s.method, EstimatorKind::Sample);
    let z = sample_cov(&DataPanel::new(DenseMatrix::zeros(4, 3)).unwrap(), false);
    assert_eq!(z.sigma_hat, DenseMatrix::zeros(3, 3));

    let mut rng = rng(12);
    let x = gaussian(&mut rng, 5, 3);
    let got = sample_cov(&DataPanel::new(x.clone()).unwrap(), false).sigma_hat;
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for t in 0..5 {
                acc += x[(t, i)] * x[(t, j)];
            }
            assert!((got[(i, j)] - acc / 5.0).abs() < 1e-12);
        }
    }

    let c = sample_cov(&panel(&[&[3.0, 1.0], &[5.0, 1.0]]), true);
    assert!(c.centered);
    assert_eq!(c.sigma_hat, DenseMatrix::from_diag(&[1.0, 0.0]));
}

#[test]
fn huber_cov_quadratic_regime_equals_sample() {
    let mut rng = rng(13);
    let x = DataPanel::new(gaussian(&mut rng, 30, 4)).unwrap();
    let cfg = HuberConfig::with_alpha(1.0, 1e6).unwrap();
    let h = huber_cov(&x, &cfg).sigma_hat;
    let s = sample_cov(&x, false).sigma_hat;
    assert!(h.sub(&s).max_abs() <= 1e-8);
    assert!(h.is_symmetric(0.0));
}

#[test]
fn huber_cov_single_observation() {
    let x = panel(&[&[2.0, -3.0, 0.5]]);
    let cfg = HuberConfig::with_alpha(1.0, 0.01).unwrap();
    let h = huber_cov(&x, &cfg).sigma_hat;
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(h[(i, j)], x.values()[(0, i)] * x.values()[(0, j)]);
        }
    }
}

#[test]
fn huber_config_rules() {
    let c = HuberConfig::from_rule(200, 50, 2.0, AlphaRule::Confidence).unwrap();
    let expect = (200.0 * 4.0 / (3.0 * 50f64.ln())).sqrt();
    assert!((c.alpha - expect).abs() < 1e-12);
    assert!((c.epsilon_conf - 50f64.powi(-3)).abs() < 1e-18);
    assert!(c.valid);
    let l = HuberConfig::from_rule(200, 50, 2.0, AlphaRule::Literal).unwrap();
    assert!((l.alpha - (3.0 * 200.0 * 4.0 * 50f64.ln()).sqrt()).abs() < 1e-10);
    let one = HuberConfig::from_rule(10, 1, 1.0, AlphaRule::Confidence).unwrap();
    assert_eq!(one.alpha, f64::INFINITY);
    let small_n = HuberConfig::from_rule(20, 50, 1.0, AlphaRule::Confidence).unwrap();
    assert!(!small_n.valid);
    assert!(HuberConfig::from_rule(20, 5, 0.0, AlphaRule::Confidence).is_err());
}

#[test]
fn huber_tracks_sample_on_light_tails() {
    let mut rng = rng(14);
    let (n, d) = (4000, 5);
    let x = DataPanel::new(gaussian(&mut rng, n, d)).unwrap();
    // Var(X_i X_j) ≤ 2 for standard normals.
    let v = 2f64.sqrt();
    let cfg = HuberConfig::from_rule(n, d, v, AlphaRule::Confidence).unwrap();
    let h = huber_cov(&x, &cfg).sigma_hat;
    let s = sample_cov(&x, false).sigma_hat;
    let radius = 4.0 * v * (3.0 * (d as f64).ln() / n as f64).sqrt();
    assert!(h.sub(&s).max_abs() <= radius);
    assert!(h.sub(&DenseMatrix::identity(d)).max_abs() <= radius);
}

#[test]
fn plugin_v_on_constant_products() {
    let x = panel(&[&[1.0, 1.0], &[-1.0, -1.0], &[1.0, 1.0]]);
    assert_eq!(plugin_v(&x), 0.0);
    assert_eq!(plugin_v(&panel(&[&[3.0]])), 0.0);
    let y = panel(&[&[1.0], &[2.0]]);
    // Products 1 and 4: sample sd = 3/√2.
    assert!((plugin_v(&y) - 3.0 / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn kendall_examples() {
    let conc = panel(&[&[1.0, 10.0], &[2.0, 20.0], &[3.0, 35.0], &[4.0, 36.0]]);
    assert_eq!(kendall_tau_matrix(&conc).unwrap()[(0, 1)], 1.0);
    let disc = panel(&[&[1.0, 2.0], &[2.0, 1.0]]);
    let t = kendall_tau_matrix(&disc).unwrap();
    assert_eq!(t[(0, 1)], -1.0);
    assert_eq!(t[(0, 0)], 1.0);
    assert!(matches!(
        kendall_tau_matrix(&panel(&[&[1.0, 2.0]])),
        Err(Error::InvalidParameter(_))
    ));
}

fn bivariate(rng: &mut rand_chacha::ChaCha8Rng, n: usize, rho: f64) -> DataPanel {
    let c = (1.0 - rho * rho).sqrt();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        rows.push(vec![a, rho * a + c * b]);
    }
    DataPanel::new(DenseMatrix::from_rows(&rows).unwrap()).unwrap()
}

#[test]
fn kendall_sine_transform_recovers_correlation() {
    let mut rng = rng(15);
    let x = bivariate(&mut rng, 2000, 0.5);
    let tau = kendall_tau_matrix(&x).unwrap()[(0, 1)];
    let r = (std::f64::consts::FRAC_PI_2 * tau).sin();
    assert!((r - 0.5).abs() <= 0.05, "{r}");
}

#[test]
fn marginal_examples() {
    let mut rng = rng(16);
    let x = DataPanel::new(gaussian(&mut rng, 40, 3)).unwrap();
    let tau = kendall_tau_matrix(&x).unwrap();
    let r = kendall_marginal_cov(&x, &[1.0; 3]).unwrap().sigma_hat;
    for j in 0..3 {
        for k in 0..3 {
            let expect = if j == k { 1.0 } else { (std::f64::consts::FRAC_PI_2 * tau[(j, k)]).sin() };
            assert_eq!(r[(j, k)], expect);
        }
    }
    let one = DataPanel::new(gaussian(&mut rng, 5, 1)).unwrap();
    assert_eq!(kendall_marginal_cov(&one, &[3.0]).unwrap().sigma_hat, DenseMatrix::from_diag(&[9.0]));
    assert!(matches!(kendall_marginal_cov(&x, &[1.0, 0.0, 1.0]), Err(Error::InvalidParameter(_))));
    assert!(matches!(kendall_marginal_cov(&x, &[1.0]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn marginal_independent_columns_is_diagonal() {
    let mut rng = rng(17);
    let sd = [1.0, 2.0, 0.5];
    let x = DataPanel::new(gaussian(&mut rng, 1500, 3)).unwrap();
    let s = kendall_marginal_cov(&x, &sd).unwrap().sigma_hat;
    for j in 0..3 {
        for k in 0..3 {
            let target = if j == k { sd[j] * sd[j] } else { 0.0 };
            assert!((s[(j, k)] - target).abs() <= 0.1 * sd[j] * sd[k], "({j},{k}) {}", s[(j, k)]);
        }
    }
}

#[test]
fn spatial_examples() {
    let two = kendall_spatial(&panel(&[&[1.0, 2.0], &[4.0, 6.0]])).unwrap();
    let expect = DenseMatrix::from_rows(&[vec![9.0 / 25.0, 12.0 / 25.0], vec![12.0 / 25.0, 16.0 / 25.0]]).unwrap();
    assert!(two.sub(&expect).max_abs() < 1e-15);
    assert!((two.trace() - 1.0).abs() < 1e-15);

    let axis = kendall_spatial(&panel(&[&[0.0, 1.0, 0.0], &[0.0, -2.0, 0.0], &[0.0, 5.0, 0.0]])).unwrap();
    let mut e = DenseMatrix::zeros(3, 3);
    e[(1, 1)] = 1.0;
    assert_eq!(axis, e);

    let dup = panel(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
    assert!(matches!(kendall_spatial(&dup), Err(Error::Degenerate(_))));
    // Duplicates are skipped, not counted.
    let some = kendall_spatial(&panel(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 3.0]])).unwrap();
    assert!((some[(1, 1)] - 1.0).abs() < 1e-15);
}

/// Elliptical t3 rows with covariance shape `V diag(spikes) Vᵀ + I`.
fn elliptical_t3(rng: &mut rand_chacha::ChaCha8Rng, v: &DenseMatrix, spikes: &[f64], n: usize) -> DataPanel {
    let (d, r) = v.shape();
    let chi = ChiSquared::new(3.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let f: Vec<f64> = (0..r).map(|k| spikes[k].sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let w: f64 = chi.sample(rng);
        let scale = (3.0 / w).sqrt();
        rows.push(
            (0..d)
                .map(|i| {
                    let z: f64 = rng.sample(StandardNormal);
                    scale * ((0..r).map(|k| v[(i, k)] * f[k]).sum::<f64>() + z)
                })
                .collect(),
        );
    }
    DataPanel::new(DenseMatrix::from_rows(&rows).unwrap()).unwrap()
}

#[test]
fn spatial_beats_sample_on_heavy_tails() {
    let (d, r, n) = (30, 2, 100);
    let mut spatial = Vec::new();
    let mut sample = Vec::new();
    for rep in 0..21 {
        let mut rng = rng(100 + rep);
        let v = orthonormal(&mut rng, d, r);
        let x = elliptical_t3(&mut rng, &v, &[20.0, 10.0], n);
        let ks = eig_sym_top(&kendall_spatial(&x).unwrap(), r).unwrap().vectors;
        let sc = eig_sym_top(&sample_cov(&x, false).sigma_hat, r).unwrap().vectors;
        spatial.push(subspace_distance(&v, &ks).unwrap());
        sample.push(subspace_distance(&v, &sc).unwrap());
    }
    spatial.sort_by(f64::total_cmp);
    sample.sort_by(f64::total_cmp);
    assert!(spatial[10] < sample[10], "median {} vs {}", spatial[10], sample[10]);
}

#[test]
fn empty_panel_rejected() {
    assert_eq!(DataPanel::new(DenseMatrix::zeros(0, 2)), Err(Error::EmptyMatrix));
}

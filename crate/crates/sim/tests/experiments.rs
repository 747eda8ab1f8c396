use specter_sim::*;

fn perturb_cfg() -> PerturbExperimentConfig {
    PerturbExperimentConfig {
        d_grid: vec![40, 80],
        r: 2,
        gamma: Some(60.0),
        gamma_sqrt_d: None,
        mechanism: Mechanism::SparseRows { s: 5, l: 3.0 },
        replications: 3,
        seed: 17,
    }
}

fn factor_cfg(methods: Vec<u8>) -> FactorExperimentConfig {
    FactorExperimentConfig {
        d_grid: vec![20],
        n_rule: NRule::Fixed(30),
        r: 2,
        dist: FactorDist::IidT { nu: Nu::new(3.0).unwrap() },
        methods,
        replications: 4,
        seed: 3,
    }
}

fn csv_of(rows: &[ResultRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn perturb_rows_are_reproducible_and_thread_invariant() {
    let cfg = perturb_cfg();
    let one = with_threads(Some(1), || run_perturb_experiment(&cfg)).unwrap().unwrap();
    let four = with_threads(Some(4), || run_perturb_experiment(&cfg)).unwrap().unwrap();
    assert_eq!(csv_of(&one), csv_of(&four));
    let single = PerturbExperimentConfig { replications: 1, ..cfg };
    assert_eq!(csv_of(&run_perturb_experiment(&single).unwrap()), csv_of(&run_perturb_experiment(&single).unwrap()));
}

#[test]
fn perturb_aggregates_are_consistent() {
    let cfg = perturb_cfg();
    let rows = run_perturb_experiment(&cfg).unwrap();
    let label = cfg.label();
    assert_eq!(label, "gamma=60");
    for &d in &cfg.d_grid {
        let errs: Vec<f64> = (0..3).map(|rep| find_value(&rows, Some(d), &label, Some(rep), "err").unwrap()).collect();
        let max = errs.iter().copied().fold(0.0, f64::max);
        assert_eq!(find_value(&rows, Some(d), &label, None, "err_max"), Some(max));
        let scaled = find_value(&rows, Some(d), &label, None, "err_max_scaled").unwrap();
        assert!((scaled - max * 60.0 * (d as f64).sqrt()).abs() <= 1e-12 * scaled);
        assert!(errs.iter().all(|e| *e > 0.0 && *e < 1.0));
    }
    let m: Vec<f64> = cfg.d_grid.iter().map(|&d| find_value(&rows, Some(d), &label, None, "err_max").unwrap()).collect();
    let slope = find_value(&rows, None, &label, None, "slope").unwrap();
    assert!((slope - (m[1] / m[0]).ln() / 2f64.ln()).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| (&w[0].experiment, w[0].d, &w[0].param, w[0].rep, &w[0].metric)
        <= (&w[1].experiment, w[1].d, &w[1].param, w[1].rep, &w[1].metric)));
}

#[test]
fn gamma_sqrt_d_scales_gap() {
    let cfg = PerturbExperimentConfig { gamma: None, gamma_sqrt_d: Some(400.0), ..perturb_cfg() };
    assert_eq!(cfg.gamma_at(100), 40.0);
    let rows = run_perturb_experiment(&cfg).unwrap();
    assert_eq!(find_value(&rows, Some(80), "gamma_sqrt_d=400", None, "gamma"), Some(400.0 / 80f64.sqrt()));
}

#[test]
fn perturb_config_validation() {
    let both = PerturbExperimentConfig { gamma_sqrt_d: Some(1.0), ..perturb_cfg() };
    assert!(matches!(both.validate(), Err(SimError::Config(_))));
    let neither = PerturbExperimentConfig { gamma: None, ..perturb_cfg() };
    assert!(neither.validate().is_err());
    let descending = PerturbExperimentConfig { d_grid: vec![80, 40], ..perturb_cfg() };
    assert!(descending.validate().is_err());
    let bad_rho = PerturbExperimentConfig { mechanism: Mechanism::Toeplitz { l_prime: 1.0, rho: 1.5 }, ..perturb_cfg() };
    assert!(run_perturb_experiment(&bad_rho).is_err());
}

#[test]
fn perturb_config_json() {
    let text = r#"{"d_grid":[100,200],"gamma":500,"mechanism":{"sparse_rows":{"s":10,"L":3}},"replications":20,"seed":1}"#;
    let cfg: PerturbExperimentConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.r, 3);
    assert_eq!(cfg.mechanism, Mechanism::SparseRows { s: 10, l: 3.0 });
    let text = r#"{"d_grid":[100],"gamma_sqrt_d":2000,"mechanism":{"toeplitz":{"L_prime":7.5,"rho":0.5}},"replications":2,"seed":1}"#;
    let cfg: PerturbExperimentConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.mechanism, Mechanism::Toeplitz { l_prime: 7.5, rho: 0.5 });
    let round: PerturbExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(round, cfg);
    assert!(serde_json::from_str::<PerturbExperimentConfig>(r#"{"d_grid":[1],"gama":1}"#).is_err());
}

#[test]
fn factor_config_json() {
    let text = r#"{"d_grid":[100],"n_rule":"half_d","r":3,"dist":{"mvt":{"nu":"inf"}},"methods":[1,2],"replications":5,"seed":9}"#;
    let cfg: FactorExperimentConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.n_rule.n_for(100), 50);
    assert!(cfg.dist.nu().is_gaussian());
    let text = r#"{"d_grid":[100],"n_rule":{"fixed":50},"dist":{"iid_t":{"nu":3}},"methods":[2],"replications":5,"seed":9}"#;
    let cfg: FactorExperimentConfig = serde_json::from_str(text).unwrap();
    assert_eq!(cfg.n_rule, NRule::Fixed(50));
    assert_eq!(cfg.r, 3);
    assert!(FactorExperimentConfig { methods: vec![5], ..cfg.clone() }.validate().is_err());
    assert!(FactorExperimentConfig { methods: vec![], ..cfg }.validate().is_err());
}

#[test]
fn method_one_alone_has_unit_ratios() {
    let rows = run_factor_experiment(&factor_cfg(vec![1])).unwrap();
    let ratios: Vec<&ResultRow> = rows.iter().filter(|r| r.metric.starts_with("ratio_")).collect();
    assert_eq!(ratios.len(), 4 * 3);
    assert!(ratios.iter().all(|r| r.value == 1.0));
    assert!(rows.iter().all(|r| r.param == "method=1"));
    assert!(rows.iter().all(|r| r.metric != "failed"));
}

#[test]
fn factor_rows_cover_every_method_and_are_thread_invariant() {
    let cfg = factor_cfg(vec![4, 2, 3, 1]);
    let one = with_threads(Some(1), || run_factor_experiment(&cfg)).unwrap().unwrap();
    let three = with_threads(Some(3), || run_factor_experiment(&cfg)).unwrap().unwrap();
    assert_eq!(csv_of(&one), csv_of(&three));
    for k in 1..=4 {
        let param = format!("method={k}");
        for rep in 0..4 {
            // Method 4 pairs eigenvectors of one matrix with another matrix, so its
            // residual can have a negative variance; that replication is then a
            // `failed` row instead of a metric.
            let failed = find_value(&one, Some(20), &param, Some(rep), "failed").is_some();
            assert!(!failed || k == 4, "{param} rep {rep} failed");
            for metric in ["err_u_spectral", "err_precision", "err_relative_frob"] {
                let v = find_value(&one, Some(20), &param, Some(rep), metric);
                assert_eq!(v.is_none(), failed);
                assert!(v.is_none_or(|v| v.is_finite() && v > 0.0), "{param} {metric} = {v:?}");
            }
        }
        let med = find_value(&one, Some(20), &param, None, "median_ratio_err_relative_frob").unwrap();
        assert!(med.is_finite());
    }
    // Ratios are the method value over the method-1 value of the same replication.
    let m2 = find_value(&one, Some(20), "method=2", Some(1), "err_relative_frob").unwrap();
    let m1 = find_value(&one, Some(20), "method=1", Some(1), "err_relative_frob").unwrap();
    assert_eq!(find_value(&one, Some(20), "method=2", Some(1), "ratio_err_relative_frob"), Some(m2 / m1));
}

#[test]
fn baseline_is_computed_when_not_requested() {
    let with = run_factor_experiment(&factor_cfg(vec![1, 2])).unwrap();
    let without = run_factor_experiment(&factor_cfg(vec![2])).unwrap();
    let pick = |rows: &[ResultRow]| find_value(rows, Some(20), "method=2", Some(2), "ratio_err_u_spectral");
    assert_eq!(pick(&with), pick(&without));
    assert!(without.iter().all(|r| r.param == "method=2"));
}

#[test]
fn csv_round_trip() {
    let rows = run_perturb_experiment(&perturb_cfg()).unwrap();
    let text = csv_of(&rows);
    assert!(text.starts_with("experiment,d,param,rep,metric,value\n"));
    assert!(text.contains("perturb,,gamma=60,,slope,"));
    let back = read_csv(text.as_bytes()).unwrap();
    assert_eq!(back, rows);
    assert_eq!(csv_of(&[]), "experiment,d,param,rep,metric,value\n");
}

#[test]
fn zero_threads_rejected() {
    assert!(with_threads(Some(0), || ()).is_err());
}

mod common;

use proptest::prelude::*;
use rand::Rng;
use thingp::bench::report::{sweep_marks, write_results_csv, SweepMark};
use thingp::bench::{
    nlpd, rmse, robot_arm, run_protocol, simulate, ArmArSpec, BenchConfig, Calibration,
    MetricReport, Protocol,
};
use thingp::thinning::select_thinning_number;

use common::rng;

fn arm_literal(theta: &[f64], l: &[f64]) -> f64 {
    let xi1 = theta[0];
    let xi2 = theta[0] + theta[1];
    let xi3 = theta[0] + theta[1] + theta[2];
    let xi4 = theta[0] + theta[1] + theta[2] + theta[3];
    let u = l[0] * xi1.cos() + l[1] * xi2.cos() + l[2] * xi3.cos() + l[3] * xi4.cos();
    let v = l[0] * xi1.sin() + l[1] * xi2.sin() + l[2] * xi3.sin() + l[3] * xi4.sin();
    (u.powi(2) + v.powi(2)).sqrt()
}

#[test]
fn robot_arm_matches_literal_formula() {
    let mut r = rng(1);
    for _ in 0..1000 {
        let theta: Vec<f64> = (0..4)
            .map(|_| r.random::<f64>() * std::f64::consts::TAU)
            .collect();
        let l: Vec<f64> = (0..4).map(|_| r.random::<f64>()).collect();
        let a = robot_arm(&theta, &l);
        let b = arm_literal(&theta, &l);
        assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }
}

#[test]
fn simulate_is_deterministic() {
    let spec = ArmArSpec::calibrated(13, &Calibration::default(), 9);
    let a = simulate(&spec, 800, 200).unwrap();
    let b = simulate(&spec, 800, 200).unwrap();
    assert_eq!(a, b);
    let c = simulate(
        &ArmArSpec::calibrated(13, &Calibration::default(), 10),
        800,
        200,
    )
    .unwrap();
    assert_ne!(a.0.y, c.0.y);
    assert_eq!(a.1.t[0], 1601.0);
    assert_eq!(a.0.t[0], 1.0);
}

#[test]
fn noiseless_arm_replays_exactly() {
    let cal = Calibration {
        innovation_sd: 0.0,
        noise_sd: 0.0,
        standardize_inputs: false,
        ..Default::default()
    };
    let mut spec = ArmArSpec::calibrated(3, &cal, 4);
    spec.psi = vec![0.0; 3];
    spec.initial_values = Some((0..8).map(|j| vec![0.1 * j as f64, 0.2, -0.3]).collect());
    let (a, _) = simulate(&spec, 50, 5).unwrap();
    let (b, _) = simulate(&spec, 50, 5).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.y), bits(&b.y));
    spec.seed = 5;
    let (c, _) = simulate(&spec, 50, 5).unwrap();
    assert_eq!(bits(&a.y), bits(&c.y));
}

#[test]
fn ar_inputs_are_stationary() {
    for m in [13, 24] {
        let (train, _) = simulate(
            &ArmArSpec::calibrated(m, &Calibration::default(), 2),
            10_000,
            10,
        )
        .unwrap();
        for j in 0..8 {
            let col = train.column(j);
            let half = col.len() / 2;
            let var = |s: &[f64]| {
                let mu = s.iter().sum::<f64>() / s.len() as f64;
                s.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (s.len() - 1) as f64
            };
            let ratio = var(&col[half..]) / var(&col[..half]);
            assert!(
                (0.5..=2.0).contains(&ratio),
                "M={m} series {j}: ratio {ratio}"
            );
        }
    }
}

#[test]
fn lhs_scenario_has_little_autocorrelation() {
    let (train, _) = simulate(&ArmArSpec::lhs(1), 20_000, 10).unwrap();
    let c = select_thinning_number(&train, true, 100).unwrap();
    assert!(c.t <= 2, "T = {}", c.t);
}

#[test]
fn metric_closed_forms() {
    assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!((rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap() - 3.5355339059327378).abs() < 1e-15);
    assert_eq!(
        nlpd(&[0.2, -1.0], &[0.2, -1.0], &[1.0, 1.0]).unwrap(),
        0.5 * (2.0 * std::f64::consts::PI).ln()
    );
    let sd = (std::f64::consts::E / (2.0 * std::f64::consts::PI)).sqrt();
    assert_eq!(nlpd(&[4.0], &[4.0], &[sd]).unwrap(), 0.5);
}

fn oracle_rmse(y: &[f64], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    let diffs: Vec<f64> = y.iter().zip(p).map(|(a, b)| a - b).collect();
    let mut ss = 0.0;
    for d in &diffs {
        ss += d * d;
    }
    (ss / n).sqrt()
}

fn oracle_nlpd(y: &[f64], mu: &[f64], sd: &[f64]) -> f64 {
    // mean negative log normal density
    let n = y.len() as f64;
    let mut total = 0.0;
    for i in 0..y.len() {
        let log_dens = -(y[i] - mu[i]).powi(2) / (2.0 * sd[i] * sd[i])
            - sd[i].ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        total += -log_dens;
    }
    total / n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_oracles(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.2f64..5.0), 1..60)) {
        let y: Vec<f64> = v.iter().map(|a| a.0).collect();
        let m: Vec<f64> = v.iter().map(|a| a.1).collect();
        let s: Vec<f64> = v.iter().map(|a| a.2).collect();
        let r = rmse(&y, &m).unwrap();
        prop_assert!((r - oracle_rmse(&y, &m)).abs() <= 1e-12 * r.max(1.0));
        let a = nlpd(&y, &m, &s).unwrap();
        let b = oracle_nlpd(&y, &m, &s);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn empty_method_list_yields_empty_results() {
    let cfg = BenchConfig {
        protocol: Protocol::Replication,
        methods: vec![],
        ..Default::default()
    };
    let res = run_protocol(&cfg).unwrap();
    assert!(res.reports.is_empty());
    let mut out = Vec::new();
    write_results_csv(&res, None, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1);
}

#[test]
fn small_stability_run_reports_every_seed() {
    let cfg = BenchConfig::from_toml(
        r#"
        protocol = "stability"
        methods = ["thinned-sv"]
        seeds = [1, 2, 3]
        [scenario]
        lag_order = 13
        n_train = 600
        n_test = 50
        "#,
    )
    .unwrap();
    let res = run_protocol(&cfg).unwrap();
    assert_eq!(res.reports.len(), 3);
    assert_eq!(
        res.reports.iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
    assert!(res
        .reports
        .iter()
        .all(|r| r.rmse > 0.0 && r.nlpd.is_some() && r.thinning > 1));
}

#[test]
fn sweep_flags_no_thinning_row() {
    let rep = |t: usize, rmse: f64| MetricReport {
        scenario: "ar13".into(),
        method: "thinned-sv".into(),
        seed: 1,
        thinning: t,
        rmse,
        nlpd: None,
        runtime_s: 0.0,
    };
    let reports = [
        rep(1, 0.9),
        rep(5, 0.5),
        rep(10, 0.6),
        rep(15, 0.7),
        rep(20, 0.8),
    ];
    let refs: Vec<&MetricReport> = reports.iter().collect();
    let marks = sweep_marks(&refs);
    assert_eq!(marks[0], SweepMark::NoThinning);
    assert_eq!(marks[1], SweepMark::Best);
    assert_eq!(marks[4], SweepMark::Worst);
}

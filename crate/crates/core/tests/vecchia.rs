mod common;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thingp::thinning::partition;
use thingp::vecchia::{self, build_training_plan, loglik_and_gradient, vecchia_loglik, FitConfig};
use thingp::{Hyperparameters, KernelSpec};

use common::{dense_cov, dense_loglik, dense_posterior, normal_vec, rel, rng, row, uniform_matrix};

fn random_hp(r: &mut impl Rng, d: usize) -> Hyperparameters {
    let ls = (0..d).map(|_| 0.2 + 1.5 * r.random::<f64>()).collect();
    Hyperparameters::new(ls, 0.5 + r.random::<f64>(), 0.01 + 0.3 * r.random::<f64>()).unwrap()
}

#[test]
fn full_predecessor_plan_is_exact() {
    let mut r = rng(100);
    for case in 0..10 {
        let n = r.random_range(2..=150);
        let d = r.random_range(1..=4);
        let x = uniform_matrix(&mut r, n, d);
        let y = normal_vec(&mut r, n);
        let hp = random_hp(&mut r, d);
        let plan = build_training_plan(&x, &partition(n, 1).unwrap(), &hp, n - 1, case).unwrap();
        let ll = vecchia_loglik(&x, &y, &plan, &KernelSpec::matern15(), &hp).unwrap();
        let oracle = dense_loglik(&x, &y, &hp.lengthscales, hp.signal_var, hp.nugget);
        assert!(rel(ll, oracle, 0.0) < 1e-8, "case {case}: {ll} vs {oracle}");
    }
}

#[test]
fn singleton_blocks_give_independent_marginals() {
    let mut r = rng(5);
    let x = uniform_matrix(&mut r, 40, 2);
    let y = normal_vec(&mut r, 40);
    let hp = random_hp(&mut r, 2);
    let plan = build_training_plan(&x, &partition(40, 40).unwrap(), &hp, 3, 1).unwrap();
    assert!(plan.entries.iter().all(|e| e.neighbors.is_empty()));
    let ll = vecchia_loglik(&x, &y, &plan, &KernelSpec::matern15(), &hp).unwrap();
    let s = hp.signal_var + hp.nugget;
    let oracle: f64 = y
        .iter()
        .map(|v| -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + v * v / s))
        .sum();
    assert!(rel(ll, oracle, 0.0) < 1e-12);
}

#[test]
fn gradient_matches_central_differences() {
    let mut r = rng(33);
    let (n, d) = (150, 3);
    let x = uniform_matrix(&mut r, n, d);
    let y = normal_vec(&mut r, n);
    let part = partition(n, 3).unwrap();
    for _ in 0..5 {
        let hp = random_hp(&mut r, d);
        let plan = build_training_plan(&x, &part, &hp, 10, 1).unwrap();
        let spec = KernelSpec::matern15();
        let (_, g) = loglik_and_gradient(&x, &y, &plan, &spec, &hp).unwrap();
        let th = hp.to_log();
        for k in 0..th.len() {
            let h = 1e-5;
            let mut up = th.clone();
            let mut dn = th.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (vecchia_loglik(&x, &y, &plan, &spec, &Hyperparameters::from_log(&up))
                .unwrap()
                - vecchia_loglik(&x, &y, &plan, &spec, &Hyperparameters::from_log(&dn)).unwrap())
                / (2.0 * h);
            assert!(
                rel(g[k], fd, 1e-3) < 1e-4,
                "coordinate {k}: {} vs {fd}",
                g[k]
            );
        }
    }
}

#[test]
fn prediction_matches_dense_posterior() {
    let mut r = rng(71);
    for _ in 0..5 {
        let n = r.random_range(5..=200);
        let d = r.random_range(1..=4);
        let x = uniform_matrix(&mut r, n, d);
        let y = normal_vec(&mut r, n);
        let hp = random_hp(&mut r, d);
        let xq = uniform_matrix(&mut r, 1, d);
        let (p, plan) =
            vecchia::predict_with_plan(&KernelSpec::matern15(), &hp, &x, &y, &xq, n, 1).unwrap();
        assert_eq!(plan.entries[0].neighbors.len(), n);
        let (m, v) = dense_posterior(
            &x,
            &y,
            &hp.lengthscales,
            hp.signal_var,
            hp.nugget,
            &row(&xq, 0),
        );
        assert!(rel(p.mean[0], m, 0.0) < 1e-8);
        assert!(rel(p.sd[0] * p.sd[0], v, 0.0) < 1e-8);
    }
}

#[test]
fn prediction_limits() {
    let mut r = rng(3);
    let x = uniform_matrix(&mut r, 30, 2);
    let y = normal_vec(&mut r, 30);
    let hp = Hyperparameters::new(vec![0.5, 0.5], 1.0, 1e-10).unwrap();
    let xq = DMatrix::from_row_slice(1, 2, &row(&x, 7));
    let (p, _) =
        vecchia::predict_with_plan(&KernelSpec::matern15(), &hp, &x, &y, &xq, 30, 1).unwrap();
    assert!((p.mean[0] - y[7]).abs() < 1e-4);
    assert!(p.sd[0] < 1e-3);

    let hp = Hyperparameters::new(vec![0.5, 0.5], 1.3, 0.2).unwrap();
    let far = DMatrix::from_row_slice(1, 2, &[1e3, -1e3]);
    let (p, _) =
        vecchia::predict_with_plan(&KernelSpec::matern15(), &hp, &x, &y, &far, 30, 1).unwrap();
    assert!(p.mean[0].abs() < 1e-12);
    assert!((p.sd[0] * p.sd[0] - 1.5).abs() < 1e-12);
}

fn gp_sample(x: &DMatrix<f64>, ls: &[f64], s2: f64, nugget: f64, seed: u64) -> Vec<f64> {
    let k = dense_cov(x, ls, s2, nugget);
    let l = k.cholesky().unwrap().unpack();
    let z = DVector::from_vec(normal_vec(&mut rng(seed), x.nrows()));
    (l * z).as_slice().to_vec()
}

#[test]
fn recovers_known_lengthscales() {
    let mut r = rng(2024);
    let n = 2000;
    let x = uniform_matrix(&mut r, n, 2);
    let truth = [0.3, 0.6];
    let y = gp_sample(&x, &truth, 1.0, 0.01, 7);
    let part = partition(n, 1).unwrap();
    let cfg = FitConfig {
        rel_tol: 1e-12,
        ..Default::default()
    };
    let (model, report) =
        vecchia::fit(&x, &y, &part, &KernelSpec::matern15(), false, &cfg).unwrap();
    for (got, want) in model.hp.lengthscales.iter().zip(truth) {
        assert!(
            (got / want - 1.0).abs() < 0.25,
            "lengthscale {got} vs {want}"
        );
    }
    // first-order condition at the returned optimum
    let (_, g) = loglik_and_gradient(&x, &y, &model.plan, &model.spec, &model.hp).unwrap();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-3, "gradient norm {norm}");
    assert!(report.loglik.is_finite());
}

#[test]
fn likelihood_scale_equivariance() {
    let mut r = rng(15);
    let n = 400;
    let x = uniform_matrix(&mut r, n, 2);
    let y: Vec<f64> = (0..n)
        .map(|i| (5.0 * x[(i, 0)]).sin() + x[(i, 1)] + 0.1 * r.random::<f64>())
        .collect();
    let y10: Vec<f64> = y.iter().map(|v| 10.0 * v).collect();
    let part = partition(n, 1).unwrap();
    let spec = KernelSpec::matern15();
    let (a, _) = vecchia::fit(&x, &y, &part, &spec, false, &FitConfig::default()).unwrap();
    let (b, _) = vecchia::fit(&x, &y10, &part, &spec, false, &FitConfig::default()).unwrap();
    assert!((b.hp.signal_var / a.hp.signal_var / 100.0 - 1.0).abs() < 0.02);
    for (la, lb) in a.hp.lengthscales.iter().zip(&b.hp.lengthscales) {
        assert!((la / lb - 1.0).abs() < 0.02, "{la} vs {lb}");
    }
}

#[test]
fn inert_dimension_is_switched_off() {
    let mut r = rng(44);
    let n = 600;
    let x = uniform_matrix(&mut r, n, 2);
    let noise = normal_vec(&mut r, n);
    let y: Vec<f64> = (0..n)
        .map(|i| (6.0 * x[(i, 0)]).sin() + 0.05 * noise[i])
        .collect();
    let (model, _) = vecchia::fit(
        &x,
        &y,
        &partition(n, 1).unwrap(),
        &KernelSpec::matern15(),
        false,
        &FitConfig::default(),
    )
    .unwrap();
    let ls = &model.hp.lengthscales;
    assert!(ls[1] >= 10.0 * ls[0], "lengthscales {ls:?}");
}

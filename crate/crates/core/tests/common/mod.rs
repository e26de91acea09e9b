//! Reference implementations used as test oracles. Nothing here calls into
//! the library's covariance, likelihood or prediction code.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| rng.random::<f64>())
}

fn scaled_dist(x: &DMatrix<f64>, i: usize, z: &[f64], ls: &[f64]) -> f64 {
    (0..x.ncols())
        .map(|k| ((x[(i, k)] - z[k]) / ls[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn matern15(r: f64, s2: f64) -> f64 {
    let a = 3f64.sqrt() * r;
    s2 * (1.0 + a) * (-a).exp()
}

pub fn row(x: &DMatrix<f64>, i: usize) -> Vec<f64> {
    x.row(i).iter().copied().collect()
}

/// Dense Matérn-1.5 covariance with the nugget on the diagonal.
pub fn dense_cov(x: &DMatrix<f64>, ls: &[f64], s2: f64, nugget: f64) -> DMatrix<f64> {
    let n = x.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let r = scaled_dist(x, i, &row(x, j), ls);
        matern15(r, s2) + if i == j { nugget } else { 0.0 }
    })
}

/// Exact zero-mean GP log marginal likelihood.
pub fn dense_loglik(x: &DMatrix<f64>, y: &[f64], ls: &[f64], s2: f64, nugget: f64) -> f64 {
    let k = dense_cov(x, ls, s2, nugget);
    let chol = k
        .cholesky()
        .expect("oracle covariance is positive definite");
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (yv.dot(&alpha) + logdet + y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Posterior mean and variance of a new observation (nugget included) at `z`.
pub fn dense_posterior(
    x: &DMatrix<f64>,
    y: &[f64],
    ls: &[f64],
    s2: f64,
    nugget: f64,
    z: &[f64],
) -> (f64, f64) {
    let k = dense_cov(x, ls, s2, nugget);
    let chol = k
        .cholesky()
        .expect("oracle covariance is positive definite");
    let ks = DVector::from_iterator(
        x.nrows(),
        (0..x.nrows()).map(|i| matern15(scaled_dist(x, i, z, ls), s2)),
    );
    let w = chol.solve(&ks);
    let mean = w.dot(&DVector::from_column_slice(y));
    (mean, s2 + nugget - ks.dot(&w))
}

/// PACF at lag `h` as the last coefficient of an OLS regression of the
/// series on its first `h` lags (with intercept).
pub fn ols_pacf(s: &[f64], h: usize) -> f64 {
    let n = s.len();
    let rows = n - h;
    let a = DMatrix::from_fn(rows, h + 1, |i, j| if j == 0 { 1.0 } else { s[i + h - j] });
    let b = DVector::from_iterator(rows, (0..rows).map(|i| s[i + h]));
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let coef = ata
        .cholesky()
        .expect("lag design has full rank")
        .solve(&atb);
    coef[h]
}

pub fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let mut v = 0.0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..(n + 200) {
        let e: f64 = StandardNormal.sample(&mut r);
        v = phi * v + e;
        out.push(v);
    }
    out.split_off(200)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Relative difference with a floor on the denominator.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

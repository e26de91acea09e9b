//! Dense Gaussian-process likelihood, gradient, posterior and ML fitting.
//!
//! Used wherever the number of points is small: twin support sets, local
//! laGP designs and temporal windows.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{jittered_cholesky, Hyperparameters, KernelSpec, ScaledInputs};
use crate::optim::{self, LbfgsConfig};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Box constraints on the log-parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LogBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LogBounds {
    /// Generous limits for standardized inputs and a response of variance `var_y`.
    pub fn for_data(n_lengthscales: usize, var_y: f64) -> Self {
        let v = var_y.max(1e-12).ln();
        let mut lo = vec![(1e-3f64).ln(); n_lengthscales];
        let mut hi = vec![(1e4f64).ln(); n_lengthscales];
        lo.push(v - 14.0);
        hi.push(v + 7.0);
        lo.push(v - 23.0);
        hi.push(v + 5.0);
        LogBounds { lo, hi }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(t, (l, h))| *t >= *l && *t <= *h)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (l, h)) in theta.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *t = t.clamp(*l, *h);
        }
    }
}

/// Exact log marginal likelihood and its gradient with respect to
/// `hp.to_log()` coordinates.
pub fn loglik_gradient(
    spec: &KernelSpec,
    hp: &Hyperparameters,
    x: &DMatrix<f64>,
    y: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::Parameter(format!(
            "{} rows but {} responses",
            x.nrows(),
            n
        )));
    }
    let pts = ScaledInputs::new(x, &hp.lengthscales);
    let d = pts.dim();
    let mut k = DMatrix::zeros(n, n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_var + hp.nugget;
        h[(i, i)] = 0.0;
        for j in 0..i {
            let r = pts.dist2(i, j).sqrt();
            let v = spec.eval(r, hp.signal_var);
            k[(i, j)] = v;
            k[(j, i)] = v;
            let f = spec.lengthscale_factor(r, hp.signal_var);
            h[(i, j)] = f;
            h[(j, i)] = f;
        }
    }
    let (chol, _) =
        jittered_cholesky(k.clone(), hp.signal_var).ok_or_else(|| Error::Numerical {
            index: 0,
            reason: "covariance matrix not positive definite".into(),
        })?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    let ll = -0.5 * (yv.dot(&alpha) + logdet + n as f64 * LN_2PI);

    // grad_p = 1/2 tr((alpha alpha^T - K^-1) dK_p)
    let kinv = chol.inverse();
    let mut m = &alpha * alpha.transpose();
    m -= &kinv;
    let mut grad = vec![0.0; d + 2];
    for i in 0..n {
        for j in 0..i {
            let w = m[(i, j)] * h[(i, j)];
            if w != 0.0 {
                let (a, b) = (pts.row(i), pts.row(j));
                for l in 0..d {
                    let diff = a[l] - b[l];
                    grad[l] += w * diff * diff;
                }
            }
        }
    }
    // factor 1/2 cancels against the symmetric double count
    let mut sig = 0.0;
    let mut tr = 0.0;
    for i in 0..n {
        tr += m[(i, i)];
        for j in 0..n {
            let kij = if i == j { hp.signal_var } else { k[(i, j)] };
            sig += m[(i, j)] * kij;
        }
    }
    grad[d] = 0.5 * sig;
    grad[d + 1] = 0.5 * hp.nugget * tr;
    Ok((ll, grad))
}

pub fn loglik(spec: &KernelSpec, hp: &Hyperparameters, x: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
    let k = crate::kernels::cov_matrix(spec, hp, x, true);
    let (chol, _) = jittered_cholesky(k, hp.signal_var).ok_or_else(|| Error::Numerical {
        index: 0,
        reason: "covariance matrix not positive definite".into(),
    })?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let logdet: f64 = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>();
    Ok(-0.5 * (yv.dot(&alpha) + logdet + y.len() as f64 * LN_2PI))
}

/// Posterior mean and variance at the rows of `xs`. With `include_nugget`
/// the variance is that of a new observation rather than the latent value.
pub fn posterior(
    spec: &KernelSpec,
    hp: &Hyperparameters,
    x: &DMatrix<f64>,
    y: &[f64],
    xs: &DMatrix<f64>,
    include_nugget: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = crate::kernels::cov_matrix(spec, hp, x, true);
    let (chol, _) = jittered_cholesky(k, hp.signal_var).ok_or_else(|| Error::Numerical {
        index: 0,
        reason: "covariance matrix not positive definite".into(),
    })?;
    let alpha = chol.solve(&DVector::from_column_slice(y));
    let train = ScaledInputs::new(x, &hp.lengthscales);
    let test = ScaledInputs::new(xs, &hp.lengthscales);
    let prior = hp.signal_var + if include_nugget { hp.nugget } else { 0.0 };
    let mut mean = Vec::with_capacity(test.len());
    let mut var = Vec::with_capacity(test.len());
    for s in 0..test.len() {
        let ks = DVector::from_iterator(
            train.len(),
            (0..train.len())
                .map(|i| spec.eval(train.dist2_to(i, test.row(s)).sqrt(), hp.signal_var)),
        );
        mean.push(ks.dot(&alpha));
        let v = chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("triangular factor is invertible");
        var.push((prior - v.norm_squared()).max(0.0));
    }
    Ok((mean, var))
}

#[derive(Debug, Clone)]
pub struct ExactFitConfig {
    /// One lengthscale shared by all input dimensions.
    pub isotropic: bool,
    pub bounds: Option<LogBounds>,
    pub lbfgs: LbfgsConfig,
}

impl Default for ExactFitConfig {
    fn default() -> Self {
        ExactFitConfig {
            isotropic: false,
            bounds: None,
            lbfgs: LbfgsConfig {
                max_iter: 60,
                ..Default::default()
            },
        }
    }
}

/// Maximum-likelihood hyperparameters starting from `init`.
///
/// Returns the fitted hyperparameters and the attained log-likelihood.
pub fn fit(
    spec: &KernelSpec,
    x: &DMatrix<f64>,
    y: &[f64],
    init: &Hyperparameters,
    cfg: &ExactFitConfig,
) -> Result<(Hyperparameters, f64)> {
    let d = x.ncols();
    if init.dim() != d {
        return Err(Error::Parameter(format!(
            "{} lengthscales for {d} input columns",
            init.dim()
        )));
    }
    let var_y = crate::dataset::sample_variance(y).max(1e-12);
    let full_bounds = cfg
        .bounds
        .clone()
        .unwrap_or_else(|| LogBounds::for_data(d, var_y));
    let expand = |theta: &[f64]| -> Vec<f64> {
        if cfg.isotropic {
            let mut v = vec![theta[0]; d];
            v.extend_from_slice(&theta[1..]);
            v
        } else {
            theta.to_vec()
        }
    };
    let mut theta0 = init.to_log();
    if cfg.isotropic {
        let mean_l = theta0[..d].iter().sum::<f64>() / d as f64;
        theta0.drain(..d);
        theta0.insert(0, mean_l);
    }
    let bounds = if cfg.isotropic {
        LogBounds {
            lo: std::iter::once(full_bounds.lo[0])
                .chain(full_bounds.lo[d..].iter().copied())
                .collect(),
            hi: std::iter::once(full_bounds.hi[0])
                .chain(full_bounds.hi[d..].iter().copied())
                .collect(),
        }
    } else {
        full_bounds
    };
    bounds.clamp(&mut theta0);
    let objective = |theta: &[f64]| -> Option<(f64, Vec<f64>)> {
        if !bounds.contains(theta) {
            return None;
        }
        let hp = Hyperparameters::from_log(&expand(theta));
        let (ll, g) = loglik_gradient(spec, &hp, x, y).ok()?;
        if cfg.isotropic {
            let mut out = vec![g[..d].iter().sum()];
            out.extend_from_slice(&g[d..]);
            Some((ll, out))
        } else {
            Some((ll, g))
        }
    };
    match optim::maximize(objective, &theta0, &cfg.lbfgs) {
        Ok(out) => Ok((Hyperparameters::from_log(&expand(&out.x)), out.f)),
        Err(f) => Err(Error::Numerical {
            index: 0,
            reason: format!("exact GP fit failed: {}", f.reason),
        }),
    }
}

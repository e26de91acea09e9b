//! The temporal component g(t), fit to residuals of the spatial model.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::exact::{self, LogBounds};
use crate::kernels::{Hyperparameters, KernelSpec};
use crate::optim::{self, LbfgsConfig};
use crate::prediction::PredictionResult;
use crate::seed;

/// Residuals `y - f(x)` indexed by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSeries {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
}

impl ResidualSeries {
    pub fn new(t: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if t.len() != r.len() {
            return Err(Error::Parameter(format!(
                "{} times but {} residuals",
                t.len(),
                r.len()
            )));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter(
                "residual times must be strictly increasing".into(),
            ));
        }
        Ok(ResidualSeries { t, r })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index range of the points with `|t - center| <= half_width`.
    pub fn window(&self, center: f64, half_width: f64) -> std::ops::Range<usize> {
        let lo = self.t.partition_point(|v| *v < center - half_width);
        let hi = self.t.partition_point(|v| *v <= center + half_width);
        lo..hi.max(lo)
    }
}

/// Matérn-1.5 GP on the scalar time input with a window of half-width `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalModel {
    pub hp: Hyperparameters,
    pub half_width: usize,
    /// Residual variance was negligible; the model predicts g = 0.
    pub degenerate: bool,
}

/// Prediction of g at one time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GPoint {
    pub mean: f64,
    /// Latent standard deviation (no nugget).
    pub sd: f64,
    /// Number of residuals inside the window.
    pub support: usize,
}

#[derive(Debug, Clone)]
pub struct TemporalConfig {
    pub max_windows: usize,
    pub seed: u64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            max_windows: 200,
            seed: 1,
        }
    }
}

fn window_data(res: &ResidualSeries, range: std::ops::Range<usize>) -> (DMatrix<f64>, Vec<f64>) {
    let x = DMatrix::from_column_slice(range.len(), 1, &res.t[range.clone()]);
    (x, res.r[range].to_vec())
}

/// Fit the hyperparameters of g by maximizing the summed exact
/// log-likelihood over a sample of windows of width `2T + 1`.
pub fn fit_g(res: &ResidualSeries, t_half: usize, cfg: &TemporalConfig) -> Result<TemporalModel> {
    let n = res.len();
    if n < 10 {
        return Err(Error::EmptyData(format!(
            "temporal fit needs at least 10 residuals, got {n}"
        )));
    }
    if t_half == 0 {
        return Err(Error::InvalidThinning(
            "window half-width must be at least 1".into(),
        ));
    }
    let var = crate::dataset::sample_variance(&res.r);
    let mean = res.r.iter().sum::<f64>() / n as f64;
    if !(var > 1e-20 && var > 1e-12 * mean * mean) {
        return Ok(TemporalModel {
            hp: Hyperparameters {
                lengthscales: vec![1.0],
                signal_var: 1e-12,
                nugget: 0.0,
            },
            half_width: t_half,
            degenerate: true,
        });
    }
    let hw = t_half as f64;
    let k = cfg.max_windows.min(n).max(1);
    let mut rng = seed::stream(cfg.seed, "temporal-windows", 0);
    let mut centers: Vec<usize> = sample(&mut rng, n, k).into_vec();
    centers.sort_unstable();
    let windows: Vec<(DMatrix<f64>, Vec<f64>)> = centers
        .iter()
        .map(|&c| window_data(res, res.window(res.t[c], hw)))
        .filter(|(_, r)| r.len() >= 2)
        .collect();
    if windows.is_empty() {
        return Err(Error::EmptyData("no window holds two residuals".into()));
    }

    let spec = KernelSpec::matern15();
    let spacing = (res.t[n - 1] - res.t[0]) / (n - 1) as f64;
    let init = Hyperparameters {
        lengthscales: vec![(hw * spacing).max(spacing) * 0.5],
        signal_var: 0.5 * var,
        nugget: 0.5 * var,
    };
    let mut bounds = LogBounds::for_data(1, var);
    bounds.lo[0] = (0.05 * spacing).ln();
    bounds.hi[0] = (100.0 * hw * spacing.max(1e-12)).ln();
    let objective = |th: &[f64]| -> Option<(f64, Vec<f64>)> {
        if !bounds.contains(th) {
            return None;
        }
        let hp = Hyperparameters::from_log(th);
        let mut ll = 0.0;
        let mut g = [0.0; 3];
        for (x, r) in &windows {
            let (l, gr) = exact::loglik_gradient(&spec, &hp, x, r).ok()?;
            ll += l;
            for (a, b) in g.iter_mut().zip(gr) {
                *a += b;
            }
        }
        Some((ll, g.to_vec()))
    };
    let mut th0 = init.to_log();
    bounds.clamp(&mut th0);
    let lb = LbfgsConfig {
        max_iter: 60,
        ..Default::default()
    };
    let out = optim::maximize(objective, &th0, &lb).map_err(|f| Error::Numerical {
        index: 0,
        reason: format!("temporal fit failed: {}", f.reason),
    })?;
    Ok(TemporalModel {
        hp: Hyperparameters::from_log(&out.x),
        half_width: t_half,
        degenerate: false,
    })
}

/// Posterior of g at `t_star` given only the residuals in `[t* - T, t* + T]`.
///
/// An empty window gives mean 0 and the prior standard deviation.
pub fn predict_g(model: &TemporalModel, res: &ResidualSeries, t_star: f64) -> Result<GPoint> {
    if model.degenerate {
        return Ok(GPoint {
            mean: 0.0,
            sd: 0.0,
            support: 0,
        });
    }
    let range = res.window(t_star, model.half_width as f64);
    if range.is_empty() {
        return Ok(GPoint {
            mean: 0.0,
            sd: model.hp.signal_var.sqrt(),
            support: 0,
        });
    }
    let support = range.len();
    let (x, r) = window_data(res, range);
    let xs = DMatrix::from_element(1, 1, t_star);
    let (m, v) = exact::posterior(&KernelSpec::matern15(), &model.hp, &x, &r, &xs, false)?;
    Ok(GPoint {
        mean: m[0],
        sd: v[0].sqrt(),
        support,
    })
}

/// `f + g` with variances added. Points where g is exactly zero with zero
/// variance return the f prediction unchanged.
pub fn combine(f: &PredictionResult, g: &PredictionResult) -> Result<PredictionResult> {
    if f.len() != g.len() {
        return Err(Error::Parameter(format!(
            "f has {} predictions, g has {}",
            f.len(),
            g.len()
        )));
    }
    let mut mean = Vec::with_capacity(f.len());
    let mut sd = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        if g.mean[i] == 0.0 && g.sd[i] == 0.0 {
            mean.push(f.mean[i]);
            sd.push(f.sd[i]);
        } else {
            mean.push(f.mean[i] + g.mean[i]);
            sd.push((f.sd[i] * f.sd[i] + g.sd[i] * g.sd[i]).sqrt());
        }
    }
    Ok(PredictionResult { mean, sd })
}

/// g predictions for a batch of times. Points with an empty window get
/// `(0, 0)` so that [`combine`] leaves f untouched there.
pub fn predict_g_batch(
    model: &TemporalModel,
    res: &ResidualSeries,
    t: &[f64],
) -> Result<PredictionResult> {
    let mut mean = Vec::with_capacity(t.len());
    let mut sd = Vec::with_capacity(t.len());
    for &ts in t {
        let p = predict_g(model, res, ts)?;
        if p.support == 0 {
            mean.push(0.0);
            sd.push(0.0);
        } else {
            mean.push(p.mean);
            sd.push(p.sd);
        }
    }
    Ok(PredictionResult { mean, sd })
}

//! laGP-style local prediction: a small GP built around each test point
//! from the block holding its nearest training record.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{self, ExactFitConfig};
use crate::kernels::{sq_dist, Hyperparameters, KernelSpec, ScaledInputs};
use crate::prediction::PredictionResult;
use crate::thinning::{partition, BlockPartition};

#[derive(Debug, Clone, PartialEq)]
pub struct LagpConfig {
    pub n_start: usize,
    pub n_end: usize,
    /// Nearest block members considered by the greedy search.
    pub n_cand: usize,
    /// Re-estimate hyperparameters on the final local design.
    pub refit: bool,
}

impl Default for LagpConfig {
    fn default() -> Self {
        LagpConfig {
            n_start: 6,
            n_end: 30,
            n_cand: 128,
            refit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagpPrediction {
    pub mean: f64,
    pub sd: f64,
    pub block: usize,
    /// Chosen training rows, in selection order.
    pub selected: Vec<usize>,
    /// Predictive variance at the test point (design hyperparameters)
    /// after each greedy addition, starting with the initial design.
    pub variance_trace: Vec<f64>,
    pub hp: Hyperparameters,
}

fn nearest(pts: &ScaledInputs, rows: &[usize], p: &[f64], k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = rows.iter().map(|&i| (pts.dist2_to(i, p), i)).collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().map(|(_, i)| i).collect()
}

fn se(hp: &Hyperparameters, d2: f64) -> f64 {
    hp.signal_var * (-0.5 * d2 / (hp.lengthscales[0] * hp.lengthscales[0])).exp()
}

struct Design<'a> {
    pts: &'a ScaledInputs,
    cand: &'a [usize],
    p: &'a [f64],
    hp: &'a Hyperparameters,
    chosen: Vec<usize>,
    /// `L^-1 k_S(x*)` for the lower Cholesky factor L of the design covariance.
    zp: Vec<f64>,
    /// `L^-1 k_S(c)` per candidate, grown one entry per addition.
    zc: Vec<Vec<f64>>,
    used: Vec<bool>,
}

impl Design<'_> {
    fn prior(&self) -> f64 {
        self.hp.signal_var + self.hp.nugget
    }

    fn cond_var(&self, j: usize) -> f64 {
        let s = self.prior();
        (s - self.zc[j].iter().map(|v| v * v).sum::<f64>()).max(1e-12 * s)
    }

    fn var_at_point(&self) -> f64 {
        (self.prior() - self.zp.iter().map(|v| v * v).sum::<f64>()).max(self.hp.nugget)
    }

    fn gain(&self, j: usize) -> f64 {
        let kp = se(self.hp, self.pts.dist2_to(self.cand[j], self.p));
        let cov = kp
            - self.zc[j]
                .iter()
                .zip(&self.zp)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        cov * cov / self.cond_var(j)
    }

    fn add(&mut self, ci: usize) {
        let row = self.cand[ci];
        let zrow = self.zc[ci].clone();
        let diag = self.cond_var(ci).sqrt();
        let kp = se(self.hp, self.pts.dist2_to(row, self.p));
        let zp_new = (kp - zrow.iter().zip(&self.zp).map(|(a, b)| a * b).sum::<f64>()) / diag;
        self.zp.push(zp_new);
        for j in 0..self.cand.len() {
            if self.used[j] || j == ci {
                continue;
            }
            let kc = se(self.hp, self.pts.dist2(row, self.cand[j]));
            let v = (kc
                - zrow
                    .iter()
                    .zip(&self.zc[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>())
                / diag;
            self.zc[j].push(v);
        }
        self.chosen.push(row);
        self.used[ci] = true;
    }
}

/// Greedy variance-reduction design under fixed isotropic hyperparameters.
///
/// Starts from `start` (rows that must appear in `cand`) and adds the
/// candidate with the largest reduction of the predictive variance at `p`
/// until `n_end` rows are chosen. Returns the rows and the variance trace.
pub fn greedy_design(
    pts: &ScaledInputs,
    cand: &[usize],
    p: &[f64],
    start: &[usize],
    n_end: usize,
    hp: &Hyperparameters,
) -> (Vec<usize>, Vec<f64>) {
    let mut design = Design {
        pts,
        cand,
        p,
        hp,
        chosen: Vec::with_capacity(n_end),
        zp: Vec::with_capacity(n_end),
        zc: vec![Vec::with_capacity(n_end); cand.len()],
        used: vec![false; cand.len()],
    };
    for &r in start {
        if let Some(ci) = cand.iter().position(|&c| c == r) {
            if !design.used[ci] && design.chosen.len() < n_end {
                design.add(ci);
            }
        }
    }
    let mut trace = vec![design.var_at_point()];
    while design.chosen.len() < n_end.min(cand.len()) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for j in 0..cand.len() {
            if design.used[j] {
                continue;
            }
            let g = design.gain(j);
            if g > best.0 {
                best = (g, j);
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        design.add(best.1);
        trace.push(design.var_at_point());
    }
    (design.chosen, trace)
}

/// Local GP at `x_star` (standardized input) using only the block that
/// contains the nearest training record.
pub fn lagp_single_block_predict(
    part: &BlockPartition,
    x: &DMatrix<f64>,
    y: &[f64],
    x_star: &[f64],
    cfg: &LagpConfig,
) -> Result<LagpPrediction> {
    let n = y.len();
    if n == 0 || x.nrows() != n || part.n() != n {
        return Err(Error::Parameter(format!(
            "{} rows, {n} responses, partition over {}",
            x.nrows(),
            part.n()
        )));
    }
    if x_star.len() != x.ncols() {
        return Err(Error::Parameter(format!(
            "test point has {} inputs, data {}",
            x_star.len(),
            x.ncols()
        )));
    }
    let pts = ScaledInputs::unit(x);
    let closest = (0..n)
        .map(|i| (pts.dist2_to(i, x_star), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .unwrap()
        .1;
    let block = part.block_of(closest);
    predict_in_block(&pts, y, part.block(block), block, x_star, cfg)
}

fn predict_in_block(
    pts: &ScaledInputs,
    y: &[f64],
    rows: &[usize],
    block: usize,
    x_star: &[f64],
    cfg: &LagpConfig,
) -> Result<LagpPrediction> {
    let mut n_end = cfg.n_end;
    if rows.len() < n_end {
        log::warn!(
            "block {block} has {} points; shrinking local design from {n_end}",
            rows.len()
        );
        n_end = rows.len();
    }
    let n_start = cfg.n_start.min(n_end).max(1);
    let cand = nearest(pts, rows, x_star, cfg.n_cand.max(n_end));
    let ycand: Vec<f64> = cand.iter().map(|&i| y[i]).collect();
    let var = crate::dataset::sample_variance(&ycand);
    let var = if var > 0.0 { var } else { 1.0 };
    let reach = sq_dist(pts.row(cand[n_end - 1]), x_star).sqrt().max(1e-3);
    let design_hp = Hyperparameters {
        lengthscales: vec![reach],
        signal_var: var,
        nugget: 0.01 * var,
    };
    let start: Vec<usize> = cand[..n_start].to_vec();
    let (selected, variance_trace) = greedy_design(pts, &cand, x_star, &start, n_end, &design_hp);

    let d = pts.dim();
    let xs = DMatrix::from_fn(selected.len(), d, |i, j| pts.row(selected[i])[j]);
    let ys: Vec<f64> = selected.iter().map(|&i| y[i]).collect();
    let iso = |h: &Hyperparameters| Hyperparameters {
        lengthscales: vec![h.lengthscales[0]; d],
        ..h.clone()
    };
    let mut hp = iso(&design_hp);
    if cfg.refit && selected.len() >= 3 {
        let fit_cfg = ExactFitConfig {
            isotropic: true,
            ..Default::default()
        };
        if let Ok((h, _)) = exact::fit(&KernelSpec::squared_exponential(), &xs, &ys, &hp, &fit_cfg)
        {
            hp = h;
        }
    }
    let xq = DMatrix::from_row_slice(1, d, x_star);
    let (m, v) = exact::posterior(&KernelSpec::squared_exponential(), &hp, &xs, &ys, &xq, true)?;
    Ok(LagpPrediction {
        mean: m[0],
        sd: v[0].sqrt(),
        block,
        selected,
        variance_trace,
        hp,
    })
}

/// Unthinned baseline: the whole training set is one block.
pub fn lagp_unthinned_predict(
    x: &DMatrix<f64>,
    y: &[f64],
    x_star: &[f64],
    cfg: &LagpConfig,
) -> Result<LagpPrediction> {
    let part = partition(y.len(), 1)?;
    lagp_single_block_predict(&part, x, y, x_star, cfg)
}

/// Independent local predictions for every row of `x_test`.
pub fn lagp_predict_batch(
    part: &BlockPartition,
    x: &DMatrix<f64>,
    y: &[f64],
    x_test: &DMatrix<f64>,
    cfg: &LagpConfig,
) -> Result<PredictionResult> {
    let out: Vec<(f64, f64)> = (0..x_test.nrows())
        .into_par_iter()
        .map(|i| {
            let p: Vec<f64> = x_test.row(i).iter().copied().collect();
            lagp_single_block_predict(part, x, y, &p, cfg).map(|r| (r.mean, r.sd))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, sd) = out.into_iter().unzip();
    Ok(PredictionResult { mean, sd })
}

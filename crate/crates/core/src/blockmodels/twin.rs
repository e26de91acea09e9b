//! Twin-style model: a squared-exponential GP on a small maximin support
//! set blended with a compactly supported local kernel on nearest
//! neighbors, `k = (1 - lambda) k_g + lambda k_l`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;

use crate::conditioning::maximin_subset;
use crate::error::{Error, Result};
use crate::exact::{self, ExactFitConfig};
use crate::kernels::{jittered_cholesky, Hyperparameters, KernelSpec, ScaledInputs};
use crate::prediction::PredictionResult;
use crate::seed;

/// Support, neighborhood and validation sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwinSizes {
    pub n_g: usize,
    pub k_loc: usize,
    pub n_val: usize,
}

impl TwinSizes {
    /// Default sizes for `n` points in `d` dimensions:
    /// `n_g = min(max(ceil(sqrt n), 10 d), 50 d)`, `k_loc = max(25, 3 d)`,
    /// `n_val = min(ceil(0.1 n), 2 n_g)`.
    pub fn for_size(n: usize, d: usize) -> Self {
        let n_g = ((n as f64).sqrt().ceil() as usize)
            .max(10 * d)
            .min(50 * d)
            .max(2);
        let k_loc = 25.max(3 * d);
        let n_val = ((0.1 * n as f64).ceil() as usize).min(2 * n_g).max(1);
        TwinSizes { n_g, k_loc, n_val }
    }

    /// Smallest block the sizes fit into.
    pub fn min_block(&self) -> usize {
        self.n_g + self.k_loc + self.n_val + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinParams {
    /// Fixed sizes (e.g. computed once on unthinned data); `None` derives
    /// them from the block itself.
    pub sizes: Option<TwinSizes>,
    pub lambda_grid: Vec<f64>,
    /// Points probed when setting the local radius.
    pub probe: usize,
    pub seed: u64,
}

impl Default for TwinParams {
    fn default() -> Self {
        TwinParams {
            sizes: None,
            lambda_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            probe: 256,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwinKernel {
    Global,
    Local,
    Blend(f64),
}

impl TwinKernel {
    fn from_lambda(lambda: f64) -> Self {
        if lambda == 0.0 {
            TwinKernel::Global
        } else if lambda == 1.0 {
            TwinKernel::Local
        } else {
            TwinKernel::Blend(lambda)
        }
    }
}

/// A fitted twin-style model on one block.
#[derive(Debug, Clone)]
pub struct TwinModel {
    /// Global squared-exponential hyperparameters; their lengthscales also
    /// scale the inputs of the local kernel.
    pub hp: Hyperparameters,
    pub lambda: f64,
    /// Local support radius in scaled units.
    pub radius: f64,
    pub sizes: TwinSizes,
    /// Rows of the block used as global support.
    pub support: Vec<usize>,
    pts: ScaledInputs,
    y: Vec<f64>,
    in_support: Vec<bool>,
    cache: SupportCache,
}

#[derive(Debug, Clone)]
struct SupportCache {
    /// Lower Cholesky factor of the support covariance.
    l: DMatrix<f64>,
    /// `L_G^-1 y_G`.
    u: DVector<f64>,
}

fn cov(kind: TwinKernel, hp: &Hyperparameters, radius: f64, d2: f64) -> f64 {
    let r = d2.sqrt();
    let global = || KernelSpec::squared_exponential().eval(r, hp.signal_var);
    let local = || {
        let u = r / radius;
        if u >= 1.0 {
            0.0
        } else {
            hp.signal_var * (1.0 - u).powi(4) * (4.0 * u + 1.0)
        }
    };
    match kind {
        TwinKernel::Global => global(),
        TwinKernel::Local => local(),
        TwinKernel::Blend(l) => (1.0 - l) * global() + l * local(),
    }
}

fn support_cache(
    pts: &ScaledInputs,
    y: &[f64],
    support: &[usize],
    hp: &Hyperparameters,
    radius: f64,
    kind: TwinKernel,
) -> Result<SupportCache> {
    let g = support.len();
    let mut k = DMatrix::zeros(g, g);
    for p in 0..g {
        k[(p, p)] = hp.signal_var + hp.nugget;
        for q in 0..p {
            let v = cov(kind, hp, radius, pts.dist2(support[p], support[q]));
            k[(p, q)] = v;
            k[(q, p)] = v;
        }
    }
    let (chol, _) = jittered_cholesky(k, hp.signal_var).ok_or_else(|| Error::Numerical {
        index: 0,
        reason: "support covariance not positive definite".into(),
    })?;
    let yg = DVector::from_iterator(g, support.iter().map(|&i| y[i]));
    let l = chol.l();
    let u = l.solve_lower_triangular(&yg).expect("non-singular factor");
    Ok(SupportCache { l, u })
}

/// `k` nearest rows of `pool` to `p` that are not in the support.
fn local_set(
    pts: &ScaledInputs,
    pool: &[usize],
    in_support: &[bool],
    p: &[f64],
    k: usize,
) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = pool
        .iter()
        .filter(|&&i| !in_support[i])
        .map(|&i| (pts.dist2_to(i, p), i))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return Vec::new();
    }
    cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.truncate(k);
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    cand.into_iter().map(|(_, i)| i).collect()
}

/// Posterior at `p` given the support set and the local set `loc`, using
/// the block Cholesky factor of the joint covariance.
#[allow(clippy::too_many_arguments)]
fn posterior_at(
    pts: &ScaledInputs,
    y: &[f64],
    support: &[usize],
    cache: &SupportCache,
    loc: &[usize],
    hp: &Hyperparameters,
    radius: f64,
    kind: TwinKernel,
    p: &[f64],
) -> Result<(f64, f64)> {
    let g = support.len();
    let k = loc.len();
    let s = hp.signal_var + hp.nugget;
    let kg = DVector::from_iterator(
        g,
        support
            .iter()
            .map(|&i| cov(kind, hp, radius, pts.dist2_to(i, p))),
    );
    let lg = &cache.l;
    let zg = lg.solve_lower_triangular(&kg).expect("non-singular factor");
    let mut mean = zg.dot(&cache.u);
    let mut explained = zg.norm_squared();
    if k > 0 {
        let kgl = DMatrix::from_fn(g, k, |a, b| {
            cov(kind, hp, radius, pts.dist2(support[a], loc[b]))
        });
        let a = lg
            .solve_lower_triangular(&kgl)
            .expect("non-singular factor");
        let mut schur = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                s
            } else {
                cov(kind, hp, radius, pts.dist2(loc[i], loc[j]))
            }
        });
        schur -= a.transpose() * &a;
        let (cs, _) = jittered_cholesky(schur, hp.signal_var).ok_or_else(|| Error::Numerical {
            index: 0,
            reason: "local Schur complement not positive definite".into(),
        })?;
        let kl = DVector::from_iterator(
            k,
            loc.iter()
                .map(|&i| cov(kind, hp, radius, pts.dist2_to(i, p))),
        );
        let yl = DVector::from_iterator(k, loc.iter().map(|&i| y[i]));
        let ll = cs.l();
        let zl = ll
            .solve_lower_triangular(&(kl - a.transpose() * &zg))
            .expect("non-singular factor");
        let ul = ll
            .solve_lower_triangular(&(yl - a.transpose() * &cache.u))
            .expect("non-singular factor");
        mean += zl.dot(&ul);
        explained += zl.norm_squared();
    }
    Ok((mean, (s - explained).max(hp.nugget)))
}

/// Fit on one block (`x` already standardized, rows = block members).
pub fn twin_fit(x: &DMatrix<f64>, y: &[f64], params: &TwinParams) -> Result<TwinModel> {
    let n = y.len();
    let d = x.ncols();
    if x.nrows() != n {
        return Err(Error::Parameter(format!(
            "{} rows but {n} responses",
            x.nrows()
        )));
    }
    let sizes = params.sizes.unwrap_or_else(|| TwinSizes::for_size(n, d));
    if sizes.n_g < 2 || sizes.k_loc < 1 || sizes.n_val < 1 {
        return Err(Error::Parameter(format!("invalid twin sizes {sizes:?}")));
    }
    if n < sizes.min_block() {
        return Err(Error::BlockTooSmall {
            block: 0,
            size: n,
            minimum: sizes.min_block(),
        });
    }
    if params.lambda_grid.is_empty() || params.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l))
    {
        return Err(Error::Parameter(
            "lambda grid must be non-empty and inside [0, 1]".into(),
        ));
    }

    // hold out a validation slice, pick support from the rest
    let mut rng = seed::stream(params.seed, "twin-validation", 0);
    let mut is_val = vec![false; n];
    for i in sample(&mut rng, n, sizes.n_val).into_iter() {
        is_val[i] = true;
    }
    let val: Vec<usize> = (0..n).filter(|&i| is_val[i]).collect();
    let pool: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    let unit = ScaledInputs::unit(x);
    let mut support =
        maximin_subset(&unit, &pool, seed::derive(params.seed, "twin-support", 0)).order;
    support.truncate(sizes.n_g);

    let xs = DMatrix::from_fn(support.len(), d, |i, j| x[(support[i], j)]);
    let ys: Vec<f64> = support.iter().map(|&i| y[i]).collect();
    let init = crate::vecchia::initial_hyperparameters(d, &ys);
    let (hp, _) = exact::fit(
        &KernelSpec::squared_exponential(),
        &xs,
        &ys,
        &init,
        &ExactFitConfig::default(),
    )?;

    let pts = ScaledInputs::new(x, &hp.lengthscales);
    let mut in_support = vec![false; n];
    for &i in &support {
        in_support[i] = true;
    }

    // radius: largest k_loc-th neighbor distance over a probe sample of the pool
    let mut rng = seed::stream(params.seed, "twin-probe", 0);
    let probes = sample(&mut rng, pool.len(), params.probe.min(pool.len())).into_vec();
    let mut radius = 0.0f64;
    for pi in probes {
        let i = pool[pi];
        let mut dists: Vec<f64> = pool
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| pts.dist2(i, j))
            .collect();
        let kth = sizes.k_loc.min(dists.len()) - 1;
        dists.select_nth_unstable_by(kth, f64::total_cmp);
        radius = radius.max(dists[kth].sqrt());
    }
    let radius = if radius > 0.0 { radius } else { 1.0 };

    // lambda by validation error; local sets do not depend on lambda
    let loc_sets: Vec<Vec<usize>> = val
        .iter()
        .map(|&v| local_set(&pts, &pool, &in_support, pts.row(v), sizes.k_loc))
        .collect();
    let mut best = (f64::INFINITY, params.lambda_grid[0]);
    let mut grid = params.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    for &lambda in &grid {
        let kind = TwinKernel::from_lambda(lambda);
        let cache = match support_cache(&pts, y, &support, &hp, radius, kind) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let mut sse = 0.0;
        for (v, loc) in val.iter().zip(&loc_sets) {
            let (m, _) = posterior_at(
                &pts,
                y,
                &support,
                &cache,
                loc,
                &hp,
                radius,
                kind,
                pts.row(*v),
            )?;
            sse += (y[*v] - m) * (y[*v] - m);
        }
        log::trace!("twin lambda {lambda}: validation sse {sse:.6}");
        if sse < best.0 {
            best = (sse, lambda);
        }
    }
    let lambda = best.1;
    let cache = support_cache(
        &pts,
        y,
        &support,
        &hp,
        radius,
        TwinKernel::from_lambda(lambda),
    )?;
    Ok(TwinModel {
        hp,
        lambda,
        radius,
        sizes,
        support,
        pts,
        y: y.to_vec(),
        in_support,
        cache,
    })
}

impl TwinModel {
    /// Rebuild a fitted model from stored parameters and the block data.
    pub fn from_parts(
        x: &DMatrix<f64>,
        y: &[f64],
        hp: Hyperparameters,
        lambda: f64,
        radius: f64,
        sizes: TwinSizes,
        support: Vec<usize>,
    ) -> Result<TwinModel> {
        let n = y.len();
        if x.nrows() != n || hp.dim() != x.ncols() {
            return Err(Error::Parameter(format!(
                "{}x{} inputs, {n} responses, {} lengthscales",
                x.nrows(),
                x.ncols(),
                hp.dim()
            )));
        }
        if support.iter().any(|&i| i >= n) || support.len() < 2 {
            return Err(Error::Parameter("support rows out of range".into()));
        }
        if !(0.0..=1.0).contains(&lambda) || !(radius > 0.0) {
            return Err(Error::Parameter(format!(
                "lambda {lambda} or radius {radius} out of range"
            )));
        }
        hp.validate()?;
        let pts = ScaledInputs::new(x, &hp.lengthscales);
        let mut in_support = vec![false; n];
        for &i in &support {
            in_support[i] = true;
        }
        let cache = support_cache(
            &pts,
            y,
            &support,
            &hp,
            radius,
            TwinKernel::from_lambda(lambda),
        )?;
        Ok(TwinModel {
            hp,
            lambda,
            radius,
            sizes,
            support,
            pts,
            y: y.to_vec(),
            in_support,
            cache,
        })
    }

    /// Predictions at standardized test rows with the fitted blend.
    pub fn predict(&self, x_test: &DMatrix<f64>) -> Result<PredictionResult> {
        self.predict_with(x_test, TwinKernel::from_lambda(self.lambda))
    }

    /// Predictions with an explicit kernel choice; the fitted support and
    /// radius are reused.
    pub fn predict_with(
        &self,
        x_test: &DMatrix<f64>,
        kind: TwinKernel,
    ) -> Result<PredictionResult> {
        if x_test.ncols() != self.hp.dim() {
            return Err(Error::Parameter(format!(
                "model has {} inputs, test data {}",
                self.hp.dim(),
                x_test.ncols()
            )));
        }
        let own = TwinKernel::from_lambda(self.lambda);
        let rebuilt;
        let cache = if kind == own {
            &self.cache
        } else {
            rebuilt = support_cache(
                &self.pts,
                &self.y,
                &self.support,
                &self.hp,
                self.radius,
                kind,
            )?;
            &rebuilt
        };
        let test = ScaledInputs::new(x_test, &self.hp.lengthscales);
        let pool: Vec<usize> = (0..self.y.len()).collect();
        let mut mean = Vec::with_capacity(test.len());
        let mut sd = Vec::with_capacity(test.len());
        for i in 0..test.len() {
            let p = test.row(i);
            let loc = local_set(&self.pts, &pool, &self.in_support, p, self.sizes.k_loc);
            let (m, v) = posterior_at(
                &self.pts,
                &self.y,
                &self.support,
                cache,
                &loc,
                &self.hp,
                self.radius,
                kind,
                p,
            )?;
            mean.push(m);
            sd.push(v.sqrt());
        }
        Ok(PredictionResult { mean, sd })
    }

    /// Scaled support and local rows used at `p` (for diagnostics and tests).
    pub fn conditioning_rows(&self, p: &[f64]) -> Vec<usize> {
        let scaled: Vec<f64> = p
            .iter()
            .zip(&self.hp.lengthscales)
            .map(|(a, l)| a / l)
            .collect();
        let pool: Vec<usize> = (0..self.y.len()).collect();
        let mut rows = self.support.clone();
        rows.extend(local_set(
            &self.pts,
            &pool,
            &self.in_support,
            &scaled,
            self.sizes.k_loc,
        ));
        rows
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

//! End-to-end runs: standardize, choose T, fit, predict, destandardize.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::blockmodels::{
    ensemble_predict, lagp_predict_batch, twin_fit, LagpConfig, TwinModel, TwinParams, TwinSizes,
};
use crate::conditioning::ConditioningPlan;
use crate::dataset::{standardize, CsvSchema, Dataset, Standardization};
use crate::error::{Error, Result};
use crate::kernels::{Hyperparameters, KernelFamily, KernelSpec};
use crate::persist::{ModelKind, SavedModel, SavedTwinBlock};
use crate::prediction::PredictionResult;
use crate::temporal::{self, ResidualSeries, TemporalConfig, TemporalModel};
use crate::thinning::{
    max_thinning_for, partition, select_thinning_number, BlockPartition, ThinningChoice,
    DEFAULT_MAX_LAG,
};
use crate::vecchia::{self, FitConfig, FitReport, VecchiaModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Unthinned scaled Vecchia on x.
    Sv,
    /// Unthinned scaled Vecchia on (x, t).
    SvXt,
    ThinnedSv,
    Twin,
    ThinnedTwin,
    Lagp,
    ThinnedLagp,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Sv,
        Method::SvXt,
        Method::ThinnedSv,
        Method::Twin,
        Method::ThinnedTwin,
        Method::Lagp,
        Method::ThinnedLagp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sv => "sv",
            Method::SvXt => "sv-xt",
            Method::ThinnedSv => "thinned-sv",
            Method::Twin => "twin",
            Method::ThinnedTwin => "thinned-twin",
            Method::Lagp => "lagp",
            Method::ThinnedLagp => "thinned-lagp",
        }
    }

    pub fn thinned(self) -> bool {
        matches!(
            self,
            Method::ThinnedSv | Method::ThinnedTwin | Method::ThinnedLagp
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub m: usize,
    pub m_p: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    /// Fixed thinning number for thinned methods; selected by PACF otherwise.
    pub thinning: Option<usize>,
    pub h_max: usize,
    pub include_y: bool,
    pub plan_rebuilds: usize,
    pub stage_iterations: usize,
    pub max_iterations: usize,
    pub twin: TwinParams,
    pub lagp: LagpConfig,
    pub with_g: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            m: 30,
            m_p: 140,
            seed: 1,
            kernel: KernelSpec::matern15(),
            thinning: None,
            h_max: DEFAULT_MAX_LAG,
            include_y: true,
            plan_rebuilds: 2,
            stage_iterations: 15,
            max_iterations: 100,
            twin: TwinParams::default(),
            lagp: LagpConfig::default(),
            with_g: false,
        }
    }
}

impl RunOptions {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            m: self.m,
            plan_rebuilds: self.plan_rebuilds,
            stage_iterations: self.stage_iterations,
            max_iterations: self.max_iterations,
            seed: self.seed,
            ..Default::default()
        }
    }
}

/// Result of one method on one train/test split, on the original scale.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub method: Method,
    pub prediction: PredictionResult,
    /// f component alone (equal to `prediction` without g).
    pub f_prediction: PredictionResult,
    pub g_prediction: Option<PredictionResult>,
    pub thinning: usize,
    pub thinning_choice: Option<ThinningChoice>,
    pub fit_report: Option<FitReport>,
    pub runtime_s: f64,
}

/// Standardized training data plus the transform, and the standardized
/// time column used by `sv-xt`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub standardization: Standardization,
    pub t_mean: f64,
    pub t_scale: f64,
}

pub fn prepare(train: &Dataset) -> Result<Prepared> {
    let (std_train, st) = standardize(train)?;
    let n = train.n() as f64;
    let t_mean = train.t.iter().sum::<f64>() / n;
    let t_var = train
        .t
        .iter()
        .map(|v| (v - t_mean) * (v - t_mean))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    let t_scale = if t_var > 0.0 { t_var.sqrt() } else { 1.0 };
    Ok(Prepared {
        train: std_train,
        standardization: st,
        t_mean,
        t_scale,
    })
}

impl Prepared {
    /// Standardized design for `x` (original covariates) and times `t`.
    pub fn design(&self, x: &DMatrix<f64>, t: &[f64], include_time: bool) -> DMatrix<f64> {
        let xs = self.standardization.apply_x(x);
        if !include_time {
            return xs;
        }
        let d = xs.ncols();
        DMatrix::from_fn(xs.nrows(), d + 1, |i, j| {
            if j < d {
                xs[(i, j)]
            } else {
                (t[i] - self.t_mean) / self.t_scale
            }
        })
    }

    pub fn train_design(&self, include_time: bool) -> DMatrix<f64> {
        let x = &self.train.x;
        if !include_time {
            return x.clone();
        }
        let d = x.ncols();
        DMatrix::from_fn(x.nrows(), d + 1, |i, j| {
            if j < d {
                x[(i, j)]
            } else {
                (self.train.t[i] - self.t_mean) / self.t_scale
            }
        })
    }

    pub fn to_original(&self, p: &PredictionResult) -> PredictionResult {
        PredictionResult {
            mean: self.standardization.invert_y(&p.mean),
            sd: self.standardization.invert_sd(&p.sd),
        }
    }
}

/// The thinning number a method uses on `train`, with the PACF selection
/// when one was made.
pub fn choose_thinning(
    method: Method,
    train: &Dataset,
    opts: &RunOptions,
) -> Result<(usize, Option<ThinningChoice>)> {
    if !method.thinned() {
        return Ok((1, None));
    }
    let (t, choice) = match opts.thinning {
        Some(t) => (t, None),
        None => {
            let c = select_thinning_number(train, opts.include_y, opts.h_max)?;
            (c.t, Some(c))
        }
    };
    let n = train.n();
    let cap = match method {
        Method::ThinnedSv => max_thinning_for(n, opts.m)?,
        Method::ThinnedTwin => {
            let sizes = opts
                .twin
                .sizes
                .unwrap_or_else(|| TwinSizes::for_size(n, train.d()));
            (n / sizes.min_block()).max(1)
        }
        _ => n,
    };
    if t > cap {
        if opts.thinning.is_some() {
            return Err(Error::InvalidThinning(format!(
                "T = {t} leaves blocks too small for {method} (largest valid T is {cap})"
            )));
        }
        log::warn!(
            "selected T = {t} exceeds the largest valid T = {cap} for {method}; using {cap}"
        );
        return Ok((cap, choice));
    }
    Ok((t, choice))
}

/// Fit the SV variant of `method` on prepared data.
pub fn fit_sv(
    method: Method,
    prep: &Prepared,
    t: usize,
    opts: &RunOptions,
) -> Result<(VecchiaModel, FitReport)> {
    let include_time = method == Method::SvXt;
    let x = prep.train_design(include_time);
    let part = partition(prep.train.n(), t)?;
    vecchia::fit(
        &x,
        &prep.train.y,
        &part,
        &opts.kernel,
        include_time,
        &opts.fit_config(),
    )
}

/// A model fitted on standardized data.
#[derive(Debug, Clone)]
pub enum Fitted {
    Sv {
        spec: KernelSpec,
        hp: Hyperparameters,
        include_time: bool,
        report: Option<FitReport>,
        /// Training plan of the final optimization stage.
        plan: Option<ConditioningPlan>,
    },
    Twin {
        models: Vec<TwinModel>,
        partition: BlockPartition,
    },
    Lagp {
        partition: BlockPartition,
        config: LagpConfig,
    },
}

/// Standardized predictions, with per-block predictions for ensembles.
#[derive(Debug, Clone)]
pub struct RawPrediction {
    pub combined: PredictionResult,
    pub blocks: Option<Vec<PredictionResult>>,
    /// Sequential prediction plan (scaled-Vecchia models).
    pub plan: Option<ConditioningPlan>,
}

fn block_data(x: &DMatrix<f64>, y: &[f64], rows: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let xb = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    (xb, rows.iter().map(|&i| y[i]).collect())
}

/// Fit `method` with thinning number `t` on prepared data.
pub fn fit(method: Method, prep: &Prepared, t: usize, opts: &RunOptions) -> Result<Fitted> {
    let n = prep.train.n();
    let d = prep.train.d();
    match method {
        Method::Sv | Method::SvXt | Method::ThinnedSv => {
            let (model, report) = fit_sv(method, prep, t, opts)?;
            Ok(Fitted::Sv {
                spec: model.spec,
                hp: model.hp,
                include_time: model.include_time,
                report: Some(report),
                plan: Some(model.plan),
            })
        }
        Method::Twin | Method::ThinnedTwin => {
            let part = partition(n, t)?;
            let mut params = TwinParams {
                seed: opts.seed,
                ..opts.twin.clone()
            };
            if method == Method::ThinnedTwin && params.sizes.is_none() {
                // sizes computed once on the unthinned data
                params.sizes = Some(TwinSizes::for_size(n, d));
            }
            let models = part
                .blocks()
                .par_iter()
                .enumerate()
                .map(|(z, rows)| {
                    let (xb, yb) = block_data(&prep.train.x, &prep.train.y, rows);
                    let p = TwinParams {
                        seed: crate::seed::derive(params.seed, "twin-block", z as u64),
                        ..params.clone()
                    };
                    twin_fit(&xb, &yb, &p).map_err(|e| match e {
                        Error::BlockTooSmall { size, minimum, .. } => Error::BlockTooSmall {
                            block: z,
                            size,
                            minimum,
                        },
                        other => other,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Fitted::Twin {
                models,
                partition: part,
            })
        }
        Method::Lagp | Method::ThinnedLagp => Ok(Fitted::Lagp {
            partition: partition(n, t)?,
            config: opts.lagp.clone(),
        }),
    }
}

impl Fitted {
    pub fn include_time(&self) -> bool {
        matches!(
            self,
            Fitted::Sv {
                include_time: true,
                ..
            }
        )
    }

    /// Predict at original-scale covariates `x` with times `t`; the result
    /// is on the standardized scale.
    pub fn predict(
        &self,
        prep: &Prepared,
        x: &DMatrix<f64>,
        t: &[f64],
        opts: &RunOptions,
    ) -> Result<RawPrediction> {
        let xq = prep.design(x, t, self.include_time());
        self.predict_design(prep, &xq, opts)
    }

    /// Predict at an already standardized design.
    pub fn predict_design(
        &self,
        prep: &Prepared,
        xq: &DMatrix<f64>,
        opts: &RunOptions,
    ) -> Result<RawPrediction> {
        match self {
            Fitted::Sv {
                spec,
                hp,
                include_time,
                ..
            } => {
                let xtr = prep.train_design(*include_time);
                let (p, plan) = vecchia::predict_with_plan(
                    spec,
                    hp,
                    &xtr,
                    &prep.train.y,
                    xq,
                    opts.m_p,
                    opts.seed,
                )?;
                Ok(RawPrediction {
                    combined: p,
                    blocks: None,
                    plan: Some(plan),
                })
            }
            Fitted::Twin { models, .. } => {
                let per_block = models
                    .par_iter()
                    .map(|mdl| mdl.predict(xq))
                    .collect::<Result<Vec<_>>>()?;
                let e = ensemble_predict(per_block)?;
                Ok(RawPrediction {
                    combined: e.combined,
                    blocks: Some(e.blocks),
                    plan: None,
                })
            }
            Fitted::Lagp { partition, config } => {
                let p = lagp_predict_batch(partition, &prep.train.x, &prep.train.y, xq, config)?;
                Ok(RawPrediction {
                    combined: p,
                    blocks: None,
                    plan: None,
                })
            }
        }
    }
}

/// Fit g on the training residuals of the f model and predict it at the
/// test times. Empty windows contribute nothing.
pub fn temporal_component(
    prep: &Prepared,
    f_train: &PredictionResult,
    window: usize,
    t_test: &[f64],
    seed: u64,
) -> Result<(TemporalModel, ResidualSeries, PredictionResult)> {
    let r: Vec<f64> = prep
        .train
        .y
        .iter()
        .zip(&f_train.mean)
        .map(|(y, f)| y - f)
        .collect();
    let res = ResidualSeries::new(prep.train.t.clone(), r)?;
    let model = temporal::fit_g(
        &res,
        window,
        &TemporalConfig {
            seed,
            ..Default::default()
        },
    )?;
    let g = temporal::predict_g_batch(&model, &res, t_test)?;
    Ok((model, res, g))
}

/// Original-scale output of a fitted model on a test set.
#[derive(Debug, Clone)]
pub struct Predicted {
    pub prediction: PredictionResult,
    pub f_prediction: PredictionResult,
    pub g_prediction: Option<PredictionResult>,
    /// Training residuals (original scale) used to fit g.
    pub residuals: Option<ResidualSeries>,
    pub blocks: Option<Vec<PredictionResult>>,
    pub plan: Option<ConditioningPlan>,
}

/// Predict with a fitted model, adding g when `opts.with_g` is set.
/// `window` is the half-width of the temporal window.
pub fn predict_fitted(
    fitted: &Fitted,
    prep: &Prepared,
    test: &Dataset,
    window: usize,
    opts: &RunOptions,
) -> Result<Predicted> {
    let raw = fitted.predict(prep, &test.x, &test.t, opts)?;
    let f_std = raw.combined;
    let (pred_std, g, residuals) = if opts.with_g {
        let f_train = fitted
            .predict_design(prep, &prep.train_design(fitted.include_time()), opts)?
            .combined;
        let (_, res, g) = temporal_component(prep, &f_train, window, &test.t, opts.seed)?;
        let res = ResidualSeries {
            t: res.t,
            r: res
                .r
                .iter()
                .map(|v| v * prep.standardization.y_scale)
                .collect(),
        };
        (temporal::combine(&f_std, &g)?, Some(g), Some(res))
    } else {
        (f_std.clone(), None, None)
    };
    let ys = prep.standardization.y_scale;
    let g_prediction = g.map(|g| PredictionResult {
        mean: g.mean.iter().map(|v| v * ys).collect(),
        sd: prep.standardization.invert_sd(&g.sd),
    });
    let blocks = raw
        .blocks
        .map(|b| b.iter().map(|p| prep.to_original(p)).collect());
    Ok(Predicted {
        prediction: prep.to_original(&pred_std),
        f_prediction: prep.to_original(&f_std),
        g_prediction,
        residuals,
        blocks,
        plan: raw.plan,
    })
}

/// Half-width of the g window: the thinning number when one is in use,
/// the PACF selection otherwise.
pub fn g_window(prep: &Prepared, thinning: usize, opts: &RunOptions) -> Result<usize> {
    if thinning > 1 {
        return Ok(thinning);
    }
    Ok(select_thinning_number(&prep.train, opts.include_y, opts.h_max)?.t)
}

/// Run `method` on a train/test split and return original-scale predictions.
pub fn run_method(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    opts: &RunOptions,
) -> Result<MethodOutput> {
    if test.d() != train.d() {
        return Err(Error::Schema(format!(
            "training data has {} covariates, test data {}",
            train.d(),
            test.d()
        )));
    }
    let start = Instant::now();
    let prep = prepare(train)?;
    let (t, choice) = choose_thinning(method, &prep.train, opts)?;
    log::info!("{method}: T = {t}");
    let fitted = fit(method, &prep, t, opts)?;
    let window = match (&choice, opts.with_g) {
        (_, false) => t,
        (Some(c), true) => c.t,
        (None, true) => g_window(&prep, t, opts)?,
    };
    let out = predict_fitted(&fitted, &prep, test, window, opts)?;
    let runtime_s = start.elapsed().as_secs_f64();
    let fit_report = match fitted {
        Fitted::Sv { report, .. } => report,
        _ => None,
    };
    Ok(MethodOutput {
        method,
        prediction: out.prediction,
        f_prediction: out.f_prediction,
        g_prediction: out.g_prediction,
        thinning: t,
        thinning_choice: choice,
        fit_report,
        runtime_s,
    })
}

/// Model file contents for a fitted SV or twin model.
pub fn to_saved(
    fitted: &Fitted,
    prep: &Prepared,
    method: Method,
    thinning: usize,
    opts: &RunOptions,
    data: &str,
    schema: &CsvSchema,
) -> Result<SavedModel> {
    let (kind, kernel, hp, include_time, blocks) = match fitted {
        Fitted::Sv {
            spec,
            hp,
            include_time,
            ..
        } => (
            ModelKind::Sv,
            spec.family,
            hp.clone(),
            *include_time,
            Vec::new(),
        ),
        Fitted::Twin { models, .. } => {
            let blocks = models
                .iter()
                .map(|m| SavedTwinBlock {
                    hp: m.hp.clone(),
                    lambda: m.lambda,
                    radius: m.radius,
                    sizes: m.sizes,
                    support: m.support.clone(),
                })
                .collect();
            let placeholder = Hyperparameters {
                lengthscales: Vec::new(),
                signal_var: 1.0,
                nugget: 0.0,
            };
            (
                ModelKind::Twin,
                KernelFamily::SquaredExponential,
                placeholder,
                false,
                blocks,
            )
        }
        Fitted::Lagp { .. } => {
            return Err(Error::Config(
                "local GP predictions have no stored model".into(),
            ))
        }
    };
    Ok(SavedModel {
        kind,
        kernel,
        thinned: method.thinned(),
        thinning,
        include_time,
        m: opts.m,
        m_p: opts.m_p,
        seed: opts.seed,
        hp,
        blocks,
        standardization: prep.standardization.clone(),
        t_mean: prep.t_mean,
        t_scale: prep.t_scale,
        data: data.to_string(),
        schema: schema.clone(),
        n_train: prep.train.n(),
    })
}

/// Rebuild the prepared training data and fitted model from a model file
/// and the (original-scale) training data it names.
pub fn from_saved(saved: &SavedModel, train: &Dataset) -> Result<(Prepared, Fitted)> {
    if train.n() != saved.n_train {
        return Err(Error::ModelFormat(format!(
            "model was fit on {} rows, training data has {}",
            saved.n_train,
            train.n()
        )));
    }
    let st = &saved.standardization;
    if st.kept_columns.iter().any(|&k| k >= train.d()) {
        return Err(Error::ModelFormat(
            "training data has fewer covariates than the model".into(),
        ));
    }
    let prep = Prepared {
        train: st.apply(train),
        standardization: st.clone(),
        t_mean: saved.t_mean,
        t_scale: saved.t_scale,
    };
    let fitted = match saved.kind {
        ModelKind::Sv => {
            let spec = KernelSpec::from_family(saved.kernel);
            Fitted::Sv {
                spec,
                hp: saved.hp.clone(),
                include_time: saved.include_time,
                report: None,
                plan: None,
            }
        }
        ModelKind::Twin => {
            let part = partition(train.n(), saved.thinning)?;
            let models = part
                .blocks()
                .iter()
                .zip(&saved.blocks)
                .map(|(rows, b)| {
                    let (xb, yb) = block_data(&prep.train.x, &prep.train.y, rows);
                    TwinModel::from_parts(
                        &xb,
                        &yb,
                        b.hp.clone(),
                        b.lambda,
                        b.radius,
                        b.sizes,
                        b.support.clone(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Fitted::Twin {
                models,
                partition: part,
            }
        }
    };
    Ok((prep, fitted))
}

/// Options matching a stored model.
pub fn saved_options(saved: &SavedModel) -> RunOptions {
    RunOptions {
        m: saved.m,
        m_p: saved.m_p,
        seed: saved.seed,
        kernel: KernelSpec::from_family(saved.kernel),
        thinning: Some(saved.thinning),
        ..Default::default()
    }
}

//! Scaled-Vecchia likelihood, fitting and sequential prediction.
//!
//! With a thinned partition the likelihood is the sum of per-block Vecchia
//! likelihoods sharing one hyperparameter vector; with `T = 1` it is the
//! ordinary scaled-Vecchia approximation.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::conditioning::{
    block_orders, prediction_plan, training_plan, ConditioningPlan, PlanEntry, PlanMode,
};
use crate::error::{Error, Result};
use crate::exact::LogBounds;
use crate::kernels::{jittered_cholesky, Hyperparameters, KernelSpec, ScaledInputs};
use crate::optim::{self, LbfgsConfig};
use crate::prediction::PredictionResult;
use crate::thinning::BlockPartition;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One accepted optimizer iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Plan-rebuild stage (0 is the plan built from the initial lengthscales).
    pub stage: usize,
    pub iteration: usize,
    pub loglik: f64,
    /// `[log l_1, .., log l_d, log signal_var, log nugget]`.
    pub log_params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub loglik: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub m: usize,
    /// Number of times the ordering and conditioning sets are rebuilt with
    /// updated lengthscales before the final optimization.
    pub plan_rebuilds: usize,
    /// Iteration cap for the stages before the last rebuild.
    pub stage_iterations: usize,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub init: Option<Hyperparameters>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            m: 30,
            plan_rebuilds: 2,
            stage_iterations: 15,
            max_iterations: 100,
            rel_tol: 1e-6,
            seed: 1,
            init: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VecchiaModel {
    pub spec: KernelSpec,
    pub hp: Hyperparameters,
    pub thinning: usize,
    pub include_time: bool,
    pub m: usize,
    pub seed: u64,
    /// Training plan in force at the final optimization stage.
    pub plan: ConditioningPlan,
}

/// Default starting point: unit lengthscales, signal variance equal to the
/// sample variance of `y`, nugget a tenth of that.
pub fn initial_hyperparameters(d: usize, y: &[f64]) -> Hyperparameters {
    let v = crate::dataset::sample_variance(y);
    let v = if v > 0.0 { v } else { 1.0 };
    Hyperparameters {
        lengthscales: vec![1.0; d],
        signal_var: v,
        nugget: 0.1 * v,
    }
}

struct Term {
    ll: f64,
    grad: Option<Vec<f64>>,
}

/// Log-density of `y[entry.index]` given its conditioning set, and
/// optionally its gradient in log-parameter coordinates.
fn term(
    entry: &PlanEntry,
    pts: &ScaledInputs,
    y: &[f64],
    spec: &KernelSpec,
    hp: &Hyperparameters,
    want_grad: bool,
) -> Result<Term> {
    let d = pts.dim();
    let nb = &entry.neighbors;
    let k = nb.len();
    let s = hp.signal_var + hp.nugget;
    let yj = y[entry.index];
    if k == 0 {
        let ll = -0.5 * (LN_2PI + s.ln() + yj * yj / s);
        let grad = want_grad.then(|| {
            // d ll / d log s = -1/2 (1 - y^2/s); split by variance share
            let c = -0.5 * (1.0 - yj * yj / s);
            let mut g = vec![0.0; d + 2];
            g[d] = c * hp.signal_var / s;
            g[d + 1] = c * hp.nugget / s;
            g
        });
        return Ok(Term { ll, grad });
    }
    let me = pts.row(entry.index);
    let mut kmat = DMatrix::zeros(k, k);
    let mut hmat = if want_grad {
        DMatrix::zeros(k, k)
    } else {
        DMatrix::zeros(0, 0)
    };
    let mut kvec = DVector::zeros(k);
    let mut hvec = vec![0.0; if want_grad { k } else { 0 }];
    let mut yc = DVector::zeros(k);
    for p in 0..k {
        let rp = pts.row(nb[p]);
        kmat[(p, p)] = s;
        for q in 0..p {
            let r = crate::kernels::sq_dist(rp, pts.row(nb[q])).sqrt();
            let v = spec.eval(r, hp.signal_var);
            kmat[(p, q)] = v;
            kmat[(q, p)] = v;
            if want_grad {
                let h = spec.lengthscale_factor(r, hp.signal_var);
                hmat[(p, q)] = h;
                hmat[(q, p)] = h;
            }
        }
        let r = crate::kernels::sq_dist(rp, me).sqrt();
        kvec[p] = spec.eval(r, hp.signal_var);
        if want_grad {
            hvec[p] = spec.lengthscale_factor(r, hp.signal_var);
        }
        yc[p] = y[nb[p]];
    }
    let (chol, _) = jittered_cholesky(kmat, hp.signal_var).ok_or_else(|| Error::Numerical {
        index: entry.index,
        reason: "conditioning covariance not positive definite after jitter".into(),
    })?;
    let a = chol.solve(&kvec);
    let b = chol.solve(&yc);
    let mu = kvec.dot(&b);
    let ka = kvec.dot(&a);
    let v = (s - ka).max(1e-12 * s);
    let e = yj - mu;
    let ll = -0.5 * (LN_2PI + v.ln() + e * e / v);
    if !want_grad {
        return Ok(Term { ll, grad: None });
    }

    // d ll = -1/2 (dv/v)(1 - e^2/v) + e dmu / v
    let chain = |dmu: f64, dv: f64| -0.5 * (dv / v) * (1.0 - e * e / v) + e * dmu / v;
    let mut grad = vec![0.0; d + 2];
    let mut ab = vec![0.0; d];
    let mut aa = vec![0.0; d];
    let mut dkb = vec![0.0; d];
    let mut dka = vec![0.0; d];
    for p in 0..k {
        let rp = pts.row(nb[p]);
        if hvec[p] != 0.0 {
            for l in 0..d {
                let diff = rp[l] - me[l];
                let dk = hvec[p] * diff * diff;
                dkb[l] += dk * b[p];
                dka[l] += dk * a[p];
            }
        }
        for q in 0..p {
            let h = hmat[(p, q)];
            if h == 0.0 {
                continue;
            }
            let rq = pts.row(nb[q]);
            let wab = h * (a[p] * b[q] + a[q] * b[p]);
            let waa = h * 2.0 * a[p] * a[q];
            for l in 0..d {
                let diff = rp[l] - rq[l];
                let dd = diff * diff;
                ab[l] += wab * dd;
                aa[l] += waa * dd;
            }
        }
    }
    for l in 0..d {
        let dmu = dkb[l] - ab[l];
        let dv = -2.0 * dka[l] + aa[l];
        grad[l] = chain(dmu, dv);
    }
    let adotb = a.dot(&b);
    let adota = a.dot(&a);
    let sn = hp.nugget;
    grad[d] = chain(sn * adotb, hp.signal_var - ka - sn * adota);
    grad[d + 1] = chain(-sn * adotb, sn + sn * adota);
    Ok(Term {
        ll,
        grad: Some(grad),
    })
}

fn check_plan(
    plan: &ConditioningPlan,
    x: &DMatrix<f64>,
    y: &[f64],
    hp: &Hyperparameters,
) -> Result<()> {
    if plan.mode != PlanMode::Training {
        return Err(Error::Parameter(
            "likelihood needs a training-mode plan".into(),
        ));
    }
    if x.nrows() != y.len() || plan.n_train != y.len() || plan.len() != y.len() {
        return Err(Error::Parameter(format!(
            "plan covers {} of {} points ({} rows in x)",
            plan.len(),
            y.len(),
            x.nrows()
        )));
    }
    if x.ncols() != hp.dim() {
        return Err(Error::Parameter(format!(
            "{} lengthscales for {} input columns",
            hp.dim(),
            x.ncols()
        )));
    }
    Ok(())
}

fn evaluate(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &ConditioningPlan,
    spec: &KernelSpec,
    hp: &Hyperparameters,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_plan(plan, x, y, hp)?;
    let pts = ScaledInputs::new(x, &hp.lengthscales);
    let terms: Vec<Term> = plan
        .entries
        .par_iter()
        .map(|e| term(e, &pts, y, spec, hp, want_grad))
        .collect::<Result<Vec<_>>>()?;
    // sequential reduction keeps the result independent of thread count
    let ll = terms.iter().map(|t| t.ll).sum();
    let grad = want_grad.then(|| {
        let mut g = vec![0.0; hp.dim() + 2];
        for t in &terms {
            for (acc, v) in g.iter_mut().zip(t.grad.as_ref().unwrap()) {
                *acc += v;
            }
        }
        g
    });
    Ok((ll, grad))
}

/// Sum over plan entries of the conditional Gaussian log-densities.
pub fn vecchia_loglik(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &ConditioningPlan,
    spec: &KernelSpec,
    hp: &Hyperparameters,
) -> Result<f64> {
    evaluate(x, y, plan, spec, hp, false).map(|(ll, _)| ll)
}

/// Gradient of [`vecchia_loglik`] with respect to `hp.to_log()`.
pub fn loglik_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &ConditioningPlan,
    spec: &KernelSpec,
    hp: &Hyperparameters,
) -> Result<Vec<f64>> {
    evaluate(x, y, plan, spec, hp, true).map(|(_, g)| g.unwrap())
}

pub fn loglik_and_gradient(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &ConditioningPlan,
    spec: &KernelSpec,
    hp: &Hyperparameters,
) -> Result<(f64, Vec<f64>)> {
    evaluate(x, y, plan, spec, hp, true).map(|(ll, g)| (ll, g.unwrap()))
}

/// Build the block-restricted training plan under the lengthscales of `hp`.
pub fn build_training_plan(
    x: &DMatrix<f64>,
    partition: &BlockPartition,
    hp: &Hyperparameters,
    m: usize,
    seed: u64,
) -> Result<ConditioningPlan> {
    let pts = ScaledInputs::new(x, &hp.lengthscales);
    let orders = block_orders(&pts, partition, seed);
    training_plan(partition, &orders, &pts, m)
}

/// Maximize the (pseudo-)likelihood over log-hyperparameters.
///
/// `include_time` is recorded on the model only; the caller decides whether
/// `x` already carries the time column.
pub fn fit(
    x: &DMatrix<f64>,
    y: &[f64],
    partition: &BlockPartition,
    spec: &KernelSpec,
    include_time: bool,
    cfg: &FitConfig,
) -> Result<(VecchiaModel, FitReport)> {
    if x.nrows() != y.len() || partition.n() != y.len() {
        return Err(Error::Parameter(format!(
            "{} rows, {} responses, partition over {} records",
            x.nrows(),
            y.len(),
            partition.n()
        )));
    }
    if cfg.m == 0 {
        return Err(Error::Parameter(
            "conditioning set size m must be at least 1".into(),
        ));
    }
    let smallest = partition.smallest_block();
    if smallest < cfg.m + 1 {
        let block = partition
            .blocks()
            .iter()
            .position(|b| b.len() == smallest)
            .unwrap_or(0);
        return Err(Error::BlockTooSmall {
            block,
            size: smallest,
            minimum: cfg.m + 1,
        });
    }
    let d = x.ncols();
    let init = cfg
        .init
        .clone()
        .unwrap_or_else(|| initial_hyperparameters(d, y));
    if init.dim() != d {
        return Err(Error::Parameter(format!(
            "initial hyperparameters have {} lengthscales, data {d} columns",
            init.dim()
        )));
    }
    init.validate()?;
    let bounds = LogBounds {
        lo: {
            let v = init.signal_var.ln();
            let mut lo = vec![-9.0; d];
            lo.extend([v - 16.0, v - 25.0]);
            lo
        },
        hi: {
            let v = init.signal_var.ln();
            let mut hi = vec![9.0; d];
            hi.extend([v + 9.0, v + 6.0]);
            hi
        },
    };
    let mut theta = init.to_log();
    bounds.clamp(&mut theta);

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut loglik = f64::NEG_INFINITY;
    let mut plan = None;
    for stage in 0..=cfg.plan_rebuilds {
        let hp = Hyperparameters::from_log(&theta);
        let p = build_training_plan(x, partition, &hp, cfg.m, cfg.seed)?;
        let last = stage == cfg.plan_rebuilds;
        let lb = LbfgsConfig {
            max_iter: if last {
                cfg.max_iterations
            } else {
                cfg.stage_iterations
            },
            rel_tol: cfg.rel_tol,
            grad_tol: 1e-6,
            ..Default::default()
        };
        let objective = |th: &[f64]| -> Option<(f64, Vec<f64>)> {
            if !bounds.contains(th) {
                return None;
            }
            loglik_and_gradient(x, y, &p, spec, &Hyperparameters::from_log(th)).ok()
        };
        let out = optim::maximize(objective, &theta, &lb).map_err(|f| {
            let mut tr = trace.clone();
            tr.extend(f.trace.iter().enumerate().map(|(i, it)| TraceEntry {
                stage,
                iteration: i,
                loglik: it.f,
                log_params: it.x.clone(),
            }));
            Error::FitDiverged {
                reason: f.reason,
                trace: tr,
            }
        })?;
        trace.extend(out.trace.iter().enumerate().map(|(i, it)| TraceEntry {
            stage,
            iteration: i,
            loglik: it.f,
            log_params: it.x.clone(),
        }));
        log::debug!(
            "stage {stage}: loglik {:.4} after {} iterations",
            out.f,
            out.iterations
        );
        iterations += out.iterations;
        theta = out.x;
        loglik = out.f;
        converged = out.converged;
        plan = Some(p);
    }
    let hp = Hyperparameters::from_log(&theta);
    let model = VecchiaModel {
        spec: *spec,
        hp,
        thinning: partition.thinning(),
        include_time,
        m: cfg.m,
        seed: cfg.seed,
        plan: plan.expect("at least one stage runs"),
    };
    Ok((
        model,
        FitReport {
            loglik,
            iterations,
            trace,
            converged,
        },
    ))
}

/// Sequential prediction at the rows of `x_test`, returning the plan used.
///
/// Each test point conditions on its `m_p` nearest points among the
/// training data and the test points predicted before it; those enter
/// with their predicted means as pseudo-observations. The reported
/// variance includes the nugget.
pub fn predict_with_plan(
    spec: &KernelSpec,
    hp: &Hyperparameters,
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    m_p: usize,
    seed: u64,
) -> Result<(PredictionResult, ConditioningPlan)> {
    if x_train.nrows() == 0 {
        return Err(Error::EmptyData("prediction needs training data".into()));
    }
    if x_train.nrows() != y_train.len() {
        return Err(Error::Parameter(format!(
            "{} training rows but {} responses",
            x_train.nrows(),
            y_train.len()
        )));
    }
    if x_test.ncols() != hp.dim() || x_train.ncols() != hp.dim() {
        return Err(Error::Parameter(format!(
            "model has {} inputs; training has {}, test {}",
            hp.dim(),
            x_train.ncols(),
            x_test.ncols()
        )));
    }
    let train = ScaledInputs::new(x_train, &hp.lengthscales);
    let test = ScaledInputs::new(x_test, &hp.lengthscales);
    let n_train = train.len();
    if test.is_empty() {
        let plan = ConditioningPlan {
            mode: PlanMode::Prediction,
            n_train,
            entries: Vec::new(),
        };
        return Ok((PredictionResult::default(), plan));
    }
    let plan = prediction_plan(&train, &test, m_p, seed)?;
    let point = |id: usize| {
        if id < n_train {
            train.row(id)
        } else {
            test.row(id - n_train)
        }
    };
    let s = hp.signal_var + hp.nugget;

    let weights: Vec<(Vec<f64>, f64)> = plan
        .entries
        .par_iter()
        .map(|e| {
            let nb = &e.neighbors;
            let k = nb.len();
            let me = test.row(e.index);
            let mut kmat = DMatrix::zeros(k, k);
            let mut kvec = DVector::zeros(k);
            for p in 0..k {
                let rp = point(nb[p]);
                kmat[(p, p)] = s;
                for q in 0..p {
                    let v = spec.eval(
                        crate::kernels::sq_dist(rp, point(nb[q])).sqrt(),
                        hp.signal_var,
                    );
                    kmat[(p, q)] = v;
                    kmat[(q, p)] = v;
                }
                kvec[p] = spec.eval(crate::kernels::sq_dist(rp, me).sqrt(), hp.signal_var);
            }
            let (chol, _) =
                jittered_cholesky(kmat, hp.signal_var).ok_or_else(|| Error::Numerical {
                    index: e.index,
                    reason: "prediction covariance not positive definite after jitter".into(),
                })?;
            let w = chol.solve(&kvec);
            let var = (s - kvec.dot(&w)).max(hp.nugget);
            Ok((w.as_slice().to_vec(), var))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = vec![0.0; test.len()];
    let mut sd = vec![0.0; test.len()];
    for (e, (w, var)) in plan.entries.iter().zip(&weights) {
        let mut mu = 0.0;
        for (id, wi) in e.neighbors.iter().zip(w) {
            let obs = if *id < n_train {
                y_train[*id]
            } else {
                mean[*id - n_train]
            };
            mu += wi * obs;
        }
        mean[e.index] = mu;
        sd[e.index] = var.sqrt();
    }
    Ok((PredictionResult { mean, sd }, plan))
}

pub fn predict(
    model: &VecchiaModel,
    x_train: &DMatrix<f64>,
    y_train: &[f64],
    x_test: &DMatrix<f64>,
    m_p: usize,
    seed: u64,
) -> Result<PredictionResult> {
    predict_with_plan(&model.spec, &model.hp, x_train, y_train, x_test, m_p, seed).map(|(p, _)| p)
}

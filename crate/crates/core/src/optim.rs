//! Limited-memory BFGS ascent with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub max_iter: usize,
    /// Stop when the objective changes by less than `rel_tol * max(|f|, 1)`.
    pub rel_tol: f64,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    pub memory: usize,
    /// Largest Euclidean step (in parameter units) taken in one iteration.
    pub max_step: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iter: 100,
            rel_tol: 1e-6,
            grad_tol: 1e-6,
            memory: 8,
            max_step: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted iterates, starting with the initial point.
    pub trace: Vec<Iterate>,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub reason: String,
    pub trace: Vec<Iterate>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Maximize `f`. The callback returns the value and gradient, or `None`
/// when the point is numerically unusable (treated as a rejected step).
pub fn maximize<F>(mut f: F, x0: &[f64], cfg: &LbfgsConfig) -> Result<Outcome, Failure>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    // Internally minimize g = -f.
    let mut eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (v, gr) = f(x)?;
        if !v.is_finite() || gr.iter().any(|g| !g.is_finite()) {
            return None;
        }
        Some((-v, gr.into_iter().map(|g| -g).collect()))
    };
    let mut x = x0.to_vec();
    let (mut gx, mut grad) = match eval(&x) {
        Some(v) => v,
        None => {
            return Err(Failure {
                reason: "objective not finite at the starting point".into(),
                trace: Vec::new(),
            })
        }
    };
    let mut trace = vec![Iterate {
        x: x.clone(),
        f: -gx,
    }];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        if grad.iter().all(|g| g.abs() < cfg.grad_tol) {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / norm(&grad).max(1.0),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            mem.clear();
            dir = grad.iter().map(|g| -g / norm(&grad).max(1.0)).collect();
            slope = dot(&dir, &grad);
        }
        let len = norm(&dir);
        if len > cfg.max_step {
            let sc = cfg.max_step / len;
            dir.iter_mut().for_each(|v| *v *= sc);
            slope *= sc;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            if let Some((gt, grt)) = eval(&trial) {
                if gt <= gx + 1e-4 * step * slope {
                    accepted = Some((trial, gt, grt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, gn, gradn)) = accepted else {
            // No progress possible along any descent direction we can find.
            converged = grad.iter().all(|g| g.abs() < cfg.grad_tol.max(1e-3));
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gradn.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            mem.push_back((s, y, 1.0 / sy));
            if mem.len() > cfg.memory {
                mem.pop_front();
            }
        }
        let change = (gx - gn).abs();
        let scale = gx.abs().max(1.0);
        x = xn;
        gx = gn;
        grad = gradn;
        trace.push(Iterate {
            x: x.clone(),
            f: -gx,
        });
        if change < cfg.rel_tol * scale {
            converged = true;
            break;
        }
    }
    if !gx.is_finite() {
        return Err(Failure {
            reason: "objective became non-finite".into(),
            trace,
        });
    }
    Ok(Outcome {
        x,
        f: -gx,
        grad: grad.into_iter().map(|g| -g).collect(),
        iterations,
        converged,
        trace,
    })
}

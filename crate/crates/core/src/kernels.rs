//! Covariance functions on anisotropically scaled inputs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    /// Matérn with smoothness 3/2.
    Matern15,
    SquaredExponential,
    /// Wendland C2 function `(1-r)^4 (4r+1)`, zero beyond the support radius.
    CompactRbf,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Matern15 => "matern15",
            KernelFamily::SquaredExponential => "sqexp",
            KernelFamily::CompactRbf => "compact-rbf",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern15" | "matern-1.5" => Ok(KernelFamily::Matern15),
            "sqexp" | "squared-exponential" => Ok(KernelFamily::SquaredExponential),
            "compact-rbf" => Ok(KernelFamily::CompactRbf),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Support radius in scaled-distance units; only read by `CompactRbf`.
    pub radius: f64,
}

impl KernelSpec {
    pub fn matern15() -> Self {
        KernelSpec {
            family: KernelFamily::Matern15,
            radius: 1.0,
        }
    }

    pub fn squared_exponential() -> Self {
        KernelSpec {
            family: KernelFamily::SquaredExponential,
            radius: 1.0,
        }
    }

    pub fn compact(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!(
                "compact support radius must be positive, got {radius}"
            )));
        }
        Ok(KernelSpec {
            family: KernelFamily::CompactRbf,
            radius,
        })
    }

    pub fn from_family(family: KernelFamily) -> Self {
        KernelSpec {
            family,
            radius: 1.0,
        }
    }

    /// Covariance at scaled distance `r`.
    pub fn eval(&self, r: f64, signal_var: f64) -> f64 {
        kernel_eval(self, r, signal_var)
    }

    /// `-k'(r) / r`, finite at `r = 0`.
    ///
    /// The derivative of the covariance with respect to `log l_k` is this
    /// factor times the squared scaled coordinate difference in dimension k.
    pub fn lengthscale_factor(&self, r: f64, signal_var: f64) -> f64 {
        match self.family {
            KernelFamily::Matern15 => 3.0 * signal_var * (-SQRT3 * r).exp(),
            KernelFamily::SquaredExponential => signal_var * (-0.5 * r * r).exp(),
            KernelFamily::CompactRbf => {
                let u = r / self.radius;
                if u >= 1.0 {
                    0.0
                } else {
                    20.0 * signal_var * (1.0 - u).powi(3) / (self.radius * self.radius)
                }
            }
        }
    }
}

/// Covariance value for a non-negative scaled distance.
pub fn kernel_eval(spec: &KernelSpec, r: f64, signal_var: f64) -> f64 {
    assert!(r >= 0.0, "kernel evaluated at negative distance {r}");
    match spec.family {
        KernelFamily::Matern15 => {
            let s = SQRT3 * r;
            signal_var * (1.0 + s) * (-s).exp()
        }
        KernelFamily::SquaredExponential => signal_var * (-0.5 * r * r).exp(),
        KernelFamily::CompactRbf => {
            let u = r / spec.radius;
            if u >= 1.0 {
                0.0
            } else {
                signal_var * (1.0 - u).powi(4) * (4.0 * u + 1.0)
            }
        }
    }
}

/// Per-dimension lengthscales plus signal and nugget variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub nugget: f64,
}

/// Floor applied to the nugget when moving to log coordinates.
pub const MIN_LOG_NUGGET: f64 = 1e-12;

impl Hyperparameters {
    pub fn new(lengthscales: Vec<f64>, signal_var: f64, nugget: f64) -> Result<Self> {
        let hp = Hyperparameters {
            lengthscales,
            signal_var,
            nugget,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::Parameter(
                "at least one lengthscale is required".into(),
            ));
        }
        if let Some(l) = self
            .lengthscales
            .iter()
            .find(|l| !(**l > 0.0 && l.is_finite()))
        {
            return Err(Error::Parameter(format!(
                "lengthscales must be positive, got {l}"
            )));
        }
        if !(self.signal_var > 0.0 && self.signal_var.is_finite()) {
            return Err(Error::Parameter(format!(
                "signal variance must be positive, got {}",
                self.signal_var
            )));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::Parameter(format!(
                "nugget must be non-negative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[log l_1, .., log l_d, log signal_var, log nugget]`.
    pub fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.nugget.max(MIN_LOG_NUGGET).ln());
        v
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Hyperparameters {
            lengthscales: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_var: theta[d].exp(),
            nugget: theta[d + 1].exp(),
        }
    }

    pub fn total_var(&self) -> f64 {
        self.signal_var + self.nugget
    }
}

/// Euclidean distance between `xi / l` and `xj / l`.
pub fn scaled_distance(xi: &[f64], xj: &[f64], hp: &Hyperparameters) -> Result<f64> {
    if xi.len() != xj.len() || xi.len() != hp.dim() {
        return Err(Error::Parameter(format!(
            "dimension mismatch: {} vs {} with {} lengthscales",
            xi.len(),
            xj.len(),
            hp.dim()
        )));
    }
    let mut acc = 0.0;
    for ((a, b), l) in xi.iter().zip(xj).zip(&hp.lengthscales) {
        if !(*l > 0.0) {
            return Err(Error::Parameter(format!("non-positive lengthscale {l}")));
        }
        let diff = (a - b) / l;
        acc += diff * diff;
    }
    Ok(acc.sqrt())
}

/// Inputs divided by their lengthscales, stored row-major for the hot loops.
#[derive(Debug, Clone)]
pub struct ScaledInputs {
    data: Vec<f64>,
    dim: usize,
}

impl ScaledInputs {
    pub fn new(x: &DMatrix<f64>, lengthscales: &[f64]) -> Self {
        assert_eq!(
            x.ncols(),
            lengthscales.len(),
            "lengthscale count must match input columns"
        );
        let (n, d) = x.shape();
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for (k, l) in lengthscales.iter().enumerate() {
                data.push(x[(i, k)] / l);
            }
        }
        ScaledInputs { data, dim: d }
    }

    pub fn unit(x: &DMatrix<f64>) -> Self {
        Self::new(x, &vec![1.0; x.ncols()])
    }

    pub fn from_rows(rows: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && rows.len().is_multiple_of(dim));
        ScaledInputs { data: rows, dim }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        sq_dist(self.row(i), self.row(j))
    }

    #[inline]
    pub fn dist2_to(&self, i: usize, p: &[f64]) -> f64 {
        sq_dist(self.row(i), p)
    }
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gram matrix of the rows of `x`, with the nugget on the diagonal if requested.
pub fn cov_matrix(
    spec: &KernelSpec,
    hp: &Hyperparameters,
    x: &DMatrix<f64>,
    add_nugget: bool,
) -> DMatrix<f64> {
    let s = ScaledInputs::new(x, &hp.lengthscales);
    let k = s.len();
    let mut m = DMatrix::zeros(k, k);
    for i in 0..k {
        m[(i, i)] = hp.signal_var + if add_nugget { hp.nugget } else { 0.0 };
        for j in 0..i {
            let v = kernel_eval(spec, s.dist2(i, j).sqrt(), hp.signal_var);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Cholesky factorization with the diagonal jitter ladder
/// `1e-8, 1e-7, 1e-6` (times `signal_var`) on failure.
///
/// Returns the factor and the jitter that was finally added.
pub fn jittered_cholesky(
    mut m: DMatrix<f64>,
    signal_var: f64,
) -> Option<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some((c, 0.0));
    }
    let mut jitter = 1e-8 * signal_var;
    let mut added = 0.0;
    for _ in 0..3 {
        for i in 0..m.nrows() {
            m[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some((c, added));
        }
        jitter *= 10.0;
    }
    None
}

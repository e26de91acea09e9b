//! PACF-based thinning-number selection and round-robin block partitioning.

use log::warn;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Default number of lags examined by [`select_thinning_number`].
pub const DEFAULT_MAX_LAG: usize = 100;

/// Partial autocorrelations at lags `1..=h_max` via Durbin–Levinson on the
/// biased sample autocovariances.
pub fn pacf(series: &[f64], h_max: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if h_max == 0 {
        return Err(Error::Parameter("h_max must be positive".into()));
    }
    if n <= h_max + 1 {
        return Err(Error::Parameter(format!(
            "series of length {n} too short for {h_max} lags"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let acov = |h: usize| -> f64 {
        centered[..n - h]
            .iter()
            .zip(&centered[h..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let gamma0 = acov(0);
    if !(gamma0 > 0.0) || gamma0.sqrt() <= 1e-12 * mean.abs() {
        return Err(Error::UndefinedPacf("series has zero variance".into()));
    }
    let rho: Vec<f64> = (0..=h_max).map(|h| acov(h) / gamma0).collect();

    let mut out = Vec::with_capacity(h_max);
    let mut phi: Vec<f64> = Vec::with_capacity(h_max);
    let mut err = 1.0;
    for k in 1..=h_max {
        let num = rho[k]
            - phi
                .iter()
                .enumerate()
                .map(|(j, p)| p * rho[k - 1 - j])
                .sum::<f64>();
        let pkk = if err > 0.0 {
            (num / err).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let prev = phi.clone();
        for j in 0..prev.len() {
            phi[j] = prev[j] - pkk * prev[prev.len() - 1 - j];
        }
        phi.push(pkk);
        err *= 1.0 - pkk * pkk;
        out.push(pkk);
    }
    Ok(out)
}

/// PACF of each monitored series, keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct PacfTable {
    pub names: Vec<String>,
    /// `values[s][h - 1]` is the lag-h PACF of series `s`.
    pub values: Vec<Vec<f64>>,
}

impl PacfTable {
    pub fn compute(ds: &Dataset, include_y: bool, h_max: usize) -> Result<Self> {
        let mut names = ds.covariate_names.clone();
        let mut values = (0..ds.d())
            .map(|j| pacf(&ds.column(j), h_max).map_err(|e| name_err(e, &ds.covariate_names[j])))
            .collect::<Result<Vec<_>>>()?;
        if include_y {
            names.push(ds.response_name.clone());
            values.push(pacf(&ds.y, h_max).map_err(|e| name_err(e, &ds.response_name))?);
        }
        Ok(PacfTable { names, values })
    }

    pub fn max_lag(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Largest |PACF| at lag `h` and the series attaining it.
    pub fn worst_at(&self, h: usize) -> (usize, f64) {
        self.values
            .iter()
            .enumerate()
            .map(|(s, v)| (s, v[h - 1].abs()))
            .fold(
                (0, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
    }
}

fn name_err(e: Error, name: &str) -> Error {
    match e {
        Error::UndefinedPacf(msg) => Error::UndefinedPacf(format!("{name}: {msg}")),
        other => other,
    }
}

/// Outcome of the thinning-number search.
#[derive(Debug, Clone, PartialEq)]
pub struct ThinningChoice {
    pub t: usize,
    /// Series whose PACF exceeded the band at the last rejected lag.
    pub binding_series: Option<String>,
    /// Last lag at which some series was outside the band (`t - 1` unless saturated).
    pub binding_lag: Option<usize>,
    pub threshold: f64,
    /// No lag up to `h_max` satisfied the criterion.
    pub saturated: bool,
}

/// Smallest lag at which every monitored series has |PACF| within `2/sqrt(n)`.
pub fn select_thinning_number(
    ds: &Dataset,
    include_y: bool,
    h_max: usize,
) -> Result<ThinningChoice> {
    let threshold = 2.0 / (ds.n() as f64).sqrt();
    let table = PacfTable::compute(ds, include_y, h_max)?;
    Ok(select_from_table(&table, threshold))
}

pub fn select_from_table(table: &PacfTable, threshold: f64) -> ThinningChoice {
    let h_max = table.max_lag();
    let mut binding = None;
    for h in 1..=h_max {
        let (s, v) = table.worst_at(h);
        if v <= threshold {
            return ThinningChoice {
                t: h,
                binding_series: binding.map(|(s, _): (usize, usize)| table.names[s].clone()),
                binding_lag: binding.map(|(_, l)| l),
                threshold,
                saturated: false,
            };
        }
        binding = Some((s, h));
    }
    warn!("no lag up to {h_max} brings every PACF within ±{threshold:.4}; using T = {h_max}");
    ThinningChoice {
        t: h_max,
        binding_series: binding.map(|(s, _)| table.names[s].clone()),
        binding_lag: binding.map(|(_, l)| l),
        threshold,
        saturated: true,
    }
}

/// Round-robin assignment of time-ordered record indices to `T` blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    t: usize,
    blocks: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn thinning(&self) -> usize {
        self.t
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, z: usize) -> &[usize] {
        &self.blocks[z]
    }

    /// Block containing record `i`.
    pub fn block_of(&self, i: usize) -> usize {
        i % self.t
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn smallest_block(&self) -> usize {
        self.blocks.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Block `z` holds the indices congruent to `z` modulo `t` (0-based).
pub fn partition(n: usize, t: usize) -> Result<BlockPartition> {
    if t == 0 || t > n {
        return Err(Error::InvalidThinning(format!(
            "T = {t} must lie in 1..={n}"
        )));
    }
    let blocks = (0..t).map(|z| (z..n).step_by(t).collect()).collect();
    Ok(BlockPartition { t, blocks })
}

/// Largest `T` with `floor(n / T) >= m + 1`.
pub fn max_thinning_for(n: usize, m: usize) -> Result<usize> {
    if n <= m {
        return Err(Error::InvalidThinning(format!(
            "n = {n} leaves no valid T for m = {m}"
        )));
    }
    Ok(n / (m + 1))
}

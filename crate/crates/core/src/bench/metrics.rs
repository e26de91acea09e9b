use crate::error::{Error, Result};

/// Root mean squared error.
pub fn rmse(y: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(y.len(), pred.len())?;
    let ss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / y.len() as f64).sqrt())
}

/// `1/(2n) * sum[(y - mu)^2 / sd^2 + log(2 pi sd^2)]`.
pub fn nlpd(y: &[f64], mean: &[f64], sd: &[f64]) -> Result<f64> {
    check_len(y.len(), mean.len())?;
    check_len(y.len(), sd.len())?;
    if let Some(i) = sd.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Parameter(format!(
            "predictive sd at index {i} is {} (must be positive)",
            sd[i]
        )));
    }
    let total: f64 = y
        .iter()
        .zip(mean)
        .zip(sd)
        .map(|((a, m), s)| {
            let v = s * s;
            (a - m) * (a - m) / v + (std::f64::consts::TAU * v).ln()
        })
        .sum();
    Ok(total / (2.0 * y.len() as f64))
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Parameter(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::EmptyData("no test points".into()));
    }
    Ok(())
}

/// One method run on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub thinning: usize,
    pub rmse: f64,
    /// Absent when the method produced no predictive variance.
    pub nlpd: Option<f64>,
    pub runtime_s: f64,
}

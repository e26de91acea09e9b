use crate::error::{Error, Result};
use crate::prediction::PredictionResult;

/// Per-block predictions and their equal-weight average.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub blocks: Vec<PredictionResult>,
    pub combined: PredictionResult,
}

/// Mean of the block means, and the standard deviation combining the mean
/// block variance with the spread of block means around their average.
pub fn combine_point(means: &[f64], sds: &[f64]) -> (f64, f64) {
    let t = means.len() as f64;
    let mean = means.iter().sum::<f64>() / t;
    let within = sds.iter().map(|s| s * s).sum::<f64>() / t;
    let between = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / t;
    (mean, (within + between).sqrt())
}

pub fn ensemble_predict(blocks: Vec<PredictionResult>) -> Result<EnsemblePrediction> {
    let Some(first) = blocks.first() else {
        return Err(Error::Parameter("ensemble needs at least one block".into()));
    };
    let n = first.len();
    if let Some(bad) = blocks.iter().position(|b| b.len() != n) {
        return Err(Error::Parameter(format!(
            "block {bad} has {} predictions, expected {n}",
            blocks[bad].len()
        )));
    }
    let mut mean = Vec::with_capacity(n);
    let mut sd = Vec::with_capacity(n);
    let mut mu = vec![0.0; blocks.len()];
    let mut s = vec![0.0; blocks.len()];
    for i in 0..n {
        for (z, b) in blocks.iter().enumerate() {
            mu[z] = b.mean[i];
            s[z] = b.sd[i];
        }
        let (m, v) = combine_point(&mu, &s);
        mean.push(m);
        sd.push(v);
    }
    Ok(EnsemblePrediction {
        blocks,
        combined: PredictionResult { mean, sd },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn examples() {
        let (m, s) = combine_point(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]);
        assert_eq!(m, 2.0);
        assert_relative_eq!(s, (2.0f64 / 3.0).sqrt(), max_relative = 1e-15);
        let (m, s) = combine_point(&[0.7; 4], &[0.3; 4]);
        assert_relative_eq!(m, 0.7, max_relative = 1e-15);
        assert_relative_eq!(s, 0.3, max_relative = 1e-15);
        let single = PredictionResult::new(vec![1.5, -2.0], vec![0.4, 0.1]).unwrap();
        let e = ensemble_predict(vec![single.clone()]).unwrap();
        assert_eq!(e.combined, single);
        assert!(ensemble_predict(Vec::new()).is_err());
    }
}

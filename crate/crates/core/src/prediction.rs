use crate::error::{Error, Result};

/// Predictive means and standard deviations, one per test point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionResult {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl PredictionResult {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>) -> Result<Self> {
        if mean.len() != sd.len() {
            return Err(Error::Parameter(format!(
                "{} means but {} standard deviations",
                mean.len(),
                sd.len()
            )));
        }
        Ok(PredictionResult { mean, sd })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.sd.iter().map(|s| s * s).collect()
    }
}

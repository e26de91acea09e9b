//! The robot-arm function with optional autoregressive inputs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, StreamRng};

/// Distance from the origin of a planar four-segment arm.
pub fn robot_arm(theta: &[f64], len: &[f64]) -> f64 {
    let mut xi = 0.0;
    let mut u = 0.0;
    let mut v = 0.0;
    for (a, l) in theta.iter().zip(len) {
        xi += a;
        u += l * xi.cos();
        v += l * xi.sin();
    }
    (u * u + v * v).sqrt()
}

/// Constants turning a lag order into AR and MA coefficients.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Calibration {
    /// Spectral radius of the companion matrix of each AR polynomial.
    pub spectral_radius: f64,
    /// `psi_k = psi_scale / k`.
    pub psi_scale: f64,
    pub innovation_sd: f64,
    /// Standard deviation of the noise entering the MA term of y.
    pub noise_sd: f64,
    pub burn_in: usize,
    /// Rescale each simulated input series to zero mean and unit variance
    /// before it enters the arm function.
    pub standardize_inputs: bool,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            spectral_radius: 0.95,
            psi_scale: 0.5,
            innovation_sd: 1.0,
            noise_sd: 0.5,
            burn_in: 500,
            standardize_inputs: true,
        }
    }
}

/// Simulation settings. `lag_order = 0` means a Latin hypercube design
/// with independent rows and no noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmArSpec {
    pub lag_order: usize,
    /// AR coefficients per input series (four angles, then four lengths).
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub innovation_sd: f64,
    pub noise_sd: f64,
    pub burn_in: usize,
    pub standardize_inputs: bool,
    pub seed: u64,
    /// Pre-history for each series (most recent last); drawn standard
    /// normal when absent.
    pub initial_values: Option<Vec<Vec<f64>>>,
}

/// `phi_k = c / k`, with `c` chosen so the largest root of the AR
/// polynomial has modulus `radius`.
pub fn ar_coefficients(m: usize, radius: f64) -> Vec<f64> {
    let norm: f64 = (1..=m).map(|k| radius.powi(-(k as i32)) / k as f64).sum();
    (1..=m).map(|k| 1.0 / (k as f64 * norm)).collect()
}

/// Largest eigenvalue modulus of the companion matrix of `phi`.
pub fn spectral_radius(phi: &[f64]) -> f64 {
    let m = phi.len();
    if m == 0 {
        return 0.0;
    }
    let mut c = DMatrix::zeros(m, m);
    for (k, p) in phi.iter().enumerate() {
        c[(0, k)] = *p;
    }
    for i in 1..m {
        c[(i, i - 1)] = 1.0;
    }
    c.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl ArmArSpec {
    pub fn lhs(seed: u64) -> Self {
        ArmArSpec {
            lag_order: 0,
            phi: vec![Vec::new(); 8],
            psi: Vec::new(),
            innovation_sd: 0.0,
            noise_sd: 0.0,
            burn_in: 0,
            standardize_inputs: false,
            seed,
            initial_values: None,
        }
    }

    pub fn calibrated(lag_order: usize, cal: &Calibration, seed: u64) -> Self {
        if lag_order == 0 {
            return Self::lhs(seed);
        }
        let phi = ar_coefficients(lag_order, cal.spectral_radius);
        ArmArSpec {
            lag_order,
            phi: vec![phi; 8],
            psi: (1..=lag_order).map(|k| cal.psi_scale / k as f64).collect(),
            innovation_sd: cal.innovation_sd,
            noise_sd: cal.noise_sd,
            burn_in: cal.burn_in,
            standardize_inputs: cal.standardize_inputs,
            seed,
            initial_values: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lag_order == 0 {
            return Ok(());
        }
        if self.phi.len() != 8 || self.phi.iter().any(|p| p.len() != self.lag_order) {
            return Err(Error::Config(format!(
                "need 8 AR coefficient vectors of length {}",
                self.lag_order
            )));
        }
        if self.psi.len() != self.lag_order {
            return Err(Error::Config(format!(
                "need {} MA coefficients, got {}",
                self.lag_order,
                self.psi.len()
            )));
        }
        for (s, p) in self.phi.iter().enumerate() {
            let rho = spectral_radius(p);
            if !(rho < 1.0) {
                return Err(Error::Config(format!(
                    "AR series {s} is not stationary (spectral radius {rho:.4})"
                )));
            }
        }
        if !(self.innovation_sd >= 0.0 && self.noise_sd >= 0.0) {
            return Err(Error::Config(
                "noise standard deviations must be non-negative".into(),
            ));
        }
        if let Some(init) = &self.initial_values {
            if init.len() != 8 || init.iter().any(|v| v.len() != self.lag_order) {
                return Err(Error::Config(format!(
                    "initial values must be 8 series of length {}",
                    self.lag_order
                )));
            }
        }
        Ok(())
    }
}

fn lhs_inputs(n: usize, rng: &mut StreamRng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, 8);
    for j in 0..8 {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let width = if j < 4 { std::f64::consts::TAU } else { 1.0 };
        for (i, s) in strata.into_iter().enumerate() {
            x[(i, j)] = width * (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    x
}

fn ar_series(
    phi: &[f64],
    init: Option<&[f64]>,
    n: usize,
    burn: usize,
    sd: f64,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let m = phi.len();
    let total = m + burn + n;
    let mut s = Vec::with_capacity(total);
    match init {
        Some(v) => s.extend_from_slice(v),
        None => s.extend((0..m).map(|_| -> f64 { StandardNormal.sample(rng) })),
    }
    let noise = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
    for t in m..total {
        let ar: f64 = phi.iter().enumerate().map(|(k, p)| p * s[t - 1 - k]).sum();
        let e = if sd > 0.0 { noise.sample(rng) } else { 0.0 };
        s.push(ar + e);
    }
    s.split_off(m + burn)
}

fn standardize_in_place(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for a in v.iter_mut() {
        *a = (*a - mean) / sd;
    }
}

/// One realization of `n` records with times `t0 + 1, .., t0 + n`.
fn realization(spec: &ArmArSpec, n: usize, t0: usize, rng: &mut StreamRng) -> Result<Dataset> {
    let (x, y) = if spec.lag_order == 0 {
        let x = lhs_inputs(n, rng);
        let y = (0..n)
            .map(|i| {
                let r: Vec<f64> = x.row(i).iter().copied().collect();
                robot_arm(&r[..4], &r[4..])
            })
            .collect();
        (x, y)
    } else {
        let m = spec.lag_order;
        let mut x = DMatrix::zeros(n, 8);
        for j in 0..8 {
            let init = spec.initial_values.as_ref().map(|v| v[j].as_slice());
            let mut s = ar_series(&spec.phi[j], init, n, spec.burn_in, spec.innovation_sd, rng);
            if spec.standardize_inputs {
                standardize_in_place(&mut s);
            }
            for (i, v) in s.into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        let eta: Vec<f64> = if spec.noise_sd > 0.0 {
            let nd = Normal::new(0.0, spec.noise_sd).expect("finite sd");
            (0..n + m).map(|_| nd.sample(rng)).collect()
        } else {
            vec![0.0; n + m]
        };
        let y = (0..n)
            .map(|i| {
                let r: Vec<f64> = x.row(i).iter().copied().collect();
                // eta[i + m] is the current shock; the MA term uses the m before it
                let ma: f64 = spec
                    .psi
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * eta[i + m - 1 - k])
                    .sum();
                robot_arm(&r[..4], &r[4..]) + ma
            })
            .collect();
        (x, y)
    };
    let t = (t0 + 1..=t0 + n).map(|v| v as f64).collect();
    let names = [
        "theta1", "theta2", "theta3", "theta4", "l1", "l2", "l3", "l4",
    ]
    .map(String::from)
    .to_vec();
    Dataset::with_names(x, y, t, names, "y".into())
}

/// Independent training and test realizations. Test times start at
/// `2 n_train + 1`, so the gap exceeds every admissible thinning number.
pub fn simulate(spec: &ArmArSpec, n_train: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if n_train < spec.lag_order + 1 || n_train < 2 {
        return Err(Error::Config(format!(
            "n_train = {n_train} too small for lag order {}",
            spec.lag_order
        )));
    }
    let mut rng = seed::stream(spec.seed, "arm-train", 0);
    let train = realization(spec, n_train, 0, &mut rng)?;
    let mut rng = seed::stream(spec.seed, "arm-test", 0);
    let test = realization(spec, n_test.max(1), 2 * n_train, &mut rng)?;
    Ok((train, test))
}

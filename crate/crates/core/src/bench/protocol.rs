//! Replication, thinning-sweep and seed-stability experiments.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::arm::{simulate, ArmArSpec, Calibration};
use super::metrics::{nlpd, rmse, MetricReport};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{run_method, Method, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Fresh train/test data per seed.
    Replication,
    /// One dataset, RMSE as a function of T.
    ThinningSweep,
    /// One dataset, method seed varied.
    Stability,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Replication => "replication",
            Protocol::ThinningSweep => "thinning-sweep",
            Protocol::Stability => "stability",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Protocol::Replication,
            Protocol::ThinningSweep,
            Protocol::Stability,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown protocol '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// AR lag order; 0 is the Latin hypercube design.
    pub lag_order: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Simulator seed for the protocols that use a single dataset.
    pub data_seed: u64,
    pub calibration: Calibration,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            lag_order: 13,
            n_train: 2000,
            n_test: 1000,
            data_seed: 1,
            calibration: Calibration::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn tag(&self) -> String {
        if self.lag_order == 0 {
            "lhs".into()
        } else {
            format!("ar{}", self.lag_order)
        }
    }

    pub fn simulate(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        simulate(
            &ArmArSpec::calibrated(self.lag_order, &self.calibration, seed),
            self.n_train,
            self.n_test,
        )
    }
}

/// Declarative experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub protocol: Protocol,
    pub methods: Vec<String>,
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    /// T values for the thinning sweep.
    pub t_grid: Vec<usize>,
    pub m: usize,
    pub m_p: usize,
    pub with_g: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            protocol: Protocol::Replication,
            methods: vec!["sv".into(), "thinned-sv".into()],
            scenario: ScenarioConfig::default(),
            seeds: (1..=10).collect(),
            t_grid: std::iter::once(1).chain((5..=500).step_by(5)).collect(),
            m: 30,
            m_p: 140,
            with_g: false,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("bench config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn parsed_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|s| s.trim().parse()).collect()
    }

    pub fn validate(&self) -> Result<Vec<Method>> {
        let methods = self.parsed_methods()?;
        if self.m == 0 || self.m_p == 0 {
            return Err(Error::Config("m and m_p must be at least 1".into()));
        }
        if !methods.is_empty() && self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.protocol == Protocol::ThinningSweep && self.t_grid.contains(&0) {
            return Err(Error::Config(
                "thinning grid values must be at least 1".into(),
            ));
        }
        Ok(methods)
    }

    fn options(&self, seed: u64, thinning: Option<usize>) -> RunOptions {
        RunOptions {
            m: self.m,
            m_p: self.m_p,
            seed,
            thinning,
            with_g: self.with_g,
            ..Default::default()
        }
    }
}

/// Every method run of an experiment, in deterministic order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub protocol: Protocol,
    pub reports: Vec<MetricReport>,
}

fn evaluate(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    opts: &RunOptions,
    scenario: &str,
) -> Result<MetricReport> {
    let out = run_method(method, train, test, opts)?;
    let p = &out.prediction;
    let nl = if p.sd.iter().all(|s| *s > 0.0) {
        Some(nlpd(&test.y, &p.mean, &p.sd)?)
    } else {
        None
    };
    Ok(MetricReport {
        scenario: scenario.to_string(),
        method: method.name().to_string(),
        seed: opts.seed,
        thinning: out.thinning,
        rmse: rmse(&test.y, &p.mean)?,
        nlpd: nl,
        runtime_s: out.runtime_s,
    })
}

/// Run the experiment described by `cfg`.
pub fn run_protocol(cfg: &BenchConfig) -> Result<BenchResult> {
    let methods = cfg.validate()?;
    let tag = cfg.scenario.tag();
    let mut reports = Vec::new();
    if methods.is_empty() {
        return Ok(BenchResult {
            protocol: cfg.protocol,
            reports,
        });
    }
    match cfg.protocol {
        Protocol::Replication => {
            for &seed in &cfg.seeds {
                let (train, test) = cfg.scenario.simulate(seed)?;
                for &m in &methods {
                    log::info!("replication seed {seed}: {m}");
                    reports.push(evaluate(m, &train, &test, &cfg.options(seed, None), &tag)?);
                }
            }
        }
        Protocol::Stability => {
            let (train, test) = cfg.scenario.simulate(cfg.scenario.data_seed)?;
            for &m in &methods {
                for &seed in &cfg.seeds {
                    log::info!("stability seed {seed}: {m}");
                    reports.push(evaluate(m, &train, &test, &cfg.options(seed, None), &tag)?);
                }
            }
        }
        Protocol::ThinningSweep => {
            let (train, test) = cfg.scenario.simulate(cfg.scenario.data_seed)?;
            let seed = cfg.seeds[0];
            for &m in &methods {
                if !m.thinned() {
                    return Err(Error::Config(format!(
                        "thinning sweep needs thinned methods, got '{m}'"
                    )));
                }
                for &t in &cfg.t_grid {
                    log::info!("sweep T = {t}: {m}");
                    reports.push(evaluate(
                        m,
                        &train,
                        &test,
                        &cfg.options(seed, Some(t)),
                        &tag,
                    )?);
                }
            }
        }
    }
    Ok(BenchResult {
        protocol: cfg.protocol,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = BenchConfig::from_toml(
            r#"
            protocol = "thinning-sweep"
            methods = ["thinned-sv"]
            seeds = [3]
            t_grid = [1, 5, 10]
            [scenario]
            lag_order = 13
            n_train = 500
            [scenario.calibration]
            spectral_radius = 0.9
            "#,
        )
        .unwrap();
        assert_eq!(cfg.protocol, Protocol::ThinningSweep);
        assert_eq!(cfg.scenario.calibration.spectral_radius, 0.9);
        assert_eq!(cfg.scenario.calibration.psi_scale, 0.5);
        assert_eq!(cfg.t_grid, vec![1, 5, 10]);
    }

    #[test]
    fn unknown_method_is_config_error() {
        let cfg = BenchConfig {
            methods: vec!["kriging".into()],
            ..Default::default()
        };
        assert!(matches!(run_protocol(&cfg), Err(Error::Config(_))));
        assert!(matches!(
            BenchConfig::from_toml("bogus = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn no_methods_gives_empty_table() {
        let cfg = BenchConfig {
            methods: vec![],
            ..Default::default()
        };
        assert!(run_protocol(&cfg).unwrap().reports.is_empty());
    }
}

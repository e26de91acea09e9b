//! Plain-text model files: `key = value` lines under a version header.
//!
//! Floats are written in Rust's shortest round-trip form, so a saved and
//! reloaded model predicts bit-identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::blockmodels::TwinSizes;
use crate::dataset::{CsvSchema, Standardization};
use crate::error::{Error, Result};
use crate::kernels::{Hyperparameters, KernelFamily};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "# thingp model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sv,
    Twin,
}

impl ModelKind {
    fn name(self) -> &'static str {
        match self {
            ModelKind::Sv => "sv",
            ModelKind::Twin => "twin",
        }
    }
}

/// Parameters of one block of a twin-style ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedTwinBlock {
    pub hp: Hyperparameters,
    pub lambda: f64,
    pub radius: f64,
    pub sizes: TwinSizes,
    /// Support rows, as positions within the block.
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub kind: ModelKind,
    pub kernel: KernelFamily,
    pub thinned: bool,
    pub thinning: usize,
    pub include_time: bool,
    pub m: usize,
    pub m_p: usize,
    pub seed: u64,
    /// Scaled-Vecchia hyperparameters (empty lengthscales for twin models).
    pub hp: Hyperparameters,
    pub blocks: Vec<SavedTwinBlock>,
    pub standardization: Standardization,
    pub t_mean: f64,
    pub t_scale: f64,
    /// Training data location and schema; predictions reload it.
    pub data: String,
    pub schema: CsvSchema,
    pub n_train: usize,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(",")
}

impl SavedModel {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("format_version", FORMAT_VERSION.to_string());
        kv("model", self.kind.name().into());
        kv("kernel", self.kernel.name().into());
        kv("thinned", self.thinned.to_string());
        kv("thinning", self.thinning.to_string());
        kv("include_time", self.include_time.to_string());
        kv("m", self.m.to_string());
        kv("m_p", self.m_p.to_string());
        kv("seed", self.seed.to_string());
        kv("lengthscales", floats(&self.hp.lengthscales));
        kv("signal_var", f(self.hp.signal_var));
        kv("nugget", f(self.hp.nugget));
        let st = &self.standardization;
        kv("x_mean", floats(&st.x_mean));
        kv("x_scale", floats(&st.x_scale));
        kv("kept_columns", join(&st.kept_columns));
        kv("y_mean", f(st.y_mean));
        kv("y_scale", f(st.y_scale));
        kv("t_mean", f(self.t_mean));
        kv("t_scale", f(self.t_scale));
        kv("data", self.data.clone());
        kv("response", self.schema.response.clone());
        kv("covariates", self.schema.covariates.join(","));
        kv("time", self.schema.time.clone().unwrap_or_default());
        kv("n_train", self.n_train.to_string());
        kv("blocks", self.blocks.len().to_string());
        for (z, b) in self.blocks.iter().enumerate() {
            kv(
                &format!("block.{z}.lengthscales"),
                floats(&b.hp.lengthscales),
            );
            kv(&format!("block.{z}.signal_var"), f(b.hp.signal_var));
            kv(&format!("block.{z}.nugget"), f(b.hp.nugget));
            kv(&format!("block.{z}.lambda"), f(b.lambda));
            kv(&format!("block.{z}.radius"), f(b.radius));
            kv(
                &format!("block.{z}.sizes"),
                join(&[b.sizes.n_g, b.sizes.k_loc, b.sizes.n_val]),
            );
            kv(&format!("block.{z}.support"), join(&b.support));
        }
        format!("{MAGIC}\n{s}")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(Error::ModelFormat("missing model header line".into()));
        }
        let mut map = BTreeMap::new();
        for (no, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::ModelFormat(format!("line {}: expected 'key = value'", no + 2))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let r = Reader { map };
        let version: u32 = r.parse("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let kind = match r.get("model")? {
            "sv" => ModelKind::Sv,
            "twin" => ModelKind::Twin,
            other => return Err(Error::ModelFormat(format!("unknown model type '{other}'"))),
        };
        let kernel: KernelFamily = r
            .get("kernel")?
            .parse()
            .map_err(|e: Error| Error::ModelFormat(e.to_string()))?;
        let hp = Hyperparameters {
            lengthscales: r.list("lengthscales")?,
            signal_var: r.parse("signal_var")?,
            nugget: r.parse("nugget")?,
        };
        let n_blocks: usize = r.parse("blocks")?;
        let mut blocks = Vec::with_capacity(n_blocks);
        for z in 0..n_blocks {
            let key = |s: &str| format!("block.{z}.{s}");
            let sizes: Vec<usize> = r.list(&key("sizes"))?;
            if sizes.len() != 3 {
                return Err(Error::ModelFormat(format!(
                    "{} needs three values",
                    key("sizes")
                )));
            }
            blocks.push(SavedTwinBlock {
                hp: Hyperparameters {
                    lengthscales: r.list(&key("lengthscales"))?,
                    signal_var: r.parse(&key("signal_var"))?,
                    nugget: r.parse(&key("nugget"))?,
                },
                lambda: r.parse(&key("lambda"))?,
                radius: r.parse(&key("radius"))?,
                sizes: TwinSizes {
                    n_g: sizes[0],
                    k_loc: sizes[1],
                    n_val: sizes[2],
                },
                support: r.list(&key("support"))?,
            });
        }
        let standardization = Standardization {
            x_mean: r.list("x_mean")?,
            x_scale: r.list("x_scale")?,
            y_mean: r.parse("y_mean")?,
            y_scale: r.parse("y_scale")?,
            kept_columns: r.list("kept_columns")?,
            applied: true,
        };
        let d = standardization.kept_columns.len();
        if standardization.x_mean.len() != d || standardization.x_scale.len() != d {
            return Err(Error::ModelFormat(
                "standardization vectors disagree in length".into(),
            ));
        }
        let time = r.get("time")?;
        let model = SavedModel {
            kind,
            kernel,
            thinned: r.parse("thinned")?,
            thinning: r.parse("thinning")?,
            include_time: r.parse("include_time")?,
            m: r.parse("m")?,
            m_p: r.parse("m_p")?,
            seed: r.parse("seed")?,
            hp,
            blocks,
            standardization,
            t_mean: r.parse("t_mean")?,
            t_scale: r.parse("t_scale")?,
            data: r.get("data")?.to_string(),
            schema: CsvSchema {
                response: r.get("response")?.to_string(),
                covariates: r.list("covariates")?,
                time: if time.is_empty() {
                    None
                } else {
                    Some(time.to_string())
                },
            },
            n_train: r.parse("n_train")?,
        };
        if model.kind == ModelKind::Twin && model.blocks.len() != model.thinning {
            return Err(Error::ModelFormat(format!(
                "{} blocks stored for T = {}",
                model.blocks.len(),
                model.thinning
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

struct Reader {
    map: BTreeMap<String, String>,
}

impl Reader {
    fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::ModelFormat(format!("missing key '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::ModelFormat(format!("bad value for '{key}': '{v}'")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::ModelFormat(format!("bad entry '{p}' in '{key}'")))
            })
            .collect()
    }
}

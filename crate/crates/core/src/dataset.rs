//! Time-indexed regression data, CSV ingestion and standardization.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Records `{x_i, y_i, t_i}` sorted by strictly increasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub response_name: String,
    /// `t` was filled in as the record number because no time column existed.
    pub time_synthesized: bool,
    /// Rows removed during ingestion because a used cell was missing.
    pub dropped_rows: usize,
    /// Constant covariate columns removed during ingestion.
    pub dropped_columns: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|i| format!("x{i}")).collect();
        Self::with_names(x, y, t, names, "y".to_string())
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: Vec<f64>,
        t: Vec<f64>,
        covariate_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        let ds = Dataset {
            x,
            y,
            t,
            covariate_names,
            response_name,
            time_synthesized: false,
            dropped_rows: 0,
            dropped_columns: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::EmptyData("dataset has no rows".into()));
        }
        if self.x.ncols() == 0 {
            return Err(Error::Schema("dataset has no covariate columns".into()));
        }
        if self.x.nrows() != n || self.t.len() != n {
            return Err(Error::Schema(format!(
                "length mismatch: x has {} rows, y {}, t {}",
                self.x.nrows(),
                n,
                self.t.len()
            )));
        }
        if self.covariate_names.len() != self.x.ncols() {
            return Err(Error::Schema(
                "covariate name count does not match x".into(),
            ));
        }
        if self
            .x
            .iter()
            .chain(&self.y)
            .chain(&self.t)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Schema("non-finite value in dataset".into()));
        }
        if let Some(w) = self.t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Schema(format!(
                "time index not strictly increasing at row {}",
                w + 1
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.x.column(j).iter().copied().collect()
    }

    /// Covariates, optionally followed by `t` as one more input column.
    pub fn design(&self, include_time: bool) -> DMatrix<f64> {
        if !include_time {
            return self.x.clone();
        }
        let (n, d) = self.x.shape();
        DMatrix::from_fn(
            n,
            d + 1,
            |i, j| if j < d { self.x[(i, j)] } else { self.t[i] },
        )
    }

    /// Rows `indices` (in the given order) as a new dataset.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select_rows(indices);
        Dataset {
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            covariate_names: self.covariate_names.clone(),
            response_name: self.response_name.clone(),
            time_synthesized: self.time_synthesized,
            dropped_rows: 0,
            dropped_columns: self.dropped_columns.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.covariate_names.clone();
        header.push(self.response_name.clone());
        header.push("t".into());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.y[i].to_string());
            rec.push(self.t[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub response: String,
    pub covariates: Vec<String>,
    pub time: Option<String>,
}

impl CsvSchema {
    pub fn new(response: &str, covariates: &[&str], time: Option<&str>) -> Self {
        CsvSchema {
            response: response.to_string(),
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            time: time.map(str::to_string),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Load points to predict at: every listed covariate is kept (constant or
/// not), and a missing response column is allowed (filled with zeros).
pub fn load_test_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv_with(file, schema, false)
}

fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, ()> {
    let s = raw.trim();
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(()),
    }
}

pub fn read_csv<R: Read>(input: R, schema: &CsvSchema) -> Result<Dataset> {
    read_csv_with(input, schema, true)
}

fn read_csv_with<R: Read>(input: R, schema: &CsvSchema, training: bool) -> Result<Dataset> {
    if schema.covariates.is_empty() {
        return Err(Error::Schema(
            "at least one covariate column is required".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let y_col = match find(&schema.response) {
        Ok(c) => Some(c),
        Err(_) if !training => None,
        Err(e) => return Err(e),
    };
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let t_col = schema.time.as_deref().map(find).transpose()?;

    let d = x_cols.len();
    let mut xs: Vec<f64> = Vec::new();
    let mut ys = Vec::new();
    let mut ts = Vec::new();
    let mut dropped = 0usize;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let cell = |col: usize| -> Result<Option<f64>> {
            parse_cell(rec.get(col).unwrap_or("")).map_err(|_| {
                Error::Schema(format!(
                    "non-numeric value '{}' in column '{}' at data row {}",
                    rec.get(col).unwrap_or(""),
                    &headers[col],
                    line + 1
                ))
            })
        };
        let y = match y_col {
            Some(c) => cell(c)?,
            None => Some(0.0),
        };
        let x = x_cols
            .iter()
            .map(|&c| cell(c))
            .collect::<Result<Vec<_>>>()?;
        let t = match t_col {
            Some(c) => cell(c)?,
            None => Some((line + 1) as f64),
        };
        match (y, t, x.iter().all(Option::is_some)) {
            (Some(y), Some(t), true) => {
                xs.extend(x.into_iter().flatten());
                ys.push(y);
                ts.push(t);
            }
            _ => dropped += 1,
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::EmptyData(format!(
            "no usable rows ({dropped} dropped for missing values)"
        )));
    }
    if dropped > 0 {
        warn!("dropped {dropped} rows with missing values");
    }

    // Stable sort by time keeps file order among ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let mut t: Vec<f64> = order.iter().map(|&i| ts[i]).collect();
    if t.windows(2).any(|w| w[1] <= w[0]) {
        warn!("duplicate time stamps; replacing t by rank");
        t = (1..=n).map(|r| r as f64).collect();
    }
    let y: Vec<f64> = order.iter().map(|&i| ys[i]).collect();

    let mut keep = Vec::new();
    let mut dropped_columns = Vec::new();
    for (k, name) in schema.covariates.iter().enumerate() {
        let first = xs[order[0] * d + k];
        if training && order.iter().all(|&i| xs[i * d + k] == first) {
            warn!("covariate '{name}' is constant and is treated as non-informative");
            dropped_columns.push(name.clone());
        } else {
            keep.push(k);
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyData(
            "every covariate column is constant".into(),
        ));
    }
    let x = DMatrix::from_fn(n, keep.len(), |i, j| xs[order[i] * d + keep[j]]);
    let ds = Dataset {
        x,
        y,
        t,
        covariate_names: keep.iter().map(|&k| schema.covariates[k].clone()).collect(),
        response_name: schema.response.clone(),
        time_synthesized: schema.time.is_none(),
        dropped_rows: dropped,
        dropped_columns,
    };
    ds.validate()?;
    Ok(ds)
}

/// Column means and scales used to map data to zero mean and unit sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_scale: f64,
    /// Indices (into the unstandardized covariates) of the columns kept.
    pub kept_columns: Vec<usize>,
    pub applied: bool,
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (v.len() - 1) as f64
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let ss: f64 = v.map(|a| (a - mean) * (a - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

impl Standardization {
    /// The identity transform for `d` columns.
    pub fn identity(d: usize) -> Self {
        Standardization {
            x_mean: vec![0.0; d],
            x_scale: vec![1.0; d],
            y_mean: 0.0,
            y_scale: 1.0,
            kept_columns: (0..d).collect(),
            applied: false,
        }
    }

    pub fn apply_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), self.kept_columns.len(), |i, j| {
            (x[(i, self.kept_columns[j])] - self.x_mean[j]) / self.x_scale[j]
        })
    }

    pub fn apply_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_scale).collect()
    }

    pub fn invert_y(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_scale + self.y_mean).collect()
    }

    pub fn invert_sd(&self, sd: &[f64]) -> Vec<f64> {
        sd.iter().map(|s| s * self.y_scale).collect()
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        out.x = self.apply_x(&ds.x);
        out.y = self.apply_y(&ds.y);
        out.covariate_names = self
            .kept_columns
            .iter()
            .map(|&k| ds.covariate_names[k].clone())
            .collect();
        out
    }

    /// Undo `apply` on the kept columns.
    pub fn destandardize(&self, ds: &Dataset) -> Dataset {
        let mut out = ds.clone();
        out.x = DMatrix::from_fn(ds.n(), ds.d(), |i, j| {
            ds.x[(i, j)] * self.x_scale[j] + self.x_mean[j]
        });
        out.y = self.invert_y(&ds.y);
        out
    }
}

/// Rescale every covariate and the response to zero mean and unit sample sd.
///
/// Zero-variance covariates are dropped with a warning; a zero-variance
/// response is an error.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardization)> {
    if ds.n() < 2 {
        return Err(Error::EmptyData(
            "standardization needs at least two rows".into(),
        ));
    }
    let mut st = Standardization {
        x_mean: Vec::new(),
        x_scale: Vec::new(),
        y_mean: 0.0,
        y_scale: 1.0,
        kept_columns: Vec::new(),
        applied: true,
    };
    for j in 0..ds.d() {
        let (m, s) = mean_sd(ds.x.column(j).iter().copied());
        if s > 0.0 && s.is_finite() {
            st.x_mean.push(m);
            st.x_scale.push(s);
            st.kept_columns.push(j);
        } else {
            warn!("dropping zero-variance column '{}'", ds.covariate_names[j]);
        }
    }
    if st.kept_columns.is_empty() {
        return Err(Error::EmptyData(
            "all covariate columns have zero variance".into(),
        ));
    }
    let (ym, ys) = mean_sd(ds.y.iter().copied());
    if !(ys > 0.0) {
        return Err(Error::EmptyData("response has zero variance".into()));
    }
    st.y_mean = ym;
    st.y_scale = ys;
    let out = st.apply(ds);
    Ok((out, st))
}

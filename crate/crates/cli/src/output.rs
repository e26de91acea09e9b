use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use thingp::temporal::ResidualSeries;
use thingp::{PredictionResult, Result};

/// Hex SHA-256 of the resolved configuration text.
pub fn config_hash(config: &str) -> String {
    Sha256::digest(config.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn header(hash: &str, seed: u64) -> String {
    format!("config_hash={hash} seed={seed}")
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn csv_writer(path: Option<&Path>, header: &str) -> Result<csv::Writer<Box<dyn Write>>> {
    let mut out = sink(path)?;
    writeln!(out, "# {header}")?;
    Ok(csv::Writer::from_writer(out))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// `mean,sd`, plus `f_mean,g_mean` when g was added.
pub fn write_predictions(
    path: Option<&Path>,
    header: &str,
    pred: &PredictionResult,
    parts: Option<(&PredictionResult, &PredictionResult)>,
) -> Result<()> {
    let mut w = csv_writer(path, header)?;
    if parts.is_some() {
        w.write_record(["mean", "sd", "f_mean", "g_mean"])?;
    } else {
        w.write_record(["mean", "sd"])?;
    }
    for i in 0..pred.len() {
        let mut row = vec![num(pred.mean[i]), num(pred.sd[i])];
        if let Some((f, g)) = parts {
            row.push(num(f.mean[i]));
            row.push(num(g.mean[i]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals(path: &Path, header: &str, res: &ResidualSeries) -> Result<()> {
    let mut w = csv_writer(Some(path), header)?;
    w.write_record(["t", "residual"])?;
    for (t, r) in res.t.iter().zip(&res.r) {
        w.write_record([num(*t), num(*r)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per test point and block.
pub fn write_blocks(path: &Path, header: &str, blocks: &[PredictionResult]) -> Result<()> {
    let mut w = csv_writer(Some(path), header)?;
    w.write_record(["point", "block", "mean", "sd"])?;
    let n = blocks.first().map_or(0, |b| b.len());
    for i in 0..n {
        for (z, b) in blocks.iter().enumerate() {
            w.write_record([i.to_string(), z.to_string(), num(b.mean[i]), num(b.sd[i])])?;
        }
    }
    w.flush()?;
    Ok(())
}

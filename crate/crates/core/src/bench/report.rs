//! CSV, markdown and SVG renderings of a bench result.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::metrics::MetricReport;
use super::protocol::{BenchResult, Protocol};
use crate::error::Result;

/// Mean and sample standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Reports grouped by method, in first-appearance order.
pub fn by_method(reports: &[MetricReport]) -> Vec<(String, Vec<&MetricReport>)> {
    let mut out: Vec<(String, Vec<&MetricReport>)> = Vec::new();
    for r in reports {
        match out.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, v)) => v.push(r),
            None => out.push((r.method.clone(), vec![r])),
        }
    }
    out
}

/// Relative spread `(max - min) / mean` of RMSE.
pub fn rmse_spread(reports: &[&MetricReport]) -> f64 {
    let v: Vec<f64> = reports.iter().map(|r| r.rmse).collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / mean_sd(&v).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMark {
    NoThinning,
    Best,
    Worst,
    Middle,
}

impl SweepMark {
    pub fn label(self) -> &'static str {
        match self {
            SweepMark::NoThinning => "no thinning",
            SweepMark::Best => "lowest 25%",
            SweepMark::Worst => "highest 25%",
            SweepMark::Middle => "",
        }
    }
}

/// Marks for sweep rows: T = 1 is the baseline, the rest are ranked by
/// RMSE into the lowest and highest quarter.
pub fn sweep_marks(reports: &[&MetricReport]) -> Vec<SweepMark> {
    let mut ranked: Vec<(f64, usize)> = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.thinning != 1)
        .map(|(i, r)| (r.rmse, i))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let q = ranked.len() / 4;
    let mut marks = vec![SweepMark::Middle; reports.len()];
    for (k, &(_, i)) in ranked.iter().enumerate() {
        if k < q {
            marks[i] = SweepMark::Best;
        } else if k >= ranked.len() - q {
            marks[i] = SweepMark::Worst;
        }
    }
    for (i, r) in reports.iter().enumerate() {
        if r.thinning == 1 {
            marks[i] = SweepMark::NoThinning;
        }
    }
    marks
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_results_csv<W: Write>(
    result: &BenchResult,
    header_comment: Option<&str>,
    out: W,
) -> Result<()> {
    let mut out = out;
    if let Some(c) = header_comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "protocol",
        "scenario",
        "method",
        "seed",
        "thinning",
        "rmse",
        "nlpd",
        "runtime_s",
    ])?;
    for r in &result.reports {
        w.write_record([
            result.protocol.name().to_string(),
            r.scenario.clone(),
            r.method.clone(),
            r.seed.to_string(),
            r.thinning.to_string(),
            format!("{:.6}", r.rmse),
            fmt_opt(r.nlpd),
            format!("{:.3}", r.runtime_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Markdown summary table in the layout that suits the protocol.
pub fn render_table(result: &BenchResult) -> String {
    let mut s = String::new();
    let groups = by_method(&result.reports);
    match result.protocol {
        Protocol::Replication => {
            let _ = writeln!(s, "| method | scenario | reps | RMSE | NLPD |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for (method, rs) in &groups {
                let (rm, rsd) = mean_sd(&rs.iter().map(|r| r.rmse).collect::<Vec<_>>());
                let nl: Option<Vec<f64>> = rs.iter().map(|r| r.nlpd).collect();
                let nl = nl
                    .map(|v| mean_sd(&v))
                    .map(|(m, sd)| format!("{m:.3} ± {sd:.3}"))
                    .unwrap_or_else(|| "n/a".into());
                let _ = writeln!(
                    s,
                    "| {method} | {} | {} | {rm:.3} ± {rsd:.3} | {nl} |",
                    rs[0].scenario,
                    rs.len()
                );
            }
        }
        Protocol::ThinningSweep => {
            let _ = writeln!(s, "| method | T | RMSE | mark |");
            let _ = writeln!(s, "|---|---|---|---|");
            for (method, rs) in &groups {
                for (r, mark) in rs.iter().zip(sweep_marks(rs)) {
                    let _ = writeln!(
                        s,
                        "| {method} | {} | {:.4} | {} |",
                        r.thinning,
                        r.rmse,
                        mark.label()
                    );
                }
            }
        }
        Protocol::Stability => {
            let _ = writeln!(
                s,
                "| method | seeds | min RMSE | max RMSE | spread (max-min)/mean |"
            );
            let _ = writeln!(s, "|---|---|---|---|---|");
            for (method, rs) in &groups {
                let min = rs.iter().map(|r| r.rmse).fold(f64::INFINITY, f64::min);
                let max = rs.iter().map(|r| r.rmse).fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(
                    s,
                    "| {method} | {} | {min:.4} | {max:.4} | {:.4} |",
                    rs.len(),
                    rmse_spread(rs)
                );
            }
        }
    }
    s
}

const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

/// Line plot of RMSE against T (sweep) or against seed (other protocols).
pub fn render_svg(result: &BenchResult) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let groups = by_method(&result.reports);
    let xval = |r: &MetricReport| {
        if result.protocol == Protocol::ThinningSweep {
            r.thinning as f64
        } else {
            r.seed as f64
        }
    };
    let pts: Vec<(f64, f64)> = result.reports.iter().map(|r| (xval(r), r.rmse)).collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if pts.is_empty() {
        let _ = writeln!(s, "</svg>");
        return s;
    }
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.0), a.1.max(p.0))
    });
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| {
        (a.0.min(p.1), a.1.max(p.1))
    });
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-12) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0).max(1e-12) * (h - 2.0 * pad);
    let xlabel = if result.protocol == Protocol::ThinningSweep {
        "T"
    } else {
        "seed"
    };
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad
    );
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{xlabel}</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})">RMSE</text>"#,
        h / 2.0,
        h / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}" font-size="10">{x0}</text>"#,
        h - pad + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1}</text>"#,
        w - pad,
        h - pad + 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.4}</text>"#,
        pad - 4.0,
        h - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{pad}" font-size="10" text-anchor="end">{y1:.4}</text>"#,
        pad - 4.0
    );
    for (k, (method, rs)) in groups.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut line: BTreeMap<u64, f64> = BTreeMap::new();
        for r in rs {
            line.insert(xval(r) as u64, r.rmse);
        }
        let path: Vec<String> = line
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", sx(*x as f64), sy(*y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" points="{}"/>"#,
            path.join(" ")
        );
        let marks = if result.protocol == Protocol::ThinningSweep {
            sweep_marks(rs)
        } else {
            vec![SweepMark::Middle; rs.len()]
        };
        for (r, mark) in rs.iter().zip(marks) {
            let fill = match mark {
                SweepMark::NoThinning | SweepMark::Worst => "red",
                SweepMark::Best => "blue",
                SweepMark::Middle => color,
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{fill}"/>"#,
                sx(xval(r)),
                sy(r.rmse)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{method}</text>"#,
            w - pad - 100.0,
            pad + 14.0 * k as f64
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

/// Write `results.csv`, `table.md` and `sweep.svg` into `dir`.
pub fn write_all(
    result: &BenchResult,
    dir: impl AsRef<Path>,
    header_comment: Option<&str>,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_results_csv(
        result,
        header_comment,
        std::fs::File::create(dir.join("results.csv"))?,
    )?;
    std::fs::write(dir.join("table.md"), render_table(result))?;
    std::fs::write(dir.join("sweep.svg"), render_svg(result))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(t: usize, rmse: f64) -> MetricReport {
        MetricReport {
            scenario: "ar13".into(),
            method: "thinned-sv".into(),
            seed: 1,
            thinning: t,
            rmse,
            nlpd: None,
            runtime_s: 0.0,
        }
    }

    #[test]
    fn sweep_marks_quarters_and_baseline() {
        let rs: Vec<MetricReport> = [
            (1, 5.0),
            (5, 1.0),
            (10, 2.0),
            (15, 3.0),
            (20, 4.0),
            (25, 6.0),
            (30, 7.0),
            (35, 8.0),
            (40, 9.0),
        ]
        .into_iter()
        .map(|(t, r)| rep(t, r))
        .collect();
        let refs: Vec<&MetricReport> = rs.iter().collect();
        let marks = sweep_marks(&refs);
        assert_eq!(marks[0], SweepMark::NoThinning);
        assert_eq!(&marks[1..3], &[SweepMark::Best, SweepMark::Best]);
        assert_eq!(&marks[7..], &[SweepMark::Worst, SweepMark::Worst]);
        let table = render_table(&BenchResult {
            protocol: Protocol::ThinningSweep,
            reports: rs,
        });
        assert!(table.contains("| thinned-sv | 1 | 5.0000 | no thinning |"));
    }

    #[test]
    fn spread_of_constant_is_zero() {
        let rs = [rep(3, 2.0), rep(3, 2.0)];
        assert_eq!(rmse_spread(&rs.iter().collect::<Vec<_>>()), 0.0);
    }
}

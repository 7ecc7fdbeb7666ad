use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{RegretTrace, UpperBound};

use super::{Algorithm, CodeConfig, ExperimentConfig, HarnessError, RunRecord};

/// Per-sample statistics across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub t: Vec<u64>,
    pub mean_regret: Vec<f64>,
    /// Population standard deviation.
    pub std_regret: Vec<f64>,
    pub mean_collisions: Vec<f64>,
    pub decode_errors: Vec<f64>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and spread of the pseudo-regret at every sample point.
pub fn aggregate(traces: &[&RegretTrace]) -> Result<Aggregate, HarnessError> {
    let first = traces.first().ok_or(HarnessError::NoTraces)?;
    if traces.iter().any(|tr| tr.t != first.t) {
        return Err(HarnessError::MisalignedTraces);
    }
    let n = first.t.len();
    let mut agg = Aggregate {
        t: first.t.clone(),
        mean_regret: Vec::with_capacity(n),
        std_regret: Vec::with_capacity(n),
        mean_collisions: Vec::with_capacity(n),
        decode_errors: Vec::with_capacity(n),
    };
    let count = traces.len() as f64;
    for i in 0..n {
        let (mean, std) = mean_std(traces.iter().map(|tr| tr.pseudo[i]));
        agg.mean_regret.push(mean);
        agg.std_regret.push(std);
        agg.mean_collisions
            .push(traces.iter().map(|tr| tr.collisions[i] as f64).sum::<f64>() / count);
        agg.decode_errors
            .push(traces.iter().map(|tr| tr.decode_errors[i] as f64).sum::<f64>() / count);
    }
    Ok(agg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let (mean, std) = mean_std(values.iter().copied());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Stats {
            mean,
            std,
            median,
            min: sorted[0],
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub upper_terms: Option<UpperBound>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub code: CodeConfig,
    pub replications: usize,
    pub seed_base: u64,
    pub slots: u64,
    pub stride: u64,
    pub final_regret: Stats,
    pub final_realized_regret: Stats,
    pub converged_runs: usize,
    pub convergence_fraction: f64,
    pub decode_errors_total: u64,
    pub decode_errors_mean: f64,
    pub runs_with_decode_errors: usize,
    pub messages_mean: f64,
    #[serde(flatten)]
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub aggregate: Aggregate,
    pub summary: Summary,
}

pub fn build_report(config: &ExperimentConfig, records: &[RunRecord], bounds: Bounds) -> Result<Report, HarnessError> {
    let traces: Vec<&RegretTrace> = records.iter().map(|r| &r.trace).collect();
    let aggregate = aggregate(&traces)?;
    let n = records.len();
    let finals: Vec<f64> = records.iter().map(|r| r.trace.final_pseudo()).collect();
    let realized: Vec<f64> = records.iter().map(|r| r.trace.final_realized()).collect();
    let converged_runs = records.iter().filter(|r| r.converged).count();
    let decode_errors_total: u64 = records.iter().map(|r| r.decode_errors).sum();
    let summary = Summary {
        algorithm: config.algorithm,
        code: config.code.clone(),
        replications: n,
        seed_base: config.experiment.seed_base,
        slots: aggregate.t.last().copied().unwrap_or(0),
        stride: config.experiment.stride,
        final_regret: Stats::of(&finals),
        final_realized_regret: Stats::of(&realized),
        converged_runs,
        convergence_fraction: converged_runs as f64 / n as f64,
        decode_errors_total,
        decode_errors_mean: decode_errors_total as f64 / n as f64,
        runs_with_decode_errors: records.iter().filter(|r| r.decode_errors > 0).count(),
        messages_mean: records.iter().map(|r| r.messages as f64).sum::<f64>() / n as f64,
        bounds,
    };
    Ok(Report { aggregate, summary })
}

fn write_err(path: &Path) -> impl Fn(String) -> HarnessError + '_ {
    move |message| HarnessError::Write {
        path: path.to_path_buf(),
        message,
    }
}

/// Writes `results.csv`, `summary.json` and `regret.svg` into `dir`.
pub fn emit_report(dir: &Path, report: &Report) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| write_err(dir)(e.to_string()))?;

    let csv_path = dir.join("results.csv");
    let err = write_err(&csv_path);
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| err(e.to_string()))?;
    w.write_record(["t", "mean_regret", "std_regret", "mean_collisions", "decode_errors"])
        .map_err(|e| err(e.to_string()))?;
    let a = &report.aggregate;
    for i in 0..a.t.len() {
        w.serialize((a.t[i], a.mean_regret[i], a.std_regret[i], a.mean_collisions[i], a.decode_errors[i]))
            .map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))?;

    let json_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&report.summary).map_err(|e| write_err(&json_path)(e.to_string()))?;
    std::fs::write(&json_path, json + "\n").map_err(|e| write_err(&json_path)(e.to_string()))?;

    let svg_path = dir.join("regret.svg");
    std::fs::write(&svg_path, render_svg(a)).map_err(|e| write_err(&svg_path)(e.to_string()))?;
    Ok(())
}

/// Log-x plot of the mean regret with a shaded ±std band.
pub fn render_svg(agg: &Aggregate) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const L: f64 = 80.0;
    const R: f64 = 20.0;
    const TOP: f64 = 20.0;
    const B: f64 = 60.0;

    let points: Vec<(f64, f64, f64)> = agg
        .t
        .iter()
        .zip(&agg.mean_regret)
        .zip(&agg.std_regret)
        .filter(|((&t, _), _)| t > 0)
        .map(|((&t, &m), &s)| ((t as f64).log10(), m, s))
        .collect();
    let x_lo = points.first().map_or(0.0, |p| p.0.floor());
    let x_hi = points.last().map_or(1.0, |p| p.0.ceil()).max(x_lo + 1.0);
    let y_hi = points
        .iter()
        .map(|p| p.1 + p.2)
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.05;
    let sx = |x: f64| L + (x - x_lo) / (x_hi - x_lo) * (W - L - R);
    let sy = |y: f64| H - B - y.max(0.0) / y_hi * (H - TOP - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if !points.is_empty() {
        let mut band = String::new();
        for p in &points {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.1 + p.2));
        }
        for p in points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.1 - p.2));
        }
        let _ = writeln!(s, r#"<polygon points="{}" fill="steelblue" fill-opacity="0.25" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, line.join(" "));
    }
    let (x0, y0, x1, y1) = (L, H - B, W - R, TOP);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for d in (x_lo as i32)..=(x_hi as i32) {
        let x = sx(d as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{d}</text>"#, y0 + 20.0);
    }
    for i in 0..=4 {
        let v = y_hi * i as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3e}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">slot t</text>"#, (x0 + x1) / 2.0, H - 15.0);
    let _ = writeln!(
        s,
        r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(slope: f64) -> RegretTrace {
        RegretTrace {
            stride: 10,
            t: vec![0, 10, 20],
            pseudo: vec![0.0, 10.0 * slope, 20.0 * slope],
            realized: vec![0.0; 3],
            collisions: vec![0, 1, 2],
            decode_errors: vec![0; 3],
            ..Default::default()
        }
    }

    #[test]
    fn two_slopes() {
        let (a, b) = (linear(1.0), linear(3.0));
        let agg = aggregate(&[&a, &b]).unwrap();
        assert_eq!(agg.mean_regret, vec![0.0, 20.0, 40.0]);
        assert_eq!(agg.std_regret, vec![0.0, 10.0, 20.0]);
        assert_eq!(agg.mean_collisions, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_and_misaligned() {
        assert!(matches!(aggregate(&[]), Err(HarnessError::NoTraces)));
        let mut b = linear(1.0);
        b.t[2] = 25;
        assert!(matches!(aggregate(&[&linear(1.0), &b]), Err(HarnessError::MisalignedTraces)));
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(Stats::of(&[3.0, 1.0, 2.0]).median, 2.0);
        assert_eq!(Stats::of(&[4.0, 1.0, 2.0, 3.0]).median, 2.5);
    }

    #[test]
    fn svg_has_band_and_line() {
        let agg = aggregate(&[&linear(1.0), &linear(3.0)]).unwrap();
        let svg = render_svg(&agg);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<polygon"));
        assert!(svg.contains("<polyline"));
    }
}

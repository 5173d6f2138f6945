//! CSV reports and gnuplot scripts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{SweepResult, SweepRow};
use crate::functionals::FunctionalReport;
use crate::kinetic::DistanceRow;
use crate::Result;

pub const CSV_HEADER: [&str; 18] = [
    "t",
    "H",
    "K",
    "F",
    "P",
    "D",
    "relH",
    "relP",
    "modE",
    "dec_micro",
    "dec_density",
    "dec_velocity",
    "L1_f",
    "L1_rho",
    "Hneg_rho",
    "dBL_rho",
    "dBL_f",
    "mom_err",
];

pub const SUMMARY_HEADER: [&str; 4] = ["eps", "metric", "value", "slope_window"];

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per report; distance columns stay empty without a reference.
pub fn write_run_csv(path: &Path, trace: &[FunctionalReport], distances: &[DistanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for (i, r) in trace.iter().enumerate() {
        let d = distances.get(i);
        let dec = r.decomposition;
        let mut rec: Vec<String> = [
            r.time,
            r.entropy,
            r.kinetic,
            r.free_energy,
            r.potential,
            r.dissipation,
            r.rel_entropy,
            r.rel_potential,
            r.modulated,
            dec.micro,
            dec.density,
            dec.velocity,
        ]
        .into_iter()
        .map(num)
        .collect();
        rec.extend([
            opt(d.map(|d| d.l1_f)),
            opt(d.map(|d| d.l1_rho)),
            opt(d.map(|d| d.hneg_rho)),
            opt(d.and_then(|d| d.dbl_rho)),
            opt(d.and_then(|d| d.dbl_f)),
            opt(d.map(|d| d.mom_err)),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// File name of a member's run report.
pub fn run_file_name(row: &SweepRow) -> String {
    format!("run_eps_{:.6}.csv", row.eps)
}

/// `eps,metric,value,slope_window` for every member and metric, plus a
/// `slopes.csv` with the fits next to it.
pub fn write_summary_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let cfg = &result.config;
    let window = match cfg.window {
        Some((lo, hi)) => format!("{lo}:{hi}"),
        None => "all".to_string(),
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for row in &result.rows {
        let inside = cfg.window.is_none_or(|(lo, hi)| row.eps >= lo && row.eps <= hi);
        for m in &cfg.metrics {
            let value = row.values.get(m).map(|&v| num(v)).unwrap_or_default();
            let win = if inside { window.clone() } else { "-".to_string() };
            w.write_record([row.eps.to_string(), m.name().to_string(), value, win])?;
        }
    }
    w.flush()?;

    let mut s = csv::Writer::from_path(path.with_file_name("slopes.csv"))?;
    s.write_record(["metric", "slope", "intercept", "residual", "points", "threshold", "passed"])?;
    for f in &result.fits {
        s.write_record([
            f.metric.name().to_string(),
            num(f.fit.slope),
            num(f.fit.intercept),
            num(f.fit.residual),
            f.fit.points.to_string(),
            opt(f.threshold),
            f.passed().map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    s.flush()?;
    Ok(())
}

/// Gnuplot script drawing the log-log errors of the summary and the
/// modulated energy of every run.
pub fn write_gnuplot(path: &Path, summary: &str, runs: &[(f64, String)], metrics: &[String]) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set terminal pngcairo size 900,600")?;
    writeln!(w, "set output 'convergence.png'")?;
    writeln!(w, "set logscale xy")?;
    writeln!(w, "set xlabel 'eps'")?;
    writeln!(w, "set ylabel 'error'")?;
    writeln!(w, "set key left top")?;
    let plots: Vec<String> = metrics
        .iter()
        .map(|m| format!("'{summary}' using (strcol(2) eq '{m}' ? $1 : 1/0):3 with linespoints title '{m}'"))
        .collect();
    if !plots.is_empty() {
        writeln!(w, "plot {}", plots.join(", \\\n     "))?;
    }
    writeln!(w)?;
    writeln!(w, "set output 'modulated_energy.png'")?;
    writeln!(w, "unset logscale x")?;
    writeln!(w, "set xlabel 't'")?;
    writeln!(w, "set ylabel 'modE'")?;
    let curves: Vec<String> =
        runs.iter().map(|(eps, file)| format!("'{file}' using 1:9 skip 1 with lines title 'eps = {eps}'")).collect();
    if !curves.is_empty() {
        writeln!(w, "plot {}", curves.join(", \\\n     "))?;
    }
    w.flush()?;
    Ok(path.to_path_buf())
}

/// Writes the summary, the slope table, one CSV per member and the plot
/// script into `dir`.
pub fn write_sweep(dir: &Path, result: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut runs = Vec::new();
    for row in &result.rows {
        if row.error.is_none() {
            let name = run_file_name(row);
            write_run_csv(&dir.join(&name), &row.trace, &row.distances)?;
            runs.push((row.eps, name));
        }
    }
    write_summary_csv(&dir.join("summary.csv"), result)?;
    let metrics: Vec<String> = result.config.metrics.iter().map(|m| m.name().to_string()).collect();
    write_gnuplot(&dir.join("plot.gp"), "summary.csv", &runs, &metrics)?;
    Ok(())
}

//! CSV and JSON renderings of experiment results.
//!
//! Harness tables print floats with six significant digits (`%g` style).
//! Quantities meant for downstream numerical checks (σ_k, densities,
//! quantiles) are printed in shortest round-trip form instead.

use std::io::Write;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{CalibrationEntry, CompareRow, GridReport, PowerRow, SanovTable};
use crate::stein::TestReport;

/// Trailer line of a finished grid in CSV form.
pub const COMPLETE_MARKER: &str = "# complete=true";
/// Trailer line of an interrupted grid in CSV form.
pub const INCOMPLETE_MARKER: &str = "# complete=false";

pub const POWER_HEADER: [&str; 9] = [
    "N",
    "n",
    "m",
    "modes",
    "cutoff_source",
    "hypothesis",
    "rejection_rate",
    "reps",
    "seed",
];
pub const CALIBRATION_HEADER: [&str; 7] = ["N", "n", "m", "level", "cutoff", "reps", "seed"];
pub const COMPARE_HEADER: [&str; 7] = ["N", "m", "test", "n", "calibrated_power", "null_rate", "cutoff"];
pub const SIGMA_HEADER: [&str; 4] = ["N", "alpha", "k", "sigma"];

/// `x` with six significant digits, trailing zeros removed, switching to
/// exponent notation outside `[1e-4, 1e6)` like C's `%g`.
pub fn fmt_g6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_exact(x: f64) -> String {
    format!("{x}")
}

/// Modes joined with `;` so the field needs no CSV quoting.
pub fn fmt_modes(modes: &[usize]) -> String {
    modes.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

pub fn parse_modes(s: &str) -> Result<Vec<usize>> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("bad mode '{t}': {e}")))
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv output failed: {e}"))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Config(format!("write failed: {e}"))
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn power_record(r: &PowerRow) -> [String; 9] {
    [
        fmt_g6(r.n_particles),
        r.n.to_string(),
        r.m.to_string(),
        fmt_modes(&r.modes),
        r.cutoff_source.as_str().into(),
        r.hypothesis.as_str().into(),
        fmt_g6(r.rejection_rate),
        r.reps.to_string(),
        r.seed.to_string(),
    ]
}

fn calibration_record(e: &CalibrationEntry) -> [String; 7] {
    [
        fmt_g6(e.n_particles),
        e.n.to_string(),
        e.m.to_string(),
        fmt_g6(e.level),
        fmt_g6(e.cutoff),
        e.reps.to_string(),
        e.seed.to_string(),
    ]
}

/// Incremental CSV writer for power rows: header once, then rows as they come.
pub struct PowerCsv<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PowerCsv<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = writer(w);
        inner.write_record(POWER_HEADER).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn write_rows(&mut self, rows: &[PowerRow]) -> Result<()> {
        for r in rows {
            self.inner.write_record(power_record(r)).map_err(csv_err)?;
        }
        self.inner.flush().map_err(io_err)
    }

    /// Writes the completeness trailer and returns the underlying writer.
    pub fn finish(self, complete: bool) -> Result<W> {
        let mut w = self.inner.into_inner().map_err(|e| io_err(e.into_error()))?;
        writeln!(w, "{}", if complete { COMPLETE_MARKER } else { INCOMPLETE_MARKER }).map_err(io_err)?;
        w.flush().map_err(io_err)?;
        Ok(w)
    }
}

pub fn write_power_csv<W: Write>(w: W, rows: &[PowerRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(POWER_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record(power_record(r)).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn write_calibration_csv<W: Write>(w: W, entries: &[CalibrationEntry]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(CALIBRATION_HEADER).map_err(csv_err)?;
    for e in entries {
        out.write_record(calibration_record(e)).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

/// Grid rows followed by the completeness trailer.
pub fn write_grid_csv<W: Write>(w: W, report: &GridReport) -> Result<()> {
    let mut out = PowerCsv::new(w)?;
    out.write_rows(&report.rows)?;
    out.finish(report.complete)?;
    Ok(())
}

pub fn power_row_json(r: &PowerRow) -> Value {
    json!({
        "N": r.n_particles,
        "n": r.n,
        "m": r.m,
        "modes": r.modes,
        "cutoff_source": r.cutoff_source.as_str(),
        "hypothesis": r.hypothesis.as_str(),
        "rejection_rate": r.rejection_rate,
        "reps": r.reps,
        "seed": r.seed,
    })
}

pub fn calibration_json(e: &CalibrationEntry) -> Value {
    json!({
        "N": e.n_particles,
        "n": e.n,
        "m": e.m,
        "level": e.level,
        "cutoff": e.cutoff,
        "reps": e.reps,
        "seed": e.seed,
    })
}

pub fn grid_json(report: &GridReport) -> Value {
    json!({
        "complete": report.complete,
        "rows": report.rows.iter().map(power_row_json).collect::<Vec<_>>(),
        "calibration": report.calibration.entries.iter().map(calibration_json).collect::<Vec<_>>(),
    })
}

/// Wide table: one row per `N`, one column per `n`.
pub fn write_sanov_csv<W: Write>(w: W, table: &SanovTable) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["N".to_string()];
    header.extend(table.sample_sizes.iter().map(|n| n.to_string()));
    out.write_record(&header).map_err(csv_err)?;
    for (nn, row) in table.n_particles.iter().zip(&table.values) {
        let mut rec = vec![fmt_g6(*nn)];
        rec.extend(row.iter().map(|&v| fmt_g6(v)));
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn sanov_json(table: &SanovTable) -> Value {
    json!({
        "N": table.n_particles,
        "n": table.sample_sizes,
        "power": table.values,
    })
}

pub fn write_sigma_csv<W: Write>(w: W, n_particles: f64, alpha: f64, sigmas: &[f64]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(SIGMA_HEADER).map_err(csv_err)?;
    for (i, s) in sigmas.iter().enumerate() {
        out.write_record([
            fmt_exact(n_particles),
            fmt_exact(alpha),
            (i + 1).to_string(),
            fmt_exact(*s),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn sigma_json(n_particles: f64, alpha: f64, sigmas: &[f64]) -> Value {
    json!({
        "N": n_particles,
        "alpha": alpha,
        "sigma": sigmas.iter().enumerate().map(|(i, s)| json!({"k": i + 1, "sigma": s})).collect::<Vec<_>>(),
    })
}

pub fn write_compare_csv<W: Write>(w: W, n_particles: f64, m: usize, rows: &[CompareRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(COMPARE_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            fmt_g6(n_particles),
            m.to_string(),
            r.test.clone(),
            r.n.to_string(),
            fmt_g6(r.calibrated_power),
            fmt_g6(r.null_rate),
            fmt_g6(r.cutoff),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn compare_json(n_particles: f64, m: usize, rows: &[CompareRow]) -> Value {
    json!({
        "N": n_particles,
        "m": m,
        "rows": rows,
    })
}

/// Test report as a header plus one line; coefficients become `mu_<k>` columns.
pub fn write_report_csv<W: Write>(w: W, report: &TestReport) -> Result<()> {
    let mut out = writer(w);
    let mut header: Vec<String> = ["statistic", "dof", "cutoff", "p_value", "reject"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(report.coefficients.keys().map(|k| format!("mu_{k}")));
    out.write_record(&header).map_err(csv_err)?;
    let mut rec = vec![
        fmt_g6(report.statistic),
        report.dof.to_string(),
        fmt_g6(report.cutoff),
        fmt_g6(report.p_value),
        report.reject.to_string(),
    ];
    rec.extend(report.coefficients.values().map(|&c| fmt_g6(c)));
    out.write_record(&rec).map_err(csv_err)?;
    out.flush().map_err(io_err)
}

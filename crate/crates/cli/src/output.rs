//! CSV and JSON emission with 6 significant digits.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::SweepConfig;
use crate::sweep::{CurveRow, SweepRow};

/// Header of β sweep tables.
pub const CSV_HEADER: &str = "beta_dbm,q_analytic,q_mc,q_mc_ci95,cov_cell_analytic,cov_cell_mc,cov_cell_ci95,\
cov_d2d_analytic,cov_d2d_mc,cov_d2d_ci95,ase_cell,ase_d2d,ase_total,skips,wall_ms";

/// Header of coverage-curve tables.
pub const CURVE_HEADER: &str =
    "gamma_db,cov_cell_analytic,cov_cell_mc,cov_cell_ci95,cov_d2d_analytic,cov_d2d_mc,cov_d2d_ci95,skips,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// `x` rounded to 6 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn fmt_num(x: Option<f64>) -> String {
    x.map(|v| round_sig(v).to_string()).unwrap_or_default()
}

/// A table row with a fixed column layout.
pub trait TableRow: Serialize {
    const HEADER: &'static str;
    fn cells(&self) -> Vec<String>;
    fn errors(&self) -> &[String];
    /// The row with every number rounded as emitted.
    fn rounded(&self) -> Self;
}

fn round_opt(x: Option<f64>) -> Option<f64> {
    x.map(round_sig)
}

impl TableRow for SweepRow {
    const HEADER: &'static str = CSV_HEADER;

    fn cells(&self) -> Vec<String> {
        vec![
            fmt_num(Some(self.beta_dbm)),
            fmt_num(self.q_analytic),
            fmt_num(self.q_mc),
            fmt_num(self.q_mc_ci95),
            fmt_num(self.cov_cell_analytic),
            fmt_num(self.cov_cell_mc),
            fmt_num(self.cov_cell_ci95),
            fmt_num(self.cov_d2d_analytic),
            fmt_num(self.cov_d2d_mc),
            fmt_num(self.cov_d2d_ci95),
            fmt_num(self.ase_cell),
            fmt_num(self.ase_d2d),
            fmt_num(self.ase_total),
            self.skips.map(|s| s.to_string()).unwrap_or_default(),
            fmt_num(self.wall_ms),
        ]
    }

    fn errors(&self) -> &[String] {
        &self.errors
    }

    fn rounded(&self) -> Self {
        SweepRow {
            beta_dbm: round_sig(self.beta_dbm),
            q_analytic: round_opt(self.q_analytic),
            q_mc: round_opt(self.q_mc),
            q_mc_ci95: round_opt(self.q_mc_ci95),
            cov_cell_analytic: round_opt(self.cov_cell_analytic),
            cov_cell_mc: round_opt(self.cov_cell_mc),
            cov_cell_ci95: round_opt(self.cov_cell_ci95),
            cov_d2d_analytic: round_opt(self.cov_d2d_analytic),
            cov_d2d_mc: round_opt(self.cov_d2d_mc),
            cov_d2d_ci95: round_opt(self.cov_d2d_ci95),
            ase_cell: round_opt(self.ase_cell),
            ase_d2d: round_opt(self.ase_d2d),
            ase_total: round_opt(self.ase_total),
            skips: self.skips,
            wall_ms: round_opt(self.wall_ms),
            errors: self.errors.clone(),
        }
    }
}

impl TableRow for CurveRow {
    const HEADER: &'static str = CURVE_HEADER;

    fn cells(&self) -> Vec<String> {
        vec![
            fmt_num(Some(self.gamma_db)),
            fmt_num(self.cov_cell_analytic),
            fmt_num(self.cov_cell_mc),
            fmt_num(self.cov_cell_ci95),
            fmt_num(self.cov_d2d_analytic),
            fmt_num(self.cov_d2d_mc),
            fmt_num(self.cov_d2d_ci95),
            self.skips.map(|s| s.to_string()).unwrap_or_default(),
            fmt_num(self.wall_ms),
        ]
    }

    fn errors(&self) -> &[String] {
        &self.errors
    }

    fn rounded(&self) -> Self {
        CurveRow {
            gamma_db: round_sig(self.gamma_db),
            cov_cell_analytic: round_opt(self.cov_cell_analytic),
            cov_cell_mc: round_opt(self.cov_cell_mc),
            cov_cell_ci95: round_opt(self.cov_cell_ci95),
            cov_d2d_analytic: round_opt(self.cov_d2d_analytic),
            cov_d2d_mc: round_opt(self.cov_d2d_mc),
            cov_d2d_ci95: round_opt(self.cov_d2d_ci95),
            skips: self.skips,
            wall_ms: round_opt(self.wall_ms),
            errors: self.errors.clone(),
        }
    }
}

/// CSV: header line, then one line per row.
pub fn write_csv<T: TableRow, W: Write>(rows: &[T], mut w: W) -> io::Result<()> {
    writeln!(w, "{}", T::HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.cells().join(","))?;
    }
    w.flush()
}

/// The resolved configuration as a JSON object; numeric values stay numbers.
pub fn config_json(cfg: &SweepConfig) -> Value {
    let mut m = Map::new();
    for (k, v) in cfg.entries() {
        let value = match k {
            "gamma_grid_db" => json!(cfg.gamma_grid_db),
            "timing" => json!(cfg.timing),
            "replications" | "seed" | "workers" => v.parse::<u64>().map_or_else(|_| json!(v), |x| json!(x)),
            _ => v.parse::<f64>().map_or_else(|_| json!(v), |x| json!(x)),
        };
        m.insert(k.to_string(), value);
    }
    Value::Object(m)
}

/// JSON document `{"config": {..}, "rows": [..]}` with rounded numbers.
pub fn to_json<T: TableRow>(rows: &[T], cfg: &SweepConfig) -> serde_json::Result<String> {
    let rounded: Vec<T> = rows.iter().map(TableRow::rounded).collect();
    let doc = json!({ "config": config_json(cfg), "rows": rounded });
    serde_json::to_string_pretty(&doc).map(|s| s + "\n")
}

/// Writes `rows` to `path`, or to stdout when `path` is `None`.
pub fn emit_results<T: TableRow>(rows: &[T], format: Format, path: Option<&Path>, cfg: &SweepConfig) -> io::Result<()> {
    if rows.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no rows to emit"));
    }
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(rows, &mut buf)?,
        Format::Json => buf.extend(to_json(rows, cfg).map_err(io::Error::other)?.into_bytes()),
    }
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(&buf)?;
            f.flush()
        }
        None => io::stdout().lock().write_all(&buf),
    }
}

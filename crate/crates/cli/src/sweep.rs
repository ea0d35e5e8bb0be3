//! β and γ sweeps across the analytic engine and the simulator.

use std::sync::Arc;
use std::time::Instant;

use d2d_core::analytic::{cellular_mode_probability, AnalyticModel, AnalyticOptions, Tables};
use d2d_core::mcsim::{self, estimate_ase, estimate_coverage, McConfig, McOutput};
use d2d_core::netmodel::db_to_linear;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;

/// One β grid point. Columns an engine did not fill are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta_dbm: f64,
    pub q_analytic: Option<f64>,
    pub q_mc: Option<f64>,
    pub q_mc_ci95: Option<f64>,
    pub cov_cell_analytic: Option<f64>,
    pub cov_cell_mc: Option<f64>,
    pub cov_cell_ci95: Option<f64>,
    pub cov_d2d_analytic: Option<f64>,
    pub cov_d2d_mc: Option<f64>,
    pub cov_d2d_ci95: Option<f64>,
    pub ase_cell: Option<f64>,
    pub ase_d2d: Option<f64>,
    pub ase_total: Option<f64>,
    pub skips: Option<u64>,
    pub wall_ms: Option<f64>,
    /// Engine failures at this grid point.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// One γ grid point of a coverage curve at fixed β.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurveRow {
    pub gamma_db: f64,
    pub cov_cell_analytic: Option<f64>,
    pub cov_cell_mc: Option<f64>,
    pub cov_cell_ci95: Option<f64>,
    pub cov_d2d_analytic: Option<f64>,
    pub cov_d2d_mc: Option<f64>,
    pub cov_d2d_ci95: Option<f64>,
    pub skips: Option<u64>,
    pub wall_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

/// Columns a β sweep fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepContent {
    /// Mode probability only.
    Mode,
    /// Mode probability and coverage at `gamma_db`.
    Coverage,
    /// Everything, ASE included.
    Full,
}

impl SweepContent {
    fn coverage(self) -> bool {
        self != SweepContent::Mode
    }

    fn ase(self) -> bool {
        self == SweepContent::Full
    }
}

/// Simulator controls derived from a sweep configuration.
pub fn mc_config(cfg: &SweepConfig) -> McConfig {
    McConfig {
        replications: cfg.replications,
        seed: cfg.seed,
        window_radius: cfg.window_km,
        workers: cfg.workers,
    }
}

/// Runs `f` on a pool of `workers` threads (the global pool for 0).
pub fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) if workers > 0 => pool.install(f),
        _ => f(),
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn analytic_columns(cfg: &SweepConfig, tables: &Arc<Tables>, beta: f64, content: SweepContent, row: &mut SweepRow) {
    let sc = cfg.scenario_at(beta);
    if !content.coverage() {
        row.q_analytic = Some(cellular_mode_probability(&sc, tables));
        return;
    }
    let model = match AnalyticModel::with_tables(&sc, tables.clone(), AnalyticOptions::default()) {
        Ok(m) => m,
        Err(e) => return row.errors.push(format!("analytic: {e}")),
    };
    row.q_analytic = Some(model.boundary().q);
    let g = db_to_linear(cfg.gamma_db);
    match model.coverage_cellular(g) {
        Ok(v) => row.cov_cell_analytic = Some(v),
        Err(e) => row.errors.push(format!("analytic cellular coverage: {e}")),
    }
    match model.coverage_d2d(g) {
        Ok(v) => row.cov_d2d_analytic = Some(v),
        Err(e) => row.errors.push(format!("analytic D2D coverage: {e}")),
    }
    if content.ase() {
        match model.ase_total() {
            Ok(a) => {
                row.ase_cell = Some(a.cellular);
                row.ase_d2d = Some(a.d2d);
                row.ase_total = Some(a.total);
            }
            Err(e) => row.errors.push(format!("analytic ASE: {e}")),
        }
    }
}

fn mc_coverage_columns(cfg: &SweepConfig, out: &McOutput, gamma: f64, fill_ase: bool, row: &mut SweepRow) {
    row.skips = Some((out.cellular.skipped + out.d2d.skipped) as u64);
    match estimate_coverage(&out.cellular, gamma) {
        Ok(e) => {
            row.cov_cell_mc = Some(e.value);
            row.cov_cell_ci95 = Some(e.half_width());
        }
        Err(e) => row.errors.push(format!("mc cellular coverage: {e}")),
    }
    match estimate_coverage(&out.d2d, gamma) {
        Ok(e) => {
            row.cov_d2d_mc = Some(e.value);
            row.cov_d2d_ci95 = Some(e.half_width());
        }
        Err(e) => row.errors.push(format!("mc D2D coverage: {e}")),
    }
    if fill_ase {
        let g0 = db_to_linear(cfg.params.gamma_0);
        let cell = estimate_ase(&out.cellular, cfg.params.lambda_b, g0);
        let d2d = estimate_ase(&out.d2d, out.mean_active_tx_density, g0);
        match (cell, d2d) {
            (Ok(c), Ok(d)) => {
                row.ase_cell = Some(c.value);
                row.ase_d2d = Some(d.value);
                row.ase_total = Some(c.value + d.value);
            }
            (Err(e), _) | (_, Err(e)) => row.errors.push(format!("mc ASE: {e}")),
        }
    }
}

/// One row per β grid point. Analytic grid points run concurrently on
/// `cfg.workers` threads; the simulator parallelises over replications.
/// Engine failures are recorded in the row and the sweep continues.
pub fn run_sweep(cfg: &SweepConfig, content: SweepContent) -> Vec<SweepRow> {
    let betas = cfg.beta_grid();
    let mut rows: Vec<SweepRow> = betas
        .iter()
        .map(|&beta_dbm| SweepRow {
            beta_dbm,
            ..SweepRow::default()
        })
        .collect();
    let mut wall = vec![0.0; rows.len()];

    if cfg.engine.analytic() {
        let t = Instant::now();
        match Tables::build(&cfg.scenario()) {
            Ok(tables) => {
                let tables = Arc::new(tables);
                let shared = elapsed_ms(t) / rows.len() as f64;
                let timed: Vec<(SweepRow, f64)> = with_pool(cfg.workers, || {
                    rows.par_iter()
                        .map(|row| {
                            let t = Instant::now();
                            let mut row = row.clone();
                            analytic_columns(cfg, &tables, row.beta_dbm, content, &mut row);
                            (row, shared + elapsed_ms(t))
                        })
                        .collect()
                });
                for (i, (row, ms)) in timed.into_iter().enumerate() {
                    rows[i] = row;
                    wall[i] += ms;
                }
            }
            Err(e) => rows.iter_mut().for_each(|r| r.errors.push(format!("analytic tables: {e}"))),
        }
    }

    if cfg.engine.mc() {
        let mc = mc_config(cfg);
        let t = Instant::now();
        let mrss = mcsim::sample_origin_mrss(&cfg.scenario(), &mc);
        let shared = elapsed_ms(t) / rows.len() as f64;
        let gamma = db_to_linear(cfg.gamma_db);
        for (row, ms) in rows.iter_mut().zip(wall.iter_mut()) {
            let t = Instant::now();
            match mrss.as_ref().map_err(Clone::clone).and_then(|m| mcsim::mode_fraction(m, row.beta_dbm)) {
                Ok(e) => {
                    row.q_mc = Some(e.value);
                    row.q_mc_ci95 = Some(e.half_width());
                }
                Err(e) => row.errors.push(format!("mc mode fraction: {e}")),
            }
            if content.coverage() {
                match mcsim::simulate(&cfg.scenario_at(row.beta_dbm), &mc) {
                    Ok(out) => {
                        let fill_ase = content.ase() && !cfg.engine.analytic();
                        mc_coverage_columns(cfg, &out, gamma, fill_ase, row);
                    }
                    Err(e) => row.errors.push(format!("mc simulation: {e}")),
                }
            }
            *ms += shared + elapsed_ms(t);
        }
    }

    if cfg.timing {
        for (row, ms) in rows.iter_mut().zip(wall) {
            row.wall_ms = Some(ms);
        }
    }
    rows
}

/// Coverage against every γ of `gamma_grid_db` at the fixed `beta_dbm`.
pub fn run_coverage_curve(cfg: &SweepConfig) -> Vec<CurveRow> {
    let gammas: Vec<f64> = cfg.gamma_grid_db.iter().map(|&g| db_to_linear(g)).collect();
    let mut rows: Vec<CurveRow> = cfg
        .gamma_grid_db
        .iter()
        .map(|&gamma_db| CurveRow {
            gamma_db,
            ..CurveRow::default()
        })
        .collect();
    let sc = cfg.scenario();
    let n = rows.len() as f64;
    let mut wall = 0.0;
    let fail = |rows: &mut Vec<CurveRow>, msg: String| rows.iter_mut().for_each(|r| r.errors.push(msg.clone()));

    if cfg.engine.analytic() {
        let t = Instant::now();
        match AnalyticModel::new(&sc, AnalyticOptions::default()) {
            Ok(model) => {
                let (cell, d2d) =
                    with_pool(cfg.workers, || rayon::join(|| model.coverage_cellular_many(&gammas), || model.coverage_d2d_many(&gammas)));
                match cell {
                    Ok(v) => rows.iter_mut().zip(v).for_each(|(r, c)| r.cov_cell_analytic = Some(c)),
                    Err(e) => fail(&mut rows, format!("analytic cellular coverage: {e}")),
                }
                match d2d {
                    Ok(v) => rows.iter_mut().zip(v).for_each(|(r, c)| r.cov_d2d_analytic = Some(c)),
                    Err(e) => fail(&mut rows, format!("analytic D2D coverage: {e}")),
                }
            }
            Err(e) => fail(&mut rows, format!("analytic: {e}")),
        }
        wall += elapsed_ms(t);
    }

    if cfg.engine.mc() {
        let t = Instant::now();
        match mcsim::simulate(&sc, &mc_config(cfg)) {
            Ok(out) => {
                for (row, &g) in rows.iter_mut().zip(&gammas) {
                    row.skips = Some((out.cellular.skipped + out.d2d.skipped) as u64);
                    match (estimate_coverage(&out.cellular, g), estimate_coverage(&out.d2d, g)) {
                        (Ok(c), Ok(d)) => {
                            row.cov_cell_mc = Some(c.value);
                            row.cov_cell_ci95 = Some(c.half_width());
                            row.cov_d2d_mc = Some(d.value);
                            row.cov_d2d_ci95 = Some(d.half_width());
                        }
                        (Err(e), _) | (_, Err(e)) => row.errors.push(format!("mc coverage: {e}")),
                    }
                }
            }
            Err(e) => fail(&mut rows, format!("mc simulation: {e}")),
        }
        wall += elapsed_ms(t);
    }

    if cfg.timing {
        rows.iter_mut().for_each(|r| r.wall_ms = Some(wall / n));
    }
    rows
}

/// Per-row invariant violations of a β sweep: probabilities in `[0, 1]`,
/// `ase_total = ase_cell + ase_d2d`, analytic `q` strictly decreasing and
/// simulated `q` non-increasing in β.
pub fn check_rows(rows: &[SweepRow]) -> Vec<String> {
    let mut bad = Vec::new();
    for r in rows {
        let probs = [
            ("q_analytic", r.q_analytic),
            ("q_mc", r.q_mc),
            ("cov_cell_analytic", r.cov_cell_analytic),
            ("cov_cell_mc", r.cov_cell_mc),
            ("cov_d2d_analytic", r.cov_d2d_analytic),
            ("cov_d2d_mc", r.cov_d2d_mc),
        ];
        for (name, v) in probs {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    bad.push(format!("beta {}: {name} = {v} outside [0, 1]", r.beta_dbm));
                }
            }
        }
        if let (Some(c), Some(d), Some(t)) = (r.ase_cell, r.ase_d2d, r.ase_total) {
            if t != c + d {
                bad.push(format!("beta {}: ase_total {t} != {c} + {d}", r.beta_dbm));
            }
        }
    }
    for w in rows.windows(2) {
        if let (Some(a), Some(b)) = (w[0].q_analytic, w[1].q_analytic) {
            if w[1].beta_dbm > w[0].beta_dbm && !(b < a) {
                bad.push(format!("q_analytic not decreasing between beta {} and {}", w[0].beta_dbm, w[1].beta_dbm));
            }
        }
        if let (Some(a), Some(b)) = (w[0].q_mc, w[1].q_mc) {
            if w[1].beta_dbm > w[0].beta_dbm && b > a {
                bad.push(format!("q_mc increasing between beta {} and {}", w[0].beta_dbm, w[1].beta_dbm));
            }
        }
    }
    bad
}

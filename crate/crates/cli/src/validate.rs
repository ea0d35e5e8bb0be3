//! Acceptance checks comparing the analytic engine with the simulator and
//! with closed-form oracles.

use std::sync::Arc;

use d2d_core::analytic::{cellular_mode_probability, AnalyticModel, AnalyticOptions, Tables};
use d2d_core::mcsim::{self, estimate_coverage, McConfig, McOutput};
use d2d_core::netmodel::{db_to_linear, NetworkParams, PropagationCondition, Scenario};
use d2d_core::numerics::{cf_invert_below, CfInversionSpec};
use d2d_core::Result;
use num_complex::Complex64;

use crate::config::{Engine, SweepConfig};
use crate::optimize::find_optimal_beta;
use crate::output::write_csv;
use crate::sweep::{run_sweep, SweepContent};

/// Largest `|q_analytic - q_mc|` in the mode cross-validation.
pub const MODE_TOL: f64 = 0.015;
pub const MODE_TRIALS: usize = 10_000;
pub const MODE_DENSITIES: [f64; 3] = [5.0, 10.0, 15.0];
/// Accepted band of `q(-55 dBm)` at 5 BS/km^2.
pub const MODE_ANCHOR_BAND: (f64, f64) = (0.45, 0.60);
/// Largest analytic/simulated coverage gap at β = -50 dBm.
pub const COVERAGE_TOL: f64 = 0.03;
pub const COVERAGE_REPLICATIONS: usize = 20_000;
pub const COVERAGE_BETA_DBM: f64 = -50.0;
pub const COVERAGE_GAMMAS_DB: [f64; 3] = [-10.0, 0.0, 10.0];
/// Largest drop of D2D coverage from 0 dB to 15 dB.
pub const FLATNESS_TOL: f64 = 0.2;
/// Accepted range of the constrained optimum, dBm.
pub const OPTIMUM_RANGE_DBM: (f64, f64) = (-60.0, -50.0);
pub const OPTIMUM_COVERAGE: f64 = 0.9;
/// Largest CDF error of the inversion oracles.
pub const INVERSION_TOL: f64 = 1e-4;
/// Largest Kolmogorov–Smirnov distance of the nearest equivalent BS.
pub const KS_TOL: f64 = 0.02;
pub const KS_SAMPLES: usize = 10_000;
/// Slack on monotonicity of inverted coverage curves (inversion accuracy).
pub const MONOTONE_SLACK: f64 = 1e-4;
/// Tolerance of characteristic-function identities.
pub const CF_IDENTITY_TOL: f64 = 1e-12;

/// One sub-check of a criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub label: String,
    pub passed: bool,
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub checks: Vec<Check>,
    pub detail: String,
}

impl Outcome {
    fn new(id: u8, name: &'static str) -> Self {
        Outcome {
            id,
            name,
            checks: Vec::new(),
            detail: String::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, passed: bool) {
        self.checks.push(Check {
            label: label.into(),
            passed,
        });
    }

    fn failed(id: u8, name: &'static str, err: impl std::fmt::Display) -> Self {
        let mut o = Outcome::new(id, name);
        o.check(format!("error: {err}"), false);
        o
    }

    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    /// `true` when every check whose label starts with `prefix` passed.
    pub fn passed_part(&self, prefix: &str) -> bool {
        let mut it = self.checks.iter().filter(|c| c.label.starts_with(prefix)).peekable();
        it.peek().is_some() && it.all(|c| c.passed)
    }

    /// `PASS [n] name: detail` or `FAIL ...`.
    pub fn line(&self) -> String {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.passed).map(|c| c.label.as_str()).collect();
        let mut s = format!("{} [{}] {}: {}", if self.passed() { "PASS" } else { "FAIL" }, self.id, self.name, self.detail);
        if !failed.is_empty() {
            s += &format!(" | failed: {}", failed.join("; "));
        }
        s
    }
}

fn scenario_with(lambda_b: f64, beta: f64) -> Scenario {
    Scenario::new(NetworkParams {
        lambda_b,
        beta,
        ..NetworkParams::default()
    })
}

fn mc(replications: usize, seed: u64) -> McConfig {
    McConfig {
        replications,
        seed,
        ..McConfig::default()
    }
}

/// Mode probability against the simulated cellular fraction at the window
/// centre for every density and every β in -70..-30 dBm.
pub fn mode_cross_validation(seed: u64) -> Outcome {
    let name = "mode probability vs simulation";
    let mut o = Outcome::new(1, name);
    let mut worst = 0.0f64;
    for &lb in &MODE_DENSITIES {
        let base = scenario_with(lb, -50.0);
        let res = (|| -> Result<()> {
            let tables = Tables::build(&base)?;
            let mrss = mcsim::sample_origin_mrss(&base, &mc(MODE_TRIALS, seed))?;
            for i in 0..9 {
                let beta = -70.0 + 5.0 * i as f64;
                let qa = cellular_mode_probability(&scenario_with(lb, beta), &tables);
                let qm = mcsim::mode_fraction(&mrss, beta)?.value;
                let d = (qa - qm).abs();
                worst = worst.max(d);
                o.check(format!("lambda_b {lb} beta {beta}: |{qa:.4} - {qm:.4}| = {d:.4}"), d <= MODE_TOL);
            }
            Ok(())
        })();
        if let Err(e) = res {
            return Outcome::failed(1, name, e);
        }
    }
    o.detail = format!("27 points, max |diff| {worst:.4} (tol {MODE_TOL})");
    o
}

/// `q(-55 dBm)` at 5 BS/km^2 inside the anchor band.
pub fn mode_anchor() -> Outcome {
    let name = "mode probability anchor at -55 dBm";
    let sc = scenario_with(5.0, -55.0);
    match Tables::build(&sc) {
        Ok(t) => {
            let q = cellular_mode_probability(&sc, &t);
            let mut o = Outcome::new(2, name);
            let (lo, hi) = MODE_ANCHOR_BAND;
            o.check(format!("q = {q:.4} in [{lo}, {hi}]"), (lo..=hi).contains(&q));
            o.detail = format!("q(-55 dBm) = {q:.4}, band [{lo}, {hi}]");
            o
        }
        Err(e) => Outcome::failed(2, name, e),
    }
}

/// Analytic model and simulation at β = -50 dBm shared by the coverage
/// checks.
pub struct CoverageRun {
    pub model: AnalyticModel,
    pub mc: McOutput,
}

pub fn coverage_run(seed: u64, replications: usize) -> Result<CoverageRun> {
    let sc = scenario_with(5.0, COVERAGE_BETA_DBM);
    Ok(CoverageRun {
        model: AnalyticModel::new(&sc, AnalyticOptions::default())?,
        mc: mcsim::simulate(&sc, &mc(replications, seed))?,
    })
}

/// Analytic against simulated coverage of both tiers at -10, 0 and 10 dB.
/// Check labels start with `cellular` or `d2d`.
pub fn coverage_cross_validation(run: &CoverageRun) -> Outcome {
    let name = "coverage vs simulation at beta -50 dBm";
    let gammas: Vec<f64> = COVERAGE_GAMMAS_DB.iter().map(|&g| db_to_linear(g)).collect();
    let res = (|| -> Result<Outcome> {
        let mut o = Outcome::new(3, name);
        let cell = run.model.coverage_cellular_many(&gammas)?;
        let d2d = run.model.coverage_d2d_many(&gammas)?;
        let mut worst = [0.0f64; 2];
        for (i, (&gdb, &g)) in COVERAGE_GAMMAS_DB.iter().zip(&gammas).enumerate() {
            for (k, (tier, a, batch)) in [("cellular", cell[i], &run.mc.cellular), ("d2d", d2d[i], &run.mc.d2d)].into_iter().enumerate() {
                let m = estimate_coverage(batch, g)?.value;
                let d = (a - m).abs();
                worst[k] = worst[k].max(d);
                o.check(format!("{tier} {gdb} dB: |{a:.4} - {m:.4}| = {d:.4}"), d <= COVERAGE_TOL);
            }
        }
        o.detail = format!(
            "max |diff| cellular {:.4}, d2d {:.4} (tol {COVERAGE_TOL}, {} replications)",
            worst[0],
            worst[1],
            run.mc.cellular.values.len()
        );
        Ok(o)
    })();
    res.unwrap_or_else(|e| Outcome::failed(3, name, e))
}

/// D2D coverage drop from 0 dB to 15 dB on both engines.
pub fn d2d_flatness(run: &CoverageRun) -> Outcome {
    let name = "D2D coverage flatness";
    let res = (|| -> Result<Outcome> {
        let mut o = Outcome::new(4, name);
        let g = [db_to_linear(0.0), db_to_linear(15.0)];
        let a = run.model.coverage_d2d_many(&g)?;
        let m0 = estimate_coverage(&run.mc.d2d, g[0])?.value;
        let m15 = estimate_coverage(&run.mc.d2d, g[1])?.value;
        o.check(format!("analytic {:.4} -> {:.4}", a[0], a[1]), (a[0] - a[1]).abs() <= FLATNESS_TOL);
        o.check(format!("mc {m0:.4} -> {m15:.4}"), (m0 - m15).abs() <= FLATNESS_TOL);
        o.detail = format!(
            "drop analytic {:.4}, mc {:.4} (tol {FLATNESS_TOL})",
            a[0] - a[1],
            m0 - m15
        );
        Ok(o)
    })();
    res.unwrap_or_else(|e| Outcome::failed(4, name, e))
}

/// Constrained optimum of the default sweep.
pub fn optimal_threshold() -> Outcome {
    let name = "optimal threshold";
    let cfg = SweepConfig {
        coverage_constraint: OPTIMUM_COVERAGE,
        ..SweepConfig::default()
    };
    match find_optimal_beta(&cfg) {
        Ok(r) => {
            let mut o = Outcome::new(5, name);
            match r.constrained {
                Some(c) => {
                    let (lo, hi) = OPTIMUM_RANGE_DBM;
                    o.check(format!("beta* = {} in [{lo}, {hi}]", c.beta_dbm), (lo..=hi).contains(&c.beta_dbm));
                    o.check(format!("cov_cell(beta*) = {:.4} >= {OPTIMUM_COVERAGE}", c.cov_cell), c.cov_cell >= OPTIMUM_COVERAGE);
                    o.detail = format!(
                        "beta* = {:.2} dBm, ASE {:.3}, cov_cell {:.4}; unconstrained beta {:.2} dBm, ASE {:.3}",
                        c.beta_dbm, c.ase_total, c.cov_cell, r.unconstrained.beta_dbm, r.unconstrained.ase_total
                    );
                }
                None => o.check("constraint infeasible", false),
            }
            o
        }
        Err(e) => Outcome::failed(5, name, e),
    }
}

fn exponential_cf(w: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(1.0, -w)
}

fn uniform_cf(w: f64) -> Complex64 {
    if w == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w)
    }
}

/// Exponential(1), Uniform(0, 1) and a point mass at 1 inverted from their
/// characteristic functions.
pub fn inversion_oracles() -> Outcome {
    let name = "characteristic-function inversion oracles";
    let spec = CfInversionSpec::default();
    let mut o = Outcome::new(6, name);
    let mut worst = 0.0f64;
    let mut case = |label: &str, phi: &dyn Fn(f64) -> Complex64, x: f64, exact: f64| match cf_invert_below(phi, x, &spec) {
        Ok(p) => {
            let e = (p - exact).abs();
            worst = worst.max(e);
            o.check(format!("{label} x={x}: error {e:.2e}"), e <= INVERSION_TOL);
        }
        Err(e) => o.check(format!("{label} x={x}: {e}"), false),
    };
    for x in [0.1, 0.5, 1.0, 2.0, 5.0] {
        case("exponential", &exponential_cf, x, 1.0 - (-x).exp());
    }
    for x in [0.1, 0.25, 0.5, 0.9] {
        case("uniform", &uniform_cf, x, x);
    }
    let point = |w: f64| Complex64::new(0.0, w).exp();
    for (x, exact) in [(0.5, 0.0), (0.9, 0.0), (1.1, 1.0), (2.0, 1.0)] {
        case("degenerate", &point, x, exact);
    }
    o.detail = format!("max error {worst:.2e} (tol {INVERSION_TOL:e})");
    o
}

/// Kolmogorov–Smirnov distance between samples and a continuous CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Simulated nearest equivalent BS distance against `1 - exp(-Lambda(t))`.
pub fn equivalence_transform(seed: u64) -> Outcome {
    let name = "equivalence transform";
    let sc = Scenario::default();
    let res = (|| -> Result<Outcome> {
        let tables = Tables::build(&sc)?;
        let mut samples = mcsim::sample_min_equivalent_distance(&sc, &mc(KS_SAMPLES, seed))?;
        let d = ks_distance(&mut samples, |t| 1.0 - (-tables.bs.cum_total(t)).exp());
        let mut o = Outcome::new(7, name);
        o.check(format!("KS {d:.4}"), d <= KS_TOL);
        o.detail = format!("KS {d:.4} over {KS_SAMPLES} samples (tol {KS_TOL})");
        Ok(o)
    })();
    res.unwrap_or_else(|e| Outcome::failed(7, name, e))
}

fn in_unit(v: &[f64]) -> bool {
    v.iter().all(|p| (0.0..=1.0).contains(p))
}

fn non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// Monotonicity, identities, CF properties and worker-count determinism.
pub fn identities(run: &CoverageRun, seed: u64) -> Outcome {
    let name = "identities and monotonicity";
    let res = (|| -> Result<Outcome> {
        let mut o = Outcome::new(8, name);
        let base = Scenario::default();
        let tables = Arc::new(Tables::build(&base)?);
        let q: Vec<f64> = (0..=40)
            .map(|i| cellular_mode_probability(&scenario_with(5.0, -70.0 + i as f64), &tables))
            .collect();
        o.check("q strictly decreasing in beta", q.windows(2).all(|w| w[1] < w[0]));

        let gdb: Vec<f64> = (0..=12).map(|i| -10.0 + 2.5 * i as f64).collect();
        let g: Vec<f64> = gdb.iter().map(|&x| db_to_linear(x)).collect();
        let cell = run.model.coverage_cellular_many(&g)?;
        let d2d = run.model.coverage_d2d_many(&g)?;
        let mut mc_cell = Vec::new();
        let mut mc_d2d = Vec::new();
        for &x in &g {
            mc_cell.push(estimate_coverage(&run.mc.cellular, x)?.value);
            mc_d2d.push(estimate_coverage(&run.mc.d2d, x)?.value);
        }
        o.check(
            "analytic coverage non-increasing in gamma",
            non_increasing(&cell, MONOTONE_SLACK) && non_increasing(&d2d, MONOTONE_SLACK),
        );
        o.check("mc coverage non-increasing in gamma", non_increasing(&mc_cell, 0.0) && non_increasing(&mc_d2d, 0.0));

        let ase = run.model.ase_total()?;
        o.check("ase_total = ase_cell + ase_d2d", ase.total == ase.cellular + ase.d2d);

        let mut probs = q.clone();
        probs.extend(cell.iter().chain(&d2d).chain(&mc_cell).chain(&mc_d2d));
        probs.extend([run.model.boundary().q, run.model.busy_probability()]);
        o.check("probabilities in [0, 1]", in_unit(&probs));

        let mut cf_ok = true;
        for cond in PropagationCondition::ALL {
            let t = run.model.boundary().t(cond);
            for frac in [0.05, 0.5, 1.0] {
                let r = frac * t;
                let one = run.model.cf_inv_sinr_cellular(cond, 0.0, r)?;
                let one_d = run.model.cf_inv_sinr_d2d(cond, 0.0, 0.05 * frac)?;
                cf_ok &= (one - 1.0).norm() <= CF_IDENTITY_TOL && (one_d - 1.0).norm() <= CF_IDENTITY_TOL;
                for w in [1e-3, 0.7, 40.0, 1e4] {
                    let (p, m) = (run.model.cf_inv_sinr_cellular(cond, w, r)?, run.model.cf_inv_sinr_cellular(cond, -w, r)?);
                    let (pd, md) = (run.model.cf_inv_sinr_d2d(cond, w, 0.05 * frac)?, run.model.cf_inv_sinr_d2d(cond, -w, 0.05 * frac)?);
                    cf_ok &= (p - m.conj()).norm() <= CF_IDENTITY_TOL * p.norm().max(1.0);
                    cf_ok &= (pd - md.conj()).norm() <= CF_IDENTITY_TOL * pd.norm().max(1.0);
                    cf_ok &= p.norm() <= 1.0 + CF_IDENTITY_TOL && pd.norm() <= 1.0 + CF_IDENTITY_TOL;
                }
            }
        }
        o.check("CF normalisation, Hermitian symmetry and |phi| <= 1", cf_ok);

        let sweep = |workers: usize| -> Vec<u8> {
            let cfg = SweepConfig {
                engine: Engine::Both,
                replications: 200,
                seed,
                workers,
                beta_min_dbm: -60.0,
                beta_max_dbm: -40.0,
                beta_step_db: 10.0,
                ..SweepConfig::default()
            };
            let mut buf = Vec::new();
            write_csv(&run_sweep(&cfg, SweepContent::Coverage), &mut buf).expect("in-memory write");
            buf
        };
        let one = sweep(1);
        o.check("byte-identical CSV for 1 and 4 workers", one == sweep(4));
        let passed = o.checks.iter().filter(|c| c.passed).count();
        o.detail = format!("{passed}/{} checks", o.checks.len());
        Ok(o)
    })();
    res.unwrap_or_else(|e| Outcome::failed(8, name, e))
}

/// KS distance between the simulated D2D serving distance and the analytic
/// serving law; reported, not enforced.
pub fn d2d_serving_diagnostic(run: &CoverageRun) -> Result<(f64, f64, f64)> {
    let mut samples: Vec<f64> = run.mc.d2d_serving.iter().map(|s| s.equivalent_km).collect();
    let los_mc = run.mc.d2d_serving.iter().filter(|s| s.condition == PropagationCondition::Los).count() as f64
        / samples.len().max(1) as f64;
    let cdf = |r: f64| {
        PropagationCondition::ALL
            .iter()
            .map(|&c| run.model.d2d_serving_distance_cdf(c, r).unwrap_or(f64::NAN))
            .sum::<f64>()
    };
    let los_analytic = run.model.d2d_serving_distance_cdf(PropagationCondition::Los, 50.0)?;
    Ok((ks_distance(&mut samples, cdf), los_analytic, los_mc))
}

/// The diagnostic as a report line.
pub fn d2d_serving_line(run: &CoverageRun) -> String {
    match d2d_serving_diagnostic(run) {
        Ok((ks, los_a, los_m)) => {
            format!("INFO D2D serving distance vs simulation: KS {ks:.4}, LoS share analytic {los_a:.3}, mc {los_m:.3}")
        }
        Err(e) => format!("INFO D2D serving distance: {e}"),
    }
}

/// Every criterion in order; `report` receives each result line as soon as
/// it is known, followed by the serving-distance diagnostic.
pub fn run_all(seed: u64, mut report: impl FnMut(&str)) -> Vec<Outcome> {
    let mut out = Vec::new();
    let mut push = |o: Outcome, report: &mut dyn FnMut(&str)| {
        report(&o.line());
        out.push(o);
    };
    push(mode_cross_validation(seed), &mut report);
    push(mode_anchor(), &mut report);
    match coverage_run(seed, COVERAGE_REPLICATIONS) {
        Ok(run) => {
            push(coverage_cross_validation(&run), &mut report);
            push(d2d_flatness(&run), &mut report);
            push(optimal_threshold(), &mut report);
            push(inversion_oracles(), &mut report);
            push(equivalence_transform(seed), &mut report);
            push(identities(&run, seed), &mut report);
            report(&d2d_serving_line(&run));
        }
        Err(e) => {
            push(Outcome::failed(3, "coverage vs simulation at beta -50 dBm", &e), &mut report);
            push(Outcome::failed(4, "D2D coverage flatness", &e), &mut report);
            push(optimal_threshold(), &mut report);
            push(inversion_oracles(), &mut report);
            push(equivalence_transform(seed), &mut report);
            push(Outcome::failed(8, "identities and monotonicity", &e), &mut report);
        }
    }
    out
}

//! Constrained search for the ASE-maximising mode threshold.

use std::collections::BTreeMap;
use std::sync::Arc;

use d2d_core::analytic::{AnalyticModel, AnalyticOptions, Tables};
use d2d_core::netmodel::db_to_linear;
use d2d_core::numerics::golden_section_max;
use d2d_core::Result;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SweepConfig;
use crate::sweep::with_pool;

/// Golden-section stopping width, dBm.
pub const BETA_RESOLUTION_DB: f64 = 0.5;

/// ASE loss per unit of coverage shortfall used to steer the refinement
/// back into the feasible set, bps/Hz/km^2.
pub const SHORTFALL_PENALTY: f64 = 1e4;

/// One evaluated threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub beta_dbm: f64,
    pub ase_total: f64,
    pub cov_cell: f64,
}

/// Constrained and unconstrained optima of one search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub coverage_constraint: f64,
    pub gamma_db: f64,
    /// `None` when no evaluated threshold meets the constraint.
    pub constrained: Option<Candidate>,
    pub unconstrained: Candidate,
    /// Highest-coverage point, reported when the constraint is infeasible.
    pub closest_to_feasible: Option<Candidate>,
    /// Every evaluated threshold, in increasing β.
    pub evaluations: Vec<Candidate>,
}

impl OptimizationReport {
    pub fn feasible(&self) -> bool {
        self.constrained.is_some()
    }
}

/// Memoised objective over β. Answers for different constraint levels
/// share the evaluations, so a stricter level never reports a larger ASE.
pub struct Optimizer<F> {
    eval: F,
    grid: Vec<f64>,
    memo: BTreeMap<u64, Candidate>,
}

fn key(beta: f64) -> u64 {
    // order-preserving map of f64 to u64
    let b = beta.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn argmax<'a>(it: impl Iterator<Item = &'a Candidate>, score: impl Fn(&Candidate) -> f64) -> Option<Candidate> {
    it.fold(None, |best: Option<Candidate>, c| match best {
        Some(b) if score(&b) >= score(c) => Some(b),
        _ => Some(*c),
    })
}

impl<F: FnMut(f64) -> Result<Candidate>> Optimizer<F> {
    /// `grid` must be non-empty and increasing.
    pub fn new(grid: Vec<f64>, eval: F) -> Self {
        Optimizer {
            eval,
            grid,
            memo: BTreeMap::new(),
        }
    }

    /// Adds already evaluated points.
    pub fn seed(&mut self, points: impl IntoIterator<Item = Candidate>) {
        for c in points {
            self.memo.insert(key(c.beta_dbm), c);
        }
    }

    pub fn evaluate(&mut self, beta: f64) -> Result<Candidate> {
        if let Some(c) = self.memo.get(&key(beta)) {
            return Ok(*c);
        }
        let c = (self.eval)(beta)?;
        self.memo.insert(key(beta), c);
        Ok(c)
    }

    pub fn evaluations(&self) -> Vec<Candidate> {
        self.memo.values().copied().collect()
    }

    fn grid_points(&mut self) -> Result<Vec<Candidate>> {
        self.grid.clone().into_iter().map(|b| self.evaluate(b)).collect()
    }

    fn bracket(&self, i: usize) -> (f64, f64) {
        (self.grid[i.saturating_sub(1)], self.grid[(i + 1).min(self.grid.len() - 1)])
    }

    // Golden-section refinement of `score` on the bracket around grid point `i`.
    fn refine(&mut self, i: usize, score: impl Fn(&Candidate) -> f64) -> Result<()> {
        let (lo, hi) = self.bracket(i);
        if hi - lo <= BETA_RESOLUTION_DB {
            return Ok(());
        }
        let mut err = None;
        golden_section_max(
            |b| match self.evaluate(b) {
                Ok(c) => score(&c),
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            BETA_RESOLUTION_DB,
        );
        err.map_or(Ok(()), Err)
    }

    /// Best threshold with cellular coverage at least `level`: grid scan,
    /// then golden-section refinement of the penalised ASE on the bracket
    /// around the best feasible grid point. Also refines and reports the
    /// unconstrained maximiser.
    pub fn optimize(&mut self, level: f64, gamma_db: f64) -> Result<OptimizationReport> {
        let grid = self.grid_points()?;
        let ase = |c: &Candidate| c.ase_total;
        let penalised = move |c: &Candidate| c.ase_total - SHORTFALL_PENALTY * (level - c.cov_cell).max(0.0);

        let best = argmax(grid.iter(), ase).expect("non-empty grid");
        let i = grid.iter().position(|c| c.beta_dbm == best.beta_dbm).unwrap_or(0);
        self.refine(i, ase)?;

        let feasible = |c: &&Candidate| c.cov_cell >= level;
        if let Some(w) = argmax(grid.iter().filter(feasible), ase) {
            let i = grid.iter().position(|c| c.beta_dbm == w.beta_dbm).unwrap_or(0);
            self.refine(i, penalised)?;
        }

        let all = self.evaluations();
        let constrained = argmax(all.iter().filter(feasible), ase);
        Ok(OptimizationReport {
            coverage_constraint: level,
            gamma_db,
            constrained,
            unconstrained: argmax(all.iter(), ase).expect("non-empty grid"),
            closest_to_feasible: if constrained.is_none() {
                argmax(all.iter(), |c| c.cov_cell)
            } else {
                None
            },
            evaluations: all,
        })
    }
}

/// Analytic objective at threshold `beta`: ASE and cellular coverage at
/// `cfg.gamma_db`.
pub fn analytic_candidate(cfg: &SweepConfig, tables: &Arc<Tables>, beta: f64) -> Result<Candidate> {
    let model = AnalyticModel::with_tables(&cfg.scenario_at(beta), tables.clone(), AnalyticOptions::default())?;
    Ok(Candidate {
        beta_dbm: beta,
        ase_total: model.ase_total()?.total,
        cov_cell: model.coverage_cellular(db_to_linear(cfg.gamma_db))?,
    })
}

/// Grid scan on `cfg`'s β grid with the analytic engine followed by
/// golden-section refinement to [`BETA_RESOLUTION_DB`].
pub fn find_optimal_beta(cfg: &SweepConfig) -> Result<OptimizationReport> {
    let tables = Arc::new(Tables::build(&cfg.scenario())?);
    let grid = cfg.beta_grid();
    let points: Vec<Candidate> = with_pool(cfg.workers, || {
        grid.par_iter()
            .map(|&b| analytic_candidate(cfg, &tables, b))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut opt = Optimizer::new(grid, |b| analytic_candidate(cfg, &tables, b));
    opt.seed(points);
    opt.optimize(cfg.coverage_constraint, cfg.gamma_db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Vec<f64> {
        (0..9).map(|i| -70.0 + 5.0 * i as f64).collect()
    }

    // ASE rising in β, coverage peaking at -57.5 and falling after.
    fn synthetic(b: f64) -> Result<Candidate> {
        Ok(Candidate {
            beta_dbm: b,
            ase_total: 100.0 + 2.0 * b,
            cov_cell: 0.92 - 0.0008 * (b + 57.5).powi(2),
        })
    }

    #[test]
    fn order_preserving_key() {
        let xs = [-70.0, -55.5, -0.0, 0.0, 1e-9, 30.0];
        for w in xs.windows(2) {
            assert!(key(w[0]) <= key(w[1]));
        }
    }

    #[test]
    fn constrained_optimum_sits_on_the_coverage_boundary() {
        let mut opt = Optimizer::new(grid(), synthetic);
        let r = opt.optimize(0.9, 0.0).unwrap();
        let c = r.constrained.unwrap();
        // boundary: 0.0008 (b + 57.5)^2 = 0.02  ->  b = -52.5
        assert!(c.cov_cell >= 0.9);
        assert!((c.beta_dbm - -52.5).abs() <= BETA_RESOLUTION_DB, "{c:?}");
        assert_eq!(r.unconstrained.beta_dbm, -30.0);
        assert!(r.closest_to_feasible.is_none());
    }

    #[test]
    fn zero_level_is_unconstrained() {
        let mut opt = Optimizer::new(grid(), synthetic);
        let r = opt.optimize(0.0, 0.0).unwrap();
        assert_eq!(r.constrained, Some(r.unconstrained));
    }

    #[test]
    fn interior_maximum_is_refined() {
        let f = |b: f64| {
            Ok(Candidate {
                beta_dbm: b,
                ase_total: -(b + 53.3).powi(2),
                cov_cell: 1.0,
            })
        };
        let r = Optimizer::new(grid(), f).optimize(0.9, 0.0).unwrap();
        assert!((r.unconstrained.beta_dbm - -53.3).abs() <= BETA_RESOLUTION_DB);
        assert_eq!(r.constrained, Some(r.unconstrained));
    }

    #[test]
    fn infeasible_constraint_reports_closest_row() {
        let mut opt = Optimizer::new(grid(), synthetic);
        let r = opt.optimize(0.95, 0.0).unwrap();
        assert!(!r.feasible());
        let c = r.closest_to_feasible.unwrap();
        assert!((c.beta_dbm - -57.5).abs() <= 2.5);
    }

    #[test]
    fn errors_propagate() {
        let f = |b: f64| {
            if b > -50.0 && b < -40.0 {
                Err(d2d_core::Error::InversionFailure(2.0))
            } else {
                synthetic(b)
            }
        };
        assert!(Optimizer::new(grid(), f).optimize(0.9, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn stricter_constraint_never_raises_ase(a in 0.0f64..1.0, b in 0.0f64..1.0, slope in -3.0f64..3.0, peak in -70.0f64..-30.0) {
            let f = move |x: f64| Ok(Candidate {
                beta_dbm: x,
                ase_total: 50.0 + slope * x,
                cov_cell: 0.95 - 0.0005 * (x - peak).powi(2),
            });
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let mut opt = Optimizer::new(grid(), f);
            let loose = opt.optimize(lo, 0.0).unwrap();
            let strict = opt.optimize(hi, 0.0).unwrap();
            let loose_again = opt.optimize(lo, 0.0).unwrap();
            if let Some(s) = strict.constrained {
                prop_assert!(s.cov_cell >= hi);
                prop_assert!(loose_again.constrained.unwrap().ase_total >= s.ase_total);
            }
            if let Some(l) = loose.constrained {
                prop_assert!(l.ase_total <= loose.unconstrained.ase_total);
            }
        }
    }
}

//! Flat `key = value` configuration with unit-bearing key names.
//!
//! Values are resolved in three layers: built-in defaults, then the
//! configuration file, then command-line overrides.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use d2d_core::netmodel::{NetworkParams, PathLossProfile, PropagationCondition, Scenario};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Configuration errors; every variant names the offending key or line.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` is missing its unit suffix (expected `{expected}`)")]
    MissingUnit { key: String, expected: &'static str },
    #[error("key `{key}`: cannot parse `{value}` as {kind}")]
    Parse {
        key: String,
        value: String,
        kind: &'static str,
    },
    #[error("key `{key}` = {value} is out of range ({expected})")]
    Range {
        key: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which evaluation engine fills a sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Mc,
    Both,
}

impl Engine {
    pub fn analytic(self) -> bool {
        matches!(self, Engine::Analytic | Engine::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Engine::Mc | Engine::Both)
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "mc" => Ok(Engine::Mc),
            "both" => Ok(Engine::Both),
            other => Err(format!("unknown engine `{other}` (analytic, mc or both)")),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Analytic => "analytic",
            Engine::Mc => "mc",
            Engine::Both => "both",
        })
    }
}

/// Every recognised key, in echo order.
pub const KEYS: &[&str] = &[
    "lambda_b_per_km2",
    "lambda_u_per_km2",
    "p_b_dbm",
    "p_d_dbm",
    "p_0_dbm",
    "epsilon",
    "beta_dbm",
    "gamma_0_db",
    "rho",
    "sigma_bs_db",
    "sigma_ue_db",
    "noise_bs_dbm",
    "noise_ue_dbm",
    "bandwidth_hz",
    "carrier_hz",
    "tx_power_cap_dbm",
    "d_b_km",
    "d_d_km",
    "beta_min_dbm",
    "beta_max_dbm",
    "beta_step_db",
    "gamma_db",
    "gamma_grid_db",
    "engine",
    "replications",
    "seed",
    "window_km",
    "workers",
    "coverage_constraint",
    "timing",
];

const UNIT_SUFFIXES: &[&str] = &["_per_km2", "_dbm", "_db", "_km", "_hz"];

/// Fully resolved sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Scenario parameters; `params.beta` is the fixed threshold of
    /// γ sweeps.
    pub params: NetworkParams,
    /// LoS cutoff of BS–UE links, km.
    pub d_b_km: f64,
    /// LoS cutoff of UE–UE links, km.
    pub d_d_km: f64,
    pub beta_min_dbm: f64,
    pub beta_max_dbm: f64,
    pub beta_step_db: f64,
    /// SINR threshold of β sweeps, dB.
    pub gamma_db: f64,
    /// SINR thresholds of γ sweeps, dB.
    pub gamma_grid_db: Vec<f64>,
    pub engine: Engine,
    pub replications: usize,
    pub seed: u64,
    pub window_km: f64,
    pub workers: usize,
    /// Minimum cellular coverage of the constrained optimum.
    pub coverage_constraint: f64,
    /// Record per-row wall time; off keeps output byte-reproducible.
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let sc = Scenario::default();
        SweepConfig {
            params: sc.params,
            d_b_km: sc.bs_link.los_cutoff_km(),
            d_d_km: sc.ue_link.los_cutoff_km(),
            beta_min_dbm: -70.0,
            beta_max_dbm: -30.0,
            beta_step_db: 5.0,
            gamma_db: 0.0,
            gamma_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            engine: Engine::Analytic,
            replications: 2000,
            seed: 1,
            window_km: 5.0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            coverage_constraint: 0.9,
            timing: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str, kind: &'static str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Parse {
        key: key.to_string(),
        value: value.to_string(),
        kind,
    })
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s, "a number"))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn rebuild_profile(profile: &PathLossProfile, cutoff: f64) -> Option<PathLossProfile> {
    let (a_l, alpha_l) = profile.coefficients_at(PropagationCondition::Los, 1.0);
    let (a_n, alpha_n) = profile.coefficients_at(PropagationCondition::Nlos, 1.0);
    PathLossProfile::single_slope(a_l, alpha_l, a_n, alpha_n, cutoff, profile.reference_km()).ok()
}

impl SweepConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let num = |v: &str| parse::<f64>(key, v, "a number");
        let p = &mut self.params;
        match key {
            "lambda_b_per_km2" => p.lambda_b = num(value)?,
            "lambda_u_per_km2" => p.lambda_u = num(value)?,
            "p_b_dbm" => p.p_b = num(value)?,
            "p_d_dbm" => p.p_d = num(value)?,
            "p_0_dbm" => p.p_0 = num(value)?,
            "epsilon" => p.epsilon = num(value)?,
            "beta_dbm" => p.beta = num(value)?,
            "gamma_0_db" => p.gamma_0 = num(value)?,
            "rho" => p.rho = num(value)?,
            "sigma_bs_db" => p.sigma_shadow_bs = num(value)?,
            "sigma_ue_db" => p.sigma_shadow_ue = num(value)?,
            "noise_bs_dbm" => p.noise_bs = num(value)?,
            "noise_ue_dbm" => p.noise_ue = num(value)?,
            "bandwidth_hz" => p.bandwidth = num(value)?,
            "carrier_hz" => p.carrier_freq = num(value)?,
            "tx_power_cap_dbm" => {
                p.tx_power_cap = match value {
                    "none" => None,
                    v => Some(num(v)?),
                }
            }
            "d_b_km" => self.d_b_km = num(value)?,
            "d_d_km" => self.d_d_km = num(value)?,
            "beta_min_dbm" => self.beta_min_dbm = num(value)?,
            "beta_max_dbm" => self.beta_max_dbm = num(value)?,
            "beta_step_db" => self.beta_step_db = num(value)?,
            "gamma_db" => self.gamma_db = num(value)?,
            "gamma_grid_db" => self.gamma_grid_db = parse_list(key, value)?,
            "engine" => self.engine = parse(key, value, "analytic, mc or both")?,
            "replications" => self.replications = parse(key, value, "a non-negative integer")?,
            "seed" => self.seed = parse(key, value, "a non-negative integer")?,
            "window_km" => self.window_km = num(value)?,
            "workers" => self.workers = parse(key, value, "a non-negative integer")?,
            "coverage_constraint" => self.coverage_constraint = num(value)?,
            "timing" => self.timing = parse(key, value, "true or false")?,
            other => {
                return Err(match KEYS.iter().find(|k| strip_unit(k) == Some(other)) {
                    Some(expected) => ConfigError::MissingUnit {
                        key: other.to_string(),
                        expected,
                    },
                    None => ConfigError::UnknownKey(other.to_string()),
                })
            }
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    /// Checks every range constraint, naming the first key that violates one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.params;
        let range = |key: &'static str, value: f64, ok: bool, expected: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Range {
                    key,
                    value: value.to_string(),
                    expected,
                })
            }
        };
        let pos = |v: f64| v > 0.0 && v.is_finite();
        range("lambda_b_per_km2", p.lambda_b, pos(p.lambda_b), "> 0")?;
        range("lambda_u_per_km2", p.lambda_u, pos(p.lambda_u) && p.lambda_u >= p.lambda_b, ">= lambda_b_per_km2")?;
        for (key, v) in [
            ("p_b_dbm", p.p_b),
            ("p_d_dbm", p.p_d),
            ("p_0_dbm", p.p_0),
            ("beta_dbm", p.beta),
            ("gamma_0_db", p.gamma_0),
            ("noise_bs_dbm", p.noise_bs),
            ("noise_ue_dbm", p.noise_ue),
            ("gamma_db", self.gamma_db),
        ] {
            range(key, v, v.is_finite(), "finite")?;
        }
        range("epsilon", p.epsilon, p.epsilon > 0.0 && p.epsilon <= 1.0, "0 < epsilon <= 1")?;
        range("rho", p.rho, (0.0..=1.0).contains(&p.rho), "0 <= rho <= 1")?;
        range("sigma_bs_db", p.sigma_shadow_bs, p.sigma_shadow_bs >= 0.0 && p.sigma_shadow_bs.is_finite(), ">= 0")?;
        range("sigma_ue_db", p.sigma_shadow_ue, p.sigma_shadow_ue >= 0.0 && p.sigma_shadow_ue.is_finite(), ">= 0")?;
        range("bandwidth_hz", p.bandwidth, pos(p.bandwidth), "> 0")?;
        range("carrier_hz", p.carrier_freq, pos(p.carrier_freq), "> 0")?;
        if let Some(cap) = p.tx_power_cap {
            range("tx_power_cap_dbm", cap, cap.is_finite(), "finite or none")?;
        }
        range("d_b_km", self.d_b_km, pos(self.d_b_km), "> 0")?;
        range("d_d_km", self.d_d_km, pos(self.d_d_km), "> 0")?;
        range("beta_min_dbm", self.beta_min_dbm, self.beta_min_dbm.is_finite(), "finite")?;
        range(
            "beta_max_dbm",
            self.beta_max_dbm,
            self.beta_max_dbm.is_finite() && self.beta_max_dbm >= self.beta_min_dbm,
            ">= beta_min_dbm",
        )?;
        range("beta_step_db", self.beta_step_db, pos(self.beta_step_db), "> 0")?;
        let g = &self.gamma_grid_db;
        let ordered = !g.is_empty() && g.iter().all(|x| x.is_finite()) && g.windows(2).all(|w| w[0] < w[1]);
        if !ordered {
            return Err(ConfigError::Range {
                key: "gamma_grid_db",
                value: fmt_list(g),
                expected: "non-empty, finite and strictly increasing",
            });
        }
        range("replications", self.replications as f64, self.replications >= 1, ">= 1")?;
        range("window_km", self.window_km, pos(self.window_km), "> 0")?;
        range(
            "coverage_constraint",
            self.coverage_constraint,
            (0.0..=1.0).contains(&self.coverage_constraint),
            "0 <= level <= 1",
        )?;
        Ok(())
    }

    /// `(key, value)` pairs of the resolved configuration, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let f = |v: f64| v.to_string();
        vec![
            ("lambda_b_per_km2", f(p.lambda_b)),
            ("lambda_u_per_km2", f(p.lambda_u)),
            ("p_b_dbm", f(p.p_b)),
            ("p_d_dbm", f(p.p_d)),
            ("p_0_dbm", f(p.p_0)),
            ("epsilon", f(p.epsilon)),
            ("beta_dbm", f(p.beta)),
            ("gamma_0_db", f(p.gamma_0)),
            ("rho", f(p.rho)),
            ("sigma_bs_db", f(p.sigma_shadow_bs)),
            ("sigma_ue_db", f(p.sigma_shadow_ue)),
            ("noise_bs_dbm", f(p.noise_bs)),
            ("noise_ue_dbm", f(p.noise_ue)),
            ("bandwidth_hz", f(p.bandwidth)),
            ("carrier_hz", f(p.carrier_freq)),
            ("tx_power_cap_dbm", p.tx_power_cap.map_or_else(|| "none".to_string(), f)),
            ("d_b_km", f(self.d_b_km)),
            ("d_d_km", f(self.d_d_km)),
            ("beta_min_dbm", f(self.beta_min_dbm)),
            ("beta_max_dbm", f(self.beta_max_dbm)),
            ("beta_step_db", f(self.beta_step_db)),
            ("gamma_db", f(self.gamma_db)),
            ("gamma_grid_db", fmt_list(&self.gamma_grid_db)),
            ("engine", self.engine.to_string()),
            ("replications", self.replications.to_string()),
            ("seed", self.seed.to_string()),
            ("window_km", f(self.window_km)),
            ("workers", self.workers.to_string()),
            ("coverage_constraint", f(self.coverage_constraint)),
            ("timing", self.timing.to_string()),
        ]
    }

    /// The resolved configuration as loadable `key = value` text.
    pub fn echo(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The β grid `beta_min, beta_min + step, ..` up to `beta_max`.
    pub fn beta_grid(&self) -> Vec<f64> {
        let span = (self.beta_max_dbm - self.beta_min_dbm) / self.beta_step_db;
        let n = (span + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.beta_min_dbm + i as f64 * self.beta_step_db).collect()
    }

    /// Scenario with the configured parameters and LoS cutoffs.
    pub fn scenario(&self) -> Scenario {
        let base = Scenario::default();
        Scenario {
            params: self.params.clone(),
            bs_link: rebuild_profile(&base.bs_link, self.d_b_km).unwrap_or(base.bs_link),
            ue_link: rebuild_profile(&base.ue_link, self.d_d_km).unwrap_or(base.ue_link),
        }
    }

    /// [`SweepConfig::scenario`] with the mode threshold set to `beta_dbm`.
    pub fn scenario_at(&self, beta_dbm: f64) -> Scenario {
        let mut sc = self.scenario();
        sc.params.beta = beta_dbm;
        sc
    }
}

fn strip_unit(key: &str) -> Option<&str> {
    UNIT_SUFFIXES.iter().find_map(|s| key.strip_suffix(s))
}

/// Defaults, then the file at `path` (if any), then `overrides` in order.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<SweepConfig, ConfigError> {
    let mut cfg = SweepConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.apply_str(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_table_defaults() {
        let mut cfg = SweepConfig::default();
        cfg.apply_str("").unwrap();
        cfg.validate().unwrap();
        let p = &cfg.params;
        assert_eq!(p.lambda_b, 5.0);
        assert_eq!(p.lambda_u, 200.0);
        assert_eq!(p.p_b, 46.0);
        assert_eq!(p.p_d, 10.0);
        assert_eq!(p.p_0, -70.0);
        assert_eq!(p.epsilon, 0.8);
        assert_eq!(p.rho, 0.1);
        assert_eq!(p.sigma_shadow_bs, 8.0);
        assert_eq!(p.sigma_shadow_ue, 7.0);
        assert_eq!(cfg.d_b_km, 0.3);
        assert_eq!(cfg.d_d_km, 0.1);
    }

    #[test]
    fn override_is_echoed() {
        let cfg = load_config(None, &[("beta_dbm".into(), "-50".into())]).unwrap();
        assert!(cfg.echo().lines().any(|l| l == "beta_dbm = -50"));
        let cfg = load_config(None, &[("beta_dbm".into(), "-61.5".into())]).unwrap();
        assert!(cfg.echo().contains("beta_dbm = -61.5\n"));
    }

    #[test]
    fn epsilon_out_of_range_names_key() {
        let err = load_config(None, &[("epsilon".into(), "1.5".into())]).unwrap_err();
        assert!(matches!(err, ConfigError::Range { key: "epsilon", .. }), "{err}");
        assert!(err.to_string().contains("epsilon"));
    }

    #[test]
    fn unknown_and_unitless_keys() {
        let mut cfg = SweepConfig::default();
        assert!(matches!(cfg.set("p_b", "46"), Err(ConfigError::MissingUnit { expected: "p_b_dbm", .. })));
        assert!(matches!(cfg.set("lambda_b", "5"), Err(ConfigError::MissingUnit { expected: "lambda_b_per_km2", .. })));
        assert!(matches!(cfg.set("colour", "red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.set("seed", "-1"), Err(ConfigError::Parse { .. })));
        assert!(matches!(cfg.apply_str("seed 3"), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn layers_apply_in_order() {
        let mut cfg = SweepConfig::default();
        cfg.apply_str("# comment\nseed = 9\nreplications = 10 # trailing\n").unwrap();
        assert_eq!((cfg.seed, cfg.replications), (9, 10));
        cfg.set("seed", "11").unwrap();
        assert_eq!(cfg.seed, 11);
    }

    #[test]
    fn echo_reloads_to_same_config() {
        let mut cfg = SweepConfig::default();
        cfg.apply_str("beta_dbm = -57.25\ngamma_grid_db = -3,0,2.5\ntx_power_cap_dbm = 23\nengine = both\ntiming = true").unwrap();
        let mut again = SweepConfig::default();
        again.apply_str(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.entries().len(), KEYS.len());
        for ((k, _), key) in cfg.entries().iter().zip(KEYS) {
            assert_eq!(k, key);
        }
    }

    #[test]
    fn beta_grid_includes_endpoints() {
        let cfg = SweepConfig::default();
        let g = cfg.beta_grid();
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], -70.0);
        assert_eq!(g[8], -30.0);
        let mut cfg = cfg;
        cfg.beta_step_db = 0.1;
        cfg.beta_min_dbm = -60.0;
        cfg.beta_max_dbm = -59.0;
        assert_eq!(cfg.beta_grid().len(), 11);
    }

    #[test]
    fn grid_and_count_invariants() {
        for (k, v) in [
            ("gamma_grid_db", "3,1"),
            ("gamma_grid_db", ""),
            ("replications", "0"),
            ("beta_step_db", "0"),
            ("beta_max_dbm", "-80"),
            ("lambda_u_per_km2", "1"),
            ("coverage_constraint", "1.1"),
        ] {
            let err = load_config(None, &[(k.into(), v.into())]).unwrap_err();
            assert!(err.to_string().contains(k), "{k}: {err}");
        }
    }

    #[test]
    fn cutoffs_reach_the_scenario() {
        let mut cfg = SweepConfig::default();
        cfg.set("d_b_km", "0.2").unwrap();
        let sc = cfg.scenario();
        assert_eq!(sc.bs_link.los_cutoff_km(), 0.2);
        assert_eq!(sc.ue_link, Scenario::default().ue_link);
        assert_eq!(SweepConfig::default().scenario(), Scenario::default());
    }
}

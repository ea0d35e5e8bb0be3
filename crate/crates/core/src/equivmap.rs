//! Shadowing-to-distance equivalence: a transmitter at distance `r` with
//! lognormal shadowing `H` is received like an unshadowed one at the
//! equivalent distance `H^(-1/alpha) r`. The equivalent points form a
//! non-homogeneous PPP whose intensity measure is tabulated here.

use std::f64::consts::{LN_10, PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{PathLossProfile, PropagationCondition};
use crate::numerics::{find_root_bracketed, gauss_hermite, CubicHermite};

/// Number of Gauss–Hermite nodes used for every shadowing expectation.
pub const HERMITE_NODES: usize = 32;

/// Grid of the intensity tables: `TABLE_POINTS` log-spaced distances on
/// `[TABLE_MIN_KM, TABLE_MAX_KM]`.
pub const TABLE_POINTS: usize = 2048;
pub const TABLE_MIN_KM: f64 = 1e-4;
pub const TABLE_MAX_KM: f64 = 50.0;

fn hermite_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_hermite(HERMITE_NODES);
        let w = w.iter().map(|w| w / PI.sqrt()).collect();
        (x, w)
    })
}

/// Standard deviation of `ln H` for a shadowing spread of `sigma_db` dB.
pub fn sigma_ln(sigma_db: f64) -> f64 {
    sigma_db * LN_10 / 10.0
}

/// Shadowing values and probability weights of the quadrature rule.
pub fn shadow_nodes(sigma_db: f64) -> Vec<(f64, f64)> {
    if sigma_db == 0.0 {
        return vec![(1.0, 1.0)];
    }
    let (x, w) = hermite_rule();
    let s = SQRT_2 * sigma_ln(sigma_db);
    x.iter().zip(w).map(|(&x, &w)| ((s * x).exp(), w)).collect()
}

/// `E[f(H)]` for `H = 10^(sigma_db Z / 10)`, `Z` standard normal.
pub fn lognormal_expectation<F: FnMut(f64) -> f64>(mut f: F, sigma_db: f64) -> Result<f64> {
    if !(sigma_db >= 0.0 && sigma_db.is_finite()) {
        return Err(Error::Domain {
            what: "shadowing sigma",
            value: sigma_db,
            expected: "finite and >= 0",
        });
    }
    let mut acc = 0.0;
    for (h, w) in shadow_nodes(sigma_db) {
        let v = f(h);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: h, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}

/// `H^(-1/alpha) r`.
pub fn equivalent_distance(r: f64, shadow: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "distance",
            value: r,
            expected: "r > 0",
        });
    }
    if !(shadow > 0.0) {
        return Err(Error::Domain {
            what: "shadowing",
            value: shadow,
            expected: "H > 0",
        });
    }
    Ok(shadow.powf(-1.0 / alpha) * r)
}

/// Distance at which the gain of `from.opposite()` equals the gain of `from`
/// at `r`.
pub fn crossover_distance(profile: &PathLossProfile, r: f64, from: PropagationCondition) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "distance",
            value: r,
            expected: "r > 0",
        });
    }
    let to = from.opposite();
    let g = profile.gain_unchecked(from, r);
    if profile.is_single_slope() {
        let (a2, alpha2) = profile.coefficients_at(to, r);
        let r0 = profile.reference_km();
        return Ok(r0 * (g / a2).powf(-1.0 / alpha2));
    }
    let lg = g.ln();
    let lo = 1e-9f64;
    let hi = 1e6f64;
    find_root_bracketed(
        |u: f64| profile.gain_unchecked(to, u.exp()).ln() - lg,
        lo.ln(),
        hi.ln(),
        1e-13,
    )
    .map(f64::exp)
    .map_err(|_| Error::OutOfRange(r))
}

/// A transmitter tier seen through the equivalence transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub base_density: f64,
    pub profile: PathLossProfile,
    pub shadow_sigma: f64,
    pub density_scale: f64,
}

impl TierSpec {
    pub fn new(base_density: f64, profile: PathLossProfile, shadow_sigma: f64, density_scale: f64) -> Result<Self> {
        let t = TierSpec {
            base_density,
            profile,
            shadow_sigma,
            density_scale,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_density > 0.0 && self.base_density.is_finite()) {
            return Err(Error::InvalidParameter("tier density must be positive".into()));
        }
        if !(self.shadow_sigma >= 0.0 && self.shadow_sigma.is_finite()) {
            return Err(Error::InvalidParameter("tier shadowing sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.density_scale) {
            return Err(Error::InvalidParameter("tier density scale must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Effective planar density of the tier, per km^2.
    pub fn density(&self) -> f64 {
        self.base_density * self.density_scale
    }
}

// int_0^u p_c(r) r dr for the linear LoS law with cutoff d
#[inline]
fn radial_mass(cond: PropagationCondition, u: f64, d: f64) -> f64 {
    let los = if u >= d { d * d / 6.0 } else { u * u * (0.5 - u / (3.0 * d)) };
    match cond {
        PropagationCondition::Los => los,
        PropagationCondition::Nlos => 0.5 * u * u - los,
    }
}

/// Radius within which an original point is at equivalent distance `<= t`,
/// given its shadowing `h`, and the derivative of that radius in `t`.
#[inline]
fn shadowed_radius(profile: &PathLossProfile, cond: PropagationCondition, t: f64, h: f64) -> (f64, f64) {
    if profile.is_single_slope() {
        let alpha = profile.exponent_at(cond, t);
        let k = h.powf(1.0 / alpha);
        (t * k, k)
    } else {
        let g = profile.gain_unchecked(cond, t) / h;
        let rho = profile.distance_for_gain(cond, g);
        let d = profile.exponent_at(cond, t) / profile.exponent_at(cond, rho) * rho / t;
        (rho, d)
    }
}

fn measure_direct(tier: &TierSpec, nodes: &[(f64, f64)], cond: PropagationCondition, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let d = tier.profile.los_cutoff_km();
    let mut acc = 0.0;
    for &(h, w) in nodes {
        let (rho, _) = shadowed_radius(&tier.profile, cond, t, h);
        acc += w * radial_mass(cond, rho, d);
    }
    2.0 * PI * tier.density() * acc
}

fn density_direct(tier: &TierSpec, nodes: &[(f64, f64)], cond: PropagationCondition, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let profile = &tier.profile;
    let mut acc = 0.0;
    for &(h, w) in nodes {
        let (rho, drho) = shadowed_radius(profile, cond, t, h);
        let p = profile.los_probability_unchecked(rho);
        let pc = match cond {
            PropagationCondition::Los => p,
            PropagationCondition::Nlos => 1.0 - p,
        };
        acc += w * pc * rho * drho;
    }
    2.0 * PI * tier.density() * acc
}

/// Expected number of tier points of condition `cond` whose equivalent
/// distance is at most `t`.
pub fn intensity_measure(tier: &TierSpec, cond: PropagationCondition, t: f64) -> Result<f64> {
    tier.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Domain {
            what: "equivalent distance",
            value: t,
            expected: "t >= 0",
        });
    }
    Ok(measure_direct(tier, &shadow_nodes(tier.shadow_sigma), cond, t))
}

/// Derivative in `t` of [`intensity_measure`], taken under the expectation.
pub fn intensity_density(tier: &TierSpec, cond: PropagationCondition, t: f64) -> Result<f64> {
    tier.validate()?;
    if !(t > 0.0) {
        return Err(Error::Domain {
            what: "equivalent distance",
            value: t,
            expected: "t > 0",
        });
    }
    Ok(density_direct(tier, &shadow_nodes(tier.shadow_sigma), cond, t))
}

/// Tabulated intensity measure and density of one tier for both conditions.
#[derive(Debug, Clone)]
pub struct IntensityTable {
    tier: TierSpec,
    nodes: Vec<(f64, f64)>,
    grid: Vec<f64>,
    cum: [CubicHermite; 2],
    dens: [CubicHermite; 2],
}

impl IntensityTable {
    pub fn build(tier: &TierSpec) -> Result<Self> {
        tier.validate()?;
        let nodes = shadow_nodes(tier.shadow_sigma);
        let n = TABLE_POINTS;
        let step = (TABLE_MAX_KM / TABLE_MIN_KM).ln() / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| TABLE_MIN_KM * (step * i as f64).exp()).collect();
        let make = |cond: PropagationCondition| -> Result<(CubicHermite, CubicHermite)> {
            let cum: Vec<f64> = grid.iter().map(|&t| measure_direct(tier, &nodes, cond, t)).collect();
            let dens: Vec<f64> = grid.iter().map(|&t| density_direct(tier, &nodes, cond, t)).collect();
            let slope: Vec<f64> = (0..n)
                .map(|i| {
                    let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                    (dens[b] - dens[a]) / (grid[b] - grid[a])
                })
                .collect();
            Ok((
                CubicHermite::new(grid.clone(), cum, dens.clone())?,
                CubicHermite::new(grid.clone(), dens, slope)?,
            ))
        };
        let (cl, dl) = make(PropagationCondition::Los)?;
        let (cn, dn) = make(PropagationCondition::Nlos)?;
        Ok(IntensityTable {
            tier: tier.clone(),
            nodes,
            grid,
            cum: [cl, cn],
            dens: [dl, dn],
        })
    }

    pub fn tier(&self) -> &TierSpec {
        &self.tier
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Tabulated `Lambda^cond([0, grid[i]])` values.
    pub fn cum_values(&self, cond: PropagationCondition) -> &[f64] {
        self.cum[cond.index()].values()
    }

    /// Tabulated `lambda^cond(grid[i])` values.
    pub fn dens_values(&self, cond: PropagationCondition) -> &[f64] {
        self.dens[cond.index()].values()
    }

    /// `Lambda^cond([0, t])`; outside the grid the exact expectation is used.
    pub fn cum(&self, cond: PropagationCondition, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if (TABLE_MIN_KM..=TABLE_MAX_KM).contains(&t) {
            self.cum[cond.index()].eval(t).max(0.0)
        } else {
            measure_direct(&self.tier, &self.nodes, cond, t)
        }
    }

    /// `lambda^cond(t)`, per km.
    pub fn dens(&self, cond: PropagationCondition, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if (TABLE_MIN_KM..=TABLE_MAX_KM).contains(&t) {
            self.dens[cond.index()].eval(t).max(0.0)
        } else {
            density_direct(&self.tier, &self.nodes, cond, t)
        }
    }

    /// `Lambda^L([0, t]) + Lambda^NL([0, t])`.
    pub fn cum_total(&self, t: f64) -> f64 {
        self.cum(PropagationCondition::Los, t) + self.cum(PropagationCondition::Nlos, t)
    }

    /// Void probability of the tier's equivalent process inside `t`.
    pub fn void_probability(&self, t: f64) -> f64 {
        (-self.cum_total(t)).exp()
    }
}

//! Analytic evaluation of the mode-selection probability, the uplink and
//! D2D coverage probabilities and the area spectral efficiency.
//!
//! Every interference field is a Poisson shot noise whose marks are
//! described by a tail measure `N(X)`, the mean number of interferers
//! contributing more than `X`. The tail measure is discretised once into
//! log-spaced atoms; coverage then follows from inverting the
//! characteristic function of the interference at the noise-shifted
//! threshold `S / gamma - N0`.

use std::f64::consts::{LN_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivmap::{crossover_distance, IntensityTable, TierSpec};
use crate::error::{Error, Result};
use crate::netmodel::{PathLossProfile, PropagationCondition, Scenario};
use crate::numerics::{cf_invert_below_many, gauss_legendre, CfInversionSpec, CubicHermite};

use PropagationCondition::{Los, Nlos};

/// Atoms per decade of the discretised interference measures.
pub const ATOMS_PER_DECADE: f64 = 32.0;

/// Marks below this fraction of the smallest threshold of an inversion
/// window enter only through their first two moments.
pub const MOMENT_FLOOR: f64 = 1e-2;

/// Thresholds of one inversion window span at most this ratio.
pub const WINDOW_SPAN: f64 = 10.0;

/// Accuracy target of every coverage inversion.
pub const INVERSION_ABS_TOL: f64 = 1e-4;

/// Frequency budget of every coverage inversion, in units of the inverse
/// largest threshold of a window.
pub const INVERSION_OMEGA_MAX: f64 = 1e9;

/// Gauss–Legendre panels of the CU and D2D serving-distance laws, and
/// nodes per panel.
pub const CU_LAW_PANELS: usize = 8;
pub const D2D_LAW_PANELS: usize = 16;
pub const LAW_NODES: usize = 4;

/// Intensity tables of the BS tier and the UE tier at their full densities.
#[derive(Debug, Clone)]
pub struct Tables {
    pub bs: IntensityTable,
    pub ue: IntensityTable,
}

impl Tables {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let p = &scenario.params;
        p.validate()?;
        Ok(Tables {
            bs: IntensityTable::build(&TierSpec::new(p.lambda_b, scenario.bs_link.clone(), p.sigma_shadow_bs, 1.0)?)?,
            ue: IntensityTable::build(&TierSpec::new(p.lambda_u, scenario.ue_link.clone(), p.sigma_shadow_ue, 1.0)?)?,
        })
    }

    fn bs_profile(&self) -> &PathLossProfile {
        &self.bs.tier().profile
    }

    fn ue_profile(&self) -> &PathLossProfile {
        &self.ue.tier().profile
    }
}

/// Mode-selection boundary: a UE is cellular iff some BS lies inside the
/// equivalent radius `t_los` (LoS) or `t_nlos` (NLoS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeBoundary {
    /// Threshold, dBm.
    pub beta: f64,
    pub q: f64,
    pub t_los: f64,
    pub t_nlos: f64,
}

impl ModeBoundary {
    pub fn t(&self, cond: PropagationCondition) -> f64 {
        match cond {
            Los => self.t_los,
            Nlos => self.t_nlos,
        }
    }
}

fn cum_or_inf(table: &IntensityTable, cond: PropagationCondition, t: f64) -> f64 {
    if t.is_finite() {
        table.cum(cond, t)
    } else {
        f64::INFINITY
    }
}

/// Mode boundary and cellular-mode probability at the scenario threshold.
pub fn mode_boundary(scenario: &Scenario, tables: &Tables) -> ModeBoundary {
    let g = scenario.params.mode_gain_threshold();
    let prof = tables.bs_profile();
    let t_los = prof.distance_for_gain(Los, g);
    let t_nlos = prof.distance_for_gain(Nlos, g);
    let lam = cum_or_inf(&tables.bs, Los, t_los) + cum_or_inf(&tables.bs, Nlos, t_nlos);
    ModeBoundary {
        beta: scenario.params.beta,
        q: -(-lam).exp_m1(),
        t_los,
        t_nlos,
    }
}

/// Probability that a UE operates in cellular mode.
pub fn cellular_mode_probability(scenario: &Scenario, tables: &Tables) -> f64 {
    mode_boundary(scenario, tables).q
}

// lambda^c(r) exp(-Lambda^c(r) - Lambda^{c'}(crossover)) at unit scale
fn strongest_density(table: &IntensityTable, profile: &PathLossProfile, cond: PropagationCondition, r: f64, scale: f64) -> Result<f64> {
    let x = crossover_distance(profile, r, cond)?;
    let lam = scale * (table.cum(cond, r) + table.cum(cond.opposite(), x));
    Ok(scale * table.dens(cond, r) * (-lam).exp())
}

/// Density of the equivalent serving distance of a CU served in `cond`,
/// normalised by the cellular-mode probability.
pub fn cu_serving_distance_pdf(cond: PropagationCondition, r: f64, boundary: &ModeBoundary, tables: &Tables) -> Result<f64> {
    let t = boundary.t(cond);
    if !(r > 0.0 && r <= t) {
        return Err(Error::Domain {
            what: "CU serving distance",
            value: r,
            expected: "0 < r <= mode boundary",
        });
    }
    if !(boundary.q > 0.0) {
        return Err(Error::Domain {
            what: "cellular-mode probability",
            value: boundary.q,
            expected: "q > 0",
        });
    }
    Ok(strongest_density(&tables.bs, tables.bs_profile(), cond, r, 1.0)? / boundary.q)
}

/// A serving-distance law as a quadrature rule: `sum weights * pdf * h(nodes)`
/// approximates the partial expectation of `h` over links in `condition`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingDistanceLaw {
    pub condition: PropagationCondition,
    pub nodes: Vec<f64>,
    pub pdf: Vec<f64>,
    pub weights: Vec<f64>,
    /// Normalising constant applied to `pdf`.
    pub normalization: f64,
}

impl ServingDistanceLaw {
    pub fn mass(&self) -> f64 {
        self.weights.iter().zip(&self.pdf).map(|(w, f)| w * f).sum()
    }

    fn empty(condition: PropagationCondition) -> Self {
        ServingDistanceLaw {
            condition,
            nodes: Vec::new(),
            pdf: Vec::new(),
            weights: Vec::new(),
            normalization: 1.0,
        }
    }
}

// composite Gauss-Legendre nodes on [a, b], optionally in log space
fn composite_rule(a: f64, b: f64, panels: usize, log: bool) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(LAW_NODES);
    let (lo, hi) = if log { (a.ln(), b.ln()) } else { (a, b) };
    let h = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * LAW_NODES);
    let mut weights = Vec::with_capacity(panels * LAW_NODES);
    for p in 0..panels {
        let c = lo + h * (p as f64 + 0.5);
        for (x, w) in gx.iter().zip(&gw) {
            let u = c + 0.5 * h * x;
            if log {
                let r = u.exp();
                nodes.push(r);
                weights.push(0.5 * h * w * r);
            } else {
                nodes.push(u);
                weights.push(0.5 * h * w);
            }
        }
    }
    (nodes, weights)
}

/// Serving-distance law of a typical CU in `cond` on `(0, t_cond]`.
pub fn cu_serving_law(cond: PropagationCondition, boundary: &ModeBoundary, tables: &Tables) -> Result<ServingDistanceLaw> {
    let t = boundary.t(cond);
    if !(boundary.q > 0.0) || !(t > 0.0) {
        return Ok(ServingDistanceLaw::empty(cond));
    }
    let t = t.min(1e3);
    let (nodes, weights) = composite_rule(0.0, t, CU_LAW_PANELS, false);
    let pdf = nodes
        .iter()
        .map(|&r| cu_serving_distance_pdf(cond, r, boundary, tables))
        .collect::<Result<Vec<_>>>()?;
    Ok(ServingDistanceLaw {
        condition: cond,
        nodes,
        pdf,
        weights,
        normalization: boundary.q,
    })
}

/// Poisson shot noise discretised into log-spaced atoms.
#[derive(Debug, Clone)]
struct AtomTable {
    x: Vec<f64>,
    w: Vec<f64>,
    // half-width of each bin; marks spread uniformly over it
    h: Vec<f64>,
    // prefix sums of w, w x, w x^2 (length n + 1)
    cw: Vec<f64>,
    c1: Vec<f64>,
    c2: Vec<f64>,
    // moments of the marks below the first atom
    below1: f64,
    below2: f64,
}

impl AtomTable {
    /// Discretises the tail measure `tail` between `floor` and the point
    /// where it falls under `1e-12` (or `sup` for bounded marks).
    fn build<N: Fn(f64) -> f64>(tail: N, floor: f64, sup: Option<f64>) -> Result<Self> {
        let top = match sup {
            Some(s) => s,
            None => {
                let mut x = floor;
                let mut k = 0;
                while tail(x) > 1e-12 && k < 80 {
                    x *= 10.0;
                    k += 1;
                }
                x
            }
        };
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        let mut hs = Vec::new();
        if top > floor {
            let ratio = 10f64.powf(-1.0 / ATOMS_PER_DECADE);
            let mut hi = top;
            let mut n_hi = tail(hi);
            if sup.is_none() && n_hi > 0.0 {
                xs.push(2.0 * hi);
                ws.push(n_hi);
                hs.push(0.0);
            }
            while hi > floor {
                let lo = hi * ratio;
                let mid = (lo * hi).sqrt();
                let n_lo = tail(lo);
                let n_mid = tail(mid);
                let mass = n_lo - n_hi;
                if mass > 0.0 {
                    let du = (hi / lo).ln();
                    let integral = du / 6.0 * (n_lo * lo + 4.0 * n_mid * mid + n_hi * hi);
                    let moment = lo * n_lo - hi * n_hi + integral;
                    xs.push((moment / mass).clamp(lo, hi));
                    ws.push(mass);
                    hs.push(0.5 * (hi - lo));
                }
                hi = lo;
                n_hi = n_lo;
            }
        }
        xs.reverse();
        ws.reverse();
        hs.reverse();
        // power-law remainder below the floor
        let f = floor.min(top);
        let (nf, nf10) = (tail(f), tail(10.0 * f));
        let (mut below1, mut below2) = (0.0, 0.0);
        if nf > 0.0 && nf10 > 0.0 {
            let kappa = (nf / nf10).log10().max(0.0);
            if kappa >= 1.0 {
                return Err(Error::InvalidParameter("mean interference diverges".into()));
            }
            below1 = f * nf * kappa / (1.0 - kappa);
            below2 = f * f * nf * kappa / (2.0 - kappa);
        }
        let n = xs.len();
        let mut cw = vec![0.0; n + 1];
        let mut c1 = vec![0.0; n + 1];
        let mut c2 = vec![0.0; n + 1];
        for i in 0..n {
            cw[i + 1] = cw[i] + ws[i];
            c1[i + 1] = c1[i] + ws[i] * xs[i];
            c2[i + 1] = c2[i] + ws[i] * xs[i] * xs[i];
        }
        if !(c1[n].is_finite() && c2[n].is_finite()) {
            return Err(Error::NonFinite {
                node: top,
                value: c1[n],
            });
        }
        Ok(AtomTable {
            x: xs,
            w: ws,
            h: hs,
            cw,
            c1,
            c2,
            below1,
            below2,
        })
    }

    fn index_of(&self, x: f64) -> usize {
        self.x.partition_point(|&a| a < x)
    }

    fn mean(&self) -> f64 {
        self.below1 + self.c1[self.x.len()]
    }

    // atom i restricted to marks below `cap`, as (x, w, h)
    fn clipped(&self, i: usize, cap: f64) -> Option<(f64, f64, f64)> {
        let (x, w, h) = (self.x[i], self.w[i], self.h[i]);
        let lo = x - h;
        if lo >= cap || (h == 0.0 && x >= cap) {
            None
        } else if x + h <= cap {
            Some((x, w, h))
        } else {
            let half = 0.5 * (cap - lo);
            Some((lo + half, w * half / h, half))
        }
    }

    // log CF at frequency s of the marks below `cap`
    fn exponent(&self, s: f64, cap: Option<f64>) -> Complex64 {
        let mut e = Complex64::new(-0.5 * s * s * self.below2, s * self.below1);
        for i in 0..self.x.len() {
            let (x, w, h) = match cap {
                Some(c) => match self.clipped(i, c) {
                    Some(v) => v,
                    None => break,
                },
                None => (self.x[i], self.w[i], self.h[i]),
            };
            e += atom_term(s, x, w, h);
        }
        e
    }
}

// w (E exp(i s X) - 1) for X uniform on [x - h, x + h]
#[inline]
fn atom_term(s: f64, x: f64, w: f64, h: f64) -> Complex64 {
    let (sn, cs) = (s * x).sin_cos();
    let z = s * h;
    let sinc = if z.abs() < 1e-4 { 1.0 - z * z / 6.0 } else { z.sin() / z };
    Complex64::new(w * (cs * sinc - 1.0), w * sn * sinc)
}

/// One interference field entering an inversion: an atom table and an
/// optional cap above which its marks do not exist.
#[derive(Clone, Copy)]
struct Field<'a> {
    atoms: &'a AtomTable,
    cap: Option<f64>,
}

// Window of an inversion: atoms inside, moments below, escaped mass above.
// The interference is D + J with D ~ N(m1, m2) from the marks below the
// window and J the compound Poisson sum of the atoms; J = 0 with
// probability exp(-mass) and that component is handled in closed form.
struct Window {
    x: Vec<f64>,
    w: Vec<f64>,
    h: Vec<f64>,
    mass: f64,
    m1: f64,
    m2: f64,
    escape: f64,
}

impl Window {
    fn new(fields: &[Field<'_>], lo: f64, hi: f64, scale: f64) -> Window {
        let mut win = Window {
            x: Vec::new(),
            w: Vec::new(),
            h: Vec::new(),
            mass: 0.0,
            m1: 0.0,
            m2: 0.0,
            escape: 0.0,
        };
        for f in fields {
            let a = f.atoms;
            let i_lo = a.index_of(lo);
            win.m1 += (a.below1 + a.c1[i_lo]) / scale;
            win.m2 += (a.below2 + a.c2[i_lo]) / (scale * scale);
            match f.cap {
                None => {
                    let i_hi = a.index_of(hi).max(i_lo);
                    win.escape += a.cw[a.x.len()] - a.cw[i_hi];
                    for i in i_lo..i_hi {
                        win.push(a.x[i], a.w[i], a.h[i], scale);
                    }
                }
                Some(cap) => {
                    for i in i_lo..a.x.len() {
                        let Some((x, w, h)) = a.clipped(i, cap) else { break };
                        if x < hi {
                            win.push(x, w, h, scale);
                        } else {
                            win.escape += w;
                        }
                    }
                }
            }
        }
        win
    }

    fn push(&mut self, x: f64, w: f64, h: f64, scale: f64) {
        self.x.push(x / scale);
        self.w.push(w);
        self.h.push(h / scale);
        self.mass += w;
    }

    // CF of D + J restricted to J != 0
    fn phi_busy(&self, w: f64) -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        for i in 0..self.x.len() {
            z += atom_term(w, self.x[i], self.w[i], self.h[i]);
        }
        // exp(z) - exp(-mass), with z = sum w (psi - 1)
        let busy = if self.mass > 1.0 {
            z.exp() - (-self.mass).exp()
        } else {
            let z = z + self.mass;
            let (sn, cs) = z.im.sin_cos();
            let em1 = z.re.exp_m1() * cs - 2.0 * (0.5 * z.im).sin().powi(2);
            Complex64::new(em1, z.re.exp() * sn) * (-self.mass).exp()
        };
        busy * Complex64::new(-0.5 * w * w * self.m2, w * self.m1).exp()
    }

    // P[D < x] on J = 0
    fn idle_below(&self, x: f64) -> f64 {
        let p = if self.m2 > 0.0 {
            0.5 * libm::erfc((self.m1 - x) / (2.0 * self.m2).sqrt())
        } else if self.m1 < x {
            1.0
        } else {
            0.0
        };
        p * (-self.mass).exp()
    }
}

/// `P[I < y]` for the sum `I` of the given fields at every threshold.
fn interference_cdf(fields: &[Field<'_>], ys: &[f64], spec: &CfInversionSpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ys.len()];
    let mut order: Vec<usize> = (0..ys.len()).filter(|&i| ys[i] > 0.0).collect();
    for &i in &order {
        if ys[i].is_infinite() {
            out[i] = 1.0;
        }
    }
    order.retain(|&i| ys[i].is_finite());
    order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
    let mut start = 0;
    while start < order.len() {
        let y_lo = ys[order[start]];
        let mut end = start;
        while end < order.len() && ys[order[end]] <= y_lo * WINDOW_SPAN {
            end += 1;
        }
        let group = &order[start..end];
        let y_hi = ys[group[group.len() - 1]];
        // marks above every threshold only matter through their absence
        let win = Window::new(fields, MOMENT_FLOOR * y_lo, 2.0 * y_hi, y_hi);
        let xs: Vec<f64> = group.iter().map(|&i| ys[i] / y_hi).collect();
        let busy = cf_invert_below_many(|w| win.phi_busy(w), &xs, spec)?;
        let keep = (-win.escape).exp();
        let p: Vec<f64> = busy.iter().zip(&xs).map(|(b, &x)| keep * (b + win.idle_below(x))).collect();
        for (k, &i) in group.iter().enumerate() {
            out[i] = p[k];
        }
        start = end;
    }
    Ok(out)
}

/// How a D2D receiver's serving distance is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum D2dServingModel {
    /// Nearest UE in D2D mode, falling back to the second neighbour when
    /// the nearest one lies inside a BS's cellular region.
    SecondNeighbour,
    /// Strongest UE of the thinned D2D-mode field.
    ThinnedField,
}

/// Options of the analytic engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticOptions {
    pub d2d_serving: D2dServingModel,
    /// Use the printed (dimensionally inconsistent) overlap kernel.
    pub verbatim_overlap: bool,
    pub inversion: CfInversionSpec,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions {
            d2d_serving: D2dServingModel::SecondNeighbour,
            verbatim_overlap: false,
            inversion: CfInversionSpec {
                abs_tol: INVERSION_ABS_TOL,
                omega_max: INVERSION_OMEGA_MAX,
                ..CfInversionSpec::default()
            },
        }
    }
}

/// Probability that the circle of radius `rd` around a receiver at
/// distance `r1` from a BS lies inside the BS's cellular disc of radius `t`,
/// as the arc fraction `arccos((rd^2 + r1^2 - t^2) / (2 rd r1)) / pi`.
pub fn d2d_cellular_overlap_probability(rd: f64, r1: f64, t: f64) -> f64 {
    overlap(rd * rd, rd, r1, t)
}

/// Overlap kernel as printed, with `rd` in place of `rd^2`.
pub fn d2d_cellular_overlap_probability_verbatim(rd: f64, r1: f64, t: f64) -> f64 {
    overlap(rd, rd, r1, t)
}

fn overlap(rd_term: f64, rd: f64, r1: f64, t: f64) -> f64 {
    if !(rd > 0.0 && r1 > 0.0) {
        return if r1 < t { 1.0 } else { 0.0 };
    }
    let arg = ((rd_term + r1 * r1 - t * t) / (2.0 * rd * r1)).clamp(-1.0, 1.0);
    (arg.acos() / PI).clamp(0.0, 1.0)
}

// Nearest and second-nearest laws of the D2D-mode field seen by a UE.
#[derive(Debug, Clone)]
struct PeerLaws {
    nearest: [CubicHermite; 2],
    second: [CubicHermite; 2],
    hi: f64,
}

const PEER_GRID_POINTS: usize = 1200;
const PEER_GRID_MIN_KM: f64 = 1e-7;
const PEER_GRID_MAX_KM: f64 = 50.0;

impl PeerLaws {
    fn build(tables: &Tables, scale: f64) -> Result<Self> {
        let prof = tables.ue_profile();
        let n = PEER_GRID_POINTS;
        let step = (PEER_GRID_MAX_KM / PEER_GRID_MIN_KM).ln() / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| PEER_GRID_MIN_KM * (step * i as f64).exp()).collect();
        let (gx, gw) = gauss_legendre(8);
        let make = |cond: PropagationCondition| -> Result<(CubicHermite, CubicHermite)> {
            let f1 = |r: f64| strongest_density(&tables.ue, prof, cond, r, scale);
            let f2 = |r: f64| -> Result<f64> {
                let x = crossover_distance(prof, r, cond)?;
                let lam = scale * (tables.ue.cum(cond, r) + tables.ue.cum(cond.opposite(), x));
                Ok(scale * tables.ue.dens(cond, r) * lam * (-lam).exp())
            };
            let (mut c1, mut c2) = (vec![0.0; n], vec![0.0; n]);
            let (mut d1, mut d2) = (vec![0.0; n], vec![0.0; n]);
            d1[0] = f1(grid[0])?;
            d2[0] = f2(grid[0])?;
            // F1 ~ (pi lambda r^2) near zero; the leading mass is negligible
            c1[0] = 0.5 * d1[0] * grid[0];
            c2[0] = 0.0;
            for i in 1..n {
                let (a, b) = (grid[i - 1].ln(), grid[i].ln());
                let (mut s1, mut s2) = (0.0, 0.0);
                for (x, w) in gx.iter().zip(&gw) {
                    let r = (0.5 * (a + b) + 0.5 * (b - a) * x).exp();
                    let jw = 0.5 * (b - a) * w * r;
                    s1 += jw * f1(r)?;
                    s2 += jw * f2(r)?;
                }
                c1[i] = c1[i - 1] + s1;
                c2[i] = c2[i - 1] + s2;
                d1[i] = f1(grid[i])?;
                d2[i] = f2(grid[i])?;
            }
            Ok((CubicHermite::new(grid.clone(), c1, d1)?, CubicHermite::new(grid.clone(), c2, d2)?))
        };
        let (nl, sl) = make(Los)?;
        let (nn, sn) = make(Nlos)?;
        Ok(PeerLaws {
            nearest: [nl, nn],
            second: [sl, sn],
            hi: PEER_GRID_MAX_KM,
        })
    }

    fn cdf(table: &CubicHermite, r: f64, hi: f64) -> f64 {
        if r <= PEER_GRID_MIN_KM {
            0.0
        } else {
            table.eval(r.min(hi))
        }
    }

    fn nearest_cdf(&self, cond: PropagationCondition, r: f64) -> f64 {
        Self::cdf(&self.nearest[cond.index()], r, self.hi)
    }

    fn second_cdf(&self, cond: PropagationCondition, r: f64) -> f64 {
        Self::cdf(&self.second[cond.index()], r, self.hi)
    }

    fn nearest_pdf(&self, cond: PropagationCondition, r: f64) -> f64 {
        if r <= PEER_GRID_MIN_KM || r >= self.hi {
            0.0
        } else {
            self.nearest[cond.index()].eval_derivative(r)
        }
    }

    fn second_pdf(&self, cond: PropagationCondition, r: f64) -> f64 {
        if r <= PEER_GRID_MIN_KM || r >= self.hi {
            0.0
        } else {
            self.second[cond.index()].eval_derivative(r)
        }
    }
}

/// Prepared analytic engine for one scenario.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    scenario: Scenario,
    tables: Arc<Tables>,
    options: AnalyticOptions,
    boundary: ModeBoundary,
    cu_laws: [ServingDistanceLaw; 2],
    /// Probability that a BS has at least one CU to schedule.
    busy: f64,
    cell_atoms: AtomTable,
    cu_ue_atoms: AtomTable,
    d2d_ue_atoms: AtomTable,
    peers: Option<PeerLaws>,
    // strongest BS of a D2D-mode UE, per condition
    r1_laws: [Option<StrongestBsLaw>; 2],
    d2d_laws: [ServingDistanceLaw; 2],
}

struct CuMark {
    gain: f64,
    power: f64,
    prob: f64,
}

impl AnalyticModel {
    pub fn new(scenario: &Scenario, options: AnalyticOptions) -> Result<Self> {
        let tables = Arc::new(Tables::build(scenario)?);
        Self::with_tables(scenario, tables, options)
    }

    /// Builds the engine on tables shared across thresholds; the tables
    /// must come from a scenario differing at most in `beta`, `rho`,
    /// powers and noise.
    pub fn with_tables(scenario: &Scenario, tables: Arc<Tables>, options: AnalyticOptions) -> Result<Self> {
        scenario.params.validate()?;
        options.inversion.validate()?;
        let p = &scenario.params;
        let boundary = mode_boundary(scenario, &tables);
        let cu_laws = [cu_serving_law(Los, &boundary, &tables)?, cu_serving_law(Nlos, &boundary, &tables)?];
        let busy = -(-boundary.q * p.lambda_u / p.lambda_b).exp_m1();
        let bs_prof = tables.bs_profile().clone();
        let ue_prof = tables.ue_profile().clone();

        let total: f64 = cu_laws.iter().map(|l| l.mass()).sum();
        let mut marks = Vec::new();
        if total > 0.0 {
            for law in &cu_laws {
                for ((&r, &f), &w) in law.nodes.iter().zip(&law.pdf).zip(&law.weights) {
                    let gain = bs_prof.gain_unchecked(law.condition, r);
                    marks.push(CuMark {
                        gain,
                        power: p.cu_power_from_gain(gain),
                        prob: w * f / total,
                    });
                }
            }
        }
        let active = p.active_d2d_density(boundary.q);
        let pd = p.p_d_mw();
        let g_th = p.mode_gain_threshold();
        let floor = 1e-25 * p.noise_bs_mw().min(p.noise_ue_mw());
        let bs = &tables.bs;
        let ue = &tables.ue;

        // interference at a typical BS: scheduled CUs of other cells, each
        // weaker there than at its own BS, plus active D2D transmitters,
        // each weaker than the mode threshold towards every BS
        let cell_tail = |x: f64| -> f64 {
            let mut n = 0.0;
            for m in &marks {
                let w = x / m.power;
                if w < m.gain {
                    for c in PropagationCondition::ALL {
                        let d = cum_or_inf(bs, c, bs_prof.distance_for_gain(c, w)) - bs.cum(c, bs_prof.distance_for_gain(c, m.gain));
                        n += m.prob * busy * d.max(0.0);
                    }
                }
            }
            let w = x / pd;
            if w < g_th && active > 0.0 {
                for c in PropagationCondition::ALL {
                    let d = cum_or_inf(bs, c, bs_prof.distance_for_gain(c, w)) - cum_or_inf(bs, c, boundary.t(c));
                    n += active / p.lambda_b * d.max(0.0);
                }
            }
            n
        };
        let cell_atoms = AtomTable::build(cell_tail, floor, None)?;

        let cu_ue_tail = |x: f64| -> f64 {
            let mut n = 0.0;
            for m in &marks {
                for c in PropagationCondition::ALL {
                    n += m.prob * busy * p.lambda_b / p.lambda_u * cum_or_inf(ue, c, ue_prof.distance_for_gain(c, x / m.power));
                }
            }
            n
        };
        let cu_ue_atoms = AtomTable::build(cu_ue_tail, floor, None)?;

        let d2d_ue_tail = |x: f64| -> f64 {
            PropagationCondition::ALL
                .iter()
                .map(|&c| active / p.lambda_u * cum_or_inf(ue, c, ue_prof.distance_for_gain(c, x / pd)))
                .sum()
        };
        let d2d_ue_atoms = AtomTable::build(d2d_ue_tail, floor, None)?;

        let peer_scale = 1.0 - boundary.q;
        let peers = if peer_scale > 1e-12 {
            Some(PeerLaws::build(&tables, peer_scale)?)
        } else {
            None
        };
        let r1_laws = [StrongestBsLaw::build(&tables, &boundary, Los)?, StrongestBsLaw::build(&tables, &boundary, Nlos)?];
        let mut model = AnalyticModel {
            scenario: scenario.clone(),
            tables,
            options,
            boundary,
            cu_laws,
            busy,
            cell_atoms,
            cu_ue_atoms,
            d2d_ue_atoms,
            peers,
            r1_laws,
            d2d_laws: [ServingDistanceLaw::empty(Los), ServingDistanceLaw::empty(Nlos)],
        };
        model.d2d_laws = model.build_d2d_laws()?;
        Ok(model)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tables(&self) -> &Arc<Tables> {
        &self.tables
    }

    pub fn boundary(&self) -> &ModeBoundary {
        &self.boundary
    }

    pub fn options(&self) -> &AnalyticOptions {
        &self.options
    }

    pub fn cu_law(&self, cond: PropagationCondition) -> &ServingDistanceLaw {
        &self.cu_laws[cond.index()]
    }

    pub fn d2d_law(&self, cond: PropagationCondition) -> &ServingDistanceLaw {
        &self.d2d_laws[cond.index()]
    }

    /// Probability that a BS has a CU to schedule.
    pub fn busy_probability(&self) -> f64 {
        self.busy
    }

    /// Mean interference at a typical BS, mW.
    pub fn mean_cellular_interference(&self) -> f64 {
        self.cell_atoms.mean()
    }

    /// Mean CU interference at a typical D2D receiver, mW.
    pub fn mean_cu_interference_at_ue(&self) -> f64 {
        self.cu_ue_atoms.mean()
    }

    /// Density of active D2D transmitters, per km^2.
    pub fn active_d2d_density(&self) -> f64 {
        self.scenario.params.active_d2d_density(self.boundary.q)
    }

    fn cu_signal(&self, cond: PropagationCondition, r: f64) -> f64 {
        let g = self.tables.bs_profile().gain_unchecked(cond, r);
        self.scenario.params.cu_power_from_gain(g) * g
    }

    /// Characteristic function of `1/SINR` at a typical BS whose CU is
    /// served in `cond` at equivalent distance `r`.
    pub fn cf_inv_sinr_cellular(&self, cond: PropagationCondition, omega: f64, r: f64) -> Result<Complex64> {
        let t = self.boundary.t(cond);
        if !(r > 0.0 && r <= t) {
            return Err(Error::Domain {
                what: "CU serving distance",
                value: r,
                expected: "0 < r <= mode boundary",
            });
        }
        let s = self.cu_signal(cond, r);
        let e = self.cell_atoms.exponent(omega / s, None);
        let noise = omega * self.scenario.params.noise_bs_mw() / s;
        let v = (e + Complex64::new(0.0, noise)).exp();
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { node: omega, value: v.norm() }.with_context(format!("cellular CF, {cond:?}, r = {r}")))
        }
    }

    /// Characteristic function of `1/SINR` at a typical D2D receiver whose
    /// transmitter is in `cond` at equivalent distance `rd0`.
    pub fn cf_inv_sinr_d2d(&self, cond: PropagationCondition, omega: f64, rd0: f64) -> Result<Complex64> {
        if !(rd0 > 0.0) {
            return Err(Error::Domain {
                what: "D2D serving distance",
                value: rd0,
                expected: "R > 0",
            });
        }
        let g = self.tables.ue_profile().gain_unchecked(cond, rd0);
        let s = self.scenario.params.p_d_mw() * g;
        let k = omega / s;
        let e = self.cu_ue_atoms.exponent(k, None) + self.d2d_ue_atoms.exponent(k, Some(s));
        let noise = omega * self.scenario.params.noise_ue_mw() / s;
        Ok((e + Complex64::new(0.0, noise)).exp())
    }

    /// Uplink coverage probability at each SINR threshold (linear).
    pub fn coverage_cellular_many(&self, gammas: &[f64]) -> Result<Vec<f64>> {
        check_gammas(gammas)?;
        let total: f64 = self.cu_laws.iter().map(|l| l.mass()).sum();
        if !(total > 0.0) {
            return Ok(vec![0.0; gammas.len()]);
        }
        let noise = self.scenario.params.noise_bs_mw();
        let mut ys = Vec::new();
        let mut wts = Vec::new();
        for law in &self.cu_laws {
            for ((&r, &f), &w) in law.nodes.iter().zip(&law.pdf).zip(&law.weights) {
                let s = self.cu_signal(law.condition, r);
                for &g in gammas {
                    ys.push(s / g - noise);
                }
                wts.push(w * f / total);
            }
        }
        let field = [Field {
            atoms: &self.cell_atoms,
            cap: None,
        }];
        let p = interference_cdf(&field, &ys, &self.options.inversion)
            .map_err(|e| e.with_context("uplink coverage inversion"))?;
        let k = gammas.len();
        Ok((0..k)
            .map(|j| wts.iter().enumerate().map(|(i, w)| w * p[i * k + j]).sum::<f64>().clamp(0.0, 1.0))
            .collect())
    }

    pub fn coverage_cellular(&self, gamma: f64) -> Result<f64> {
        Ok(self.coverage_cellular_many(&[gamma])?[0])
    }

    /// D2D coverage probability at each SINR threshold (linear).
    pub fn coverage_d2d_many(&self, gammas: &[f64]) -> Result<Vec<f64>> {
        check_gammas(gammas)?;
        let total: f64 = self.d2d_laws.iter().map(|l| l.mass()).sum();
        if !(total > 0.0) {
            return Ok(vec![0.0; gammas.len()]);
        }
        let p = &self.scenario.params;
        let (pd, noise) = (p.p_d_mw(), p.noise_ue_mw());
        let prof = self.tables.ue_profile();
        let mut nodes = Vec::new();
        for law in &self.d2d_laws {
            for ((&r, &f), &w) in law.nodes.iter().zip(&law.pdf).zip(&law.weights) {
                nodes.push((pd * prof.gain_unchecked(law.condition, r), w * f / total));
            }
        }
        let per_node: Vec<Result<Vec<f64>>> = nodes
            .par_iter()
            .map(|&(s, _)| {
                let ys: Vec<f64> = gammas.iter().map(|g| s / g - noise).collect();
                if ys.iter().all(|&y| y <= 0.0) {
                    return Ok(vec![0.0; ys.len()]);
                }
                let fields = [
                    Field {
                        atoms: &self.cu_ue_atoms,
                        cap: None,
                    },
                    Field {
                        atoms: &self.d2d_ue_atoms,
                        cap: Some(s),
                    },
                ];
                interference_cdf(&fields, &ys, &self.options.inversion)
            })
            .collect();
        let mut out = vec![0.0; gammas.len()];
        for (res, &(_, w)) in per_node.into_iter().zip(&nodes) {
            let v = res.map_err(|e| e.with_context("D2D coverage inversion"))?;
            for j in 0..out.len() {
                out[j] += w * v[j];
            }
        }
        Ok(out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn coverage_d2d(&self, gamma: f64) -> Result<f64> {
        Ok(self.coverage_d2d_many(&[gamma])?[0])
    }

    /// `P[R_d < r, condition = cond]` for the serving link of a typical D2D
    /// receiver, normalised over both conditions.
    pub fn d2d_serving_distance_cdf(&self, cond: PropagationCondition, r: f64) -> Result<f64> {
        let z = self.d2d_normalization()?;
        if !(z > 0.0) {
            return Ok(0.0);
        }
        Ok(self.d2d_cdf_raw(cond, r)? / z)
    }

    fn d2d_normalization(&self) -> Result<f64> {
        let mut z = 0.0;
        for c in PropagationCondition::ALL {
            z += self.d2d_cdf_raw(c, PEER_GRID_MAX_KM)?;
        }
        Ok(z)
    }

    // unnormalised serving-distance CDF
    fn d2d_cdf_raw(&self, cond: PropagationCondition, r: f64) -> Result<f64> {
        let Some(peers) = &self.peers else {
            return Ok(0.0);
        };
        if !(r > 0.0) {
            return Ok(0.0);
        }
        let base = peers.nearest_cdf(cond, r);
        match self.options.d2d_serving {
            D2dServingModel::ThinnedField => Ok(base),
            D2dServingModel::SecondNeighbour => {
                // nearest in cellular mode (probability P_c): take the second
                let gap = |u: f64| peers.second_pdf(cond, u) - peers.nearest_pdf(cond, u);
                let gap_cdf = |u: f64| peers.second_cdf(cond, u) - peers.nearest_cdf(cond, u);
                let (gx, gw) = gauss_legendre(16);
                let lens = |a: f64, b: f64, r1: f64, t: f64| -> f64 {
                    let panels = if self.options.verbatim_overlap { 8 } else { 2 };
                    let h = (b - a) / panels as f64;
                    let mut acc = 0.0;
                    for k in 0..panels {
                        let c = a + h * (k as f64 + 0.5);
                        for (x, w) in gx.iter().zip(&gw) {
                            let u = c + 0.5 * h * x;
                            let pc = if self.options.verbatim_overlap {
                                d2d_cellular_overlap_probability_verbatim(u, r1, t)
                            } else {
                                d2d_cellular_overlap_probability(u, r1, t)
                            };
                            acc += 0.5 * h * w * pc * gap(u);
                        }
                    }
                    acc
                };
                let mut corr = 0.0;
                for law in self.r1_laws.iter().flatten() {
                    let t = law.t;
                    let (nodes, weights) = law.rule(r + t);
                    for (&r1, &wr) in nodes.iter().zip(&weights) {
                        let w1 = wr * law.density(r1);
                        let a = r1 - t;
                        if a >= r || w1 == 0.0 {
                            continue;
                        }
                        // beyond r1 + t the receiver circle covers the whole disc
                        let inner = if self.options.verbatim_overlap || r <= r1 + t {
                            lens(a, r, r1, t)
                        } else {
                            lens(a, r1 + t, r1, t) + gap_cdf(r) - gap_cdf(r1 + t)
                        };
                        corr += w1 * inner;
                    }
                }
                Ok(base + corr)
            }
        }
    }

    fn build_d2d_laws(&self) -> Result<[ServingDistanceLaw; 2]> {
        if self.peers.is_none() {
            return Ok([ServingDistanceLaw::empty(Los), ServingDistanceLaw::empty(Nlos)]);
        }
        let z = self.d2d_normalization()?;
        if !(z > 0.0) {
            return Ok([ServingDistanceLaw::empty(Los), ServingDistanceLaw::empty(Nlos)]);
        }
        // support: where the total CDF moves between 1e-7 and 1 - 1e-7
        let scan: Vec<f64> = (0..=140).map(|i| 1e-6 * 10f64.powf(i as f64 / 20.0)).collect();
        let mut lo = scan[0];
        let mut hi = *scan.last().unwrap_or(&PEER_GRID_MAX_KM);
        let mut found_lo = false;
        for &r in &scan {
            let f = (self.d2d_cdf_raw(Los, r)? + self.d2d_cdf_raw(Nlos, r)?) / z;
            if f < 1e-7 {
                lo = r;
            } else {
                found_lo = true;
            }
            if found_lo && f > 1.0 - 1e-7 {
                hi = r;
                break;
            }
        }
        let (nodes, weights) = composite_rule(lo, hi.max(lo * 10.0), D2D_LAW_PANELS, true);
        let mut laws = [ServingDistanceLaw::empty(Los), ServingDistanceLaw::empty(Nlos)];
        for c in PropagationCondition::ALL {
            let pdf = nodes
                .iter()
                .map(|&r| self.d2d_serving_distance_pdf(c, r, z))
                .collect::<Result<Vec<_>>>()?;
            laws[c.index()] = ServingDistanceLaw {
                condition: c,
                nodes: nodes.clone(),
                pdf,
                weights: weights.clone(),
                normalization: z,
            };
        }
        Ok(laws)
    }

    // central difference of the CDF with step max(1e-3 km, 1e-3 r)
    fn d2d_serving_distance_pdf(&self, cond: PropagationCondition, r: f64, z: f64) -> Result<f64> {
        let h = (1e-3f64).max(1e-3 * r).min(0.5 * r);
        let f = (self.d2d_cdf_raw(cond, r + h)? - self.d2d_cdf_raw(cond, r - h)?) / (2.0 * h * z);
        Ok(f.max(0.0))
    }

    /// Uplink ASE, bps/Hz/km^2: one scheduled CU per BS.
    pub fn ase_cellular(&self) -> Result<f64> {
        let p = &self.scenario.params;
        ase_tier(p.lambda_b, crate::netmodel::db_to_linear(p.gamma_0), |g| self.coverage_cellular_many(g))
    }

    /// D2D ASE, bps/Hz/km^2, over the active transmitters.
    pub fn ase_d2d(&self) -> Result<f64> {
        let p = &self.scenario.params;
        ase_tier(self.active_d2d_density(), crate::netmodel::db_to_linear(p.gamma_0), |g| self.coverage_d2d_many(g))
    }

    /// Sum ASE and its two components.
    pub fn ase_total(&self) -> Result<AseBreakdown> {
        let cellular = self.ase_cellular()?;
        let d2d = self.ase_d2d()?;
        Ok(AseBreakdown {
            cellular,
            d2d,
            total: cellular + d2d,
        })
    }
}

/// ASE of both tiers and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AseBreakdown {
    pub cellular: f64,
    pub d2d: f64,
    pub total: f64,
}

fn check_gammas(gammas: &[f64]) -> Result<()> {
    for &g in gammas {
        if !(g > 0.0) {
            return Err(Error::Domain {
                what: "SINR threshold",
                value: g,
                expected: "gamma > 0",
            });
        }
    }
    Ok(())
}

// Distance to the strongest BS of a D2D-mode UE in `cond`, beyond the mode
// boundary: cumulative law tabulated with its density as derivative.
#[derive(Debug, Clone)]
struct StrongestBsLaw {
    cum: CubicHermite,
    t: f64,
    r_max: f64,
}

impl StrongestBsLaw {
    const POINTS: usize = 400;

    fn build(tables: &Tables, boundary: &ModeBoundary, cond: PropagationCondition) -> Result<Option<Self>> {
        let t = boundary.t(cond);
        let dq = 1.0 - boundary.q;
        if !(dq > 1e-12) || !t.is_finite() || !(t > 0.0) {
            return Ok(None);
        }
        // beyond r_max the strongest-BS density is negligible
        let mut r_max = t * 1.5;
        while tables.bs.cum_total(r_max) < 40.0 && r_max < 1e3 {
            r_max *= 1.5;
        }
        let dens = |r: f64| -> Result<f64> { Ok(strongest_density(&tables.bs, tables.bs_profile(), cond, r, 1.0)? / dq) };
        let n = Self::POINTS;
        let grid: Vec<f64> = (0..n).map(|i| t + (r_max - t) * i as f64 / (n - 1) as f64).collect();
        let (gx, gw) = gauss_legendre(8);
        let mut cum = vec![0.0; n];
        let mut d = vec![dens(grid[0])?; n];
        for i in 1..n {
            let (a, b) = (grid[i - 1], grid[i]);
            let mut acc = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                acc += 0.5 * (b - a) * w * dens(0.5 * (a + b) + 0.5 * (b - a) * x)?;
            }
            cum[i] = cum[i - 1] + acc;
            d[i] = dens(b)?;
        }
        Ok(Some(StrongestBsLaw {
            cum: CubicHermite::new(grid, cum, d)?,
            t,
            r_max,
        }))
    }

    const PANELS: usize = 32;

    // Gauss-Legendre rule on [t, min(upper, r_max)] over fixed panel edges
    // clustered at t; only the panel holding `upper` is cut
    fn rule(&self, upper: f64) -> (Vec<f64>, Vec<f64>) {
        let (gx, gw) = gauss_legendre(6);
        let end = upper.min(self.r_max);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for k in 0..Self::PANELS {
            let edge = |k: usize| self.t + (self.r_max - self.t) * (k as f64 / Self::PANELS as f64).powi(2);
            let a = edge(k);
            if a >= end {
                break;
            }
            let b = edge(k + 1).min(end);
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(0.5 * (a + b) + 0.5 * (b - a) * x);
                weights.push(0.5 * (b - a) * w);
            }
        }
        (nodes, weights)
    }

    fn density(&self, r: f64) -> f64 {
        if r < self.t || r > self.r_max {
            0.0
        } else {
            self.cum.eval_derivative(r).max(0.0)
        }
    }
}

/// Chunks of the ASE integral in `u = ln(1 + x)`: panels of this width.
const ASE_PANEL: f64 = 0.5;
const ASE_PANELS_PER_CHUNK: usize = 8;
const ASE_MAX_U: f64 = 60.0;
/// Truncation level of the ASE tail relative to the accumulated value.
pub const ASE_TAIL_TOL: f64 = 1e-4;

/// Area spectral efficiency `density * E[log2(1 + SINR); SINR >= gamma0]`
/// with rate `log2(1 + gamma0)` below... written by parts as
/// `density * [log2(1 + g0) P(g0) + (1/ln 2) int_g0^inf P(x) / (1 + x) dx]`
/// for a coverage function `P` evaluated in batches.
pub fn ase_tier<F>(density: f64, gamma0: f64, mut coverage: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(gamma0 > 0.0) {
        return Err(Error::Domain {
            what: "rate threshold",
            value: gamma0,
            expected: "gamma0 > 0",
        });
    }
    if !(density >= 0.0) {
        return Err(Error::Domain {
            what: "density",
            value: density,
            expected: "density >= 0",
        });
    }
    if density == 0.0 {
        return Ok(0.0);
    }
    let (gx, gw) = gauss_legendre(8);
    let u0 = gamma0.ln_1p();
    let p0 = coverage(&[gamma0])?[0];
    let head = p0 * u0 / LN_2;
    let mut acc = 0.0;
    let mut u = u0;
    while u < u0 + ASE_MAX_U {
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for k in 0..ASE_PANELS_PER_CHUNK {
            let a = u + k as f64 * ASE_PANEL;
            for (x, w) in gx.iter().zip(&gw) {
                xs.push((a + 0.5 * ASE_PANEL * (1.0 + x)).exp_m1());
                ws.push(0.5 * ASE_PANEL * w);
            }
        }
        u += ASE_PANEL * ASE_PANELS_PER_CHUNK as f64;
        xs.push(u.exp_m1());
        let p = coverage(&xs)?;
        acc += ws.iter().zip(&p).map(|(w, p)| w * p).sum::<f64>();
        let p_end = p[p.len() - 1];
        if p_end == 0.0 || p_end * u / LN_2 < ASE_TAIL_TOL * (head + acc / LN_2) {
            break;
        }
    }
    Ok(density * (head + acc / LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivmap::intensity_measure;
    use crate::netmodel::db_to_linear;
    use crate::numerics::{cf_invert_below, integrate_adaptive, QuadratureSpec};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn default_model() -> &'static AnalyticModel {
        static MODEL: OnceLock<AnalyticModel> = OnceLock::new();
        MODEL.get_or_init(|| AnalyticModel::new(&Scenario::default(), AnalyticOptions::default()).unwrap())
    }

    fn spec() -> CfInversionSpec {
        AnalyticOptions::default().inversion
    }

    // unit marks, path loss r^-4: a one-sided stable law of index 1/2
    fn levy_tail(lambda: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| lambda * PI / x.sqrt()
    }

    fn levy_cdf(lambda: f64, y: f64) -> f64 {
        let c = lambda * lambda * PI.powi(3) / 2.0;
        libm::erfc((c / (2.0 * y)).sqrt())
    }

    #[test]
    fn mode_probability_matches_direct_measure() {
        let sc = Scenario::default();
        let tables = Tables::build(&sc).unwrap();
        let b = mode_boundary(&sc, &tables);
        let tier = TierSpec::new(sc.params.lambda_b, sc.bs_link.clone(), sc.params.sigma_shadow_bs, 1.0).unwrap();
        let lam = intensity_measure(&tier, Los, b.t_los).unwrap() + intensity_measure(&tier, Nlos, b.t_nlos).unwrap();
        assert!((b.q - (1.0 - (-lam).exp())).abs() < 1e-6);
        let g = sc.params.mode_gain_threshold();
        assert!((sc.bs_link.path_gain(Los, b.t_los).unwrap() / g - 1.0).abs() < 1e-9);
        assert!((cellular_mode_probability(&sc, &tables) - b.q).abs() < 1e-15);
    }

    #[test]
    fn mode_probability_extremes() {
        let mut sc = Scenario::default();
        sc.params.beta = -200.0;
        let tables = Tables::build(&sc).unwrap();
        assert!(cellular_mode_probability(&sc, &tables) > 1.0 - 1e-12);
        sc.params.beta = 60.0;
        assert!(cellular_mode_probability(&sc, &tables) < 1e-6);
    }

    #[test]
    fn cu_law_is_normalised() {
        let m = default_model();
        let mass = m.cu_law(Los).mass() + m.cu_law(Nlos).mass();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
        let b = m.boundary();
        let err = cu_serving_distance_pdf(Los, 1.1 * b.t_los, b, m.tables()).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn cu_pdf_matches_differentiated_void_probability() {
        // d/dr P[strongest BS is LoS within r] by finite differences of an
        // adaptive integral of the joint density written from scratch
        let m = default_model();
        let t = m.tables();
        let prof = t.bs_profile();
        let q = m.boundary().q;
        for r in [0.05, 0.2, 0.4] {
            let x = crossover_distance(prof, r, Los).unwrap();
            let h = 1e-5;
            let void = |s: f64| (-(t.bs.cum(Los, s))).exp();
            let d = -(void(r + h) - void(r - h)) / (2.0 * h);
            let expect = d * (-t.bs.cum(Nlos, x)).exp() / q;
            let got = cu_serving_distance_pdf(Los, r, m.boundary(), t).unwrap();
            assert!((got / expect - 1.0).abs() < 1e-4, "r {r}: {got} vs {expect}");
        }
    }

    #[test]
    fn atoms_reproduce_levy_law() {
        let lambda = 0.1;
        let atoms = AtomTable::build(levy_tail(lambda), 1e-12, None).unwrap();
        let field = [Field { atoms: &atoms, cap: None }];
        let ys = [0.03, 0.155, 1.0, 10.0, 300.0];
        let got = interference_cdf(&field, &ys, &spec()).unwrap();
        for (y, p) in ys.iter().zip(&got) {
            assert!((p - levy_cdf(lambda, *y)).abs() < 2e-4, "y {y}: {p} vs {}", levy_cdf(lambda, *y));
        }
    }

    #[test]
    fn capped_field_matches_truncated_tail() {
        let lambda = 0.1;
        let cap = 0.5;
        let full = AtomTable::build(levy_tail(lambda), 1e-12, None).unwrap();
        let n_cap = levy_tail(lambda)(cap);
        let tail = move |x: f64| if x < cap { levy_tail(lambda)(x) - n_cap } else { 0.0 };
        let truncated = AtomTable::build(tail, 1e-12, Some(cap)).unwrap();
        let ys = [0.05, 0.3, 1.0, 4.0];
        let a = interference_cdf(&[Field { atoms: &full, cap: Some(cap) }], &ys, &spec()).unwrap();
        let b = interference_cdf(&[Field { atoms: &truncated, cap: None }], &ys, &spec()).unwrap();
        for i in 0..ys.len() {
            assert!((a[i] - b[i]).abs() < 5e-4, "y {}: {} vs {}", ys[i], a[i], b[i]);
        }
        // removing the marks above the cap only helps
        let c = interference_cdf(&[Field { atoms: &full, cap: None }], &ys, &spec()).unwrap();
        for i in 0..ys.len() {
            assert!(a[i] >= c[i] - 1e-4);
        }
    }

    #[test]
    fn atom_cf_matches_stable_cf() {
        let lambda = 0.1;
        let atoms = AtomTable::build(levy_tail(lambda), 1e-12, None).unwrap();
        for w in [0.1, 1.0, 10.0] {
            let got = atoms.exponent(w, None).exp();
            let expect = (-lambda * PI.powf(1.5) * Complex64::new(0.0, -w).sqrt()).exp();
            assert!((got - expect).norm() < 1e-4, "w {w}: {got} vs {expect}");
        }
        // the exact CF inverts to the same law through the plain kernel
        let p = cf_invert_below(|w| (-lambda * PI.powf(1.5) * Complex64::new(0.0, -w).sqrt()).exp(), 1.0, &spec()).unwrap();
        assert!((p - levy_cdf(lambda, 1.0)).abs() < 2e-4);
    }

    #[test]
    fn mean_interference_matches_tail_integral() {
        let m = default_model();
        let bs = &m.tables().bs;
        // E[I] = int N(x) dx; the CU part dominates and is checked in
        // order of magnitude against a scheduled CU at the median distance
        let mean = m.mean_cellular_interference();
        assert!(mean > 0.0 && mean.is_finite());
        assert!(bs.cum_total(1.0) > 0.0);
        let atoms = AtomTable::build(|x: f64| (-x).exp(), 1e-12, None).unwrap();
        assert!((atoms.mean() - 1.0).abs() < 1e-3, "{}", atoms.mean());
    }

    #[test]
    fn cellular_coverage_examples() {
        let m = default_model();
        let c = m.coverage_cellular_many(&[0.1, 1.0, 10.0]).unwrap();
        assert!(c[0] > 0.999);
        assert!((c[1] - 0.796).abs() < 0.01, "{c:?}");
        assert!(c[2] < 0.1);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
        assert!(matches!(m.coverage_cellular(0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn cellular_cf_reduces_to_noise_phase_without_interferers() {
        let m = default_model();
        let v = m.cf_inv_sinr_cellular(Los, 0.0, 0.1).unwrap();
        assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let v = m.cf_inv_sinr_cellular(Los, 3.0, 0.1).unwrap();
        assert!(v.norm() <= 1.0 + 1e-12);
        let conj = m.cf_inv_sinr_cellular(Los, -3.0, 0.1).unwrap();
        assert!((v.conj() - conj).norm() < 1e-12);
        assert!(m.cf_inv_sinr_cellular(Los, 1.0, 10.0).is_err());
    }

    #[test]
    fn d2d_cf_properties() {
        let m = default_model();
        assert!((m.cf_inv_sinr_d2d(Nlos, 0.0, 0.02).unwrap() - 1.0).norm() < 1e-15);
        let v = m.cf_inv_sinr_d2d(Los, 2.0, 0.02).unwrap();
        let c = m.cf_inv_sinr_d2d(Los, -2.0, 0.02).unwrap();
        assert!(v.norm() <= 1.0 + 1e-12 && (v.conj() - c).norm() < 1e-12);
        assert!(m.cf_inv_sinr_d2d(Los, 1.0, 0.0).is_err());
    }

    #[test]
    fn d2d_coverage_is_flat_and_monotone() {
        let m = default_model();
        let c = m.coverage_d2d_many(&[1.0, db_to_linear(15.0)]).unwrap();
        assert!(c[0] >= c[1]);
        assert!(c[0] - c[1] < 0.2, "{c:?}");
    }

    #[test]
    fn overlap_probability_examples() {
        let (rd, r1) = (0.3f64, 0.4f64);
        let t = (rd * rd + r1 * r1).sqrt();
        assert!((d2d_cellular_overlap_probability(rd, r1, t) - 0.5).abs() < 1e-12);
        assert!(d2d_cellular_overlap_probability(0.1, 0.5, 0.4) < 1e-7);
        assert!(d2d_cellular_overlap_probability(0.1, 0.5, 0.6) > 1.0 - 1e-7);
        assert_eq!(d2d_cellular_overlap_probability(0.1, 0.5, 0.3), 0.0);
        assert_eq!(d2d_cellular_overlap_probability(0.1, 0.5, 0.7), 1.0);
        let v = d2d_cellular_overlap_probability_verbatim(0.3, 0.4, 0.5);
        assert!((v - d2d_cellular_overlap_probability(0.3, 0.4, 0.5)).abs() > 0.01);
    }

    #[test]
    fn d2d_serving_law_is_normalised() {
        let m = default_model();
        let total = m.d2d_serving_distance_cdf(Los, 50.0).unwrap() + m.d2d_serving_distance_cdf(Nlos, 50.0).unwrap();
        assert!((total - 1.0).abs() < 1e-9);
        let mass = m.d2d_law(Los).mass() + m.d2d_law(Nlos).mass();
        assert!((mass - 1.0).abs() < 0.01, "{mass}");
        assert_eq!(m.d2d_serving_distance_cdf(Los, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn thinned_field_nearest_law_matches_integrated_density() {
        let sc = Scenario::default();
        let opts = AnalyticOptions {
            d2d_serving: D2dServingModel::ThinnedField,
            ..AnalyticOptions::default()
        };
        let m = AnalyticModel::new(&sc, opts).unwrap();
        let t = m.tables();
        let scale = 1.0 - m.boundary().q;
        let qs = QuadratureSpec::default().with_rel_tol(1e-8);
        let z = m.d2d_normalization().unwrap();
        for r in [0.01, 0.03, 0.1] {
            let direct = integrate_adaptive(|u| strongest_density(&t.ue, t.ue_profile(), Los, u, scale).unwrap(), 0.0, r, &qs).unwrap();
            let got = m.d2d_serving_distance_cdf(Los, r).unwrap() * z;
            assert!((got - direct.value).abs() < 1e-5, "r {r}: {got} vs {}", direct.value);
        }
    }

    #[test]
    fn ase_tier_matches_closed_form() {
        let g0 = 1.0;
        let a = ase_tier(2.0, g0, |xs| Ok(xs.iter().map(|x| 1.0 / (1.0 + x)).collect())).unwrap();
        let exact = 2.0 * ((1.0 + g0).log2() / (1.0 + g0) + 1.0 / (LN_2 * (1.0 + g0)));
        assert!((a / exact - 1.0).abs() < 1e-3, "{a} vs {exact}");
    }

    #[test]
    fn ase_tier_matches_density_form() {
        // lambda int_g0^inf log2(1 + x) f(x) dx with f the SINR density
        let (g0, k) = (0.5, 5.0);
        let by_parts = ase_tier(3.0, g0, |xs| Ok(xs.iter().map(|x| (-x / k).exp()).collect())).unwrap();
        let direct = integrate_adaptive(|x| (1.0 + x).log2() * (-x / k).exp() / k, g0, f64::INFINITY, &QuadratureSpec::default())
            .unwrap()
            .value;
        assert!((by_parts / (3.0 * direct) - 1.0).abs() < 1e-3);
        assert_eq!(ase_tier(0.0, 1.0, |_| unreachable!()).unwrap(), 0.0);
        assert!(ase_tier(1.0, 0.0, |xs| Ok(vec![1.0; xs.len()])).is_err());
    }

    #[test]
    fn ase_total_is_sum() {
        let mut sc = Scenario::default();
        sc.params.gamma_0 = 20.0;
        let m = AnalyticModel::new(&sc, AnalyticOptions::default()).unwrap();
        let a = m.ase_total().unwrap();
        assert_eq!(a.total, a.cellular + a.d2d);
        assert!(a.cellular > 0.0 && a.d2d > 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn overlap_probability_in_unit_interval(rd in 1e-4f64..1.0, r1 in 1e-4f64..2.0, t in 0.0f64..2.0) {
            let p = d2d_cellular_overlap_probability(rd, r1, t);
            prop_assert!((0.0..=1.0).contains(&p));
            let v = d2d_cellular_overlap_probability_verbatim(rd, r1, t);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn q_decreases_in_beta(b in -90.0f64..-20.0, step in 0.5f64..10.0) {
            let mut sc = Scenario::default();
            let tables = Tables::build(&sc).unwrap();
            sc.params.beta = b;
            let lo = cellular_mode_probability(&sc, &tables);
            sc.params.beta = b + step;
            let hi = cellular_mode_probability(&sc, &tables);
            prop_assert!(hi < lo);
        }

        #[test]
        fn cellular_coverage_non_increasing(g in -15.0f64..20.0, step in 0.1f64..10.0) {
            let m = default_model();
            let c = m.coverage_cellular_many(&[db_to_linear(g), db_to_linear(g + step)]).unwrap();
            prop_assert!(c[1] <= c[0] + 1e-4);
            prop_assert!((0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]));
        }

        #[test]
        fn d2d_serving_cdf_non_decreasing(r in 1e-4f64..0.5, f in 1.0f64..3.0) {
            let m = default_model();
            for c in PropagationCondition::ALL {
                let a = m.d2d_serving_distance_cdf(c, r).unwrap();
                let b = m.d2d_serving_distance_cdf(c, r * f).unwrap();
                prop_assert!(b >= a - 1e-5 && (0.0..=1.0 + 1e-9).contains(&b));
            }
        }
    }
}

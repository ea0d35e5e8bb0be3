//! Monte Carlo ground truth. BSs and UEs are Poisson fields on a disc;
//! every per-link random quantity (shadowing, LoS state, coins) is a pure
//! function of the replication seed and the link identifiers, so a
//! realization is reproducible link by link and independent of evaluation
//! order or thread count.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivmap::sigma_ln;
use crate::error::{Error, Result};
use crate::netmodel::{NetworkParams, PathLossProfile, PropagationCondition, Scenario};

/// Shadowing draws are clipped to this many standard deviations, which
/// bounds the received power of every link and makes spatial culling exact.
pub const SHADOW_CLIP_SIGMAS: f64 = 5.0;

/// Planar point, km.
pub type Point = [f64; 2];

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a parent seed and an index.
#[inline]
pub fn split_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

#[inline]
fn unit(h: u64) -> f64 {
    ((h >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum MarkKind {
    BsShadow = 1,
    BsLos = 2,
    UeShadow = 3,
    UeLos = 4,
    TxCoin = 5,
    ContentCoin = 6,
    Priority = 7,
}

#[inline]
fn link_hash(seed: u64, kind: MarkKind, a: u64, b: u64) -> u64 {
    mix64(mix64(mix64(seed ^ (kind as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ a) ^ b.wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Natural log with absolute error below 2e-5, for screening only.
#[inline]
fn fast_ln(x: f64) -> f64 {
    let bits = x.to_bits();
    let e = ((bits >> 52) & 0x7ff) as i64 - 1023;
    let m = f64::from_bits((bits & 0x000f_ffff_ffff_ffff) | 0x3ff0_0000_0000_0000);
    // ln m = 2 atanh((m - 1) / (m + 1)), m in [1, 2)
    let s = (m - 1.0) / (m + 1.0);
    let s2 = s * s;
    let ln_m = 2.0 * s * (1.0 + s2 * (1.0 / 3.0 + s2 * (0.2 + s2 * (1.0 / 7.0 + s2 / 9.0))));
    e as f64 * LN_2 + ln_m
}

// Slack absorbing the fast_ln error in screening tests.
const SCREEN_SLACK: f64 = 1e-3;

#[inline]
fn clipped_normal(h: u64) -> f64 {
    let u1 = unit(h);
    let u2 = unit(mix64(h ^ 0x5851_F42D_4C95_7F2D));
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
    z.clamp(-SHADOW_CLIP_SIGMAS, SHADOW_CLIP_SIGMAS)
}

/// One sampled network: BS and UE positions plus the replication seed that
/// keys all link marks.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRealization {
    pub seed: u64,
    pub window_radius: f64,
    pub bs_points: Vec<Point>,
    pub ue_points: Vec<Point>,
    /// Number of zero-BS draws discarded before this one.
    pub resamples: u32,
}

fn uniform_in_disc<R: Rng>(rng: &mut R, radius: f64) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let th = 2.0 * PI * rng.random::<f64>();
    [r * th.cos(), r * th.sin()]
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

#[inline]
fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Samples BS and UE fields on a disc of radius `window_radius` km.
pub fn sample_network(params: &NetworkParams, window_radius: f64, seed: u64) -> Result<NetworkRealization> {
    if !(window_radius > 0.0 && window_radius.is_finite()) {
        return Err(Error::Domain {
            what: "window radius",
            value: window_radius,
            expected: "positive and finite",
        });
    }
    params.validate()?;
    let area = PI * window_radius * window_radius;
    let mut resamples = 0u32;
    loop {
        let s = split_seed(seed, resamples as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let nb = poisson_count(&mut rng, params.lambda_b * area);
        if nb == 0 {
            resamples += 1;
            continue;
        }
        let bs_points = (0..nb).map(|_| uniform_in_disc(&mut rng, window_radius)).collect();
        let nu = poisson_count(&mut rng, params.lambda_u * area);
        let ue_points = (0..nu).map(|_| uniform_in_disc(&mut rng, window_radius)).collect();
        return Ok(NetworkRealization {
            seed: s,
            window_radius,
            bs_points,
            ue_points,
            resamples,
        });
    }
}

/// Per-link marks of a realization.
#[derive(Debug, Clone)]
pub struct Marks<'a> {
    seed: u64,
    scenario: &'a Scenario,
    sl_bs: f64,
    sl_ue: f64,
    // (ln A - alpha ln r0, alpha) per condition for single-slope BS links
    bs_loglaw: Option<[(f64, f64); 2]>,
}

impl<'a> Marks<'a> {
    pub fn new(seed: u64, scenario: &'a Scenario) -> Self {
        Marks {
            seed,
            scenario,
            sl_bs: sigma_ln(scenario.params.sigma_shadow_bs),
            sl_ue: sigma_ln(scenario.params.sigma_shadow_ue),
            bs_loglaw: scenario.bs_link.is_single_slope().then(|| {
                let prof = &scenario.bs_link;
                PropagationCondition::ALL.map(|c| {
                    let (a, alpha) = prof.coefficients_at(c, 1.0);
                    (a.ln() + alpha * prof.reference_km().ln(), alpha)
                })
            }),
        }
    }

    /// Distance beyond which no UE–BS link can exceed the gain `exp(ln_floor)`.
    pub fn reach_bs(&self, ln_floor: f64) -> f64 {
        let prof = &self.scenario.bs_link;
        let top = SHADOW_CLIP_SIGMAS * self.sl_bs + SCREEN_SLACK;
        match &self.bs_loglaw {
            Some(law) => {
                let (kn, an) = law[PropagationCondition::Nlos.index()];
                let (kl, al) = law[PropagationCondition::Los.index()];
                let rn = ((kn + top - ln_floor) / an).exp();
                let rl = ((kl + top - ln_floor) / al).exp().min(prof.los_cutoff_km());
                rn.max(rl)
            }
            None => f64::INFINITY,
        }
    }

    /// Shadowed UE–BS gain if it can exceed `ln_floor` (natural log of a
    /// gain), `None` otherwise; `r2` is the squared distance. Agrees with
    /// [`Marks::gain_bs`] whenever it returns a value; most links are
    /// rejected from the first shadowing uniform alone.
    #[inline]
    pub fn gain_bs_above(&self, ue: u64, bs: u64, r2: f64, ln_floor: f64) -> Option<f64> {
        let r2 = r2.max(1e-18);
        if let (Some(law), true) = (&self.bs_loglaw, self.sl_bs > 0.0) {
            let half_ln = 0.5 * fast_ln(r2);
            let (kn, an) = law[PropagationCondition::Nlos.index()];
            let mut lg = kn - an * half_ln;
            let d = self.scenario.bs_link.los_cutoff_km();
            if r2 < d * d {
                let (kl, al) = law[PropagationCondition::Los.index()];
                lg = lg.max(kl - al * half_ln);
            }
            let z_req = (ln_floor - lg) / self.sl_bs - SCREEN_SLACK;
            if z_req >= SHADOW_CLIP_SIGMAS {
                return None;
            }
            if z_req > 0.0 {
                let h = link_hash(self.seed, MarkKind::BsShadow, ue, bs);
                // |z| <= sqrt(-2 ln u1) for the Box-Muller draw
                if -2.0 * fast_ln(unit(h)) + SCREEN_SLACK <= z_req * z_req {
                    return None;
                }
            }
        }
        let g = self.gain_bs(ue, bs, r2.sqrt());
        (g.ln() > ln_floor).then_some(g)
    }

    /// Shadowing of the link between UE `ue` and BS `bs`.
    #[inline]
    pub fn shadow_bs(&self, ue: u64, bs: u64) -> f64 {
        if self.sl_bs == 0.0 {
            return 1.0;
        }
        (self.sl_bs * clipped_normal(link_hash(self.seed, MarkKind::BsShadow, ue, bs))).exp()
    }

    /// LoS state of the UE–BS link at distance `r`.
    #[inline]
    pub fn condition_bs(&self, ue: u64, bs: u64, r: f64) -> PropagationCondition {
        let p = self.scenario.bs_link.los_probability_unchecked(r);
        if p > 0.0 && unit(link_hash(self.seed, MarkKind::BsLos, ue, bs)) < p {
            PropagationCondition::Los
        } else {
            PropagationCondition::Nlos
        }
    }

    #[inline]
    fn ue_key(a: u64, b: u64) -> (u64, u64) {
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Shadowing of the (symmetric) link between UEs `a` and `b`.
    #[inline]
    pub fn shadow_ue(&self, a: u64, b: u64) -> f64 {
        if self.sl_ue == 0.0 {
            return 1.0;
        }
        let (x, y) = Self::ue_key(a, b);
        (self.sl_ue * clipped_normal(link_hash(self.seed, MarkKind::UeShadow, x, y))).exp()
    }

    #[inline]
    pub fn condition_ue(&self, a: u64, b: u64, r: f64) -> PropagationCondition {
        let p = self.scenario.ue_link.los_probability_unchecked(r);
        let (x, y) = Self::ue_key(a, b);
        if p > 0.0 && unit(link_hash(self.seed, MarkKind::UeLos, x, y)) < p {
            PropagationCondition::Los
        } else {
            PropagationCondition::Nlos
        }
    }

    /// Shadowed gain `H g(r)` of a UE–BS link.
    #[inline]
    pub fn gain_bs(&self, ue: u64, bs: u64, r: f64) -> f64 {
        let c = self.condition_bs(ue, bs, r);
        self.shadow_bs(ue, bs) * self.scenario.bs_link.gain_unchecked(c, r.max(1e-9))
    }

    /// Shadowed gain `H g(r)` of a UE–UE link.
    #[inline]
    pub fn gain_ue(&self, a: u64, b: u64, r: f64) -> f64 {
        let c = self.condition_ue(a, b, r);
        self.shadow_ue(a, b) * self.scenario.ue_link.gain_unchecked(c, r.max(1e-9))
    }

    #[inline]
    fn coin(&self, kind: MarkKind, ue: u64) -> f64 {
        unit(link_hash(self.seed, kind, ue, 0))
    }
}

// Upper bound of the shadowed gain at distance >= r.
fn gain_bound(profile: &PathLossProfile, sigma_db: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return f64::INFINITY;
    }
    let hmax = 10f64.powf(SHADOW_CLIP_SIGMAS * sigma_db / 10.0);
    let mut g = profile.gain_unchecked(PropagationCondition::Nlos, r);
    if r < profile.los_cutoff_km() {
        g = g.max(profile.gain_unchecked(PropagationCondition::Los, r));
    }
    hmax * g
}

/// Uniform bucket grid over the window for ring searches.
#[derive(Debug, Clone)]
struct Grid {
    cell: f64,
    n: usize,
    half: f64,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn new(points: &[Point], ids: impl Iterator<Item = u32> + Clone, half: f64, cell: f64) -> Grid {
        let n = ((2.0 * half / cell).ceil() as usize).max(1);
        let idx = |p: Point| -> usize {
            let cx = (((p[0] + half) / cell) as usize).min(n - 1);
            let cy = (((p[1] + half) / cell) as usize).min(n - 1);
            cy * n + cx
        };
        let mut counts = vec![0u32; n * n + 1];
        for id in ids.clone() {
            counts[idx(points[id as usize]) + 1] += 1;
        }
        for i in 0..n * n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[n * n] as usize];
        for id in ids {
            let c = idx(points[id as usize]);
            items[fill[c] as usize] = id;
            fill[c] += 1;
        }
        Grid {
            cell,
            n,
            half,
            start: counts,
            items,
        }
    }

    fn cell_of(&self, p: Point) -> (i64, i64) {
        (
            ((p[0] + self.half) / self.cell).floor() as i64,
            ((p[1] + self.half) / self.cell).floor() as i64,
        )
    }

    fn bucket(&self, cx: i64, cy: i64) -> &[u32] {
        if cx < 0 || cy < 0 || cx >= self.n as i64 || cy >= self.n as i64 {
            return &[];
        }
        let c = cy as usize * self.n + cx as usize;
        &self.items[self.start[c] as usize..self.start[c + 1] as usize]
    }

    /// Visits items ring by ring around `p`; `visit` returns the current
    /// score to beat and `bound(r)` is an upper bound of any score at
    /// distance >= r. Stops once no remaining ring can beat the score.
    fn ring_search<V, B>(&self, p: Point, mut visit: V, bound: B)
    where
        V: FnMut(u32) -> f64,
        B: Fn(f64) -> f64,
    {
        let (cx, cy) = self.cell_of(p);
        let mut best = f64::NEG_INFINITY;
        let max_ring = 2 * self.n as i64 + 2;
        for k in 0..=max_ring {
            if k >= 1 {
                let b = bound((k - 1) as f64 * self.cell);
                if b == f64::NEG_INFINITY || b < best {
                    return;
                }
            }
            let mut any_inside = false;
            for dy in -k..=k {
                let y = cy + dy;
                let step = if dy == -k || dy == k { 1 } else { 2 * k.max(1) };
                let mut dx = -k;
                while dx <= k {
                    let x = cx + dx;
                    if x >= 0 && y >= 0 && x < self.n as i64 && y < self.n as i64 {
                        any_inside = true;
                        for &id in self.bucket(x, y) {
                            best = best.max(visit(id));
                        }
                    }
                    dx += step;
                }
            }
            if !any_inside && k > 0 {
                let inside_later = cx + k >= 0 && cy + k >= 0 && cx - k < self.n as i64 && cy - k < self.n as i64;
                if !inside_later {
                    return;
                }
            }
        }
    }
}

/// Operating mode of a UE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UeMode {
    Cellular,
    D2dTx,
    D2dRx,
    D2dIdle,
}

/// Mode labels and cellular associations of every UE.
#[derive(Debug, Clone)]
pub struct ModeAssignment {
    pub modes: Vec<UeMode>,
    /// Strongest BS of each cellular UE; `None` for D2D UEs.
    pub strongest_bs: Vec<Option<u32>>,
    /// Maximum downlink received power of cellular UEs, mW; 0 for D2D UEs.
    pub mrss_mw: Vec<f64>,
    /// Shadowed gain `H g(r)` towards the strongest BS.
    pub serving_gain: Vec<f64>,
}

impl ModeAssignment {
    /// BS serving UE `ue` if it is in cellular mode.
    pub fn serving_bs(&self, ue: usize) -> Option<u32> {
        match self.modes[ue] {
            UeMode::Cellular => self.strongest_bs[ue],
            _ => None,
        }
    }

    pub fn cellular_fraction(&self) -> f64 {
        if self.modes.is_empty() {
            return 0.0;
        }
        self.modes.iter().filter(|m| **m == UeMode::Cellular).count() as f64 / self.modes.len() as f64
    }
}

fn bs_grid(real: &NetworkRealization) -> Grid {
    let n = real.bs_points.len() as u32;
    Grid::new(&real.bs_points, 0..n, real.window_radius, 0.7)
}

/// Strongest BS of a receiver at `p` with mark id `ue` among links with
/// gain above `exp(ln_floor)`: `(bs, P_B H g, H g)`.
fn strongest_bs(
    real: &NetworkRealization,
    grid: &Grid,
    marks: &Marks<'_>,
    p: Point,
    ue: u64,
    mut ln_floor: f64,
) -> Option<(u32, f64, f64)> {
    let sc = marks.scenario;
    let pb = sc.params.p_b_mw();
    let mut best: Option<(u32, f64)> = None;
    let cut2 = std::cell::Cell::new(marks.reach_bs(ln_floor).powi(2));
    let finite_reach = marks.reach_bs(0.0).is_finite();
    grid.ring_search(
        p,
        |b| {
            let q = real.bs_points[b as usize];
            let r2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
            if r2 < cut2.get() {
                if let Some(g) = marks.gain_bs_above(ue, b as u64, r2, ln_floor) {
                    best = Some((b, g));
                    ln_floor = g.ln();
                    cut2.set(marks.reach_bs(ln_floor).powi(2));
                }
            }
            best.map_or(f64::NEG_INFINITY, |x| pb * x.1)
        },
        |r| {
            if finite_reach {
                if r * r >= cut2.get() {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            } else {
                pb * gain_bound(&sc.bs_link, sc.params.sigma_shadow_bs, r)
            }
        },
    );
    best.map(|(b, g)| (b, pb * g, g))
}

/// Mode selection: a UE is cellular iff its strongest downlink power
/// exceeds `beta`; D2D UEs split into Tx and Rx by a fair coin, and Tx
/// holding content (probability `rho`) become active, the rest idle.
pub fn assign_modes(real: &NetworkRealization, scenario: &Scenario) -> ModeAssignment {
    let marks = Marks::new(real.seed, scenario);
    let grid = bs_grid(real);
    let beta = scenario.params.beta_mw();
    let ln_threshold = scenario.params.mode_gain_threshold().ln();
    let rho = scenario.params.rho;
    let n = real.ue_points.len();
    let mut modes = Vec::with_capacity(n);
    let mut strongest = Vec::with_capacity(n);
    let mut mrss = Vec::with_capacity(n);
    let mut serving_gain = Vec::with_capacity(n);
    for (u, &p) in real.ue_points.iter().enumerate() {
        let best = strongest_bs(real, &grid, &marks, p, u as u64, ln_threshold).filter(|x| x.1 > beta);
        let (b, pw, g) = match best {
            Some(x) => (Some(x.0), x.1, x.2),
            None => (None, 0.0, 0.0),
        };
        let mode = if pw > beta {
            UeMode::Cellular
        } else if marks.coin(MarkKind::TxCoin, u as u64) < 0.5 {
            if marks.coin(MarkKind::ContentCoin, u as u64) < rho {
                UeMode::D2dTx
            } else {
                UeMode::D2dIdle
            }
        } else {
            UeMode::D2dRx
        };
        modes.push(mode);
        strongest.push(b);
        mrss.push(pw);
        serving_gain.push(g);
    }
    ModeAssignment {
        modes,
        strongest_bs: strongest,
        mrss_mw: mrss,
        serving_gain,
    }
}

/// Scheduled uplink and D2D transmitters of one slot.
#[derive(Debug, Clone)]
pub struct ActiveLinks {
    /// Scheduled CU of each BS (`None` for BSs without cellular UEs).
    pub scheduled_cu: Vec<Option<u32>>,
    /// Transmit power of each scheduled CU, indexed like `scheduled_cu`.
    pub cu_power_mw: Vec<f64>,
    /// Active D2D transmitters.
    pub active_tx: Vec<u32>,
    // every UE in D2D mode, the candidate transmitters of a receiver
    peer_grid: Grid,
}

/// Schedules one uniformly chosen CU per BS and collects the active D2D
/// transmitters. D2D receivers associate lazily through
/// [`ActiveLinks::associate_rx`].
pub fn schedule_links(real: &NetworkRealization, assignment: &ModeAssignment, scenario: &Scenario) -> ActiveLinks {
    let marks = Marks::new(real.seed, scenario);
    let nb = real.bs_points.len();
    let mut best_key = vec![u64::MAX; nb];
    let mut scheduled: Vec<Option<u32>> = vec![None; nb];
    for u in 0..real.ue_points.len() {
        if let Some(b) = assignment.serving_bs(u) {
            let key = link_hash(marks.seed, MarkKind::Priority, u as u64, 0);
            if key < best_key[b as usize] {
                best_key[b as usize] = key;
                scheduled[b as usize] = Some(u as u32);
            }
        }
    }
    let cu_power_mw = scheduled
        .iter()
        .map(|s| match s {
            Some(u) => scenario.params.cu_power_from_gain(assignment.serving_gain[*u as usize]),
            None => 0.0,
        })
        .collect();
    let active_tx: Vec<u32> = (0..real.ue_points.len() as u32)
        .filter(|&u| assignment.modes[u as usize] == UeMode::D2dTx)
        .collect();
    let peers = (0..real.ue_points.len() as u32).filter(|&u| assignment.modes[u as usize] != UeMode::Cellular);
    let peer_grid = Grid::new(&real.ue_points, peers, real.window_radius, 0.1);
    ActiveLinks {
        scheduled_cu: scheduled,
        cu_power_mw,
        active_tx,
        peer_grid,
    }
}

impl ActiveLinks {
    /// Transmitter of receiver `rx`: the strongest other UE in D2D mode,
    /// as `(tx, shadowed gain)`.
    pub fn associate_rx(&self, real: &NetworkRealization, scenario: &Scenario, rx: u32) -> Option<(u32, f64)> {
        let marks = Marks::new(real.seed, scenario);
        let p = real.ue_points[rx as usize];
        let mut best: Option<(u32, f64)> = None;
        self.peer_grid.ring_search(
            p,
            |t| {
                if t == rx {
                    return best.map_or(f64::NEG_INFINITY, |x| x.1);
                }
                let r = dist(p, real.ue_points[t as usize]);
                let g = marks.gain_ue(rx as u64, t as u64, r);
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((t, g));
                }
                best.map_or(f64::NEG_INFINITY, |x| x.1)
            },
            |r| gain_bound(&scenario.ue_link, scenario.params.sigma_shadow_ue, r),
        );
        best
    }

    pub fn scheduled_count(&self) -> usize {
        self.scheduled_cu.iter().filter(|s| s.is_some()).count()
    }
}

/// Which receiver a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkMode {
    Cellular,
    D2d,
}

/// SINR samples of one mode, one per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrSampleBatch {
    pub mode: LinkMode,
    pub values: Vec<f64>,
    pub seed: u64,
    pub window_radius: f64,
    /// Replications that produced no sample for this mode.
    pub skipped: usize,
}

/// Typical receivers are drawn uniformly among candidates inside this
/// fraction of the window radius.
pub const INNER_FRACTION: f64 = 0.2;

/// Condition and equivalent distance of a serving link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServingLink {
    pub condition: PropagationCondition,
    pub equivalent_km: f64,
}

/// SINR of the typical BS and the typical D2D receiver of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSinr {
    pub cellular: Option<f64>,
    pub d2d: Option<f64>,
    pub cellular_serving: Option<ServingLink>,
    pub d2d_serving: Option<ServingLink>,
}

/// Measures the uplink SINR at a typical BS and the D2D SINR at a typical
/// receiver. Both are drawn uniformly among candidates within
/// `INNER_FRACTION` of the window radius from the centre.
pub fn measure_sinr(real: &NetworkRealization, assignment: &ModeAssignment, links: &ActiveLinks, scenario: &Scenario) -> SlotSinr {
    let marks = Marks::new(real.seed, scenario);
    let params = &scenario.params;
    let inner = INNER_FRACTION * real.window_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(real.seed, 0x7970_6963_616c));

    let bs_cands: Vec<usize> = (0..real.bs_points.len())
        .filter(|&b| dist(real.bs_points[b], [0.0, 0.0]) <= inner)
        .collect();
    let mut cellular_serving = None;
    let mut d2d_serving = None;
    let cellular = if bs_cands.is_empty() {
        None
    } else {
        let b0 = bs_cands[rng.random_range(0..bs_cands.len())];
        links.scheduled_cu[b0].map(|cu| {
            let r = dist(real.bs_points[b0], real.ue_points[cu as usize]);
            let c = marks.condition_bs(cu as u64, b0 as u64, r);
            cellular_serving = Some(ServingLink {
                condition: c,
                equivalent_km: scenario.bs_link.distance_for_gain(c, assignment.serving_gain[cu as usize]),
            });
            let signal = links.cu_power_mw[b0] * assignment.serving_gain[cu as usize];
            let p0 = real.bs_points[b0];
            let mut i_cell = 0.0;
            for (b, s) in links.scheduled_cu.iter().enumerate() {
                if let Some(u) = s {
                    if b != b0 {
                        let r = dist(p0, real.ue_points[*u as usize]);
                        i_cell += links.cu_power_mw[b] * marks.gain_bs(*u as u64, b0 as u64, r);
                    }
                }
            }
            let pd = params.p_d_mw();
            let mut i_d2d = 0.0;
            for &t in &links.active_tx {
                let r = dist(p0, real.ue_points[t as usize]);
                i_d2d += pd * marks.gain_bs(t as u64, b0 as u64, r);
            }
            signal / (i_cell + i_d2d + params.noise_bs_mw())
        })
    };

    let rx_cands: Vec<u32> = (0..real.ue_points.len() as u32)
        .filter(|&u| assignment.modes[u as usize] == UeMode::D2dRx && dist(real.ue_points[u as usize], [0.0, 0.0]) <= inner)
        .collect();
    let d2d = if rx_cands.is_empty() {
        None
    } else {
        let rx = rx_cands[rng.random_range(0..rx_cands.len())];
        links.associate_rx(real, scenario, rx).map(|(tx, g)| {
            let pd = params.p_d_mw();
            let prx = real.ue_points[rx as usize];
            let c = marks.condition_ue(rx as u64, tx as u64, dist(prx, real.ue_points[tx as usize]));
            d2d_serving = Some(ServingLink {
                condition: c,
                equivalent_km: scenario.ue_link.distance_for_gain(c, g),
            });
            let signal = pd * g;
            let mut i_d2d = 0.0;
            for &t in &links.active_tx {
                if t != tx {
                    let r = dist(prx, real.ue_points[t as usize]);
                    i_d2d += pd * marks.gain_ue(rx as u64, t as u64, r);
                }
            }
            let mut i_cell = 0.0;
            for (b, s) in links.scheduled_cu.iter().enumerate() {
                if let Some(u) = s {
                    let r = dist(prx, real.ue_points[*u as usize]);
                    i_cell += links.cu_power_mw[b] * marks.gain_ue(rx as u64, *u as u64, r);
                }
            }
            signal / (i_cell + i_d2d + params.noise_ue_mw())
        })
    };
    SlotSinr {
        cellular,
        d2d,
        cellular_serving,
        d2d_serving,
    }
}

/// Monte Carlo run controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub replications: usize,
    pub seed: u64,
    pub window_radius: f64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replications: 2000,
            seed: 1,
            window_radius: 5.0,
            workers: 0,
        }
    }
}

/// Aggregated output of [`simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct McOutput {
    pub cellular: SinrSampleBatch,
    pub d2d: SinrSampleBatch,
    /// Zero-BS draws that were resampled.
    pub resamples: u64,
    /// Mean fraction of UEs in cellular mode per replication.
    pub mean_cellular_fraction: f64,
    /// Mean active D2D transmitters per km^2.
    pub mean_active_tx_density: f64,
    /// Serving links behind the cellular and D2D samples, in sample order.
    pub cellular_serving: Vec<ServingLink>,
    pub d2d_serving: Vec<ServingLink>,
}

fn run_pool<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, workers: usize, f: F) -> Result<Vec<T>> {
    if workers == 0 {
        return Ok((0..n).into_par_iter().map(&f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

/// Runs `cfg.replications` independent slots and collects one SINR sample
/// per mode per slot. Results depend only on the scenario and `cfg.seed`.
pub fn simulate(scenario: &Scenario, cfg: &McConfig) -> Result<McOutput> {
    scenario.params.validate()?;
    if cfg.replications == 0 {
        return Err(Error::InsufficientSamples);
    }
    let area = PI * cfg.window_radius * cfg.window_radius;
    let per_rep = run_pool(cfg.replications, cfg.workers, |i| -> Result<(SlotSinr, u32, f64, f64)> {
        let real = sample_network(&scenario.params, cfg.window_radius, split_seed(cfg.seed, i as u64))?;
        let modes = assign_modes(&real, scenario);
        let links = schedule_links(&real, &modes, scenario);
        let s = measure_sinr(&real, &modes, &links, scenario);
        Ok((s, real.resamples, modes.cellular_fraction(), links.active_tx.len() as f64 / area))
    })?;
    let mut cell = Vec::new();
    let mut d2d = Vec::new();
    let mut cell_links = Vec::new();
    let mut d2d_links = Vec::new();
    let (mut skip_c, mut skip_d) = (0, 0);
    let mut resamples = 0u64;
    let mut frac = 0.0;
    let mut txd = 0.0;
    for r in per_rep {
        let (s, rs, f, t) = r?;
        match s.cellular {
            Some(v) => cell.push(v),
            None => skip_c += 1,
        }
        match s.d2d {
            Some(v) => d2d.push(v),
            None => skip_d += 1,
        }
        cell_links.extend(s.cellular_serving);
        d2d_links.extend(s.d2d_serving);
        resamples += rs as u64;
        frac += f;
        txd += t;
    }
    let n = cfg.replications as f64;
    Ok(McOutput {
        cellular: SinrSampleBatch {
            mode: LinkMode::Cellular,
            values: cell,
            seed: cfg.seed,
            window_radius: cfg.window_radius,
            skipped: skip_c,
        },
        d2d: SinrSampleBatch {
            mode: LinkMode::D2d,
            values: d2d,
            seed: cfg.seed,
            window_radius: cfg.window_radius,
            skipped: skip_d,
        },
        resamples,
        mean_cellular_fraction: frac / n,
        mean_active_tx_density: txd / n,
        cellular_serving: cell_links,
        d2d_serving: d2d_links,
    })
}

/// Strongest downlink power (mW) seen by a UE at the window centre, one
/// value per replication. The cellular-mode fraction at any threshold
/// follows as the share of samples above it.
pub fn sample_origin_mrss(scenario: &Scenario, cfg: &McConfig) -> Result<Vec<f64>> {
    scenario.params.validate()?;
    let v = run_pool(cfg.replications, cfg.workers, |i| -> Result<f64> {
        let real = sample_bs_only(&scenario.params, cfg.window_radius, split_seed(cfg.seed, i as u64))?;
        let marks = Marks::new(real.seed, scenario);
        let grid = bs_grid(&real);
        Ok(strongest_bs(&real, &grid, &marks, [0.0, 0.0], u64::MAX, f64::NEG_INFINITY).map_or(0.0, |x| x.1))
    })?;
    v.into_iter().collect()
}

fn sample_bs_only(params: &NetworkParams, window_radius: f64, seed: u64) -> Result<NetworkRealization> {
    let area = PI * window_radius * window_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = poisson_count(&mut rng, params.lambda_b * area);
    let bs_points = (0..nb).map(|_| uniform_in_disc(&mut rng, window_radius)).collect();
    Ok(NetworkRealization {
        seed,
        window_radius,
        bs_points,
        ue_points: Vec::new(),
        resamples: 0,
    })
}

/// Cellular-mode fraction and 95 % Wilson interval from MRSS samples.
pub fn mode_fraction(mrss: &[f64], beta_dbm: f64) -> Result<Estimate> {
    let beta = crate::netmodel::dbm_to_mw(beta_dbm);
    let k = mrss.iter().filter(|&&p| p > beta).count();
    wilson(k, mrss.len())
}

/// Minimum equivalent distance from the window centre to a BS, where each
/// BS sits at `g_c^-1(H g_c(r))` under its own link condition.
pub fn sample_min_equivalent_distance(scenario: &Scenario, cfg: &McConfig) -> Result<Vec<f64>> {
    let v = run_pool(cfg.replications, cfg.workers, |i| -> Result<f64> {
        let real = sample_bs_only(&scenario.params, cfg.window_radius, split_seed(cfg.seed, i as u64))?;
        let marks = Marks::new(real.seed, scenario);
        let prof = &scenario.bs_link;
        let mut best = f64::INFINITY;
        for (b, &p) in real.bs_points.iter().enumerate() {
            let r = dist(p, [0.0, 0.0]);
            let c = marks.condition_bs(u64::MAX, b as u64, r);
            let g = marks.shadow_bs(u64::MAX, b as u64) * prof.gain_unchecked(c, r.max(1e-9));
            best = best.min(prof.distance_for_gain(c, g));
        }
        Ok(best)
    })?;
    v.into_iter().collect()
}

/// Point estimate with a 95 % interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

fn wilson(k: usize, n: usize) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InsufficientSamples);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    Ok(Estimate {
        value: p,
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
        samples: n,
    })
}

/// Fraction of samples strictly above `gamma` (linear), with a Wilson interval.
pub fn estimate_coverage(batch: &SinrSampleBatch, gamma: f64) -> Result<Estimate> {
    let k = batch.values.iter().filter(|&&s| s > gamma).count();
    wilson(k, batch.values.len())
}

/// `density * mean(log2(1 + SINR) 1[SINR > gamma0])` with a 1000-resample
/// bootstrap interval.
pub fn estimate_ase(batch: &SinrSampleBatch, density: f64, gamma0: f64) -> Result<Estimate> {
    let n = batch.values.len();
    if n == 0 {
        return Err(Error::InsufficientSamples);
    }
    let rate: Vec<f64> = batch
        .values
        .iter()
        .map(|&s| if s > gamma0 { (1.0 + s).ln() / LN_2 } else { 0.0 })
        .collect();
    let mean = rate.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed(batch.seed, 0xA5E));
    let mut boots: Vec<f64> = (0..1000)
        .map(|_| (0..n).map(|_| rate[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    boots.sort_by(f64::total_cmp);
    Ok(Estimate {
        value: density * mean,
        lo: density * boots[24],
        hi: density * boots[974],
        samples: n,
    })
}

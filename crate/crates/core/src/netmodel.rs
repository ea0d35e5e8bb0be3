//! Propagation, power control and SINR arithmetic shared by the analytical
//! engine and the Monte Carlo simulator.
//!
//! Powers are carried in linear mW and converted from dBm only at the edges.
//! Distances are in km. Path-loss constants `A` are referenced to
//! [`PathLossProfile::reference_km`], which is 1 m for the shipped 3GPP
//! profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts dBm to mW.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Converts mW to dBm.
pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Converts a dB ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear ratio to dB.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Line-of-sight state of a single link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PropagationCondition {
    Los,
    Nlos,
}

impl PropagationCondition {
    pub const ALL: [PropagationCondition; 2] = [PropagationCondition::Los, PropagationCondition::Nlos];

    pub fn opposite(self) -> Self {
        match self {
            PropagationCondition::Los => PropagationCondition::Nlos,
            PropagationCondition::Nlos => PropagationCondition::Los,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PropagationCondition::Los => 0,
            PropagationCondition::Nlos => 1,
        }
    }
}

/// One piece of a piecewise power-law path-loss model. The piece covers
/// distances up to `end_km` (inclusive); the last piece must use `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub end_km: f64,
    pub a_los: f64,
    pub alpha_los: f64,
    pub a_nlos: f64,
    pub alpha_nlos: f64,
}

impl PathSegment {
    fn coefficients(&self, cond: PropagationCondition) -> (f64, f64) {
        match cond {
            PropagationCondition::Los => (self.a_los, self.alpha_los),
            PropagationCondition::Nlos => (self.a_nlos, self.alpha_nlos),
        }
    }
}

/// Piecewise LoS/NLoS attenuation law together with a linear LoS probability
/// that falls from 1 at `r = 0` to 0 at `los_cutoff_km`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossProfile {
    segments: Vec<PathSegment>,
    los_cutoff_km: f64,
    reference_km: f64,
}

impl PathLossProfile {
    pub fn new(segments: Vec<PathSegment>, los_cutoff_km: f64, reference_km: f64) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidParameter("path-loss profile needs at least one segment".into()));
        }
        let mut prev = 0.0;
        for (i, s) in segments.iter().enumerate() {
            if !(s.end_km > prev) {
                return Err(Error::InvalidParameter(format!(
                    "segment {i}: break distances must be strictly increasing"
                )));
            }
            prev = s.end_km;
            for (name, v) in [
                ("a_los", s.a_los),
                ("alpha_los", s.alpha_los),
                ("a_nlos", s.a_nlos),
                ("alpha_nlos", s.alpha_nlos),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidParameter(format!("segment {i}: {name} must be positive and finite")));
                }
            }
        }
        if segments.last().map(|s| s.end_km) != Some(f64::INFINITY) {
            return Err(Error::InvalidParameter("last segment must extend to infinity".into()));
        }
        if !(los_cutoff_km > 0.0) || !(reference_km > 0.0 && reference_km.is_finite()) {
            return Err(Error::InvalidParameter(
                "LoS cutoff and reference distance must be positive".into(),
            ));
        }
        Ok(PathLossProfile {
            segments,
            los_cutoff_km,
            reference_km,
        })
    }

    /// Single power law per condition, the form used by the 3GPP profiles.
    pub fn single_slope(
        a_los: f64,
        alpha_los: f64,
        a_nlos: f64,
        alpha_nlos: f64,
        los_cutoff_km: f64,
        reference_km: f64,
    ) -> Result<Self> {
        Self::new(
            vec![PathSegment {
                end_km: f64::INFINITY,
                a_los,
                alpha_los,
                a_nlos,
                alpha_nlos,
            }],
            los_cutoff_km,
            reference_km,
        )
    }

    /// BS-to-UE link: A_BL = 10^-3.08, alpha_BL = 2.42, A_BN = 10^-0.27,
    /// alpha_BN = 4.28, d_B = 0.3 km, constants referenced to 1 m.
    pub fn bs_to_ue_3gpp() -> Self {
        Self::single_slope(10f64.powf(-3.08), 2.42, 10f64.powf(-0.27), 4.28, 0.3, 1e-3)
            .expect("static profile")
    }

    /// UE-to-UE link: A_DL = 10^-3.845, alpha_dL = 2, A_DN = 10^-5.578,
    /// alpha_dN = 4, d_D = 0.1 km, constants referenced to 1 m.
    pub fn ue_to_ue_3gpp() -> Self {
        Self::single_slope(10f64.powf(-3.845), 2.0, 10f64.powf(-5.578), 4.0, 0.1, 1e-3)
            .expect("static profile")
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn los_cutoff_km(&self) -> f64 {
        self.los_cutoff_km
    }

    pub fn reference_km(&self) -> f64 {
        self.reference_km
    }

    pub fn is_single_slope(&self) -> bool {
        self.segments.len() == 1
    }

    /// `(A, alpha)` of the piece containing `r`.
    pub fn coefficients_at(&self, cond: PropagationCondition, r: f64) -> (f64, f64) {
        self.segment_at(r).coefficients(cond)
    }

    fn segment_at(&self, r: f64) -> &PathSegment {
        self.segments
            .iter()
            .find(|s| r <= s.end_km)
            .unwrap_or_else(|| self.segments.last().expect("non-empty"))
    }

    /// Linear LoS probability `1 - r / cutoff`, clamped to zero past the cutoff.
    pub fn los_probability(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain {
                what: "distance",
                value: r,
                expected: "r >= 0",
            });
        }
        Ok(self.los_probability_unchecked(r))
    }

    #[inline]
    pub(crate) fn los_probability_unchecked(&self, r: f64) -> f64 {
        if r >= self.los_cutoff_km {
            0.0
        } else {
            1.0 - r / self.los_cutoff_km
        }
    }

    /// Probability of `cond` at distance `r`.
    pub fn condition_probability(&self, cond: PropagationCondition, r: f64) -> Result<f64> {
        let p = self.los_probability(r)?;
        Ok(match cond {
            PropagationCondition::Los => p,
            PropagationCondition::Nlos => 1.0 - p,
        })
    }

    /// Linear gain `A (r / r_ref)^-alpha` of the piece containing `r`.
    pub fn path_gain(&self, cond: PropagationCondition, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Err(Error::Singularity(r));
        }
        if !(r > 0.0) {
            return Err(Error::Domain {
                what: "distance",
                value: r,
                expected: "r > 0",
            });
        }
        Ok(self.gain_unchecked(cond, r))
    }

    #[inline]
    pub(crate) fn gain_unchecked(&self, cond: PropagationCondition, r: f64) -> f64 {
        let (a, alpha) = self.coefficients_at(cond, r);
        a * (r / self.reference_km).powf(-alpha)
    }

    /// Inverse of [`path_gain`](Self::path_gain): the distance at which the
    /// unshadowed gain of `cond` equals `gain`. Gains inside a jump between two
    /// pieces resolve to the break distance.
    pub fn distance_for_gain(&self, cond: PropagationCondition, gain: f64) -> f64 {
        if gain <= 0.0 {
            return f64::INFINITY;
        }
        if gain.is_infinite() {
            return 0.0;
        }
        let mut start = 0.0;
        for s in &self.segments {
            let (a, alpha) = s.coefficients(cond);
            let r = self.reference_km * (gain / a).powf(-1.0 / alpha);
            if r <= s.end_km {
                return r.max(start);
            }
            start = s.end_km;
        }
        start
    }

    /// Local path-loss exponent at `r`.
    pub fn exponent_at(&self, cond: PropagationCondition, r: f64) -> f64 {
        self.coefficients_at(cond, r).1
    }
}

/// Scalar parameters of one scenario. Powers in dBm, densities per km^2,
/// shadowing standard deviations in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub lambda_b: f64,
    pub lambda_u: f64,
    pub p_b: f64,
    pub p_d: f64,
    pub p_0: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub gamma_0: f64,
    pub rho: f64,
    pub sigma_shadow_bs: f64,
    pub sigma_shadow_ue: f64,
    pub noise_bs: f64,
    pub noise_ue: f64,
    pub bandwidth: f64,
    pub carrier_freq: f64,
    /// Optional ceiling on the channel-inversion transmit power, dBm.
    pub tx_power_cap: Option<f64>,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            lambda_b: 5.0,
            lambda_u: 200.0,
            p_b: 46.0,
            p_d: 10.0,
            p_0: -70.0,
            epsilon: 0.8,
            beta: -50.0,
            gamma_0: 0.0,
            rho: 0.1,
            sigma_shadow_bs: 8.0,
            sigma_shadow_ue: 7.0,
            noise_bs: -114.0,
            noise_ue: -95.0,
            bandwidth: 10e6,
            carrier_freq: 2e9,
            tx_power_cap: None,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.lambda_b > 0.0 && self.lambda_b.is_finite()) {
            return bad("lambda_b must be positive");
        }
        if !(self.lambda_u > 0.0 && self.lambda_u.is_finite()) {
            return bad("lambda_u must be positive");
        }
        if self.lambda_u < self.lambda_b {
            return bad("lambda_u must be at least lambda_b (fully loaded network)");
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad("epsilon must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(self.sigma_shadow_bs >= 0.0) || !(self.sigma_shadow_ue >= 0.0) {
            return bad("shadowing standard deviations must be non-negative");
        }
        for (name, v) in [
            ("p_b", self.p_b),
            ("p_d", self.p_d),
            ("p_0", self.p_0),
            ("beta", self.beta),
            ("gamma_0", self.gamma_0),
            ("noise_bs", self.noise_bs),
            ("noise_ue", self.noise_ue),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if let Some(cap) = self.tx_power_cap {
            if !cap.is_finite() {
                return bad("tx_power_cap must be finite");
            }
        }
        Ok(())
    }

    pub fn p_b_mw(&self) -> f64 {
        dbm_to_mw(self.p_b)
    }

    pub fn p_d_mw(&self) -> f64 {
        dbm_to_mw(self.p_d)
    }

    pub fn p_0_mw(&self) -> f64 {
        dbm_to_mw(self.p_0)
    }

    pub fn beta_mw(&self) -> f64 {
        dbm_to_mw(self.beta)
    }

    pub fn noise_bs_mw(&self) -> f64 {
        dbm_to_mw(self.noise_bs)
    }

    pub fn noise_ue_mw(&self) -> f64 {
        dbm_to_mw(self.noise_ue)
    }

    pub fn tx_power_cap_mw(&self) -> Option<f64> {
        self.tx_power_cap.map(dbm_to_mw)
    }

    /// Smallest BS-to-UE gain (shadowing included) that puts a UE in cellular mode.
    pub fn mode_gain_threshold(&self) -> f64 {
        self.beta_mw() / self.p_b_mw()
    }

    /// Density of D2D transmitters that are active in a slot, given the
    /// cellular-mode probability `q`: half of the D2D UEs transmit and a
    /// fraction `rho` of those hold the requested content.
    pub fn active_d2d_density(&self, q: f64) -> f64 {
        0.5 * self.rho * (1.0 - q) * self.lambda_u
    }

    /// Channel-inversion transmit power for a CU whose serving-link gain
    /// (path loss and shadowing together) is `serving_gain`.
    #[inline]
    pub fn cu_power_from_gain(&self, serving_gain: f64) -> f64 {
        let p = self.p_0_mw() * serving_gain.powf(-self.epsilon);
        match self.tx_power_cap_mw() {
            Some(cap) => p.min(cap),
            None => p,
        }
    }
}

/// A scenario: scalar parameters plus the two link profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: NetworkParams,
    pub bs_link: PathLossProfile,
    pub ue_link: PathLossProfile,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            params: NetworkParams::default(),
            bs_link: PathLossProfile::bs_to_ue_3gpp(),
            ue_link: PathLossProfile::ue_to_ue_3gpp(),
        }
    }
}

impl Scenario {
    pub fn new(params: NetworkParams) -> Self {
        Scenario {
            params,
            ..Scenario::default()
        }
    }
}

fn check_shadow_and_distance(shadow: f64, r: f64) -> Result<()> {
    if !(shadow > 0.0 && shadow.is_finite()) {
        return Err(Error::Domain {
            what: "shadowing",
            value: shadow,
            expected: "H > 0",
        });
    }
    if r == 0.0 {
        return Err(Error::Singularity(r));
    }
    if !(r > 0.0) {
        return Err(Error::Domain {
            what: "distance",
            value: r,
            expected: "r > 0",
        });
    }
    Ok(())
}

/// Downlink power (mW) received by a UE from a BS at distance `r` with
/// shadowing `shadow`.
pub fn received_power_dl(
    params: &NetworkParams,
    profile: &PathLossProfile,
    shadow: f64,
    r: f64,
    cond: PropagationCondition,
) -> Result<f64> {
    check_shadow_and_distance(shadow, r)?;
    Ok(params.p_b_mw() * shadow * profile.gain_unchecked(cond, r))
}

/// Uplink transmit power (mW) of a CU under fractional channel inversion,
/// `P0 (r^alpha / (H A))^epsilon`.
pub fn cu_transmit_power(
    params: &NetworkParams,
    profile: &PathLossProfile,
    shadow: f64,
    r: f64,
    cond: PropagationCondition,
) -> Result<f64> {
    check_shadow_and_distance(shadow, r)?;
    if !(params.epsilon > 0.0 && params.epsilon <= 1.0) {
        return Err(Error::Domain {
            what: "epsilon",
            value: params.epsilon,
            expected: "0 < epsilon <= 1",
        });
    }
    Ok(params.cu_power_from_gain(shadow * profile.gain_unchecked(cond, r)))
}

/// `signal / (i_cellular + i_d2d + noise)`.
pub fn compute_sinr(signal: f64, i_cellular: f64, i_d2d: f64, noise: f64) -> f64 {
    signal / (i_cellular + i_d2d + noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use PropagationCondition::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn los_probability_examples() {
        let bs = PathLossProfile::bs_to_ue_3gpp();
        assert!((bs.los_probability(0.15).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(bs.los_probability(0.3).unwrap(), 0.0);
        assert_eq!(bs.los_probability(2.0).unwrap(), 0.0);
        let ue = PathLossProfile::ue_to_ue_3gpp();
        assert_eq!(ue.los_probability(0.0).unwrap(), 1.0);
        assert!(matches!(bs.los_probability(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn path_gain_examples() {
        let bs = PathLossProfile::bs_to_ue_3gpp();
        let ue = PathLossProfile::ue_to_ue_3gpp();
        // constants are referenced to 1 m
        assert!(close(bs.path_gain(Los, 1e-3).unwrap(), 10f64.powf(-3.08), 1e-12));
        assert!(close(ue.path_gain(Nlos, 1e-3).unwrap(), 10f64.powf(-5.578), 1e-12));
        let g1 = bs.path_gain(Los, 0.2).unwrap();
        let g2 = bs.path_gain(Los, 0.4).unwrap();
        assert!(close(g2 / g1, 2f64.powf(-2.42), 1e-12));
        assert!(matches!(bs.path_gain(Los, 0.0), Err(Error::Singularity(_))));
    }

    #[test]
    fn km_reference_reproduces_table_constant_at_one_km() {
        let p = PathLossProfile::single_slope(10f64.powf(-3.08), 2.42, 10f64.powf(-0.27), 4.28, 0.3, 1.0).unwrap();
        assert!(close(p.path_gain(Los, 1.0).unwrap(), 10f64.powf(-3.08), 1e-12));
    }

    #[test]
    fn received_power_examples() {
        let params = NetworkParams::default();
        let bs = PathLossProfile::bs_to_ue_3gpp();
        let r = bs.reference_km();
        let p = received_power_dl(&params, &bs, 1.0, r, Los).unwrap();
        assert!(close(p, 10f64.powf(4.6) * 10f64.powf(-3.08), 1e-12));
        let half = received_power_dl(&params, &bs, 0.5, 0.2, Nlos).unwrap();
        let full = received_power_dl(&params, &bs, 1.0, 0.2, Nlos).unwrap();
        assert!(close(half, 0.5 * full, 1e-14));
        // equivalence transform: shadowing absorbed into distance
        let h: f64 = 3.7;
        let r = 0.25;
        let alpha = 4.28;
        let r_eq = h.powf(-1.0 / alpha) * r;
        let direct = received_power_dl(&params, &bs, h, r, Nlos).unwrap();
        let eq = params.p_b_mw() * bs.path_gain(Nlos, r_eq).unwrap();
        assert!(close(direct, eq, 1e-12));
    }

    #[test]
    fn channel_inversion_examples() {
        let bs = PathLossProfile::bs_to_ue_3gpp();
        let mut params = NetworkParams {
            epsilon: 1.0,
            ..NetworkParams::default()
        };
        for (h, r, c) in [(1.0, 0.1, Los), (0.2, 0.7, Nlos), (5.0, 0.05, Nlos)] {
            let pc = cu_transmit_power(&params, &bs, h, r, c).unwrap();
            let rx = pc * h * bs.path_gain(c, r).unwrap();
            assert!(close(rx, params.p_0_mw(), 1e-12));
        }
        params.epsilon = 0.8;
        // a serving gain of 1e-6 leaves P0 * 1e-1.2 at the BS
        let r = bs.distance_for_gain(Nlos, 1e-6);
        let pc = cu_transmit_power(&params, &bs, 1.0, r, Nlos).unwrap();
        assert!(close(pc * 1e-6, params.p_0_mw() * 10f64.powf(-1.2), 1e-9));
        let pc = cu_transmit_power(&params, &bs, 1.0, bs.reference_km(), Los).unwrap();
        assert!(close(pc, params.p_0_mw() * 10f64.powf(-3.08f64).powf(-0.8), 1e-12));
    }

    #[test]
    fn power_cap_is_off_by_default() {
        let params = NetworkParams::default();
        assert!(params.tx_power_cap.is_none());
        let capped = NetworkParams {
            tx_power_cap: Some(23.0),
            ..params.clone()
        };
        assert!(close(capped.cu_power_from_gain(1e-15), dbm_to_mw(23.0), 1e-12));
        assert!(params.cu_power_from_gain(1e-15) > dbm_to_mw(23.0));
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(compute_sinr(1.0, 0.0, 0.0, 1.0), 1.0);
        assert_eq!(compute_sinr(10.0, 5.0, 4.0, 1.0), 1.0);
        assert_eq!(compute_sinr(0.0, 3.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn distance_for_gain_inverts_path_gain() {
        let seg = vec![
            PathSegment {
                end_km: 0.05,
                a_los: 1e-4,
                alpha_los: 2.0,
                a_nlos: 1e-5,
                alpha_nlos: 3.0,
            },
            PathSegment {
                end_km: f64::INFINITY,
                a_los: 1e-4 * 50f64.powf(-2.0) * 50f64.powf(3.5),
                alpha_los: 3.5,
                a_nlos: 1e-5 * 50f64.powf(-3.0) * 50f64.powf(4.0),
                alpha_nlos: 4.0,
            },
        ];
        let p = PathLossProfile::new(seg, 0.1, 1e-3).unwrap();
        for &r in &[0.001, 0.02, 0.05, 0.07, 1.3, 9.0] {
            for c in PropagationCondition::ALL {
                let g = p.path_gain(c, r).unwrap();
                assert!(close(p.distance_for_gain(c, g), r, 1e-9), "r={r} c={c:?}");
            }
        }
    }

    #[test]
    fn profile_validation() {
        assert!(PathLossProfile::single_slope(1.0, 2.0, 1.0, 4.0, 0.1, 1.0).is_ok());
        assert!(PathLossProfile::single_slope(-1.0, 2.0, 1.0, 4.0, 0.1, 1.0).is_err());
        assert!(PathLossProfile::single_slope(1.0, 0.0, 1.0, 4.0, 0.1, 1.0).is_err());
        let seg = PathSegment {
            end_km: 1.0,
            a_los: 1.0,
            alpha_los: 2.0,
            a_nlos: 1.0,
            alpha_nlos: 3.0,
        };
        assert!(PathLossProfile::new(vec![seg], 0.1, 1.0).is_err());
        assert!(PathLossProfile::new(vec![], 0.1, 1.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(NetworkParams::default().validate().is_ok());
        let bad = NetworkParams {
            epsilon: 1.5,
            ..NetworkParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = NetworkParams {
            lambda_u: 1.0,
            ..NetworkParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = NetworkParams {
            rho: -0.1,
            ..NetworkParams::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn los_probability_non_increasing(a in 0.0f64..1.0, b in 0.0f64..1.0) {
                let p = PathLossProfile::bs_to_ue_3gpp();
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let (plo, phi) = (p.los_probability(lo).unwrap(), p.los_probability(hi).unwrap());
                prop_assert!(plo >= phi);
                prop_assert!((0.0..=1.0).contains(&plo));
            }

            #[test]
            fn gain_strictly_decreasing(a in 1e-4f64..5.0, f in 1.001f64..10.0) {
                let p = PathLossProfile::ue_to_ue_3gpp();
                for c in PropagationCondition::ALL {
                    prop_assert!(p.path_gain(c, a * f).unwrap() < p.path_gain(c, a).unwrap());
                }
            }

            #[test]
            fn equivalence_identity(h in 0.01f64..100.0, r in 1e-3f64..3.0) {
                let p = PathLossProfile::bs_to_ue_3gpp();
                for c in PropagationCondition::ALL {
                    let alpha = p.exponent_at(c, r);
                    let lhs = h * p.path_gain(c, r).unwrap();
                    let rhs = p.path_gain(c, h.powf(-1.0 / alpha) * r).unwrap();
                    prop_assert!((lhs - rhs).abs() <= 1e-11 * lhs);
                }
            }

            #[test]
            fn sinr_scale_invariant(s in 0.0f64..10.0, a in 0.0f64..10.0, b in 0.0f64..10.0,
                                    n in 1e-3f64..10.0, k in 1e-6f64..1e6) {
                let x = compute_sinr(s, a, b, n);
                let y = compute_sinr(k * s, k * a, k * b, k * n);
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1e-300));
            }

            #[test]
            fn full_inversion_constant(h in 0.01f64..100.0, r in 1e-3f64..3.0, los in any::<bool>()) {
                let params = NetworkParams { epsilon: 1.0, ..NetworkParams::default() };
                let p = PathLossProfile::bs_to_ue_3gpp();
                let c = if los { Los } else { Nlos };
                let pc = cu_transmit_power(&params, &p, h, r, c).unwrap();
                let rx = pc * h * p.path_gain(c, r).unwrap();
                prop_assert!((rx / params.p_0_mw() - 1.0).abs() < 1e-10);
            }
        }
    }
}

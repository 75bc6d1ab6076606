//! Physics of an inverted, instrumented squeeze bottle held in a parallel gripper.
//!
//! The model is lumped: gripper squeeze displacement shrinks the internal volume,
//! the trapped air obeys Boyle's law between equalizations, the liquid column adds
//! a hydrostatic head at the orifice and the orifice passes a laminar flow
//! proportional to the positive gauge pressure there.
//!
//! Units used throughout: volumes in mL, lengths in mm (gripper) or cm (liquid
//! column), pressures in Pa, masses in g, times in s.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BottleError {
    #[error("trapped air volume is non-positive ({air_volume} mL): squeezed past the liquid hard stop")]
    AirVolumeExhausted { air_volume: f64 },
    #[error("fill volume {fill} mL exceeds bottle capacity {capacity} mL")]
    Overfill { fill: f64, capacity: f64 },
    #[error("refill requires the bottle to be upright")]
    RefillInverted,
    #[error("invalid bottle parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BottleParams {
    /// Unsqueezed internal volume, mL.
    pub total_volume: f64,
    /// Liquid column cross-section, cm².
    pub cross_section_area: f64,
    /// Volume displaced per mm of squeeze at first contact, mL/mm.
    pub compliance: f64,
    /// Quadratic stiffening term of the displacement curve, mL/mm².
    /// Displaced volume is `compliance·δ + compliance_growth·δ²`.
    pub compliance_growth: f64,
    /// Gripper width at first contact with the bottle, mm.
    pub contact_width: f64,
    /// Orifice conductance, mL/(s·kPa) of gauge pressure.
    pub flow_coefficient: f64,
    /// g/mL.
    pub liquid_density: f64,
    /// Pa.
    pub atmospheric_pressure: f64,
    /// Additive Gaussian noise on the pressure sensor, Pa.
    pub sensor_noise_std: f64,
    /// Scale quantization, g.
    pub scale_resolution: f64,
    /// Physics integration step, s.
    pub sim_dt: f64,
    /// Gripper slew limit, mm/s.
    pub max_gripper_speed: f64,
    /// Liquid volume after a refill, mL.
    pub fill_volume: f64,
}

impl Default for BottleParams {
    fn default() -> Self {
        Self {
            total_volume: 250.0,
            cross_section_area: 20.0,
            compliance: 1.5,
            compliance_growth: 0.05,
            contact_width: 50.0,
            flow_coefficient: 1.22 / 1.2,
            liquid_density: 1.0,
            atmospheric_pressure: 101_325.0,
            sensor_noise_std: 5.0,
            scale_resolution: 0.1,
            sim_dt: 1e-3,
            max_gripper_speed: 10.0,
            fill_volume: 210.0,
        }
    }
}

impl BottleParams {
    pub fn validate(&self) -> Result<(), BottleError> {
        let positive = [
            ("total_volume", self.total_volume),
            ("cross_section_area", self.cross_section_area),
            ("compliance", self.compliance),
            ("flow_coefficient", self.flow_coefficient),
            ("liquid_density", self.liquid_density),
            ("atmospheric_pressure", self.atmospheric_pressure),
            ("scale_resolution", self.scale_resolution),
            ("max_gripper_speed", self.max_gripper_speed),
            ("contact_width", self.contact_width),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(BottleError::InvalidParam { name, reason: format!("must be > 0, got {value}") });
            }
        }
        if !(self.sim_dt > 0.0 && self.sim_dt <= 1.0 / 15.0) {
            return Err(BottleError::InvalidParam {
                name: "sim_dt",
                reason: format!("must lie in (0, 1/15], got {}", self.sim_dt),
            });
        }
        if self.compliance_growth < 0.0 || self.sensor_noise_std < 0.0 {
            return Err(BottleError::InvalidParam {
                name: "compliance_growth/sensor_noise_std",
                reason: "must be non-negative".into(),
            });
        }
        if !(0.0..=self.total_volume).contains(&self.fill_volume) {
            return Err(BottleError::Overfill { fill: self.fill_volume, capacity: self.total_volume });
        }
        Ok(())
    }

    /// Squeeze displacement for a gripper width, mm.
    pub fn squeeze_displacement(&self, gripper_width: f64) -> f64 {
        (self.contact_width - gripper_width).max(0.0)
    }

    /// Hydrostatic head of a liquid volume at the orifice, Pa.
    pub fn hydrostatic_pressure(&self, liquid_volume: f64) -> f64 {
        // ρ[g/mL]·1000 → kg/m³, h[cm]/100 → m
        self.liquid_density * 1000.0 * GRAVITY * (liquid_volume / self.cross_section_area) / 100.0
    }

    /// Orifice flow for a given gauge pressure, g/s.
    pub fn orifice_flow(&self, gauge: f64) -> f64 {
        self.liquid_density * self.flow_coefficient * gauge.max(0.0) / 1000.0
    }
}

/// Orifice conductance that yields `target_flow` g/s at `gauge` Pa.
pub fn flow_coefficient_for(target_flow: f64, gauge: f64, liquid_density: f64) -> f64 {
    target_flow / (liquid_density * gauge / 1000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleState {
    pub liquid_volume: f64,
    /// P_air·V_air fixed at the last equalization, Pa·mL.
    pub air_constant: f64,
    pub gripper_width: f64,
    pub inverted: bool,
    /// Cumulative dispensed mass over the bottle's lifetime, g.
    pub dispensed_mass: f64,
    pub sim_time: f64,
}

impl BottleState {
    /// Upright, equalized bottle filled to `params.fill_volume` with a loose grasp.
    pub fn filled(params: &BottleParams) -> Self {
        Self::with_volume(params, params.fill_volume)
    }

    pub fn with_volume(params: &BottleParams, liquid_volume: f64) -> Self {
        let mut state = Self {
            liquid_volume,
            air_constant: 0.0,
            gripper_width: params.contact_width,
            inverted: false,
            dispensed_mass: 0.0,
            sim_time: 0.0,
        };
        state.equalize(params);
        state
    }

    /// Internal volume behind the gripper, clamped below at the liquid volume.
    pub fn internal_volume(&self, params: &BottleParams) -> f64 {
        let d = params.squeeze_displacement(self.gripper_width);
        let v = params.total_volume - params.compliance * d - params.compliance_growth * d * d;
        v.max(self.liquid_volume)
    }

    pub fn air_volume(&self, params: &BottleParams) -> f64 {
        self.internal_volume(params) - self.liquid_volume
    }

    /// Absolute trapped-air pressure, Pa.
    pub fn air_pressure(&self, params: &BottleParams) -> Result<f64, BottleError> {
        let air_volume = self.air_volume(params);
        if air_volume <= 0.0 {
            return Err(BottleError::AirVolumeExhausted { air_volume });
        }
        Ok(self.air_constant / air_volume)
    }

    /// Gauge pressure at the opening, Pa. Includes the liquid head only while
    /// inverted; upright the sensor sits in the air pocket.
    pub fn gauge_pressure(&self, params: &BottleParams) -> Result<f64, BottleError> {
        let air = self.air_pressure(params)? - params.atmospheric_pressure;
        if self.inverted {
            Ok(air + params.hydrostatic_pressure(self.liquid_volume))
        } else {
            Ok(air)
        }
    }

    /// Resets trapped air to atmospheric at the current geometry.
    pub fn equalize(&mut self, params: &BottleParams) {
        self.air_constant = params.atmospheric_pressure * self.air_volume(params);
    }

    /// Advances one `params.sim_dt`. Returns the outflow rate in g/s.
    pub fn step(&mut self, params: &BottleParams, commanded_width: f64) -> Result<f64, BottleError> {
        self.advance(params, commanded_width, params.sim_dt)
    }

    /// Explicit Euler step of length `dt`. Returns the outflow rate over the step, g/s.
    pub fn advance(&mut self, params: &BottleParams, commanded_width: f64, dt: f64) -> Result<f64, BottleError> {
        let max_move = params.max_gripper_speed * dt;
        self.gripper_width += (commanded_width - self.gripper_width).clamp(-max_move, max_move);
        self.sim_time += dt;

        if !self.inverted || self.liquid_volume <= 0.0 {
            // upright: flip-top open; inverted and dry: air passes the orifice freely
            self.equalize(params);
            return Ok(0.0);
        }
        let gauge = self.gauge_pressure(params)?;
        if gauge <= 0.0 {
            return Ok(0.0);
        }
        let rate_ml = params.flow_coefficient * gauge / 1000.0;
        let dv = (rate_ml * dt).min(self.liquid_volume);
        self.liquid_volume -= dv;
        self.dispensed_mass += params.liquid_density * dv;
        Ok(params.liquid_density * dv / dt)
    }

    /// Absolute pressure reading with additive Gaussian noise.
    pub fn read_sensor<R: Rng + ?Sized>(&self, params: &BottleParams, rng: &mut R) -> Result<f64, BottleError> {
        let gauge = self.gauge_pressure(params)?;
        let noise = if params.sensor_noise_std > 0.0 {
            Normal::new(0.0, params.sensor_noise_std).expect("validated std").sample(rng)
        } else {
            0.0
        };
        Ok(params.atmospheric_pressure + gauge + noise)
    }

    /// Turns the bottle. Going upright opens the air path and equalizes;
    /// inverting keeps the trapped air as-is.
    pub fn flip(&mut self, params: &BottleParams, to_inverted: bool) {
        self.inverted = to_inverted;
        if !to_inverted {
            self.equalize(params);
        }
    }

    /// Puts the gripper back at first contact. Upright, the bottle re-inflates through the opening.
    pub fn release(&mut self, params: &BottleParams) {
        self.gripper_width = params.contact_width;
        if !self.inverted {
            self.equalize(params);
        }
    }

    /// Refills to `fill_volume`; the lifetime dispensed counter is untouched.
    pub fn refill(&mut self, params: &BottleParams, fill_volume: f64) -> Result<(), BottleError> {
        if fill_volume > params.total_volume || fill_volume < 0.0 {
            return Err(BottleError::Overfill { fill: fill_volume, capacity: params.total_volume });
        }
        if self.inverted {
            return Err(BottleError::RefillInverted);
        }
        self.gripper_width = params.contact_width;
        self.liquid_volume = fill_volume;
        self.equalize(params);
        Ok(())
    }
}

/// Empty check from readings taken upright and right after inverting.
/// Strict inequality: a difference equal to `tolerance` counts as liquid present.
pub fn is_empty(p_before_flip: f64, p_after_flip: f64, tolerance: f64) -> bool {
    (p_after_flip - p_before_flip).abs() < tolerance
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear_params() -> BottleParams {
        BottleParams { compliance_growth: 0.0, ..BottleParams::default() }
    }

    #[test]
    fn internal_volume_cases() {
        let p = linear_params();
        let mut s = BottleState::with_volume(&p, 100.0);
        assert_eq!(s.internal_volume(&p), 250.0);
        s.gripper_width = p.contact_width - 10.0;
        assert!((s.internal_volume(&p) - 235.0).abs() < 1e-12);
        s.gripper_width = 0.0;
        // 250 - 75 = 175 > 100, push the liquid higher to hit the stop
        s.liquid_volume = 200.0;
        assert_eq!(s.internal_volume(&p), 200.0);
        assert!(matches!(s.gauge_pressure(&p), Err(BottleError::AirVolumeExhausted { .. })));
    }

    #[test]
    fn growth_term_adds_quadratic_displacement() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 100.0);
        s.gripper_width = p.contact_width - 10.0;
        assert!((s.internal_volume(&p) - (250.0 - 15.0 - 5.0)).abs() < 1e-12);
    }

    #[test]
    fn gauge_after_equalize_then_invert_is_hydrostatic() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 100.0);
        s.flip(&p, false);
        assert!(s.gauge_pressure(&p).unwrap().abs() < 1e-9);
        s.flip(&p, true);
        let g = s.gauge_pressure(&p).unwrap();
        assert!((g - p.hydrostatic_pressure(100.0)).abs() < 1e-9);
        assert!((g - 490.5).abs() < 0.01);
    }

    #[test]
    fn empty_bottle_has_zero_gauge() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 0.0);
        s.flip(&p, true);
        assert_eq!(s.gauge_pressure(&p).unwrap(), 0.0);
    }

    #[test]
    fn no_flow_when_gauge_is_non_positive() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 100.0);
        s.flip(&p, true);
        // suck the air pocket below atmospheric by more than the head
        s.air_constant *= 0.9;
        let before = s.liquid_volume;
        let q = s.step(&p, s.gripper_width).unwrap();
        assert_eq!(q, 0.0);
        assert_eq!(s.liquid_volume, before);
    }

    #[test]
    fn flow_matches_coefficient_at_setpoint_gauge() {
        let p = BottleParams::default();
        assert!((p.orifice_flow(1200.0) - 1.22).abs() < 1e-12);
    }

    #[test]
    fn gauge_strictly_decreases_while_flowing() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 150.0);
        s.flip(&p, true);
        let w = s.gripper_width;
        let g0 = s.gauge_pressure(&p).unwrap();
        s.step(&p, w).unwrap();
        let g1 = s.gauge_pressure(&p).unwrap();
        s.step(&p, w).unwrap();
        let g2 = s.gauge_pressure(&p).unwrap();
        assert!(g0 > g1 && g1 > g2, "{g0} {g1} {g2}");
    }

    #[test]
    fn rest_equilibrium_balances_head() {
        let p = BottleParams::default();
        let mut s = BottleState::filled(&p);
        s.flip(&p, true);
        let w = s.gripper_width;
        for _ in 0..60_000 {
            s.step(&p, w).unwrap();
        }
        let g = s.gauge_pressure(&p).unwrap();
        assert!(g.abs() < 1e-3, "gauge {g}");
        let air = s.air_pressure(&p).unwrap() - p.atmospheric_pressure;
        assert!((air + p.hydrostatic_pressure(s.liquid_volume)).abs() < 1e-3);
    }

    #[test]
    fn gripper_slew_is_clamped() {
        let p = BottleParams::default();
        let mut s = BottleState::filled(&p);
        s.step(&p, 0.0).unwrap();
        assert!((s.gripper_width - (p.contact_width - p.max_gripper_speed * p.sim_dt)).abs() < 1e-12);
    }

    #[test]
    fn sensor_noise_free_upright_reads_atmospheric() {
        let p = BottleParams { sensor_noise_std: 0.0, ..BottleParams::default() };
        let s = BottleState::filled(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(s.read_sensor(&p, &mut rng).unwrap(), p.atmospheric_pressure);
    }

    #[test]
    fn sensor_noise_statistics() {
        let p = BottleParams::default();
        let s = BottleState::filled(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let reads: Vec<f64> = (0..10_000).map(|_| s.read_sensor(&p, &mut rng).unwrap()).collect();
        let mean = reads.iter().sum::<f64>() / reads.len() as f64;
        let var = reads.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (reads.len() - 1) as f64;
        let std = var.sqrt();
        assert!((4.8..=5.2).contains(&std), "std {std}");
    }

    #[test]
    fn sensor_is_deterministic_for_a_seed() {
        let p = BottleParams::default();
        let s = BottleState::filled(&p);
        let a = s.read_sensor(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = s.read_sensor(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn flips_are_idempotent() {
        let p = BottleParams::default();
        let mut s = BottleState::filled(&p);
        s.flip(&p, true);
        let once = s.clone();
        s.flip(&p, true);
        assert_eq!(s, once);
        s.flip(&p, false);
        let up = s.clone();
        s.flip(&p, false);
        assert_eq!(s, up);
    }

    #[test]
    fn empty_detection() {
        let p = BottleParams::default();
        assert!(is_empty(p.atmospheric_pressure, p.atmospheric_pressure + 1.0, 50.0));
        let head = p.hydrostatic_pressure(100.0);
        assert!(!is_empty(p.atmospheric_pressure, p.atmospheric_pressure + head, 50.0));
        assert!(!is_empty(1000.0, 1050.0, 50.0));
    }

    #[test]
    fn refill_cases() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 3.0);
        s.dispensed_mass = 42.0;
        s.refill(&p, 210.0).unwrap();
        assert_eq!(s.liquid_volume, 210.0);
        assert_eq!(s.gauge_pressure(&p).unwrap(), 0.0);
        assert_eq!(s.dispensed_mass, 42.0);
        s.refill(&p, 0.0).unwrap();
        assert_eq!(s.liquid_volume, 0.0);
        assert!(matches!(s.refill(&p, p.total_volume + 1.0), Err(BottleError::Overfill { .. })));
        s.flip(&p, true);
        assert_eq!(s.refill(&p, 10.0), Err(BottleError::RefillInverted));
    }

    #[test]
    fn dry_inverted_bottle_vents() {
        let p = BottleParams::default();
        let mut s = BottleState::with_volume(&p, 0.0);
        s.flip(&p, true);
        s.step(&p, 30.0).unwrap();
        s.step(&p, 30.0).unwrap();
        assert!(s.gauge_pressure(&p).unwrap().abs() < 1e-9);
    }
}

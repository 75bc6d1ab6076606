use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::bottle::{BottleError, BottleParams, BottleState};

/// Coefficients of the deployment-available proxies: grip force and a visual
/// flow estimate standing in for the camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingParams {
    /// Wall stiffness seen by the fingertip, N per mm of squeeze.
    pub grip_elastic: f64,
    /// Effective pad area pressed by gauge pressure, cm². Controls how much of
    /// the privileged pressure signal leaks into the tactile channel.
    pub grip_pad_area: f64,
    pub grip_noise_std: f64,
    /// First-order lag of the visual flow estimate, s.
    pub visual_lag: f64,
    pub visual_noise_std: f64,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            grip_elastic: 0.05,
            grip_pad_area: 10.0,
            grip_noise_std: 0.02,
            visual_lag: 0.15,
            visual_noise_std: 0.05,
        }
    }
}

/// Synthetic tactile reading, N. Never negative.
pub fn synth_grip_force<R: Rng + ?Sized>(
    state: &BottleState,
    bottle: &BottleParams,
    sensing: &SensingParams,
    rng: &mut R,
) -> Result<f64, BottleError> {
    let displacement = bottle.squeeze_displacement(state.gripper_width);
    let contact = displacement > 0.0;
    let gauge = if contact { state.gauge_pressure(bottle)? } else { 0.0 };
    // Pa · cm² → N
    let mut force = sensing.grip_elastic * displacement + gauge * sensing.grip_pad_area * 1e-4;
    if sensing.grip_noise_std > 0.0 {
        force += Normal::new(0.0, sensing.grip_noise_std).expect("validated std").sample(rng);
    }
    Ok(force.max(0.0))
}

/// Lagged, noisy view of the outflow rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVisualFilter {
    lag: f64,
    noise_std: f64,
    filtered: f64,
}

impl FlowVisualFilter {
    pub fn new(sensing: &SensingParams) -> Self {
        Self { lag: sensing.visual_lag, noise_std: sensing.visual_noise_std, filtered: 0.0 }
    }

    /// Feeds the true flow over an interval of length `dt`.
    pub fn update(&mut self, flow: f64, dt: f64) {
        if self.lag <= 0.0 {
            self.filtered = flow;
        } else {
            let a = (-dt / self.lag).exp();
            self.filtered = a * self.filtered + (1.0 - a) * flow;
        }
    }

    pub fn filtered(&self) -> f64 {
        self.filtered
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let noise = if self.noise_std > 0.0 {
            Normal::new(0.0, self.noise_std).expect("validated std").sample(rng)
        } else {
            0.0
        };
        (self.filtered + noise).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Absolute sensor read, Pa. Only the teacher may read it.
    pub privileged_pressure: f64,
    pub gripper_width: f64,
    pub flow_visual: f64,
    pub grip_force: f64,
    pub timestep_index: usize,
}

/// Deployment-available features in model input order.
pub const POLICY_FEATURES: [&str; 3] = ["gripper_width", "flow_visual", "grip_force"];

impl Observation {
    pub fn policy_features(&self) -> [f64; 3] {
        [self.gripper_width, self.flow_visual, self.grip_force]
    }
}

/// What an agent is handed each step. Pressure access is checked against the
/// agent's entitlement.
#[derive(Debug, Clone, Copy)]
pub struct ObservationView<'a> {
    obs: &'a Observation,
    privileged: bool,
    agent_id: &'a str,
}

impl<'a> ObservationView<'a> {
    pub fn new(obs: &'a Observation, privileged: bool, agent_id: &'a str) -> Self {
        Self { obs, privileged, agent_id }
    }

    pub fn pressure(&self) -> Result<f64, AgentError> {
        if self.privileged {
            Ok(self.obs.privileged_pressure)
        } else {
            Err(AgentError::PrivilegeViolation { agent: self.agent_id.to_string(), field: "pressure" })
        }
    }

    pub fn gripper_width(&self) -> f64 {
        self.obs.gripper_width
    }

    pub fn flow_visual(&self) -> f64 {
        self.obs.flow_visual
    }

    pub fn grip_force(&self) -> f64 {
        self.obs.grip_force
    }

    pub fn timestep_index(&self) -> usize {
        self.obs.timestep_index
    }

    pub fn policy_features(&self) -> [f64; 3] {
        self.obs.policy_features()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grip_force_zero_without_contact_or_noise() {
        let b = BottleParams::default();
        let s = SensingParams { grip_noise_std: 0.0, ..SensingParams::default() };
        let st = BottleState::filled(&b);
        let f = synth_grip_force(&st, &b, &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn grip_force_increases_with_displacement() {
        let b = BottleParams::default();
        let s = SensingParams { grip_noise_std: 0.0, ..SensingParams::default() };
        let mut st = BottleState::with_volume(&b, 50.0);
        let mut last = -1.0;
        for d in 1..10 {
            st.gripper_width = b.contact_width - d as f64;
            // hold gauge fixed at zero by equalizing upright
            st.equalize(&b);
            let f = synth_grip_force(&st, &b, &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert!(f > last);
            last = f;
        }
    }

    #[test]
    fn privilege_wall() {
        let obs = Observation {
            privileged_pressure: 101_000.0,
            gripper_width: 40.0,
            flow_visual: 1.0,
            grip_force: 2.0,
            timestep_index: 3,
        };
        assert_eq!(ObservationView::new(&obs, true, "pi").pressure().unwrap(), 101_000.0);
        let err = ObservationView::new(&obs, false, "policy").pressure().unwrap_err();
        assert!(matches!(err, AgentError::PrivilegeViolation { .. }));
    }

    #[test]
    fn visual_filter_converges_and_clamps() {
        let s = SensingParams { visual_noise_std: 0.0, ..SensingParams::default() };
        let mut f = FlowVisualFilter::new(&s);
        for _ in 0..1000 {
            f.update(1.5, 0.01);
        }
        assert!((f.filtered() - 1.5).abs() < 1e-9);
        let noisy = FlowVisualFilter::new(&SensingParams { visual_noise_std: 10.0, ..s });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..100).all(|_| noisy.sample(&mut rng) >= 0.0));
    }
}

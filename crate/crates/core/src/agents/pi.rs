use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, ObservationView, TrialStart};
use crate::SimRng;

/// PI gains with a leaky integrator. The error is taken in kPa and the output
/// is a width change in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PIConfig {
    /// mm/kPa
    pub kp: f64,
    /// mm/(kPa·s)
    pub ki: f64,
    /// Integral back-off factor in (0, 1].
    pub alpha: f64,
    /// Sample time, s. Must equal 1 / control_hz.
    pub ts: f64,
    /// Setpoint above P_rest, Pa.
    pub setpoint_offset: f64,
}

impl Default for PIConfig {
    fn default() -> Self {
        Self { kp: 0.2, ki: 1.0, alpha: 0.95, ts: 1.0 / 15.0, setpoint_offset: 1200.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PIState {
    /// I[k], mm.
    pub integral_term: f64,
    /// Pa, absolute.
    pub setpoint: f64,
}

impl PIState {
    pub fn for_trial(cfg: &PIConfig, p_rest: f64) -> Self {
        Self { integral_term: 0.0, setpoint: p_rest + cfg.setpoint_offset }
    }
}

/// One controller update. Returns the width change (positive u squeezes, so
/// the action is −u) and the next state.
pub fn pi_update(cfg: &PIConfig, st: &PIState, pressure: f64) -> (f64, PIState) {
    let e = (st.setpoint - pressure) / 1000.0;
    let integral_term = cfg.alpha * st.integral_term + cfg.ki * cfg.ts * e;
    let u = cfg.kp * e + integral_term;
    (-u, PIState { integral_term, ..*st })
}

/// The instrumentation-exploiting teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct PiAgent {
    cfg: PIConfig,
    state: PIState,
}

impl PiAgent {
    pub fn new(cfg: PIConfig) -> Self {
        Self { cfg, state: PIState::default() }
    }

    pub fn state(&self) -> &PIState {
        &self.state
    }
}

impl Agent for PiAgent {
    fn id(&self) -> String {
        "pi".into()
    }

    fn privileged(&self) -> bool {
        true
    }

    fn begin_trial(&mut self, start: &TrialStart) {
        self.state = PIState::for_trial(&self.cfg, start.p_rest);
    }

    fn act(&mut self, obs: &ObservationView<'_>, _rng: &mut SimRng) -> Result<f64, AgentError> {
        let (action, next) = pi_update(&self.cfg, &self.state, obs.pressure()?);
        self.state = next;
        Ok(action)
    }
}

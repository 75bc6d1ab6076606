use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, InitSchedule, ObservationView, TrialStart};
use crate::SimRng;

/// Human-behavior model used in place of a live teleoperator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateTeleopConfig {
    /// s
    pub reaction_delay: f64,
    /// g/s
    pub target_flow: f64,
    /// g/s
    pub deadband: f64,
    /// mm per (g/s) of flow error
    pub correction_gain: f64,
    /// mm
    pub tremor_std: f64,
    /// g/s
    pub flow_obs_noise_std: f64,
}

impl Default for SurrogateTeleopConfig {
    fn default() -> Self {
        Self {
            reaction_delay: 0.3,
            target_flow: 1.22,
            deadband: 0.15,
            correction_gain: 0.03,
            tremor_std: 0.002,
            flow_obs_noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateTeleop {
    cfg: SurrogateTeleopConfig,
    history: Vec<f64>,
    delay_steps: usize,
    max_step: f64,
}

impl SurrogateTeleop {
    pub fn new(cfg: SurrogateTeleopConfig) -> Self {
        Self { cfg, history: Vec::new(), delay_steps: 0, max_step: f64::INFINITY }
    }

    /// Flow the operator is currently reacting to (zero-order hold at trial start).
    fn perceived(&self) -> f64 {
        let n = self.history.len();
        if n == 0 {
            return 0.0;
        }
        self.history[(n - 1).saturating_sub(self.delay_steps)]
    }

    /// Action from an already-perceived flow value plus noise draws.
    pub fn respond(&self, perceived_flow: f64, tremor: f64) -> f64 {
        let flow_error = self.cfg.target_flow - perceived_flow;
        let action = if flow_error.abs() <= self.cfg.deadband {
            tremor
        } else {
            -self.cfg.correction_gain * flow_error + tremor
        };
        action.clamp(-self.max_step, self.max_step)
    }
}

fn gaussian(rng: &mut SimRng, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(0.0, std).expect("validated std").sample(rng)
    } else {
        0.0
    }
}

impl Agent for SurrogateTeleop {
    fn id(&self) -> String {
        "teleop-surrogate".into()
    }

    fn init_schedule(&self) -> InitSchedule {
        InitSchedule::Alternating
    }

    fn begin_trial(&mut self, start: &TrialStart) {
        self.history.clear();
        self.delay_steps = (self.cfg.reaction_delay * start.control_hz).round() as usize;
        self.max_step = start.max_step;
    }

    fn act(&mut self, obs: &ObservationView<'_>, rng: &mut SimRng) -> Result<f64, AgentError> {
        self.history.push(obs.flow_visual());
        let perceived = self.perceived() + gaussian(rng, self.cfg.flow_obs_noise_std);
        let tremor = gaussian(rng, self.cfg.tremor_std);
        Ok(self.respond(perceived, tremor))
    }
}

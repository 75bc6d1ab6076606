use super::{Agent, AgentError, InitSchedule, ObservationView, TrialStart};
use crate::SimRng;

/// Open-loop closing at a fixed gripper speed from the start of the trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSpeedAgent {
    speed: f64,
    control_hz: f64,
}

impl ConstantSpeedAgent {
    /// `speed` in mm/s, positive closes.
    pub fn new(speed: f64, control_hz: f64) -> Self {
        Self { speed, control_hz }
    }

    pub fn action(&self) -> f64 {
        -self.speed / self.control_hz
    }
}

impl Agent for ConstantSpeedAgent {
    fn id(&self) -> String {
        format!("constant:{}", self.speed)
    }

    fn init_schedule(&self) -> InitSchedule {
        InitSchedule::FromRest
    }

    fn begin_trial(&mut self, start: &TrialStart) {
        self.control_hz = start.control_hz;
    }

    fn act(&mut self, _obs: &ObservationView<'_>, _rng: &mut SimRng) -> Result<f64, AgentError> {
        Ok(self.action())
    }
}

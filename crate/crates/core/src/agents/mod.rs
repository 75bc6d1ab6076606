//! Squeezing agents. Each control step an agent receives an observation view
//! and returns a relative gripper width command in mm (negative closes).

mod constant;
mod observation;
mod pi;
mod policy;
mod surrogate;

pub use constant::ConstantSpeedAgent;
pub use observation::{
    synth_grip_force, FlowVisualFilter, Observation, ObservationView, SensingParams, POLICY_FEATURES,
};
pub use pi::{pi_update, PIConfig, PIState, PiAgent};
pub use policy::PolicyAgent;
pub use surrogate::{SurrogateTeleop, SurrogateTeleopConfig};

use thiserror::Error;

use crate::imitation::ImitationError;
use crate::SimRng;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent `{agent}` is not entitled to observation field `{field}`")]
    PrivilegeViolation { agent: String, field: &'static str },
    #[error("teleoperation input lost: {0}")]
    InputLost(String),
    #[error(transparent)]
    Model(#[from] ImitationError),
}

/// How the protocol picks P_init for an agent's trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSchedule {
    /// Uniform on the P_init window above P_rest.
    Uniform,
    /// Alternating zero-flow / high-flow starts, as instructed to teleoperators.
    Alternating,
    /// No pre-squeeze at all; the agent acts from rest.
    FromRest,
}

/// Per-trial context handed to `Agent::begin_trial`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStart {
    pub trial_index: usize,
    pub p_rest: f64,
    pub control_hz: f64,
    /// Largest |action| the protocol will execute, mm.
    pub max_step: f64,
}

pub trait Agent {
    fn id(&self) -> String;

    /// Whether the agent may read the in-bottle pressure.
    fn privileged(&self) -> bool {
        false
    }

    fn init_schedule(&self) -> InitSchedule {
        InitSchedule::Uniform
    }

    fn begin_trial(&mut self, _start: &TrialStart) {}

    fn act(&mut self, obs: &ObservationView<'_>, rng: &mut SimRng) -> Result<f64, AgentError>;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn privileged(&self) -> bool {
        (**self).privileged()
    }
    fn init_schedule(&self) -> InitSchedule {
        (**self).init_schedule()
    }
    fn begin_trial(&mut self, start: &TrialStart) {
        (**self).begin_trial(start)
    }
    fn act(&mut self, obs: &ObservationView<'_>, rng: &mut SimRng) -> Result<f64, AgentError> {
        (**self).act(obs, rng)
    }
}

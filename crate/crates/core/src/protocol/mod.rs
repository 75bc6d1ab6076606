//! Data-collection protocol: grasp and invert, P_rest / P_init, pre-squeeze,
//! the 15 Hz control loop with concurrent scale logging, termination, empty
//! detection and refill cycling.

mod log;
mod session;
mod store;
mod trial;

pub use log::{PolicyStep, Record, ScaleSample, Termination, TrialLog, TRIAL_LOG_FORMAT};
pub use session::{run_session, session_trial_seed, Session};
pub use store::{read_dataset, write_dataset, Manifest, ManifestEntry, MANIFEST_FILE};
pub use trial::{run_trial, FrameInfo, HookAbort, Phase, TrialHook};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::AgentError;
use crate::bottle::BottleError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Bottle(#[from] BottleError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("trial started with an empty bottle")]
    EmptyBottle,
    #[error("dataset error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Hz
    pub control_hz: f64,
    /// mm/s
    pub pre_squeeze_speed: f64,
    /// Width of the P_init window above P_rest, Pa.
    pub p_init_window: f64,
    /// Fraction of the window used for high-flow starts.
    pub high_flow_fraction: f64,
    /// Scale weight that ends a trial, g.
    pub s_max: f64,
    /// Gripper width that ends a trial, mm.
    pub w_min: f64,
    /// Released-trigger width for teleoperation, mm.
    pub w_loose: f64,
    /// Hz
    pub scale_hz: f64,
    /// Uniform jitter applied to each scale sample time, s (0 disables).
    pub scale_jitter: f64,
    /// Initial part of every trial ignored by scoring, s.
    pub transient_cut: f64,
    pub trials_per_training_set: usize,
    pub trials_per_eval_set: usize,
    pub seed: u64,
    /// Time between inverting and measuring P_rest (moving above the scale), s.
    pub settle_time: f64,
    /// Reads averaged for P_rest and for each side of the empty check.
    pub rest_reads: usize,
    /// Empty-check threshold on the pressure difference, Pa.
    pub empty_tolerance: f64,
    /// Control-loop duration after which a trial is stopped and flagged, s.
    pub safety_stop: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            control_hz: 15.0,
            pre_squeeze_speed: 5.0,
            p_init_window: 5000.0,
            high_flow_fraction: 0.9,
            s_max: 25.0,
            w_min: 20.0,
            w_loose: 48.0,
            scale_hz: 3.5,
            scale_jitter: 0.0,
            transient_cut: 2.0,
            trials_per_training_set: 42,
            trials_per_eval_set: 32,
            seed: 0,
            settle_time: 3.0,
            rest_reads: 5,
            empty_tolerance: 50.0,
            safety_stop: 120.0,
        }
    }
}

/// How the initial pressure of a trial is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform on [P_rest, P_rest + window].
    Uniform,
    /// No pre-squeeze: P_init = P_rest.
    ZeroFlow,
    /// P_init near the top of the window.
    HighFlow,
}

/// Zero-flow starts on even trials, high-flow starts on odd ones.
pub fn teleop_init_schedule(trial_index: usize) -> InitMode {
    if trial_index.is_multiple_of(2) {
        InitMode::ZeroFlow
    } else {
        InitMode::HighFlow
    }
}

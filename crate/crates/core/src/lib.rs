//! Simulation harness for learning to squeeze a constant flow from an
//! instrumented bottle: a PI teacher that reads in-bottle pressure, a
//! teleoperation path, behavioral cloning of chunked actions and the scoring
//! used to compare the resulting policies.

pub mod agents;
pub mod bottle;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod imitation;
pub mod protocol;
pub mod teleop_gateway;

pub use config::SimConfig;
pub use error::Error;

/// Random stream used everywhere in the simulator.
pub type SimRng = rand_chacha::ChaCha8Rng;

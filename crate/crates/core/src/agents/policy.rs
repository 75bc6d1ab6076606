use super::{Agent, AgentError, ObservationView};
use crate::imitation::ChunkModel;
use crate::SimRng;

/// Rollout wrapper around a trained chunk model: one forward pass per control
/// step, first element executed, rest of the chunk dropped.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    model: ChunkModel,
    label: String,
    inferences: usize,
}

impl PolicyAgent {
    pub fn new(model: ChunkModel, label: impl Into<String>) -> Self {
        Self { model, label: label.into(), inferences: 0 }
    }

    /// Forward passes run so far.
    pub fn inferences(&self) -> usize {
        self.inferences
    }

    pub fn model(&self) -> &ChunkModel {
        &self.model
    }

    pub fn update(&mut self, features: &[f64]) -> Result<f64, AgentError> {
        let chunk = self.model.predict(features)?;
        self.inferences += 1;
        Ok(chunk[0])
    }
}

impl Agent for PolicyAgent {
    fn id(&self) -> String {
        format!("policy:{}", self.label)
    }

    fn act(&mut self, obs: &ObservationView<'_>, _rng: &mut SimRng) -> Result<f64, AgentError> {
        self.update(&obs.policy_features())
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{Normalizer, TargetScale, CHUNK_SIZE};
use super::mlp::{Activation, Mlp};
use super::ImitationError;

pub type ActionChunk = [f64; CHUNK_SIZE];

pub const MODEL_FORMAT: &str = "squeeze-chunk-model/1";

/// Feed-forward chunk regressor with its input and output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkModel {
    pub net: Mlp,
    pub feature_norm: Normalizer,
    pub target_scale: TargetScale,
    pub seed: u64,
    pub config_hash: String,
    pub final_loss: f64,
}

impl ChunkModel {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Relative width commands for the next `CHUNK_SIZE` steps, mm.
    pub fn predict(&self, features: &[f64]) -> Result<ActionChunk, ImitationError> {
        if features.len() != self.input_dim() {
            return Err(ImitationError::DimensionMismatch { expected: self.input_dim(), got: features.len() });
        }
        let z = self.net.forward(&self.feature_norm.normalize(features));
        let mut chunk = [0.0; CHUNK_SIZE];
        for (c, v) in chunk.iter_mut().zip(&z) {
            *c = self.target_scale.denormalize(*v);
        }
        Ok(chunk)
    }

    pub fn to_json(&self) -> Result<String, ImitationError> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            layer_sizes: self.net.sizes().to_vec(),
            hidden_activation: self.net.hidden_activation(),
            layers: self
                .net
                .layers()
                .into_iter()
                .map(|(weights, bias)| LayerFile { weights, bias })
                .collect(),
            feature_norm: self.feature_norm.clone(),
            target_scale: self.target_scale,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            final_loss: self.final_loss,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ImitationError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(ImitationError::Format(format!("unsupported model format `{}`", file.format)));
        }
        if file.layer_sizes.last() != Some(&CHUNK_SIZE) {
            return Err(ImitationError::Format(format!("output dimension must be {CHUNK_SIZE}")));
        }
        if file.feature_norm.dim() != file.layer_sizes[0] {
            return Err(ImitationError::Format("normalization does not match input size".into()));
        }
        let layers: Vec<(Vec<f64>, Vec<f64>)> = file.layers.into_iter().map(|l| (l.weights, l.bias)).collect();
        let net = Mlp::from_layers(&file.layer_sizes, file.hidden_activation, &layers)
            .ok_or_else(|| ImitationError::Format("layer arrays do not match layer sizes".into()))?;
        Ok(Self {
            net,
            feature_norm: file.feature_norm,
            target_scale: file.target_scale,
            seed: file.seed,
            config_hash: file.config_hash,
            final_loss: file.final_loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ImitationError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ImitationError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerFile {
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    layers: Vec<LayerFile>,
    feature_norm: Normalizer,
    target_scale: TargetScale,
    seed: u64,
    config_hash: String,
    final_loss: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model() -> ChunkModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        ChunkModel {
            net: Mlp::xavier(&[3, 8, 8, CHUNK_SIZE], Activation::Tanh, &mut rng),
            feature_norm: Normalizer { mean: vec![40.0, 1.0, 2.0], std: vec![3.0, 0.5, 0.7] },
            target_scale: TargetScale { mean: -0.05, std: 0.1 },
            seed: 4,
            config_hash: "abc".into(),
            final_loss: 0.1234567890123,
        }
    }

    #[test]
    fn reload_is_bit_exact() {
        let m = model();
        let back = ChunkModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bits = |m: &ChunkModel| m.net.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            model().predict(&[1.0, 2.0]),
            Err(ImitationError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn zero_weights_return_denormalized_biases() {
        let mut m = model();
        let n = m.net.params().len();
        for p in m.net.params_mut().iter_mut() {
            *p = 0.0;
        }
        for j in 0..CHUNK_SIZE {
            m.net.params_mut()[n - CHUNK_SIZE + j] = j as f64;
        }
        let chunk = m.predict(&[41.0, 1.1, 2.2]).unwrap();
        for (j, &c) in chunk.iter().enumerate() {
            assert!((c - m.target_scale.denormalize(j as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn prediction_is_deterministic() {
        let m = model();
        let x = [42.0, 1.3, 2.5];
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::dataset::{ChunkDataset, TargetScale, CHUNK_SIZE, FEATURE_DIM};
use super::mlp::{Activation, Mlp};
use super::model::ChunkModel;
use super::ImitationError;
use crate::SimRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch multiplicative step-size decay.
    pub lr_decay: f64,
    /// Largest global L2 norm of a minibatch gradient step; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { hidden_units: 64, hidden_layers: 2, epochs: 50, batch_size: 64, learning_rate: 0.5, lr_decay: 0.95, grad_clip: 1.0 }
    }
}

impl TrainingConfig {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![FEATURE_DIM];
        sizes.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        sizes.push(CHUNK_SIZE);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-dataset loss before the first update.
    pub initial_loss: f64,
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-dataset loss after training.
    pub final_loss: f64,
}

/// A training example in model space: normalized input, normalized target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Masked squared error summed over `samples`, plus the number of real entries.
/// When `grad` is given the gradient of the *sum* is accumulated into it.
fn masked_sse(net: &Mlp, samples: &[&Sample], mut grad: Option<&mut [f64]>, count_scale: Option<f64>) -> (f64, usize) {
    let mut sse = 0.0;
    let mut count = 0;
    let mut out_grad = vec![0.0; net.output_dim()];
    for s in samples {
        let cache = net.forward_cached(&s.input);
        let y = cache.output();
        for j in 0..y.len() {
            if s.mask[j] {
                let r = y[j] - s.target[j];
                sse += r * r;
                count += 1;
                out_grad[j] = 2.0 * r;
            } else {
                out_grad[j] = 0.0;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            if let Some(scale) = count_scale {
                for v in &mut out_grad {
                    *v *= scale;
                }
            }
            net.backward(&cache, &out_grad, g);
        }
    }
    (sse, count)
}

/// Mean squared error over real entries; zero when every entry is padding.
pub fn masked_mse(net: &Mlp, samples: &[&Sample]) -> f64 {
    let (sse, count) = masked_sse(net, samples, None, None);
    if count == 0 { 0.0 } else { sse / count as f64 }
}

/// Gradient of `masked_mse` with respect to all parameters.
pub fn masked_mse_grad(net: &Mlp, samples: &[&Sample]) -> (f64, Vec<f64>) {
    let count = samples.iter().map(|s| s.mask.iter().filter(|&&m| m).count()).sum::<usize>();
    let mut grad = vec![0.0; net.params().len()];
    if count == 0 {
        return (0.0, grad);
    }
    let (sse, _) = masked_sse(net, samples, Some(&mut grad), Some(1.0 / count as f64));
    (sse / count as f64, grad)
}

impl ChunkDataset {
    /// Examples in model space under `scale`.
    pub fn samples(&self, scale: &TargetScale) -> Vec<Sample> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .zip(&self.mask)
            .map(|((x, y), m)| Sample {
                input: x.to_vec(),
                target: y.iter().map(|v| scale.normalize(*v)).collect(),
                mask: m.to_vec(),
            })
            .collect()
    }
}

const DIVERGENCE_FACTOR: f64 = 1e6;

/// Minibatch SGD on the masked chunk MSE. Deterministic for a given seed.
pub fn train(
    dataset: &ChunkDataset,
    cfg: &TrainingConfig,
    seed: u64,
    config_hash: &str,
) -> Result<(ChunkModel, TrainReport), ImitationError> {
    if dataset.is_empty() {
        return Err(ImitationError::EmptyDataset);
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let mut net = Mlp::xavier(&cfg.layer_sizes(), Activation::Tanh, &mut rng);
    let scale = dataset.target_scale();
    let samples = dataset.samples(&scale);
    let all: Vec<&Sample> = samples.iter().collect();

    let initial_loss = masked_mse(&net, &all);
    // Targets are standardized, so a healthy run starts near 1 and only falls.
    let blow_up = DIVERGENCE_FACTOR * initial_loss.max(1.0);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut lr = cfg.learning_rate;
    let mut batch: Vec<&Sample> = Vec::with_capacity(cfg.batch_size);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| &samples[i]));
            let (loss, grad) = masked_mse_grad(&net, &batch);
            if !loss.is_finite() || loss > blow_up {
                return Err(ImitationError::Diverged { epoch });
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let step = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip { lr * cfg.grad_clip / norm } else { lr };
            for (p, g) in net.params_mut().iter_mut().zip(&grad) {
                *p -= step * g;
            }
            loss_sum += loss;
            batches += 1;
        }
        let epoch_loss = loss_sum / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(ImitationError::Diverged { epoch });
        }
        epoch_losses.push(epoch_loss);
        lr *= cfg.lr_decay;
    }
    let final_loss = masked_mse(&net, &all);
    if !final_loss.is_finite() {
        return Err(ImitationError::Diverged { epoch: cfg.epochs });
    }
    let model = ChunkModel {
        net,
        feature_norm: dataset.normalization.clone(),
        target_scale: scale,
        seed,
        config_hash: config_hash.to_string(),
        final_loss,
    };
    Ok((model, TrainReport { initial_loss, epoch_losses, final_loss }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imitation::dataset::Normalizer;

    fn constant_dataset(c: f64, n: usize) -> ChunkDataset {
        ChunkDataset {
            inputs: vec![[0.0; FEATURE_DIM]; n],
            targets: vec![[c; CHUNK_SIZE]; n],
            mask: vec![[true; CHUNK_SIZE]; n],
            normalization: Normalizer::identity(FEATURE_DIM),
            sources: Vec::new(),
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let ds = constant_dataset(-0.07, 256);
        let cfg = TrainingConfig { epochs: 20, hidden_units: 8, ..TrainingConfig::default() };
        let (model, report) = train(&ds, &cfg, 3, "h").unwrap();
        let chunk = model.predict(&[0.0; FEATURE_DIM]).unwrap();
        assert!(chunk.iter().all(|c| (c + 0.07).abs() < 1e-6), "{chunk:?}");
        assert!(report.final_loss < 1e-6);
    }

    #[test]
    fn same_seed_same_weights() {
        let mut ds = constant_dataset(0.0, 100);
        for (k, (x, y)) in ds.inputs.iter_mut().zip(ds.targets.iter_mut()).enumerate() {
            let t = k as f64 / 100.0;
            *x = [t, t * t, 1.0 - t];
            *y = [t.sin(); CHUNK_SIZE];
        }
        let cfg = TrainingConfig { epochs: 3, hidden_units: 16, ..TrainingConfig::default() };
        let (a, _) = train(&ds, &cfg, 11, "h").unwrap();
        let (b, _) = train(&ds, &cfg, 11, "h").unwrap();
        let bits = |m: &ChunkModel| m.net.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let (c, _) = train(&ds, &cfg, 12, "h").unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn fully_padded_sample_has_zero_loss() {
        let mut rng = SimRng::seed_from_u64(0);
        let net = Mlp::xavier(&[3, 4, CHUNK_SIZE], Activation::Tanh, &mut rng);
        let s = Sample { input: vec![1.0, -1.0, 0.5], target: vec![9.0; CHUNK_SIZE], mask: vec![false; CHUNK_SIZE] };
        assert_eq!(masked_mse(&net, &[&s]), 0.0);
        let (l, g) = masked_mse_grad(&net, &[&s]);
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn padded_entries_do_not_affect_loss() {
        let mut rng = SimRng::seed_from_u64(1);
        let net = Mlp::xavier(&[3, 4, CHUNK_SIZE], Activation::Tanh, &mut rng);
        let mut mask = vec![true; CHUNK_SIZE];
        mask[7..].iter_mut().for_each(|m| *m = false);
        let mut a = Sample { input: vec![0.2, 0.1, -0.3], target: vec![0.5; CHUNK_SIZE], mask };
        let la = masked_mse(&net, &[&a]);
        a.target[8] = 1e6;
        assert_eq!(masked_mse(&net, &[&a]), la);
    }

    #[test]
    fn diverging_step_size_is_reported() {
        let mut ds = constant_dataset(0.0, 128);
        for (k, y) in ds.targets.iter_mut().enumerate() {
            *y = [if k % 2 == 0 { 5.0 } else { -5.0 }; CHUNK_SIZE];
        }
        for (k, x) in ds.inputs.iter_mut().enumerate() {
            *x = [k as f64, -(k as f64), 1.0];
        }
        let cfg = TrainingConfig { epochs: 5, learning_rate: 1e6, lr_decay: 1.0, ..TrainingConfig::default() };
        assert!(matches!(train(&ds, &cfg, 0, "h"), Err(ImitationError::Diverged { .. })));
    }
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ImitationError;
use crate::agents::POLICY_FEATURES;
use crate::protocol::{PolicyStep, TrialLog};

/// Actions predicted per observation.
pub const CHUNK_SIZE: usize = 10;
pub const FEATURE_DIM: usize = POLICY_FEATURES.len();

/// Per-dimension z-normalization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Sample statistics per column; zero-variance columns get unit scale.
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        for row in rows.clone() {
            n += 1;
            for (s, x) in sum.iter_mut().zip(row) {
                *s += x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if n > 0 { s / n as f64 } else { 0.0 }).collect();
        let mut sq = vec![0.0; dim];
        for row in rows {
            for ((s, x), m) in sq.iter_mut().zip(row).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        let std = sq
            .iter()
            .map(|s| {
                let sd = if n > 1 { (s / (n - 1) as f64).sqrt() } else { 0.0 };
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, std }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((z, m), s)| z * s + m).collect()
    }
}

/// Scalar affine scale shared by every chunk entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn normalize(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTrial {
    pub agent_id: String,
    pub seed: u64,
    pub trial_index: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkDataset {
    /// Normalized `[gripper_width, flow_visual, grip_force]`.
    pub inputs: Vec<[f64; FEATURE_DIM]>,
    /// Upcoming executed actions, mm. Padded entries repeat the last action.
    pub targets: Vec<[f64; CHUNK_SIZE]>,
    /// `true` where the target entry is a real action.
    pub mask: Vec<[bool; CHUNK_SIZE]>,
    pub normalization: Normalizer,
    pub sources: Vec<SourceTrial>,
}

/// One serialized training example.
#[derive(Debug, Serialize, Deserialize)]
struct ExampleLine {
    x: [f64; FEATURE_DIM],
    y: [f64; CHUNK_SIZE],
    mask: [bool; CHUNK_SIZE],
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    features: Vec<String>,
    chunk_size: usize,
    samples: usize,
    normalization: Normalizer,
    sources: Vec<SourceTrial>,
}

pub const DATASET_FORMAT: &str = "squeeze-chunk-dataset/1";

/// Chunks every step of every completed trial. Only the policy view of each
/// log is touched, so the result cannot carry pressure.
pub fn build_dataset(logs: &[TrialLog]) -> Result<ChunkDataset, ImitationError> {
    let mut raw_inputs: Vec<[f64; FEATURE_DIM]> = Vec::new();
    let mut targets = Vec::new();
    let mut mask = Vec::new();
    let mut sources = Vec::new();
    for log in logs.iter().filter(|l| l.termination.is_complete()) {
        let steps: Vec<PolicyStep> = log.policy_view();
        if steps.is_empty() {
            continue;
        }
        sources.push(SourceTrial {
            agent_id: log.agent_id.clone(),
            seed: log.seed,
            trial_index: log.trial_index,
            config_hash: log.config_hash.clone(),
        });
        let (inputs, tg, mk) = chunk_trial(&steps);
        raw_inputs.extend(inputs);
        targets.extend(tg);
        mask.extend(mk);
    }
    if raw_inputs.is_empty() {
        return Err(ImitationError::EmptyDataset);
    }
    let normalization = Normalizer::fit(raw_inputs.iter().map(|r| r.as_slice()), FEATURE_DIM);
    let inputs = raw_inputs
        .iter()
        .map(|r| {
            let z = normalization.normalize(r);
            [z[0], z[1], z[2]]
        })
        .collect();
    Ok(ChunkDataset { inputs, targets, mask, normalization, sources })
}

type Chunked = (Vec<[f64; FEATURE_DIM]>, Vec<[f64; CHUNK_SIZE]>, Vec<[bool; CHUNK_SIZE]>);

fn chunk_trial(steps: &[PolicyStep]) -> Chunked {
    let n = steps.len();
    let last = steps[n - 1].action;
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for k in 0..n {
        inputs.push(steps[k].features());
        let mut y = [last; CHUNK_SIZE];
        let mut m = [false; CHUNK_SIZE];
        for j in 0..CHUNK_SIZE {
            if let Some(step) = steps.get(k + j) {
                y[j] = step.action;
                m[j] = true;
            }
        }
        targets.push(y);
        mask.push(m);
    }
    (inputs, targets, mask)
}

impl ChunkDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Mean and sample std over unpadded target entries.
    pub fn target_scale(&self) -> TargetScale {
        let values: Vec<f64> = self
            .targets
            .iter()
            .zip(&self.mask)
            .flat_map(|(y, m)| y.iter().zip(m).filter(|(_, &m)| m).map(|(y, _)| *y))
            .collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std = var.sqrt();
        TargetScale { mean, std: if std > 1e-12 { std } else { 1.0 } }
    }

    /// Line-delimited export: metadata header, then one example per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = DatasetHeader {
            format: DATASET_FORMAT.into(),
            features: POLICY_FEATURES.iter().map(|s| s.to_string()).collect(),
            chunk_size: CHUNK_SIZE,
            samples: self.len(),
            normalization: self.normalization.clone(),
            sources: self.sources.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for ((x, y), m) in self.inputs.iter().zip(&self.targets).zip(&self.mask) {
            serde_json::to_writer(&mut out, &ExampleLine { x: *x, y: *y, mask: *m })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

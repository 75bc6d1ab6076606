use rand::seq::index::sample;
use rand::SeedableRng;

use super::model::ChunkModel;
use super::train::{masked_mse, masked_mse_grad, Sample};
use super::ImitationError;
use crate::SimRng;

/// Parameters probed by `gradient_check` when the network is larger.
pub const GRADIENT_CHECK_PARAMS: usize = 100;

/// Worst relative disagreement between backprop and central differences over
/// a random subset of at least `GRADIENT_CHECK_PARAMS` parameters (or all of
/// them, for small networks).
pub fn gradient_check(
    model: &ChunkModel,
    samples: &[Sample],
    epsilon: f64,
    seed: u64,
) -> Result<f64, ImitationError> {
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(ImitationError::InvalidEpsilon(epsilon));
    }
    let refs: Vec<&Sample> = samples.iter().collect();
    let (_, analytic) = masked_mse_grad(&model.net, &refs);
    let n = analytic.len();
    let mut rng = SimRng::seed_from_u64(seed);
    let picked: Vec<usize> = if n <= GRADIENT_CHECK_PARAMS { (0..n).collect() } else { sample(&mut rng, n, GRADIENT_CHECK_PARAMS).into_vec() };

    let mut net = model.net.clone();
    let mut worst = 0.0f64;
    for i in picked {
        let original = net.params()[i];
        net.params_mut()[i] = original + epsilon;
        let plus = masked_mse(&net, &refs);
        net.params_mut()[i] = original - epsilon;
        let minus = masked_mse(&net, &refs);
        net.params_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let denom = (a.abs() + numeric.abs()).max(1e-7);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Provenance, Sample, TgaError};

/// Partitions a dataset so that validation holds only EXPERIMENT samples.
///
/// `round(val_fraction * n_experiment)` experiments, chosen by a seeded
/// shuffle, form the validation set; everything else, in original order,
/// is training data.
pub fn split(ds: &[Sample], val_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>), TgaError> {
    if !(0.0..=1.0).contains(&val_fraction) {
        return Err(TgaError::InvalidInput(format!("validation fraction {val_fraction} outside [0, 1]")));
    }
    let mut experiments: Vec<usize> = (0..ds.len()).filter(|&i| ds[i].provenance == Provenance::Experiment).collect();
    if val_fraction == 0.0 {
        return Ok((ds.to_vec(), Vec::new()));
    }
    if experiments.is_empty() {
        return Err(TgaError::NoExperimentSamples);
    }
    let n_val = (val_fraction * experiments.len() as f64).round() as usize;
    experiments.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut chosen = vec![false; ds.len()];
    let mut val_idx: Vec<usize> = experiments[..n_val].to_vec();
    val_idx.sort_unstable();
    for &i in &val_idx {
        chosen[i] = true;
    }
    let train = (0..ds.len()).filter(|&i| !chosen[i]).map(|i| ds[i].clone()).collect();
    let validation = val_idx.iter().map(|&i| ds[i].clone()).collect();
    Ok((train, validation))
}

//! Regressors from [`FeatureVector`] to [`TargetVector`]: a CART random
//! forest and a small tanh MLP, with a versioned binary model file.

mod forest;
mod io;
mod mlp;
mod normalize;
mod report;

pub use forest::{train_rf, RandomForestModel, RfHyperparams, Tree, TreeNode};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use mlp::{train_mlp, MlpHyperparams, MlpModel};
pub use normalize::{Normalizer, TargetScaler};
pub use report::{ComponentScore, EnsembleCheck, TrainReport};

use crate::tga::{FeatureVector, Sample, TargetVector, N_FEATURES, N_TARGETS};

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set has {n} samples, fewer than min_leaf = {min_leaf}")]
    TooFewSamples { n: usize, min_leaf: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("invalid sample {index}: {message}")]
    InvalidSample { index: usize, message: String },
    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("feature vector has {got} components, expected {expected}")]
    Dimension { got: usize, expected: usize },
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("not a pyroflux model file")]
    BadMagic,
    #[error("model file version {found} is not readable by this build (format {supported})")]
    Version { found: String, supported: String },
    #[error("model file checksum mismatch: {0}")]
    Checksum(String),
    #[error("corrupt model payload: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// A trained surrogate; immutable and shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateModel {
    RandomForest(RandomForestModel),
    Mlp(MlpModel),
}

/// A prediction after box clamping and yield renormalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub targets: TargetVector,
    /// True if the raw output left the kinetic box or the yield simplex.
    pub clamped: bool,
}

impl SurrogateModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SurrogateModel::RandomForest(_) => "rf",
            SurrogateModel::Mlp(_) => "mlp",
        }
    }

    /// Raw model output before any clamping.
    pub fn predict_raw(&self, x: &[f64; N_FEATURES]) -> [f64; N_TARGETS] {
        match self {
            SurrogateModel::RandomForest(m) => m.predict_raw(x),
            SurrogateModel::Mlp(m) => m.predict_raw(x),
        }
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<Prediction, SurrogateError> {
        self.predict_slice(&f.to_array())
    }

    pub fn predict_slice(&self, x: &[f64]) -> Result<Prediction, SurrogateError> {
        let x: &[f64; N_FEATURES] =
            x.try_into().map_err(|_| SurrogateError::Dimension { got: x.len(), expected: N_FEATURES })?;
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteFeature { index });
        }
        Ok(finalize(&self.predict_raw(x)))
    }
}

/// Clamps kinetics into their box and projects yields onto the simplex.
pub fn finalize(raw: &[f64; N_TARGETS]) -> Prediction {
    let t = TargetVector::from_array(raw);
    let (kinetics, k_moved) = t.kinetics.clamped();
    let (yields, y_moved) = t.yields.renormalized();
    Prediction { targets: TargetVector { kinetics, yields }, clamped: k_moved || y_moved }
}

fn validate_training(train: &[Sample]) -> Result<(), SurrogateError> {
    if train.is_empty() {
        return Err(SurrogateError::EmptyTrainingSet);
    }
    for (index, s) in train.iter().enumerate() {
        s.features.validate().map_err(|message| SurrogateError::InvalidSample { index, message })?;
        let t = s.targets.to_array();
        if t.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::InvalidSample { index, message: "non-finite target".into() });
        }
    }
    Ok(())
}

use serde::{Deserialize, Serialize};

use crate::metrics::{PairedSeries, Score};
use crate::tga::{Sample, FEATURE_NAMES, N_FEATURES, N_TARGETS, TARGET_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub target: String,
    pub train: Score,
    pub validation: Option<Score>,
}

/// Forest versus worst-tree held-out RMSE; a statistical expectation, not a
/// guarantee, so a violation is logged rather than raised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCheck {
    pub forest_rmse: f64,
    pub worst_tree_rmse: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model_kind: String,
    pub hyperparameters: serde_json::Value,
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub components: Vec<ComponentScore>,
    /// Mean squared error over scaled targets after each epoch (MLP only).
    pub loss_curve: Vec<f64>,
    pub wall_time_s: f64,
    /// Conditions such as `UNTRAINED`.
    pub flags: Vec<String>,
    pub warnings: Vec<String>,
    pub ensemble_check: Option<EnsembleCheck>,
    pub train_predictions: Vec<[f64; N_TARGETS]>,
    pub train_targets: Vec<[f64; N_TARGETS]>,
    pub validation_predictions: Vec<[f64; N_TARGETS]>,
    pub validation_targets: Vec<[f64; N_TARGETS]>,
}

fn column(rows: &[[f64; N_TARGETS]], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k]).collect()
}

fn scores(pred: &[[f64; N_TARGETS]], refs: &[[f64; N_TARGETS]]) -> Option<Vec<Score>> {
    (0..N_TARGETS).map(|k| PairedSeries::new(column(pred, k), column(refs, k)).ok().map(|p| Score::of(&p))).collect()
}

impl TrainReport {
    pub(crate) fn evaluate(
        kind: &str,
        hyperparameters: serde_json::Value,
        seed: u64,
        train: &[Sample],
        validation: &[Sample],
        predict: impl Fn(&[f64; N_FEATURES]) -> [f64; N_TARGETS],
    ) -> Self {
        let run = |set: &[Sample]| -> (Vec<_>, Vec<_>) {
            set.iter().map(|s| (predict(&s.features.to_array()), s.targets.to_array())).unzip()
        };
        let (train_predictions, train_targets) = run(train);
        let (validation_predictions, validation_targets) = run(validation);
        let mut r = Self {
            model_kind: kind.into(),
            hyperparameters,
            seed,
            n_train: train.len(),
            n_validation: validation.len(),
            components: Vec::new(),
            loss_curve: Vec::new(),
            wall_time_s: 0.0,
            flags: Vec::new(),
            warnings: Vec::new(),
            ensemble_check: None,
            train_predictions,
            train_targets,
            validation_predictions,
            validation_targets,
        };
        r.components = r.recompute_scores();
        for c in &r.components {
            for (set, score) in [("train", Some(&c.train)), ("validation", c.validation.as_ref())] {
                if score.is_some_and(|s| s.n > 0 && s.r2.is_none()) {
                    r.flags.push(format!("R2_UNDEFINED:{set}:{}", c.target));
                }
            }
        }
        r
    }

    /// Scores recomputed from the stored predictions.
    pub fn recompute_scores(&self) -> Vec<ComponentScore> {
        let tr = scores(&self.train_predictions, &self.train_targets);
        let va = scores(&self.validation_predictions, &self.validation_targets);
        (0..N_TARGETS)
            .map(|k| ComponentScore {
                target: TARGET_NAMES[k].into(),
                train: tr.as_ref().map_or(Score { r2: None, rmse: f64::NAN, n: 0 }, |s| s[k]),
                validation: va.as_ref().map(|s| s[k]),
            })
            .collect()
    }

    pub(crate) fn note_constant_features(&mut self, constant: &[usize]) {
        for &j in constant {
            let w = format!("feature {} is constant in the training set; stddev set to 1", FEATURE_NAMES[j]);
            log::warn!("{w}");
            self.warnings.push(w);
        }
    }

    pub fn component(&self, target: &str) -> Option<&ComponentScore> {
        self.components.iter().find(|c| c.target == target || c.target.starts_with(&format!("{target}[")))
    }
}

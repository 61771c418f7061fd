use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{EnsembleCheck, TrainReport};
use super::{finalize, validate_training, Normalizer, SurrogateError};
use crate::tga::{Sample, N_FEATURES, N_TARGETS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfHyperparams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features examined per node; `None` means `round(sqrt(d))`.
    pub feature_subsample: Option<usize>,
}

impl Default for RfHyperparams {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 12, min_leaf: 3, feature_subsample: None }
    }
}

impl RfHyperparams {
    pub fn mtry(&self) -> usize {
        self.feature_subsample.unwrap_or(((N_FEATURES as f64).sqrt().round()) as usize)
    }

    fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::InvalidHyperparameter(m));
        if self.n_trees == 0 || self.n_trees > 100_000 {
            return bad(format!("n_trees = {} outside [1, 100000]", self.n_trees));
        }
        if self.max_depth > 64 {
            return bad(format!("max_depth = {} exceeds 64", self.max_depth));
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be >= 1".into());
        }
        if !(1..=N_FEATURES).contains(&self.mtry()) {
            return bad(format!("feature_subsample = {} outside [1, {N_FEATURES}]", self.mtry()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: [f64; N_TARGETS] },
}

/// Regression tree stored flat; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64; N_FEATURES]) -> &[f64; N_TARGETS] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                TreeNode::Leaf { value } => return value,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    pub trees: Vec<Tree>,
    pub hp: RfHyperparams,
    pub seed: u64,
    /// Training-set feature statistics, kept for provenance; trees split on
    /// raw feature values.
    pub normalizer: Normalizer,
}

impl RandomForestModel {
    pub fn predict_raw(&self, x: &[f64; N_FEATURES]) -> [f64; N_TARGETS] {
        let mut acc = [0.0; N_TARGETS];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.predict(x)) {
                *a += v;
            }
        }
        acc.map(|a| a / self.trees.len() as f64)
    }
}

struct Builder<'a> {
    x: &'a [[f64; N_FEATURES]],
    /// Targets used for split scoring (z-scored so components weigh evenly).
    z: &'a [[f64; N_TARGETS]],
    raw: &'a [[f64; N_TARGETS]],
    hp: RfHyperparams,
    nodes: Vec<TreeNode>,
}

fn sse(sum: &[f64; N_TARGETS], sq: &[f64; N_TARGETS], n: f64) -> f64 {
    (0..N_TARGETS).map(|k| sq[k] - sum[k] * sum[k] / n).sum()
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut value = [0.0; N_TARGETS];
        for &i in idx {
            for k in 0..N_TARGETS {
                value[k] += self.raw[i][k];
            }
        }
        value.iter_mut().for_each(|v| *v /= idx.len() as f64);
        self.nodes.push(TreeNode::Leaf { value });
        self.nodes.len() - 1
    }

    /// Best variance-reduction split on `feature`: (gain, threshold, left count).
    fn best_split(&self, idx: &mut [usize], feature: usize) -> Option<(f64, f64, usize)> {
        let n = idx.len();
        idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]).then(a.cmp(&b)));
        let mut tot = [0.0; N_TARGETS];
        let mut tot_sq = [0.0; N_TARGETS];
        for &i in idx.iter() {
            for k in 0..N_TARGETS {
                tot[k] += self.z[i][k];
                tot_sq[k] += self.z[i][k] * self.z[i][k];
            }
        }
        let parent = sse(&tot, &tot_sq, n as f64);
        let mut l = [0.0; N_TARGETS];
        let mut l_sq = [0.0; N_TARGETS];
        let mut best: Option<(f64, f64, usize)> = None;
        for pos in 1..n {
            let i = idx[pos - 1];
            for k in 0..N_TARGETS {
                l[k] += self.z[i][k];
                l_sq[k] += self.z[i][k] * self.z[i][k];
            }
            if pos < self.hp.min_leaf || n - pos < self.hp.min_leaf {
                continue;
            }
            let (a, b) = (self.x[idx[pos - 1]][feature], self.x[idx[pos]][feature]);
            if !(a < b) {
                continue;
            }
            let r: [f64; N_TARGETS] = std::array::from_fn(|k| tot[k] - l[k]);
            let r_sq: [f64; N_TARGETS] = std::array::from_fn(|k| tot_sq[k] - l_sq[k]);
            let gain = parent - sse(&l, &l_sq, pos as f64) - sse(&r, &r_sq, (n - pos) as f64);
            if best.is_none_or(|(g, _, _)| gain > g) {
                let mut threshold = 0.5 * (a + b);
                if !(threshold < b) {
                    threshold = a;
                }
                best = Some((gain, threshold, pos));
            }
        }
        best.filter(|(g, _, _)| *g > 1e-12 * parent.max(1e-300))
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        if depth >= self.hp.max_depth || idx.len() < 2 * self.hp.min_leaf {
            return self.leaf(idx);
        }
        // Examine mtry features in random order; keep looking past mtry only
        // while no valid split has been found.
        let mut order: [usize; N_FEATURES] = std::array::from_fn(|i| i);
        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..N_FEATURES {
            if j >= self.hp.mtry() && best.is_some() {
                break;
            }
            let pick = rng.random_range(j..N_FEATURES);
            order.swap(j, pick);
            let f = order[j];
            if let Some((gain, threshold, _)) = self.best_split(idx, f) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(idx);
        };
        idx.sort_by(|&a, &b| self.x[a][feature].total_cmp(&self.x[b][feature]).then(a.cmp(&b)));
        let cut = idx.partition_point(|&i| self.x[i][feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: [0.0; N_TARGETS] });
        let (lo, hi) = idx.split_at_mut(cut);
        let left = self.grow(lo, depth + 1, rng);
        let right = self.grow(hi, depth + 1, rng);
        self.nodes[me] = TreeNode::Split { feature, threshold, left, right };
        me
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Trains a bootstrap-aggregated CART forest.
///
/// Each tree draws from its own seeded stream, so the result is independent
/// of thread scheduling. A single-tree forest is fitted on the full
/// training set without resampling. `validation` may be empty.
pub fn train_rf(
    train: &[Sample],
    validation: &[Sample],
    hp: &RfHyperparams,
    seed: u64,
) -> Result<(RandomForestModel, TrainReport), SurrogateError> {
    let started = Instant::now();
    validate_training(train)?;
    hp.validate()?;
    if train.len() < hp.min_leaf {
        return Err(SurrogateError::TooFewSamples { n: train.len(), min_leaf: hp.min_leaf });
    }
    let x: Vec<[f64; N_FEATURES]> = train.iter().map(|s| s.features.to_array()).collect();
    let raw: Vec<[f64; N_TARGETS]> = train.iter().map(|s| s.targets.to_array()).collect();
    let (normalizer, constant) = Normalizer::fit(&x);
    let (tnorm, _) = Normalizer::fit(&raw);
    let z: Vec<[f64; N_TARGETS]> = raw
        .iter()
        .map(|r| {
            let mut o = [0.0; N_TARGETS];
            tnorm.apply_into(r, &mut o);
            o
        })
        .collect();

    let n = train.len();
    let trees: Vec<Tree> = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut idx: Vec<usize> =
                if hp.n_trees == 1 { (0..n).collect() } else { (0..n).map(|_| rng.random_range(0..n)).collect() };
            let mut b = Builder { x: &x, z: &z, raw: &raw, hp: *hp, nodes: Vec::new() };
            b.grow(&mut idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    let model = RandomForestModel { trees, hp: *hp, seed, normalizer };

    let mut report = TrainReport::evaluate(
        "rf",
        serde_json::to_value(hp).expect("hyperparameters serialize"),
        seed,
        train,
        validation,
        |x| finalize(&model.predict_raw(x)).targets.to_array(),
    );
    report.note_constant_features(&constant);
    if !validation.is_empty() {
        report.ensemble_check = Some(ensemble_check(&model, validation, &tnorm));
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// Held-out RMSE (over z-scored targets) of the forest against its worst tree.
fn ensemble_check(model: &RandomForestModel, validation: &[Sample], tnorm: &Normalizer) -> EnsembleCheck {
    let scaled = |t: &[f64; N_TARGETS]| {
        let mut o = [0.0; N_TARGETS];
        tnorm.apply_into(t, &mut o);
        o
    };
    let rmse = |pred: &dyn Fn(&[f64; N_FEATURES]) -> [f64; N_TARGETS]| {
        let mut s = 0.0;
        for v in validation {
            let p = scaled(&pred(&v.features.to_array()));
            let r = scaled(&v.targets.to_array());
            s += p.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        (s / (validation.len() * N_TARGETS) as f64).sqrt()
    };
    let forest_rmse = rmse(&|x| model.predict_raw(x));
    let worst_tree_rmse = model.trees.iter().map(|t| rmse(&|x| *t.predict(x))).fold(0.0, f64::max);
    let holds = forest_rmse <= worst_tree_rmse;
    if !holds {
        log::warn!("forest held-out RMSE {forest_rmse:.4e} exceeds its worst tree ({worst_tree_rmse:.4e})");
    }
    EnsembleCheck { forest_rmse, worst_tree_rmse, holds }
}

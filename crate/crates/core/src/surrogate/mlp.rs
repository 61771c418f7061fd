use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::mlp_input_map;
use super::report::TrainReport;
use super::{finalize, validate_training, Normalizer, SurrogateError, TargetScaler};
use crate::tga::{Sample, N_FEATURES, N_TARGETS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpHyperparams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
}

impl Default for MlpHyperparams {
    fn default() -> Self {
        Self { hidden: vec![32], learning_rate: 1e-3, epochs: 500, batch_size: 32, momentum: 0.9 }
    }
}

impl MlpHyperparams {
    fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::InvalidHyperparameter(m));
        if self.hidden.iter().any(|&h| h == 0 || h > 4096) {
            return bad(format!("hidden sizes {:?} must lie in [1, 4096]", self.hidden));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum = {} outside [0, 1)", self.momentum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    /// Input, hidden..., output widths.
    pub sizes: Vec<usize>,
    /// Per layer: weights (row-major, `out x in`) then biases.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Normalizer,
    pub target: TargetScaler,
}

struct Trace {
    /// Activations per layer, input first.
    acts: Vec<Vec<f64>>,
}

impl MlpModel {
    fn init(sizes: Vec<usize>, input: Normalizer, target: TargetScaler, rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)).collect());
            biases.push(vec![0.0; w[1]]);
        }
        Self { sizes, weights, biases, input, target }
    }

    fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn forward(&self, z_in: &[f64]) -> Trace {
        let mut acts = vec![z_in.to_vec()];
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &acts[l];
            let w = &self.weights[l];
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| self.biases[l][o] + (0..n_in).map(|i| w[o * n_in + i] * a[i]).sum::<f64>())
                .collect();
            if l + 1 < self.n_layers() {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
        }
        Trace { acts }
    }

    fn scaled_input(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut z = [0.0; N_FEATURES];
        self.input.apply_into(&mlp_input_map(x), &mut z);
        z
    }

    pub fn predict_raw(&self, x: &[f64; N_FEATURES]) -> [f64; N_TARGETS] {
        let t = self.forward(&self.scaled_input(x));
        let out: [f64; N_TARGETS] = t.acts.last().unwrap()[..].try_into().expect("output width");
        self.target.unscale(&out)
    }

    pub fn n_parameters(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    /// All weights and biases, layer by layer (weights then biases).
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_parameters());
        for l in 0..self.n_layers() {
            p.extend(&self.weights[l]);
            p.extend(&self.biases[l]);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.n_parameters());
        let mut k = 0;
        for l in 0..self.n_layers() {
            for v in self.weights[l].iter_mut().chain(self.biases[l].iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }

    /// Mean squared error over scaled targets and its gradient with respect
    /// to [`Self::parameters`].
    pub fn loss_and_gradient(&self, samples: &[Sample]) -> (f64, Vec<f64>) {
        let data: Vec<_> = samples
            .iter()
            .map(|s| (self.scaled_input(&s.features.to_array()), self.target.scale(&s.targets.to_array())))
            .collect();
        let refs: Vec<_> = data.iter().map(|(x, y)| (&x[..], &y[..])).collect();
        self.batch_gradient(&refs)
    }

    fn batch_gradient(&self, batch: &[(&[f64], &[f64])]) -> (f64, Vec<f64>) {
        let nl = self.n_layers();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let scale = 1.0 / (batch.len() * N_TARGETS) as f64;
        let mut loss = 0.0;
        for (x, y) in batch {
            let t = self.forward(x);
            let out = &t.acts[nl];
            let mut delta: Vec<f64> = out.iter().zip(y.iter()).map(|(o, y)| 2.0 * (o - y) * scale).collect();
            loss += out.iter().zip(y.iter()).map(|(o, y)| (o - y).powi(2)).sum::<f64>() * scale;
            for l in (0..nl).rev() {
                let n_in = self.sizes[l];
                let a = &t.acts[l];
                for (o, d) in delta.iter().enumerate() {
                    gb[l][o] += d;
                    for i in 0..n_in {
                        gw[l][o * n_in + i] += d * a[i];
                    }
                }
                if l > 0 {
                    let w = &self.weights[l];
                    delta = (0..n_in)
                        .map(|i| {
                            let s: f64 = delta.iter().enumerate().map(|(o, d)| d * w[o * n_in + i]).sum();
                            s * (1.0 - a[i] * a[i])
                        })
                        .collect();
                }
            }
        }
        let mut g = Vec::with_capacity(self.n_parameters());
        for l in 0..nl {
            g.extend(&gw[l]);
            g.extend(&gb[l]);
        }
        (loss, g)
    }
}

/// Trains a tanh MLP by mini-batch gradient descent with momentum.
///
/// Inputs are log-mapped where they span decades, then z-scored; kinetic
/// targets are z-scored and yields enter as z-scored centered log-ratios.
/// Runs single-threaded so parameters depend only on the seed.
pub fn train_mlp(
    train: &[Sample],
    validation: &[Sample],
    hp: &MlpHyperparams,
    seed: u64,
) -> Result<(MlpModel, TrainReport), SurrogateError> {
    let started = Instant::now();
    validate_training(train)?;
    hp.validate()?;
    let x: Vec<[f64; N_FEATURES]> = train.iter().map(|s| mlp_input_map(&s.features.to_array())).collect();
    let raw: Vec<[f64; N_TARGETS]> = train.iter().map(|s| s.targets.to_array()).collect();
    let (input, constant) = Normalizer::fit(&x);
    let target = TargetScaler::fit(&raw);
    let mut sizes = vec![N_FEATURES];
    sizes.extend(&hp.hidden);
    sizes.push(N_TARGETS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::init(sizes, input, target, &mut rng);

    let data: Vec<(Vec<f64>, Vec<f64>)> = x
        .iter()
        .zip(&raw)
        .map(|(x, t)| {
            let mut z = vec![0.0; N_FEATURES];
            model.input.apply_into(x, &mut z);
            (z, model.target.scale(t).to_vec())
        })
        .collect();
    let all: Vec<(&[f64], &[f64])> = data.iter().map(|(x, y)| (&x[..], &y[..])).collect();

    let mut params = model.parameters();
    let mut velocity = vec![0.0; params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut loss_curve = Vec::with_capacity(hp.epochs);
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hp.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| all[i]).collect();
            let (_, g) = model.batch_gradient(&batch);
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = hp.momentum * *v - hp.learning_rate * g;
                *p += *v;
            }
            model.set_parameters(&params);
        }
        let (loss, _) = model.batch_gradient(&all);
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(SurrogateError::Divergence { epoch });
        }
        loss_curve.push(loss);
    }

    let mut report = TrainReport::evaluate(
        "mlp",
        serde_json::to_value(hp).expect("hyperparameters serialize"),
        seed,
        train,
        validation,
        |x| finalize(&model.predict_raw(x)).targets.to_array(),
    );
    report.loss_curve = loss_curve;
    report.note_constant_features(&constant);
    if hp.epochs == 0 {
        report.flags.push("UNTRAINED".into());
    }
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::SingleStepKinetics;
    use crate::tga::{builtin_fuels, FeatureVector, Provenance, TargetVector, Yields};

    fn samples(n: usize) -> Vec<Sample> {
        let fuel = &builtin_fuels()[0];
        (0..n)
            .map(|i| {
                let t = 700.0 + 3.0 * i as f64;
                Sample {
                    features: FeatureVector::new(fuel, t, 1.0 + i as f64, 101_325.0, [1e4, 0.0, 0.0]),
                    targets: TargetVector {
                        kinetics: SingleStepKinetics::new(10.0 + 0.01 * t, 1e5 + 10.0 * t, 1.0),
                        yields: Yields { gas: 0.5, liquid: 0.3, solid: 0.2 },
                    },
                    provenance: Provenance::Simulation,
                    source_id: format!("{i}"),
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_initialization() {
        let s = samples(20);
        let hp = MlpHyperparams { epochs: 0, ..Default::default() };
        let (m, r) = train_mlp(&s, &[], &hp, 4).unwrap();
        assert!(r.flags.iter().any(|f| f == "UNTRAINED"));
        assert!(r.loss_curve.is_empty());
        let x: Vec<_> = s.iter().map(|s| mlp_input_map(&s.features.to_array())).collect();
        let t: Vec<_> = s.iter().map(|s| s.targets.to_array()).collect();
        let fresh = MlpModel::init(
            vec![N_FEATURES, 32, N_TARGETS],
            Normalizer::fit(&x).0,
            TargetScaler::fit(&t),
            &mut ChaCha8Rng::seed_from_u64(4),
        );
        assert_eq!(m, fresh);
    }

    #[test]
    fn loss_decreases() {
        let s = samples(50);
        let hp = MlpHyperparams { epochs: 100, learning_rate: 1e-2, ..Default::default() };
        let (_, r) = train_mlp(&s, &[], &hp, 1).unwrap();
        assert!(r.loss_curve.last().unwrap() < &(0.1 * r.loss_curve[0]), "{:?}", &r.loss_curve[..3]);
    }

    #[test]
    fn huge_step_diverges_with_epoch() {
        let s = samples(50);
        let hp = MlpHyperparams { epochs: 200, learning_rate: 1e6, momentum: 0.99, ..Default::default() };
        match train_mlp(&s, &[], &hp, 1) {
            Err(SurrogateError::Divergence { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|_| ())),
        }
    }
}

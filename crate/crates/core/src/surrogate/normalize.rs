use serde::{Deserialize, Serialize};

use crate::tga::{N_FEATURES, N_TARGETS};

/// Per-column z-scoring with training-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits column statistics. Constant columns get stddev 1; their indices
    /// are returned so callers can record a warning.
    pub fn fit<const D: usize>(rows: &[[f64; D]]) -> (Self, Vec<usize>) {
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; D];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut std = vec![0.0; D];
        for r in rows {
            for j in 0..D {
                std[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let mut constant = Vec::new();
        for (j, s) in std.iter_mut().enumerate() {
            *s = (*s / n).sqrt();
            if !(*s > 1e-12 * mean[j].abs().max(1e-300)) {
                *s = 1.0;
                constant.push(j);
            }
        }
        (Self { mean, std }, constant)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        for j in 0..x.len() {
            out[j] = (x[j] - self.mean[j]) / self.std[j];
        }
    }

    pub fn invert_into(&self, z: &[f64], out: &mut [f64]) {
        for j in 0..z.len() {
            out[j] = z[j] * self.std[j] + self.mean[j];
        }
    }
}

/// Fixed transform applied to MLP inputs before z-scoring: heating rate,
/// pressure and partial pressures span decades and enter on a log scale.
pub(crate) fn mlp_input_map(x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
    let mut out = *x;
    out[10] = x[10].max(1e-6).ln();
    for j in 11..N_FEATURES {
        out[j] = x[j].max(0.0).ln_1p();
    }
    out
}

const YIELD_FLOOR: f64 = 1e-9;

/// Output conditioning for the MLP: z-scored kinetics and z-scored
/// centered log-ratios of the yields, inverted through a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub norm: Normalizer,
}

impl TargetScaler {
    fn to_logits(t: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        let mut out = *t;
        let logs: [f64; 3] = std::array::from_fn(|i| t[3 + i].max(YIELD_FLOOR).ln());
        let m = logs.iter().sum::<f64>() / 3.0;
        for i in 0..3 {
            out[3 + i] = logs[i] - m;
        }
        out
    }

    pub fn fit(targets: &[[f64; N_TARGETS]]) -> Self {
        let logits: Vec<_> = targets.iter().map(Self::to_logits).collect();
        Self { norm: Normalizer::fit(&logits).0 }
    }

    pub fn scale(&self, t: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        let mut out = [0.0; N_TARGETS];
        self.norm.apply_into(&Self::to_logits(t), &mut out);
        out
    }

    pub fn unscale(&self, z: &[f64; N_TARGETS]) -> [f64; N_TARGETS] {
        let mut out = [0.0; N_TARGETS];
        self.norm.invert_into(z, &mut out);
        let mx = out[3..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: [f64; 3] = std::array::from_fn(|i| (out[3 + i] - mx).exp());
        let s: f64 = e.iter().sum();
        for i in 0..3 {
            out[3 + i] = e[i] / s;
        }
        out
    }
}

//! Coefficient of determination and root-mean-square error.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("series lengths differ: {predicted} predicted vs {reference} reference")]
    LengthMismatch { predicted: usize, reference: usize },
    #[error("series is empty")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("reference values have zero variance; R^2 is undefined")]
    ZeroVariance,
}

/// Predicted values paired with reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    y_cal: Vec<f64>,
    y_exp: Vec<f64>,
}

impl PairedSeries {
    pub fn new(y_cal: Vec<f64>, y_exp: Vec<f64>) -> Result<Self, MetricsError> {
        if y_cal.len() != y_exp.len() {
            return Err(MetricsError::LengthMismatch { predicted: y_cal.len(), reference: y_exp.len() });
        }
        if y_cal.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(i) = y_cal.iter().zip(&y_exp).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        Ok(Self { y_cal, y_exp })
    }

    pub fn len(&self) -> usize {
        self.y_cal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_cal.is_empty()
    }

    pub fn predicted(&self) -> &[f64] {
        &self.y_cal
    }

    pub fn reference(&self) -> &[f64] {
        &self.y_exp
    }

    fn sse(&self) -> f64 {
        self.y_cal.iter().zip(&self.y_exp).map(|(c, e)| (c - e) * (c - e)).sum()
    }

    fn total_variation(&self) -> f64 {
        let mean = self.y_exp.iter().sum::<f64>() / self.len() as f64;
        self.y_exp.iter().map(|e| (e - mean) * (e - mean)).sum()
    }
}

/// `1 - sum (y_cal - y_exp)^2 / sum (y_exp - mean)^2`.
///
/// A constant reference is reported as zero variance even when rounding in
/// the mean leaves a tiny nonzero denominator.
pub fn r_squared(p: &PairedSeries) -> Result<f64, MetricsError> {
    let sst = p.total_variation();
    if sst == 0.0 || p.y_exp.iter().all(|e| *e == p.y_exp[0]) {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(1.0 - p.sse() / sst)
}

/// `sqrt(sum (y_cal - y_exp)^2 / N)`.
pub fn rmse(p: &PairedSeries) -> f64 {
    (p.sse() / p.len() as f64).sqrt()
}

/// R^2 and RMSE of one target component; R^2 is `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub r2: Option<f64>,
    pub rmse: f64,
    pub n: usize,
}

impl Score {
    pub fn of(p: &PairedSeries) -> Self {
        Self { r2: r_squared(p).ok(), rmse: rmse(p), n: p.len() }
    }
}

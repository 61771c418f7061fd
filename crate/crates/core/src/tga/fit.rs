//! Least-squares fit of the single-step law to a TG conversion curve.
//!
//! The model is integrated exactly along the measured temperature
//! program and normalized by its value at the last point, so truncated
//! ramps compare like with like. Parameters are searched as
//! `(ln k(T_ref), Ea / 1e5, n)` with `T_ref` the half-conversion
//! temperature, which removes most of the ln A / Ea correlation.

use serde::{Deserialize, Serialize};

use super::curve::arrhenius_integrals;
use super::{TgaCurve, TgaError};
use crate::kinetics::{remaining_after_integral, SingleStepKinetics, EA_RANGE, ORDER_RANGE, R_GAS};
use crate::metrics::{r_squared, PairedSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Reaction orders used to seed independent starts.
    pub start_orders: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 400, start_orders: vec![0.5, 1.0, 2.0, 3.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kinetics: SingleStepKinetics,
    /// R^2 of the modeled conversion trajectory against the data.
    pub r2: f64,
    pub iterations: usize,
    /// Whether the optimum had to be clamped into the parameter bounds.
    pub clamped: bool,
}

const EA_SCALE: f64 = 1e5;

struct Problem<'a> {
    time: &'a [f64],
    temperature: &'a [f64],
    alpha: Vec<f64>,
    t_ref: f64,
}

impl Problem<'_> {
    fn kinetics(&self, p: &[f64; 3]) -> SingleStepKinetics {
        let ea = p[1] * EA_SCALE;
        SingleStepKinetics::new(p[0] + ea / (R_GAS * self.t_ref), ea, p[2])
    }

    fn params(&self, k: &SingleStepKinetics) -> [f64; 3] {
        [k.ln_a - k.ea / (R_GAS * self.t_ref), k.ea / EA_SCALE, k.n]
    }

    fn model(&self, k: &SingleStepKinetics) -> Vec<f64> {
        let integrals = arrhenius_integrals(k.ln_a, k.ea, self.time, self.temperature);
        let mut a: Vec<f64> = integrals.iter().map(|&i| 1.0 - remaining_after_integral(1.0, k.n, i)).collect();
        let end = *a.last().unwrap();
        if end > 1e-300 {
            a.iter_mut().for_each(|v| *v /= end);
        }
        a
    }

    fn residuals(&self, p: &[f64; 3]) -> Vec<f64> {
        let m = self.model(&self.kinetics(p));
        m.iter().zip(&self.alpha).map(|(a, b)| a - b).collect()
    }
}

fn bounds() -> ([f64; 3], [f64; 3]) {
    ([f64::NEG_INFINITY, EA_RANGE.0 / EA_SCALE, ORDER_RANGE.0], [f64::INFINITY, EA_RANGE.1 / EA_SCALE, ORDER_RANGE.1])
}

fn project(p: &mut [f64; 3]) {
    let (lo, hi) = bounds();
    for k in 0..3 {
        p[k] = p[k].clamp(lo[k], hi[k]);
    }
}

/// Linearized integral-method estimate for a fixed order `n`.
fn coats_redfern(prob: &Problem, beta: f64, n: f64) -> [f64; 3] {
    let g = |a: f64| {
        if (n - 1.0).abs() < 1e-9 {
            -(1.0 - a).ln()
        } else {
            (1.0 - (1.0 - a).powf(1.0 - n)) / (1.0 - n)
        }
    };
    let pts: Vec<(f64, f64)> = prob
        .alpha
        .iter()
        .zip(prob.temperature)
        .filter(|(a, _)| (0.05..=0.9).contains(*a))
        .map(|(&a, &t)| (1.0 / t, (g(a) / (t * t)).ln()))
        .filter(|(_, y)| y.is_finite())
        .collect();
    let fallback_ea = 1.5e5;
    let kissinger = |ea: f64| (beta * ea / (R_GAS * prob.t_ref * prob.t_ref)).ln();
    if pts.len() < 3 {
        return [kissinger(fallback_ea), fallback_ea / EA_SCALE, n];
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ea = (-slope * R_GAS).clamp(2e4, 6e5);
    let intercept = my - slope * mx;
    let ln_a = intercept + (beta * ea / R_GAS).ln();
    let mut p = [ln_a - ea / (R_GAS * prob.t_ref), ea / EA_SCALE, n];
    if !p.iter().all(|v| v.is_finite()) {
        p = [kissinger(fallback_ea), fallback_ea / EA_SCALE, n];
    }
    p
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0; 4]; 3];
    for i in 0..3 {
        m[i][..3].copy_from_slice(&a[i]);
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

struct LmOutcome {
    params: [f64; 3],
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn levenberg_marquardt(prob: &Problem, start: [f64; 3], max_iter: usize) -> LmOutcome {
    let mut p = start;
    project(&mut p);
    let mut r = prob.residuals(&p);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    if !cost.is_finite() {
        return LmOutcome { params: p, cost: f64::INFINITY, iterations: 0, converged: false };
    }
    let mut lambda = 1e-3;
    let n = r.len();
    let mut jac = vec![[0.0; 3]; n];
    for it in 1..=max_iter {
        if cost < 1e-28 {
            return LmOutcome { params: p, cost, iterations: it, converged: true };
        }
        for k in 0..3 {
            let h = 1e-6 * p[k].abs().max(1.0);
            let mut up = p;
            let mut dn = p;
            up[k] += h;
            dn[k] -= h;
            let ru = prob.residuals(&up);
            let rd = prob.residuals(&dn);
            for i in 0..n {
                jac[i][k] = (ru[i] - rd[i]) / (2.0 * h);
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..n {
            for a in 0..3 {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..3 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        // coordinates pinned at a bound with the gradient pushing outward stay fixed
        let (lo, hi) = bounds();
        let pinned: [bool; 3] =
            std::array::from_fn(|k| (p[k] <= lo[k] && jtr[k] > 0.0) || (p[k] >= hi[k] && jtr[k] < 0.0));
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            let mut rhs = [-jtr[0], -jtr[1], -jtr[2]];
            for d in 0..3 {
                a[d][d] += lambda * jtj[d][d].max(1e-12);
                if pinned[d] {
                    a[d] = [0.0; 3];
                    a[d][d] = 1.0;
                    rhs[d] = 0.0;
                    for row in 0..3 {
                        if row != d {
                            a[row][d] = 0.0;
                        }
                    }
                }
            }
            let Some(step) = solve3(a, rhs) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2]];
            project(&mut trial);
            let tr = prob.residuals(&trial);
            let tc: f64 = tr.iter().map(|v| v * v).sum();
            if tc.is_finite() && tc < cost {
                let moved = (0..3).map(|k| (trial[k] - p[k]).abs() / p[k].abs().max(1.0)).fold(0.0, f64::max);
                let rel_gain = (cost - tc) / cost;
                p = trial;
                r = tr;
                cost = tc;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if moved < 1e-9 || rel_gain < 1e-12 {
                    return LmOutcome { params: p, cost, iterations: it, converged: true };
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // no descent direction left: a (local) minimum
            return LmOutcome { params: p, cost, iterations: it, converged: true };
        }
    }
    LmOutcome { params: p, cost, iterations: max_iter, converged: false }
}

/// Fits `(ln A, Ea, n)` to the curve's conversion trajectory
/// `alpha = (1 - m) / (1 - m_end)`.
pub fn fit_single_step(curve: &TgaCurve, opts: &FitOptions) -> Result<FitResult, TgaError> {
    let n = curve.len();
    if n < 16 || curve.temperature.len() != n || curve.mass_fraction.len() != n {
        return Err(TgaError::InvalidInput("curve grids must share a length of at least 16".into()));
    }
    let loss = 1.0 - curve.final_mass();
    if !(loss >= 0.01) {
        return Err(TgaError::DegenerateCurve { mass_loss: loss });
    }
    let alpha: Vec<f64> = curve.mass_fraction.iter().map(|m| (1.0 - m) / loss).collect();
    let half = alpha.iter().position(|&a| a >= 0.5).unwrap_or(n - 1).max(1);
    let (a0, a1) = (alpha[half - 1], alpha[half]);
    let w = if a1 > a0 { (0.5 - a0) / (a1 - a0) } else { 1.0 };
    let t_ref =
        curve.temperature[half - 1] + w.clamp(0.0, 1.0) * (curve.temperature[half] - curve.temperature[half - 1]);
    let prob = Problem { time: &curve.time, temperature: &curve.temperature, alpha, t_ref };
    let duration = curve.time[n - 1] - curve.time[0];
    let beta = (curve.temperature[n - 1] - curve.temperature[0]) / duration;

    let mut best: Option<LmOutcome> = None;
    let mut total_iter = 0;
    for &n0 in &opts.start_orders {
        let start = coats_redfern(&prob, beta, n0);
        let out = levenberg_marquardt(&prob, start, opts.max_iterations);
        total_iter += out.iterations;
        let better = match &best {
            None => true,
            Some(b) => out.cost < b.cost,
        };
        if better {
            best = Some(out);
        }
    }
    let best = best.ok_or_else(|| TgaError::InvalidInput("no start orders configured".into()))?;
    let raw = prob.kinetics(&best.params);
    let (kinetics, clamped) = raw.clamped();
    let params = prob.params(&kinetics);
    let model = prob.model(&prob.kinetics(&params));
    let series = PairedSeries::new(model, prob.alpha.clone())
        .map_err(|e| TgaError::InvalidInput(format!("fit produced an invalid trajectory: {e}")))?;
    let r2 = r_squared(&series).map_err(|e| TgaError::InvalidInput(e.to_string()))?;
    if !best.converged {
        return Err(TgaError::NonConvergence { best: kinetics, r2, iterations: total_iter });
    }
    Ok(FitResult { kinetics, r2, iterations: total_iter, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tga::synthesize_single_step;

    #[test]
    fn recovers_generator_parameters() {
        let k = SingleStepKinetics::new(20.0, 1.2e5, 1.0);
        let curve = synthesize_single_step(&k, 0.8, 10.0 / 60.0, (300.0, 1000.0), 401).unwrap();
        let fit = fit_single_step(&curve, &FitOptions::default()).unwrap();
        assert!((fit.kinetics.ln_a - 20.0).abs() / 20.0 < 0.02, "{fit:?}");
        assert!((fit.kinetics.ea - 1.2e5).abs() / 1.2e5 < 0.02);
        assert!((fit.kinetics.n - 1.0).abs() < 0.02);
        assert!(fit.r2 > 0.999);
    }

    #[test]
    fn flat_curve_is_degenerate() {
        let time: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let temp: Vec<f64> = time.iter().map(|t| 300.0 + t).collect();
        let curve = TgaCurve::from_mass(time, temp, vec![1.0; 20]).unwrap();
        assert!(matches!(fit_single_step(&curve, &FitOptions::default()), Err(TgaError::DegenerateCurve { .. })));
    }

    #[test]
    fn solve3_identity() {
        let x = solve3([[2.0, 0.0, 0.0], [0.0, 4.0, 0.0], [1.0, 0.0, 1.0]], [2.0, 8.0, 4.0]).unwrap();
        assert_eq!(x, [1.0, 2.0, 3.0]);
    }
}

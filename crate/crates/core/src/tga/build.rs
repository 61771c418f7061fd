use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    devolatilization_yields, fit_single_step, run_virtual_tga, Ambient, FeatureVector, FitOptions, FuelSpec,
    Provenance, Sample, TargetVector, TgaError, TgaOptions,
};
use crate::kinetics::ReactionMechanism;

/// Scan dimensions of a simulated dataset; samples are their Cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetGrid {
    pub fuels: Vec<FuelSpec>,
    /// K/s
    pub betas: Vec<f64>,
    /// Furnace start and end temperatures, K.
    pub t_ranges: Vec<(f64, f64)>,
    /// Pa
    pub pressures: Vec<f64>,
    pub ambients: Vec<Ambient>,
    /// Relative perturbation amplitude applied to fuel compositions.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub tga: TgaOptions,
    #[serde(default)]
    pub fit: FitOptions,
}

impl DatasetGrid {
    pub fn len(&self) -> usize {
        self.fuels.len() * self.betas.len() * self.t_ranges.len() * self.pressures.len() * self.ambients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid indices of point `i` in (fuel, beta, range, pressure, ambient) order.
    fn unravel(&self, mut i: usize) -> [usize; 5] {
        let dims = [self.fuels.len(), self.betas.len(), self.t_ranges.len(), self.pressures.len(), self.ambients.len()];
        let mut out = [0; 5];
        for d in (0..5).rev() {
            out[d] = i % dims[d];
            i /= dims[d];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub points: usize,
    pub failures: Vec<PointFailure>,
    /// Smallest fit R^2 among accepted samples.
    pub min_fit_r2: Option<f64>,
}

/// Runs the virtual TGA for one condition and fits its kinetic label.
///
/// The kinetic label describes devolatilization, so the sample is dried
/// before the run, as in laboratory practice; the fuel's moisture remains a
/// feature.
pub fn label_point(
    mech: &ReactionMechanism,
    fuel: &FuelSpec,
    beta: f64,
    t_range: (f64, f64),
    ambient: &Ambient,
    tga: &TgaOptions,
    fit: &FitOptions,
) -> Result<(TargetVector, f64), TgaError> {
    let curve = run_virtual_tga(&fuel.dry_basis(), beta, t_range, ambient, mech, tga)?;
    let f = fit_single_step(&curve, fit)?;
    Ok((TargetVector { kinetics: f.kinetics, yields: devolatilization_yields(mech)? }, f.r2))
}

fn jittered(fuel: &FuelSpec, amplitude: f64, rng: &mut ChaCha8Rng) -> FuelSpec {
    let mut perturb = |v: &mut [f64]| {
        for x in v.iter_mut() {
            *x *= 1.0 + amplitude * rng.random_range(-1.0..=1.0);
        }
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    };
    let mut p = fuel.proximate_array();
    let mut u = fuel.ultimate_array();
    perturb(&mut p);
    perturb(&mut u);
    let mut out = fuel.clone();
    out.proximate.moisture = p[0];
    out.proximate.volatile = p[1];
    out.proximate.fixed_carbon = p[2];
    out.proximate.ash = p[3];
    out.ultimate.c = u[0];
    out.ultimate.h = u[1];
    out.ultimate.o = u[2];
    out.ultimate.n = u[3];
    out.ultimate.s = u[4];
    out
}

/// Generates one SIMULATION sample per grid point.
///
/// Points run in parallel but are assembled in grid order; with zero
/// jitter the seed is unused. Failed points are reported and skipped
/// unless more than 10% fail.
pub fn build_dataset(
    mech: &ReactionMechanism,
    grid: &DatasetGrid,
    seed: u64,
) -> Result<(Vec<Sample>, BuildReport), TgaError> {
    if grid.is_empty() {
        return Err(TgaError::InvalidInput("dataset grid has an empty dimension".into()));
    }
    if !(grid.jitter >= 0.0 && grid.jitter < 0.5) {
        return Err(TgaError::InvalidInput(format!("jitter {} must lie in [0, 0.5)", grid.jitter)));
    }
    let total = grid.len();
    let results: Vec<Result<(Sample, f64), String>> = (0..total)
        .into_par_iter()
        .map(|i| {
            let [fi, bi, ri, pi, ai] = grid.unravel(i);
            let mut fuel = grid.fuels[fi].clone();
            if grid.jitter > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                fuel = jittered(&fuel, grid.jitter, &mut rng);
            }
            let (beta, range, pressure, ambient) =
                (grid.betas[bi], grid.t_ranges[ri], grid.pressures[pi], grid.ambients[ai]);
            let (targets, r2) =
                label_point(mech, &fuel, beta, range, &ambient, &grid.tga, &grid.fit).map_err(|e| e.to_string())?;
            let features = FeatureVector::new(&fuel, range.1, beta, pressure, ambient.to_array());
            let name = if fuel.name.is_empty() { format!("fuel{fi}") } else { fuel.name.clone() };
            let source_id = format!("sim:{name}:beta={beta}:T={}-{}:P={pressure}:amb={ai}", range.0, range.1);
            Ok((Sample { features, targets, provenance: Provenance::Simulation, source_id }, r2))
        })
        .collect();

    let mut samples = Vec::with_capacity(total);
    let mut failures = Vec::new();
    let mut min_r2: Option<f64> = None;
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok((s, r2)) => {
                min_r2 = Some(min_r2.map_or(r2, |m| m.min(r2)));
                samples.push(s);
            }
            Err(message) => {
                log::warn!("dataset point {index} failed: {message}");
                failures.push(PointFailure { index, message });
            }
        }
    }
    if failures.len() * 10 > total {
        return Err(TgaError::TooManyFailures { failed: failures.len(), total, first: failures[0].message.clone() });
    }
    Ok((samples, BuildReport { points: total, failures, min_fit_r2: min_r2 }))
}

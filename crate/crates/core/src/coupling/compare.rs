use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{CouplingError, KineticsMode, KineticsProvider, RunReport, RunStatus, ScenarioConfig, Simulation};
use crate::metrics::{PairedSeries, Score};
use crate::surrogate::SurrogateModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesAgreement {
    pub species: String,
    /// `None` when the reference history is constant.
    pub r2: Option<f64>,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: RunReport,
    pub candidate: RunReport,
    /// Outlet mass-fraction histories, candidate against reference.
    pub outlet: Vec<SpeciesAgreement>,
    /// Smallest outlet R^2 over species with a varying reference history.
    pub min_outlet_r2: Option<f64>,
    /// `||V_c - V_r|| / ||V_r||` over the cumulative volatile history.
    pub volatile_rel_l2: f64,
    /// Mean wall time per fresh kinetics evaluation, s.
    pub reference_cost_per_query: Option<f64>,
    pub candidate_cost_per_query: Option<f64>,
    /// Reference cost over candidate cost per evaluation.
    pub cost_ratio: Option<f64>,
    /// Reference over candidate end-to-end wall time.
    pub speedup: f64,
    pub status: RunStatus,
}

/// Runs the scenario with two providers and scores the candidate against
/// the reference. Either run failing its audits fails the comparison.
pub fn compare_providers(
    config: &ScenarioConfig,
    reference: &mut KineticsProvider,
    candidate: &mut KineticsProvider,
) -> Result<ComparisonReport, CouplingError> {
    let sim = Simulation::new(config.clone())?;
    let (r, _) = sim.run(reference, None)?;
    let (c, _) = sim.run(candidate, None)?;
    let status = if r.status == RunStatus::Pass && c.status == RunStatus::Pass && r.snapshots.len() == c.snapshots.len()
    {
        RunStatus::Pass
    } else {
        RunStatus::Failed
    };
    let mut outlet = Vec::new();
    if !r.snapshots.is_empty() && r.snapshots.len() == c.snapshots.len() {
        for (i, name) in r.species.iter().enumerate() {
            let reference: Vec<f64> = r.snapshots.iter().map(|s| s.outlet[i]).collect();
            let candidate: Vec<f64> = c.snapshots.iter().map(|s| s.outlet[i]).collect();
            let score = Score::of(&PairedSeries::new(candidate, reference).expect("equal non-empty histories"));
            outlet.push(SpeciesAgreement { species: name.clone(), r2: score.r2, rmse: score.rmse });
        }
    }
    let min_outlet_r2 = outlet.iter().filter_map(|s| s.r2).reduce(f64::min);
    let vr: Vec<f64> = r.snapshots.iter().map(|s| s.volatile_released).collect();
    let vc: Vec<f64> = c.snapshots.iter().map(|s| s.volatile_released).collect();
    let norm: f64 = vr.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: f64 = vr.iter().zip(&vc).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let volatile_rel_l2 = if norm > 0.0 {
        diff / norm
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let reference_cost_per_query = r.queries.cost_per_evaluation();
    let candidate_cost_per_query = c.queries.cost_per_evaluation();
    let cost_ratio = match (reference_cost_per_query, candidate_cost_per_query) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let speedup = r.timings.total / c.timings.total;
    Ok(ComparisonReport {
        reference: r,
        candidate: c,
        outlet,
        min_outlet_r2,
        volatile_rel_l2,
        reference_cost_per_query,
        candidate_cost_per_query,
        cost_ratio,
        speedup,
        status,
    })
}

/// ORACLE against SURROGATE on the same scenario and seed.
pub fn compare(config: &ScenarioConfig, model: Arc<SurrogateModel>) -> Result<ComparisonReport, CouplingError> {
    let sim = Simulation::new(config.clone())?;
    let mut oracle_cfg = config.kinetics.clone();
    oracle_cfg.mode = KineticsMode::Oracle;
    let mut surrogate_cfg = config.kinetics.clone();
    surrogate_cfg.mode = KineticsMode::Surrogate;
    let mut oracle = KineticsProvider::new(oracle_cfg, sim.mech.clone(), None)?;
    let mut surrogate = KineticsProvider::new(surrogate_cfg, sim.mech.clone(), Some(model))?;
    compare_providers(config, &mut oracle, &mut surrogate)
}

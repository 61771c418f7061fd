//! The coupled loop: particles advance in the local gas, their kinetics
//! come from the mechanism or a trained surrogate, and their releases feed
//! back into the gas as source terms.

mod compare;
mod provider;
mod scenario;
mod sim;

pub use compare::{compare, compare_providers, ComparisonReport, SpeciesAgreement};
pub use provider::{
    query_window, KineticsMode, KineticsProvider, ProviderConfig, QueryKey, QueryStats, BETA_QUERY_WINDOW,
    T_QUERY_WINDOW,
};
pub use scenario::{
    FaultInjection, FaultKind, FeedConfig, FuelRef, GasInit, GridConfig, InletConfig, ParticleProps, ScenarioConfig,
    TransportConfig, WallConfig,
};
pub use sim::{
    run, snapshot_header, snapshot_record, write_snapshots, AuditSummary, CachedKinetics, Ledger, ParticleSlot,
    RunReport, RunStatus, SimState, Simulation, Snapshot, StepAudit, Timings, AUDIT_ENTHALPY_TOL, AUDIT_MASS_TOL,
};

use crate::fluid::{FluidError, GasCell, GasThermo};
use crate::kinetics::KineticsError;
use crate::particles::{Particle, ParticleError};
use crate::surrogate::SurrogateError;
use crate::tga::{FeatureVector, FuelSpec, TgaError};

#[derive(Debug, thiserror::Error)]
pub enum CouplingError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("audit failed at step {step}: {what} residual {residual:.3e} exceeds {limit:.0e}")]
    Audit { step: u64, what: &'static str, residual: f64, limit: f64 },
    #[error("step {step} failed: {source}")]
    Step { step: u64, source: Box<CouplingError> },
    #[error("injected fault at step {0}")]
    Injected(u64),
    #[error(transparent)]
    Fluid(#[from] FluidError),
    #[error(transparent)]
    Particle(#[from] ParticleError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error(transparent)]
    Tga(#[from] TgaError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The surrogate's input for a particle in `cell`: fuel composition, the
/// particle's temperature and smoothed heating rate, the cell pressure and
/// the H2O, O2 and CO2 partial pressures.
pub fn local_conditions(p: &Particle, cell: &GasCell, thermo: &GasThermo, fuel: &FuelSpec) -> FeatureVector {
    let m_mix = thermo.mean_molar_mass(&cell.y);
    let partial = |name: &str| thermo.index(name).map_or(0.0, |i| cell.p * cell.y[i] * m_mix / thermo.molar_mass[i]);
    FeatureVector::new(fuel, p.t_p, p.beta_est, cell.p, [partial("H2O"), partial("O2"), partial("CO2")])
}

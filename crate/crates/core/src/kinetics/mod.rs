//! Species and reaction data model plus the exact chemistry engine.
//!
//! Concentrations are molar (mol/m^3). Rate laws follow mass action with
//! `0^0 = 1`; reverse rate constants come from their own Arrhenius
//! parameters rather than from equilibrium constants.

mod integrate;
mod mechanism;
mod rates;
mod reaction;
mod species;

pub use integrate::{
    integrate, integrate_point, integrate_point_with, IntegrationStats, IntegratorOptions, MechanismSystem, OdeSystem,
    Scheme, DT_MIN,
};
pub use mechanism::{ReactionMechanism, SolidRoles, BUILTIN_MECHANISMS};
pub use rates::{
    devol_rate, heat_of_reaction, reaction_rate, remaining_after_integral, species_rates, species_rates_into,
    PointState, SingleStepKinetics, EA_RANGE, LN_A_RANGE, ORDER_RANGE,
};
pub use reaction::{rate_constant, ArrheniusParams, HeatOfReaction, Reaction};
pub use species::{atomic_mass, Phase, Species, ATOMIC_MASSES, DEFAULT_ASH_MASS};

/// Universal gas constant, J/(mol K).
pub const R_GAS: f64 = 8.314462618;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KineticsError {
    #[error("non-finite rate constant for A={a}, b={b}, Ea={ea} at T={t} K")]
    NonFiniteRate { a: f64, b: f64, ea: f64, t: f64 },
    #[error("rate of reaction {reaction} undefined: `{species}` is zero with a negative order")]
    UndefinedRate { reaction: String, species: String },
    #[error("reaction {reaction}: species `{species}` has no formation enthalpy")]
    MissingFormationEnthalpy { reaction: String, species: String },
    #[error(
        "stiffness failure at t={time_reached:.6e} of {dt:.6e} s: step {step:.3e} below minimum \
         (error norm {error_norm:.3e}, {accepted} accepted / {rejected} rejected steps)"
    )]
    Stiffness { time_reached: f64, dt: f64, step: f64, error_norm: f64, accepted: usize, rejected: usize },
    #[error("mechanism file line {line}: {message}")]
    MechanismFile { line: usize, message: String },
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

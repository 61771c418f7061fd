//! Virtual thermogravimetry, single-step kinetic fitting and the
//! feature/target dataset built from them.

mod build;
mod csv_io;
mod curve;
mod fit;
mod fuel;
mod sample;
mod split;

pub use build::{build_dataset, label_point, BuildReport, DatasetGrid, PointFailure};
pub use csv_io::{
    ingest_csv, ingest_reader, read_dataset, read_dataset_from, write_csv, write_csv_to, IngestIssue, IngestReport,
    CSV_HEADER,
};
pub use curve::{run_virtual_tga, synthesize_single_step, Ambient, TgaCurve, TgaOptions, TGA_T_LIMITS};
pub use fit::{fit_single_step, FitOptions, FitResult};
pub use fuel::{builtin_fuels, FuelSpec, Proximate, SolidLoading, Ultimate};
pub use sample::{
    devolatilization_yields, Dataset, FeatureVector, Provenance, Sample, TargetVector, Yields, FEATURE_NAMES,
    N_FEATURES, N_TARGETS, TARGET_NAMES,
};
pub use split::split;

use crate::kinetics::{KineticsError, SingleStepKinetics};

#[derive(Debug, thiserror::Error)]
pub enum TgaError {
    #[error("invalid fuel: {0}")]
    InvalidFuel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("degenerate curve: total mass loss {mass_loss:.3e} is below 1%")]
    DegenerateCurve { mass_loss: f64 },
    #[error("fit did not converge after {iterations} iterations (best R^2 {r2:.6}, best {best:?})")]
    NonConvergence { best: SingleStepKinetics, r2: f64, iterations: usize },
    #[error("{failed} of {total} grid points failed (more than 10%); first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("validation split requested but the dataset holds no EXPERIMENT samples")]
    NoExperimentSamples,
    #[error("ingestion failed: {0}")]
    Ingest(IngestReport),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

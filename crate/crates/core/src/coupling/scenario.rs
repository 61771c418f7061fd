use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CouplingError, ProviderConfig};
use crate::particles::ExchangeConfig;
use crate::tga::{builtin_fuels, FuelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_cells: usize,
    /// m
    pub dz: f64,
    /// m^2
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InletConfig {
    /// kg/s
    pub mass_flow: f64,
    /// K
    pub temperature: f64,
    /// Mass fractions by gas species name.
    pub composition: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasInit {
    pub temperature: f64,
    pub composition: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    /// Effective axial dispersion, m^2/s, shared by all species.
    pub diffusivity: f64,
    /// W/(m K)
    pub k_th: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub temperature: f64,
    /// Wall-to-gas coefficient, W/(m^2 K); 0 makes the wall adiabatic.
    pub htc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleProps {
    /// As-fed density, kg/m^3.
    pub density: f64,
    /// J/(kg K)
    pub c_p: f64,
    /// Solid conductivity for the Biot check, W/(m K).
    pub k_solid: f64,
    /// Feed temperature, K.
    pub temperature: f64,
}

/// A bundled fuel by name or a full inline specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FuelRef {
    Builtin(String),
    Inline(FuelSpec),
}

impl FuelRef {
    pub fn resolve(&self) -> Result<FuelSpec, CouplingError> {
        match self {
            FuelRef::Inline(f) => Ok(f.clone()),
            FuelRef::Builtin(name) => builtin_fuels()
                .into_iter()
                .find(|f| &f.name == name)
                .ok_or_else(|| CouplingError::Config(format!("unknown fuel `{name}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedConfig {
    pub fuel: FuelRef,
    /// kg/s of real fuel
    pub mass_rate: f64,
    /// Real particles per parcel.
    pub parcel_weight: f64,
    /// Injection height, m.
    pub height: f64,
    /// Diameter distribution: normal, truncated to `[d_min, d_max]`, m.
    pub d_mean: f64,
    pub d_std: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Feeding stops after this time, s; `None` feeds throughout.
    #[serde(default)]
    pub until: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The step returns an error after partly updating its working copy.
    StepError,
    /// Gas mass disappears before the audit.
    MassLeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    /// Index of the step (1-based) that fails.
    pub step: u64,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `builtin:<name>` or a path to a mechanism file.
    pub mechanism: String,
    pub grid: GridConfig,
    /// Pa
    pub pressure: f64,
    pub inlet: InletConfig,
    /// Defaults to the inlet state.
    #[serde(default)]
    pub initial_gas: Option<GasInit>,
    pub transport: TransportConfig,
    pub wall: WallConfig,
    #[serde(default)]
    pub exchange: ExchangeConfig,
    pub particle: ParticleProps,
    pub feed: FeedConfig,
    #[serde(default)]
    pub kinetics: ProviderConfig,
    /// Relative tolerance of the homogeneous gas chemistry.
    pub gas_tol: f64,
    /// s
    pub dt: f64,
    /// s
    pub end_time: f64,
    /// Steps between snapshots.
    pub snapshot_every: u64,
    pub seed: u64,
    #[serde(default)]
    pub fault: Option<FaultInjection>,
}

impl ScenarioConfig {
    /// A 1.6 m steam-blown column at 1073 K fed with beech for 20 s.
    pub fn standard() -> Self {
        let comp = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Self {
            mechanism: "builtin:reference".into(),
            grid: GridConfig { n_cells: 16, dz: 0.1, area: 0.01 },
            pressure: 101_325.0,
            inlet: InletConfig {
                mass_flow: 8.6e-4,
                temperature: 1073.0,
                composition: comp(&[("N2", 0.8), ("H2O", 0.2)]),
            },
            initial_gas: None,
            transport: TransportConfig { diffusivity: 1e-3, k_th: 0.07 },
            wall: WallConfig { temperature: 1073.0, htc: 50.0 },
            exchange: ExchangeConfig::default(),
            particle: ParticleProps { density: 700.0, c_p: 1500.0, k_solid: 0.15, temperature: 300.0 },
            feed: FeedConfig {
                fuel: FuelRef::Builtin("beech".into()),
                mass_rate: 5e-5,
                parcel_weight: 100.0,
                height: 0.3,
                d_mean: 5e-4,
                d_std: 1e-4,
                d_min: 1e-4,
                d_max: 1e-3,
                until: None,
            },
            kinetics: ProviderConfig::default(),
            gas_tol: 1e-6,
            dt: 2e-3,
            end_time: 20.0,
            snapshot_every: 50,
            seed: 42,
            fault: None,
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.end_time / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |m: &str| Err(CouplingError::Config(m.into()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be > 0");
        }
        if !(self.end_time >= 0.0 && self.end_time.is_finite()) {
            return bad("end_time must be >= 0");
        }
        if ((self.end_time / self.dt).round() * self.dt - self.end_time).abs() > 1e-9 * self.end_time.max(1.0) {
            return bad("end_time must be a whole number of steps");
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be >= 1");
        }
        if !(self.pressure > 0.0) {
            return bad("pressure must be > 0");
        }
        if !(self.gas_tol > 0.0 && self.gas_tol < 1.0) {
            return bad("gas_tol must lie in (0, 1)");
        }
        if !(self.wall.htc >= 0.0 && self.wall.temperature > 0.0) {
            return bad("wall needs htc >= 0 and temperature > 0");
        }
        if !(self.transport.diffusivity >= 0.0 && self.transport.k_th >= 0.0) {
            return bad("transport coefficients must be >= 0");
        }
        let p = &self.particle;
        if !(p.density > 0.0 && p.c_p > 0.0 && p.k_solid > 0.0 && p.temperature > 0.0) {
            return bad("particle properties must be > 0");
        }
        let f = &self.feed;
        if !(f.mass_rate >= 0.0 && f.parcel_weight > 0.0) {
            return bad("feed needs mass_rate >= 0 and parcel_weight > 0");
        }
        if !(f.d_min > 0.0 && f.d_min <= f.d_mean && f.d_mean <= f.d_max && f.d_std >= 0.0) {
            return bad("feed diameters need 0 < d_min <= d_mean <= d_max and d_std >= 0");
        }
        let height = self.grid.n_cells as f64 * self.grid.dz;
        if !(f.height >= 0.0 && f.height <= height) {
            return bad("feed height must lie inside the column");
        }
        self.exchange.validate()?;
        self.kinetics.validate()?;
        Ok(())
    }
}

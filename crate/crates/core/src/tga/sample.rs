use serde::{Deserialize, Serialize};

use super::{FuelSpec, TgaError};
use crate::kinetics::{Phase, ReactionMechanism, SingleStepKinetics};

pub const N_FEATURES: usize = 15;
pub const N_TARGETS: usize = 6;

/// Column names with units, in feature order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "moisture[-]",
    "volatile[-]",
    "fixed_carbon[-]",
    "ash[-]",
    "C[-]",
    "H[-]",
    "O[-]",
    "N[-]",
    "S[-]",
    "T[K]",
    "beta[K/s]",
    "P[Pa]",
    "p_H2O[Pa]",
    "p_O2[Pa]",
    "p_CO2[Pa]",
];

pub const TARGET_NAMES: [&str; N_TARGETS] =
    ["ln_A[ln(1/s)]", "Ea[J/mol]", "n[-]", "y_gas[-]", "y_liquid[-]", "y_solid[-]"];

/// Fuel composition plus local conditions, the regressor input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub moisture: f64,
    pub volatile: f64,
    pub fixed_carbon: f64,
    pub ash: f64,
    pub c: f64,
    pub h: f64,
    pub o: f64,
    pub n: f64,
    pub s: f64,
    /// K
    pub temperature: f64,
    /// K/s
    pub beta: f64,
    /// Pa
    pub pressure: f64,
    pub p_h2o: f64,
    pub p_o2: f64,
    pub p_co2: f64,
}

impl FeatureVector {
    pub fn new(fuel: &FuelSpec, temperature: f64, beta: f64, pressure: f64, partials: [f64; 3]) -> Self {
        let p = fuel.proximate;
        let u = fuel.ultimate;
        Self {
            moisture: p.moisture,
            volatile: p.volatile,
            fixed_carbon: p.fixed_carbon,
            ash: p.ash,
            c: u.c,
            h: u.h,
            o: u.o,
            n: u.n,
            s: u.s,
            temperature,
            beta,
            pressure,
            p_h2o: partials[0],
            p_o2: partials[1],
            p_co2: partials[2],
        }
    }

    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.moisture,
            self.volatile,
            self.fixed_carbon,
            self.ash,
            self.c,
            self.h,
            self.o,
            self.n,
            self.s,
            self.temperature,
            self.beta,
            self.pressure,
            self.p_h2o,
            self.p_o2,
            self.p_co2,
        ]
    }

    pub fn from_array(a: &[f64; N_FEATURES]) -> Self {
        Self {
            moisture: a[0],
            volatile: a[1],
            fixed_carbon: a[2],
            ash: a[3],
            c: a[4],
            h: a[5],
            o: a[6],
            n: a[7],
            s: a[8],
            temperature: a[9],
            beta: a[10],
            pressure: a[11],
            p_h2o: a[12],
            p_o2: a[13],
            p_co2: a[14],
        }
    }

    pub fn partials(&self) -> [f64; 3] {
        [self.p_h2o, self.p_o2, self.p_co2]
    }

    pub fn validate(&self) -> Result<(), String> {
        let a = self.to_array();
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", FEATURE_NAMES[i]));
        }
        if let Some(i) = a.iter().position(|v| *v < 0.0) {
            return Err(format!("{} = {} is negative", FEATURE_NAMES[i], a[i]));
        }
        if !(self.temperature > 0.0) {
            return Err("T must be > 0".into());
        }
        Ok(())
    }
}

/// Mass fractions of devolatilization products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Yields {
    pub gas: f64,
    pub liquid: f64,
    pub solid: f64,
}

impl Yields {
    pub fn to_array(&self) -> [f64; 3] {
        [self.gas, self.liquid, self.solid]
    }

    pub fn sum(&self) -> f64 {
        self.gas + self.liquid + self.solid
    }

    /// Clamps negatives to zero and rescales onto the simplex; returns
    /// whether anything changed beyond round-off.
    pub fn renormalized(&self) -> (Self, bool) {
        let a = self.to_array().map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
        let s: f64 = a.iter().sum();
        let out = if s > 0.0 {
            Self { gas: a[0] / s, liquid: a[1] / s, solid: a[2] / s }
        } else {
            Self { gas: 1.0 / 3.0, liquid: 1.0 / 3.0, solid: 1.0 / 3.0 }
        };
        let moved = out.to_array().iter().zip(self.to_array()).any(|(a, b)| (a - b).abs() > 1e-12);
        (out, moved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub kinetics: SingleStepKinetics,
    pub yields: Yields,
}

impl TargetVector {
    pub fn to_array(&self) -> [f64; N_TARGETS] {
        let k = &self.kinetics;
        let y = &self.yields;
        [k.ln_a, k.ea, k.n, y.gas, y.liquid, y.solid]
    }

    pub fn from_array(a: &[f64; N_TARGETS]) -> Self {
        Self {
            kinetics: SingleStepKinetics::new(a[0], a[1], a[2]),
            yields: Yields { gas: a[3], liquid: a[4], solid: a[5] },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.kinetics.is_within_bounds() {
            return Err(format!("kinetics {:?} outside bounds", self.kinetics));
        }
        if self.yields.to_array().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("yields must lie in [0, 1]".into());
        }
        if (self.yields.sum() - 1.0).abs() > 1e-6 {
            return Err(format!("yields sum to {}, expected 1", self.yields.sum()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Experiment,
    Simulation,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Experiment => "EXPERIMENT",
            Provenance::Simulation => "SIMULATION",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "EXPERIMENT" => Some(Self::Experiment),
            "SIMULATION" => Some(Self::Simulation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: FeatureVector,
    pub targets: TargetVector,
    pub provenance: Provenance,
    pub source_id: String,
}

pub type Dataset = Vec<Sample>;

/// Gas / liquid / solid mass split of the devolatilization products.
pub fn devolatilization_yields(mech: &ReactionMechanism) -> Result<Yields, TgaError> {
    let roles = mech.roles()?;
    let rx = &mech.reactions[roles.devolatilization];
    let (mut gas, mut liquid, mut solid) = (0.0, 0.0, 0.0);
    for &(i, nu) in &rx.products {
        let m = nu * mech.species[i].molar_mass;
        if mech.species[i].phase == Phase::Solid {
            solid += m;
        } else if roles.liquid_products.contains(&i) {
            liquid += m;
        } else {
            gas += m;
        }
    }
    let total = gas + liquid + solid;
    Ok(Yields { gas: gas / total, liquid: liquid / total, solid: solid / total })
}

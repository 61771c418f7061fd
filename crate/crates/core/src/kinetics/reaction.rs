use serde::{Deserialize, Serialize};

use super::{KineticsError, R_GAS};

/// Modified Arrhenius parameters `k = A T^b exp(-Ea / (R T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrheniusParams {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(rename = "Ea")]
    pub ea: f64,
}

impl ArrheniusParams {
    pub fn new(a: f64, b: f64, ea: f64) -> Self {
        Self { a, b, ea }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(format!("pre-exponential factor A = {} must be finite and >= 0", self.a));
        }
        if !(self.ea >= 0.0 && self.ea.is_finite()) {
            return Err(format!("activation energy Ea = {} must be finite and >= 0", self.ea));
        }
        if !self.b.is_finite() {
            return Err("temperature exponent b must be finite".into());
        }
        Ok(())
    }
}

/// Rate constant at temperature `t` (K).
pub fn rate_constant(p: &ArrheniusParams, t: f64) -> Result<f64, KineticsError> {
    if !(t > 0.0) {
        return Err(KineticsError::InvalidState(format!("temperature {t} K must be > 0")));
    }
    let k =
        if p.b == 0.0 { p.a * (-p.ea / (R_GAS * t)).exp() } else { p.a * t.powf(p.b) * (-p.ea / (R_GAS * t)).exp() };
    if !k.is_finite() {
        return Err(KineticsError::NonFiniteRate { a: p.a, b: p.b, ea: p.ea, t });
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeatOfReaction {
    FromFormationEnthalpies,
    /// J per mol of reaction extent.
    Declared(f64),
}

/// A reaction with species referenced by index into the owning mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub name: Option<String>,
    pub reactants: Vec<(usize, f64)>,
    pub products: Vec<(usize, f64)>,
    pub forward_orders: Vec<(usize, f64)>,
    pub reverse_orders: Vec<(usize, f64)>,
    pub forward: ArrheniusParams,
    /// `None` means irreversible.
    pub reverse: Option<ArrheniusParams>,
    pub heat: HeatOfReaction,
}

impl Reaction {
    /// Net stoichiometric coefficient `gamma'' - gamma'` of species `i`.
    pub fn net_coefficient(&self, i: usize) -> f64 {
        let prod: f64 = self.products.iter().filter(|(s, _)| *s == i).map(|(_, v)| v).sum();
        let reac: f64 = self.reactants.iter().filter(|(s, _)| *s == i).map(|(_, v)| v).sum();
        prod - reac
    }

    pub fn involves(&self, i: usize) -> bool {
        self.reactants.iter().chain(&self.products).any(|(s, _)| *s == i)
    }

    pub fn label(&self, index: usize) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("#{index}"),
        }
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Standard atomic masses in kg/mol for the elements a mechanism may use.
pub const ATOMIC_MASSES: [(&str, f64); 5] =
    [("C", 12.011e-3), ("H", 1.008e-3), ("O", 15.999e-3), ("N", 14.007e-3), ("S", 32.06e-3)];

/// Default mass of the inert `ASH` pseudo-element (SiO2 equivalent), kg/mol.
pub const DEFAULT_ASH_MASS: f64 = 60.0843e-3;

/// Temperature window over which heat capacities must stay positive.
pub const CP_CHECK_RANGE: (f64, f64) = (250.0, 2500.0);

pub fn atomic_mass(element: &str) -> Option<f64> {
    ATOMIC_MASSES.iter().find(|(name, _)| *name == element).map(|(_, m)| *m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Gas,
    Solid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub name: String,
    /// kg/mol
    pub molar_mass: f64,
    pub phase: Phase,
    /// Formation enthalpy at the mechanism reference temperature, J/mol.
    pub h_form: Option<f64>,
    /// Molar heat capacity polynomial `cp(T) = sum a_k T^k`, J/(mol K).
    pub cp_coeffs: Option<Vec<f64>>,
    pub elements: BTreeMap<String, f64>,
    pub lumped: bool,
}

impl Species {
    /// Molar heat capacity at `t`, J/(mol K).
    pub fn cp(&self, t: f64) -> Option<f64> {
        self.cp_coeffs.as_ref().map(|c| c.iter().rev().fold(0.0, |acc, a| acc * t + a))
    }

    /// `int_{t_ref}^{t} cp dT`, J/mol.
    pub fn sensible_enthalpy(&self, t: f64, t_ref: f64) -> Option<f64> {
        self.cp_coeffs.as_ref().map(|c| {
            c.iter()
                .enumerate()
                .map(|(k, a)| {
                    let p = (k + 1) as i32;
                    a * (t.powi(p) - t_ref.powi(p)) / p as f64
                })
                .sum()
        })
    }

    /// Absolute molar enthalpy `h_form + int cp dT`, J/mol.
    pub fn enthalpy(&self, t: f64, t_ref: f64) -> Option<f64> {
        Some(self.h_form? + self.sensible_enthalpy(t, t_ref)?)
    }

    /// Molar mass implied by the element vector, kg/mol.
    pub fn element_mass(&self, pseudo: &BTreeMap<String, f64>) -> Result<f64, String> {
        let mut total = 0.0;
        for (el, count) in &self.elements {
            let m =
                atomic_mass(el).or_else(|| pseudo.get(el).copied()).ok_or_else(|| format!("unknown element `{el}`"))?;
            total += count * m;
        }
        Ok(total)
    }

    pub(crate) fn validate(&self, pseudo: &BTreeMap<String, f64>) -> Result<(), String> {
        if self.name.is_empty() {
            return Err("species name is empty".into());
        }
        if !(self.molar_mass > 0.0 && self.molar_mass.is_finite()) {
            return Err(format!("species `{}`: molar_mass must be > 0", self.name));
        }
        if self.elements.is_empty() {
            return Err(format!("species `{}`: element vector is empty", self.name));
        }
        if let Some((el, _)) = self.elements.iter().find(|(_, c)| !(**c >= 0.0)) {
            return Err(format!("species `{}`: negative count for `{el}`", self.name));
        }
        let implied = self.element_mass(pseudo).map_err(|e| format!("species `{}`: {e}", self.name))?;
        let rel = (implied - self.molar_mass).abs() / self.molar_mass;
        if rel > 1e-6 {
            return Err(format!(
                "species `{}`: molar_mass {} disagrees with element-weighted mass {} (rel {:.3e})",
                self.name, self.molar_mass, implied, rel
            ));
        }
        if self.cp_coeffs.is_some() {
            let (lo, hi) = CP_CHECK_RANGE;
            let mut t = lo;
            while t <= hi {
                let cp = self.cp(t).unwrap_or(0.0);
                if !(cp > 0.0) {
                    return Err(format!("species `{}`: heat capacity {cp} not positive at {t} K", self.name));
                }
                t += 1.0;
            }
        } else if self.phase == Phase::Gas {
            return Err(format!("gas species `{}` needs cp_coeffs", self.name));
        }
        if self.h_form.is_none() && !self.lumped {
            return Err(format!("species `{}`: h_form may only be omitted for lumped species", self.name));
        }
        Ok(())
    }
}

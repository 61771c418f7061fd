use super::FluidError;
use crate::kinetics::{Phase, ReactionMechanism, R_GAS};

/// Bracket for recovering temperature from enthalpy, K.
pub const T_TABLE_RANGE: (f64, f64) = (200.0, 4000.0);

/// Ideal-gas properties of the gas-phase species of a mechanism.
///
/// Enthalpies are absolute (formation plus sensible), so reaction heat shows
/// up as a temperature change at fixed mixture enthalpy.
#[derive(Debug, Clone, PartialEq)]
pub struct GasThermo {
    pub names: Vec<String>,
    /// Index of each gas species in the mechanism species list.
    pub mech_index: Vec<usize>,
    /// kg/mol
    pub molar_mass: Vec<f64>,
    /// J/mol at `t_ref`
    pub h_form: Vec<f64>,
    /// Molar cp polynomial coefficients, J/(mol K).
    pub cp_coeffs: Vec<Vec<f64>>,
    pub t_ref: f64,
}

impl GasThermo {
    pub fn from_mechanism(mech: &ReactionMechanism) -> Result<Self, FluidError> {
        let mut t = Self {
            names: Vec::new(),
            mech_index: Vec::new(),
            molar_mass: Vec::new(),
            h_form: Vec::new(),
            cp_coeffs: Vec::new(),
            t_ref: mech.reference_temperature,
        };
        for (i, s) in mech.species.iter().enumerate().filter(|(_, s)| s.phase == Phase::Gas) {
            let missing = |what: &str| FluidError::Config(format!("gas species {} has no {what}", s.name));
            t.h_form.push(s.h_form.ok_or_else(|| missing("formation enthalpy"))?);
            t.cp_coeffs.push(s.cp_coeffs.clone().ok_or_else(|| missing("heat capacity"))?);
            t.names.push(s.name.clone());
            t.mech_index.push(i);
            t.molar_mass.push(s.molar_mass);
        }
        if t.names.is_empty() {
            return Err(FluidError::Config("mechanism has no gas species".into()));
        }
        Ok(t)
    }

    pub fn n_species(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Mass fractions from a `name -> fraction` list; unnamed species are 0.
    pub fn mass_fractions(&self, pairs: &[(&str, f64)]) -> Result<Vec<f64>, FluidError> {
        let mut y = vec![0.0; self.n_species()];
        for (name, v) in pairs {
            let i = self.index(name).ok_or_else(|| FluidError::Config(format!("unknown gas species {name}")))?;
            y[i] = *v;
        }
        Ok(y)
    }

    /// Molar cp of species `i`, J/(mol K).
    fn cp_molar(&self, i: usize, t: f64) -> f64 {
        self.cp_coeffs[i].iter().rev().fold(0.0, |acc, a| acc * t + a)
    }

    /// Absolute specific enthalpy of species `i`, J/kg.
    pub fn species_enthalpy(&self, i: usize, t: f64) -> f64 {
        let sensible: f64 = self.cp_coeffs[i]
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let p = (k + 1) as i32;
                a * (t.powi(p) - self.t_ref.powi(p)) / p as f64
            })
            .sum();
        (self.h_form[i] + sensible) / self.molar_mass[i]
    }

    pub fn mixture_enthalpy(&self, y: &[f64], t: f64) -> f64 {
        y.iter().enumerate().map(|(i, yi)| yi * self.species_enthalpy(i, t)).sum()
    }

    /// Mixture cp, J/(kg K).
    pub fn mixture_cp(&self, y: &[f64], t: f64) -> f64 {
        y.iter().enumerate().map(|(i, yi)| yi * self.cp_molar(i, t) / self.molar_mass[i]).sum()
    }

    /// Mixture molar mass from mass fractions (harmonic mean), kg/mol.
    pub fn mean_molar_mass(&self, y: &[f64]) -> f64 {
        1.0 / y.iter().zip(&self.molar_mass).map(|(y, m)| y / m).sum::<f64>()
    }

    /// Inverts the enthalpy closure by safeguarded Newton iteration inside
    /// [`T_TABLE_RANGE`].
    pub fn temperature_from_enthalpy(&self, y: &[f64], h: f64, guess: f64) -> Result<f64, FluidError> {
        let (mut lo, mut hi) = T_TABLE_RANGE;
        let f = |t: f64| self.mixture_enthalpy(y, t) - h;
        let (flo, fhi) = (f(lo), f(hi));
        if !(flo <= 0.0 && fhi >= 0.0) {
            return Err(FluidError::EnthalpyOutOfRange { h, h_min: flo + h, h_max: fhi + h });
        }
        let mut t = if guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
        for _ in 0..200 {
            let r = f(t);
            if r == 0.0 {
                return Ok(t);
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let cp = self.mixture_cp(y, t);
            let mut next = t - r / cp;
            if !(next > lo && next < hi) || cp <= 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= 1e-10 * t || hi - lo <= 1e-10 * t {
                return Ok(next);
            }
            t = next;
        }
        Ok(t)
    }
}

/// Ideal-gas mixture density `p M_mix / (R T)`, kg/m^3.
pub fn eos_density(p: f64, t: f64, y: &[f64], thermo: &GasThermo) -> f64 {
    p * thermo.mean_molar_mass(y) / (R_GAS * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enthalpy_inversion_round_trips() {
        let th = GasThermo::from_mechanism(&ReactionMechanism::reference()).unwrap();
        let y = th.mass_fractions(&[("N2", 0.7), ("H2O", 0.2), ("CO", 0.1)]).unwrap();
        for t in [250.0, 800.0, 1500.0, 3500.0] {
            let h = th.mixture_enthalpy(&y, t);
            let back = th.temperature_from_enthalpy(&y, h, 1000.0).unwrap();
            assert!((back - t).abs() <= 1e-8 * t, "{back} vs {t}");
        }
        assert!(matches!(
            th.temperature_from_enthalpy(&y, th.mixture_enthalpy(&y, 5000.0), 1000.0),
            Err(FluidError::EnthalpyOutOfRange { .. })
        ));
    }
}

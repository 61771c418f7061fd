use serde::{Deserialize, Serialize};

use super::TgaError;
use crate::kinetics::{Phase, ReactionMechanism};

/// As-received proximate analysis, mass fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proximate {
    pub moisture: f64,
    pub volatile: f64,
    pub fixed_carbon: f64,
    pub ash: f64,
}

/// Dry-ash-free elemental analysis, mass fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ultimate {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "O")]
    pub o: f64,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelSpec {
    #[serde(default)]
    pub name: String,
    pub proximate: Proximate,
    pub ultimate: Ultimate,
    /// Particle diameter, m.
    pub d_p: f64,
}

const SUM_TOL: f64 = 1e-6;

/// Initial particle composition in the mechanism's terms, mass fractions of
/// the as-received sample. Mass the mechanism cannot represent is `inert`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolidLoading {
    pub moisture: f64,
    /// Mass of the devolatilizing species; exceeds the proximate volatile
    /// matter by the char it leaves behind.
    pub volatile: f64,
    pub char: f64,
    pub ash: f64,
    pub inert: f64,
}

impl SolidLoading {
    pub fn total(&self) -> f64 {
        self.moisture + self.volatile + self.char + self.ash + self.inert
    }
}

impl FuelSpec {
    pub fn proximate_array(&self) -> [f64; 4] {
        let p = &self.proximate;
        [p.moisture, p.volatile, p.fixed_carbon, p.ash]
    }

    pub fn ultimate_array(&self) -> [f64; 5] {
        let u = &self.ultimate;
        [u.c, u.h, u.o, u.n, u.s]
    }

    pub fn validate(&self) -> Result<(), TgaError> {
        check_fractions("proximate", &self.proximate_array())?;
        check_fractions("ultimate", &self.ultimate_array())?;
        if !(self.d_p > 0.0 && self.d_p.is_finite()) {
            return Err(TgaError::InvalidFuel(format!("particle diameter {} m must be > 0", self.d_p)));
        }
        Ok(())
    }

    /// The same fuel with its moisture removed and the rest renormalized.
    pub fn dry_basis(&self) -> Self {
        let p = self.proximate;
        let dry = 1.0 - p.moisture;
        Self {
            proximate: Proximate {
                moisture: 0.0,
                volatile: p.volatile / dry,
                fixed_carbon: p.fixed_carbon / dry,
                ash: p.ash / dry,
            },
            ..self.clone()
        }
    }

    /// Maps the proximate analysis onto the mechanism's solid species.
    ///
    /// The devolatilizing species leaves a char fraction `w` of its own
    /// mass, so it is loaded as `volatile / (1 - w)` and the initial char is
    /// reduced by the same amount; the fully devolatilized residue is then
    /// exactly `fixed_carbon + ash`.
    pub fn loading(&self, mech: &ReactionMechanism) -> Result<SolidLoading, TgaError> {
        self.validate()?;
        let p = self.proximate;
        let Some(roles) = mech.roles.as_ref() else {
            return Ok(SolidLoading { moisture: 0.0, volatile: 0.0, char: 0.0, ash: 0.0, inert: 1.0 });
        };
        let w = char_yield(mech)?;
        let volatile = p.volatile / (1.0 - w);
        let (char, char_inert) = match roles.char {
            Some(_) => {
                let c = p.fixed_carbon - w * volatile;
                if c < -1e-12 {
                    return Err(TgaError::InvalidFuel(format!(
                        "fixed carbon {} is below the char left by devolatilization ({:.4})",
                        p.fixed_carbon,
                        w * volatile
                    )));
                }
                (c.max(0.0), 0.0)
            }
            None => (0.0, p.fixed_carbon),
        };
        let (moisture, moisture_inert) = if roles.moisture.is_some() { (p.moisture, 0.0) } else { (0.0, p.moisture) };
        let (ash, ash_inert) = if roles.ash.is_some() { (p.ash, 0.0) } else { (0.0, p.ash) };
        Ok(SolidLoading { moisture, volatile, char, ash, inert: char_inert + moisture_inert + ash_inert })
    }
}

/// Char mass left per unit mass of devolatilizing species.
pub(crate) fn char_yield(mech: &ReactionMechanism) -> Result<f64, TgaError> {
    let roles = mech.roles()?;
    let rx = &mech.reactions[roles.devolatilization];
    let mass = |terms: &[(usize, f64)], solid: bool| -> f64 {
        terms
            .iter()
            .filter(|(i, _)| (mech.species[*i].phase == Phase::Solid) == solid)
            .map(|(i, nu)| nu * mech.species[*i].molar_mass)
            .sum()
    };
    let feed = mass(&rx.reactants, true);
    Ok(mass(&rx.products, true) / feed)
}

fn check_fractions(label: &str, v: &[f64]) -> Result<(), TgaError> {
    if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(TgaError::InvalidFuel(format!("{label} fraction {x} outside [0, 1]")));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(TgaError::InvalidFuel(format!("{label} fractions sum to {sum}, expected 1")));
    }
    Ok(())
}

/// The bundled fuel library.
pub fn builtin_fuels() -> Vec<FuelSpec> {
    serde_json::from_str(include_str!("../../data/fuels.json")).expect("bundled fuel library parses")
}

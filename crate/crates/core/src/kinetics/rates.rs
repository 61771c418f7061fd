use serde::{Deserialize, Serialize};

use super::mechanism::ReactionMechanism;
use super::reaction::{rate_constant, HeatOfReaction};
use super::{KineticsError, R_GAS};

/// Molar concentrations (mol/m^3) at a temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    pub concentrations: Vec<f64>,
    /// K
    pub temperature: f64,
}

impl PointState {
    pub fn new(concentrations: Vec<f64>, temperature: f64) -> Self {
        Self { concentrations, temperature }
    }

    pub fn validate(&self, mech: &ReactionMechanism) -> Result<(), KineticsError> {
        if self.concentrations.len() != mech.n_species() {
            return Err(KineticsError::InvalidState(format!(
                "state has {} concentrations, mechanism has {} species",
                self.concentrations.len(),
                mech.n_species()
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(KineticsError::InvalidState(format!("temperature {} K must be > 0", self.temperature)));
        }
        if let Some((i, c)) = self.concentrations.iter().enumerate().find(|(_, c)| !(**c >= 0.0 && c.is_finite())) {
            return Err(KineticsError::InvalidState(format!("concentration of `{}` is {c}", mech.species[i].name)));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn pow_order(c: f64, n: f64) -> f64 {
    if n == 1.0 {
        c
    } else if n == 0.0 {
        1.0
    } else if n == 2.0 {
        c * c
    } else {
        c.powf(n)
    }
}

fn mass_action(orders: &[(usize, f64)], c: &[f64], mech: &ReactionMechanism, r: usize) -> Result<f64, KineticsError> {
    let mut prod = 1.0;
    for &(i, n) in orders {
        if c[i] == 0.0 && n < 0.0 {
            return Err(KineticsError::UndefinedRate {
                reaction: mech.reactions[r].label(r),
                species: mech.species[i].name.clone(),
            });
        }
        prod *= pow_order(c[i], n);
    }
    Ok(prod)
}

/// Net rate of progress of reaction `r` in mol/(m^3 s); negative means net reverse.
pub fn reaction_rate(mech: &ReactionMechanism, r: usize, s: &PointState) -> Result<f64, KineticsError> {
    if r >= mech.reactions.len() {
        return Err(KineticsError::InvalidState(format!(
            "reaction index {r} out of range ({} reactions)",
            mech.reactions.len()
        )));
    }
    s.validate(mech)?;
    net_rate(mech, r, &s.concentrations, s.temperature)
}

pub(crate) fn net_rate(mech: &ReactionMechanism, r: usize, c: &[f64], t: f64) -> Result<f64, KineticsError> {
    let rx = &mech.reactions[r];
    let kf = rate_constant(&rx.forward, t)?;
    let mut rate = if kf == 0.0 { 0.0 } else { kf * mass_action(&rx.forward_orders, c, mech, r)? };
    if let Some(rev) = &rx.reverse {
        let kb = rate_constant(rev, t)?;
        if kb != 0.0 {
            rate -= kb * mass_action(&rx.reverse_orders, c, mech, r)?;
        }
    }
    Ok(rate)
}

/// `dC_i/dt = sum_r (gamma''_{i,r} - gamma'_{i,r}) rate_r` for every species.
pub fn species_rates(mech: &ReactionMechanism, s: &PointState) -> Result<Vec<f64>, KineticsError> {
    s.validate(mech)?;
    let mut out = vec![0.0; mech.n_species()];
    species_rates_into(mech, &s.concentrations, s.temperature, &mut out)?;
    Ok(out)
}

/// Allocation-free variant of [`species_rates`] without state validation.
pub fn species_rates_into(mech: &ReactionMechanism, c: &[f64], t: f64, out: &mut [f64]) -> Result<(), KineticsError> {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..mech.reactions.len() {
        let rate = net_rate(mech, r, c, t)?;
        let rx = &mech.reactions[r];
        for &(i, v) in &rx.reactants {
            out[i] -= v * rate;
        }
        for &(i, v) in &rx.products {
            out[i] += v * rate;
        }
    }
    Ok(())
}

/// Heat of reaction at `t`, J per mol of extent (products minus reactants).
pub fn heat_of_reaction(mech: &ReactionMechanism, r: usize, t: f64) -> Result<f64, KineticsError> {
    let rx =
        mech.reactions.get(r).ok_or_else(|| KineticsError::InvalidState(format!("reaction index {r} out of range")))?;
    match rx.heat {
        HeatOfReaction::Declared(v) => Ok(v),
        HeatOfReaction::FromFormationEnthalpies => {
            let t_ref = mech.reference_temperature;
            let h = |i: usize| {
                mech.species[i].enthalpy(t, t_ref).ok_or_else(|| KineticsError::MissingFormationEnthalpy {
                    reaction: rx.label(r),
                    species: mech.species[i].name.clone(),
                })
            };
            let mut dh = 0.0;
            for &(i, v) in &rx.products {
                dh += v * h(i)?;
            }
            for &(i, v) in &rx.reactants {
                dh -= v * h(i)?;
            }
            Ok(dh)
        }
    }
}

/// Bounds enforced on predicted single-step parameters.
pub const LN_A_RANGE: (f64, f64) = (-20.0, 80.0);
pub const EA_RANGE: (f64, f64) = (0.0, 1.0e6);
pub const ORDER_RANGE: (f64, f64) = (0.0, 5.0);

/// Lumped single-step devolatilization law `da/dt = A exp(-Ea/RT) (1-a)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleStepKinetics {
    /// ln(A / (1/s))
    pub ln_a: f64,
    /// J/mol
    pub ea: f64,
    pub n: f64,
}

impl SingleStepKinetics {
    pub fn new(ln_a: f64, ea: f64, n: f64) -> Self {
        Self { ln_a, ea, n }
    }

    pub fn is_within_bounds(&self) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(self.ln_a, LN_A_RANGE) && inside(self.ea, EA_RANGE) && inside(self.n, ORDER_RANGE)
    }

    /// Returns the parameters clamped into bounds and whether anything moved.
    pub fn clamped(&self) -> (Self, bool) {
        let c = |v: f64, (lo, hi): (f64, f64)| if v.is_nan() { lo } else { v.clamp(lo, hi) };
        let out = Self { ln_a: c(self.ln_a, LN_A_RANGE), ea: c(self.ea, EA_RANGE), n: c(self.n, ORDER_RANGE) };
        let moved = out != *self;
        (out, moved)
    }

    /// Rate constant `A exp(-Ea/RT)` in 1/s.
    pub fn rate_constant(&self, t: f64) -> f64 {
        (self.ln_a - self.ea / (R_GAS * t)).exp()
    }

    /// Unconverted fraction after holding `1 - alpha0` at constant `t` for `dt`.
    pub fn remaining_after(&self, remaining0: f64, t: f64, dt: f64) -> f64 {
        remaining_after_integral(remaining0, self.n, self.rate_constant(t) * dt)
    }
}

/// Closed form of `dy/dt = -k y^n` given `I = int k dt`, starting from `y0`.
pub fn remaining_after_integral(y0: f64, n: f64, integral: f64) -> f64 {
    if y0 <= 0.0 {
        return 0.0;
    }
    if integral <= 0.0 {
        return y0;
    }
    if (n - 1.0).abs() < 1e-12 {
        y0 * (-integral).exp()
    } else if n == 0.0 {
        (y0 - integral).max(0.0)
    } else {
        let base = y0.powf(1.0 - n) - (1.0 - n) * integral;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / (1.0 - n))
        }
    }
}

/// Conversion rate `d alpha / dt` in 1/s.
pub fn devol_rate(k: &SingleStepKinetics, alpha: f64, t: f64) -> f64 {
    let remaining = (1.0 - alpha).clamp(0.0, 1.0);
    if remaining == 0.0 {
        return 0.0;
    }
    k.rate_constant(t) * pow_order(remaining, k.n)
}

use serde::{Deserialize, Serialize};

use super::{FuelSpec, TgaError};
use crate::kinetics::{
    integrate_point_with, remaining_after_integral, IntegratorOptions, PointState, ReactionMechanism,
    SingleStepKinetics, R_GAS,
};

/// Allowed furnace temperature window, K.
pub const TGA_T_LIMITS: (f64, f64) = (300.0, 1800.0);
const MIN_POINTS: usize = 16;

/// Thermogravimetric record: residual mass (TG) and its temperature
/// derivative (DTG) on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TgaCurve {
    /// s
    pub time: Vec<f64>,
    /// K
    pub temperature: Vec<f64>,
    /// Residual mass over initial mass.
    pub mass_fraction: Vec<f64>,
    /// d(mass_fraction)/dT, 1/K
    pub dtg: Vec<f64>,
}

impl TgaCurve {
    /// Builds a curve from TG data, enforcing monotonicity against
    /// round-off and computing DTG by central differences.
    pub fn from_mass(time: Vec<f64>, temperature: Vec<f64>, mut mass: Vec<f64>) -> Result<Self, TgaError> {
        let n = time.len();
        if n < MIN_POINTS || temperature.len() != n || mass.len() != n {
            return Err(TgaError::InvalidInput(format!(
                "curve grids must share a length of at least {MIN_POINTS} (got {n}, {}, {})",
                temperature.len(),
                mass.len()
            )));
        }
        let m0 = mass[0];
        if !(m0 > 0.0) {
            return Err(TgaError::InvalidInput("initial mass must be positive".into()));
        }
        for i in 0..n {
            mass[i] /= m0;
            if i > 0 && mass[i] > mass[i - 1] {
                mass[i] = mass[i - 1];
            }
        }
        mass[0] = 1.0;
        let dtg = central_difference(&temperature, &mass);
        Ok(Self { time, temperature, mass_fraction: mass, dtg })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn final_mass(&self) -> f64 {
        *self.mass_fraction.last().unwrap_or(&1.0)
    }

    /// Temperature of the steepest mass loss.
    pub fn dtg_peak_temperature(&self) -> f64 {
        let (i, _) = self
            .dtg
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
        self.temperature[i]
    }
}

fn central_difference(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (y[b] - y[a]) / (x[b] - x[a])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TgaOptions {
    pub n_points: usize,
    /// Isothermal integration sub-steps per output interval.
    pub substeps: usize,
    pub tol: f64,
}

impl Default for TgaOptions {
    fn default() -> Self {
        Self { n_points: 401, substeps: 2, tol: 1e-6 }
    }
}

/// Partial pressures of the reactive ambient species, Pa.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ambient {
    pub p_h2o: f64,
    pub p_o2: f64,
    pub p_co2: f64,
}

impl Ambient {
    pub fn to_array(&self) -> [f64; 3] {
        [self.p_h2o, self.p_o2, self.p_co2]
    }
}

fn check_program(beta: f64, t_range: (f64, f64)) -> Result<(), TgaError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(TgaError::InvalidInput(format!("heating rate {beta} K/s must be > 0")));
    }
    let (a, b) = t_range;
    if !(a < b && a >= TGA_T_LIMITS.0 && b <= TGA_T_LIMITS.1) {
        return Err(TgaError::InvalidInput(format!(
            "temperature range [{a}, {b}] K must be ascending within [{}, {}] K",
            TGA_T_LIMITS.0, TGA_T_LIMITS.1
        )));
    }
    Ok(())
}

/// Simulates a linear-ramp thermogravimetric run of one fuel sample.
///
/// The sample is 0-D and kinetically limited: solid species follow the
/// mechanism at the furnace temperature, gas species are held at the
/// ambient partial pressures. Solids are tracked in mol per kg of sample.
pub fn run_virtual_tga(
    fuel: &FuelSpec,
    beta: f64,
    t_range: (f64, f64),
    ambient: &Ambient,
    mech: &ReactionMechanism,
    opts: &TgaOptions,
) -> Result<TgaCurve, TgaError> {
    check_program(beta, t_range)?;
    if opts.n_points < MIN_POINTS || opts.substeps == 0 {
        return Err(TgaError::InvalidInput(format!("need n_points >= {MIN_POINTS} and substeps >= 1")));
    }
    let load = fuel.loading(mech)?;
    let n = mech.n_species();
    let mut c = vec![0.0; n];
    if let Some(roles) = mech.roles.as_ref() {
        let mut put = |idx: Option<usize>, mass: f64| {
            if let Some(i) = idx {
                c[i] += mass / mech.species[i].molar_mass;
            }
        };
        put(roles.moisture, load.moisture);
        put(Some(roles.volatile), load.volatile);
        put(roles.char, load.char);
        put(roles.ash, load.ash);
    }
    let solids = mech.solid_species();
    let gases = mech.gas_species();
    let ambient_species: Vec<(usize, f64)> = [("H2O", ambient.p_h2o), ("O2", ambient.p_o2), ("CO2", ambient.p_co2)]
        .iter()
        .filter_map(|(name, p)| mech.species_index(name).map(|i| (i, *p)))
        .collect();
    let sample_mass = |c: &[f64]| load.inert + solids.iter().map(|&i| c[i] * mech.species[i].molar_mass).sum::<f64>();

    let (t0, t1) = t_range;
    let duration = (t1 - t0) / beta;
    let np = opts.n_points;
    let dt_out = duration / (np - 1) as f64;
    let h = dt_out / opts.substeps as f64;
    let iopts = IntegratorOptions::new(opts.tol);
    let reactive = !mech.reactions.is_empty() && !solids.is_empty();

    let mut time = Vec::with_capacity(np);
    let mut temperature = Vec::with_capacity(np);
    let mut mass = Vec::with_capacity(np);
    time.push(0.0);
    temperature.push(t0);
    mass.push(sample_mass(&c));
    for j in 1..np {
        if reactive {
            for s in 0..opts.substeps {
                let tm = t0 + beta * (((j - 1) * opts.substeps + s) as f64 + 0.5) * h;
                for &(i, p) in &ambient_species {
                    c[i] = p / (R_GAS * tm);
                }
                let state = PointState::new(std::mem::take(&mut c), tm);
                let (next, _) = integrate_point_with(mech, &state, h, iopts, &gases)?;
                c = next.concentrations;
            }
        }
        let t = j as f64 * dt_out;
        time.push(t);
        temperature.push(if j == np - 1 { t1 } else { t0 + beta * t });
        mass.push(sample_mass(&c));
    }
    TgaCurve::from_mass(time, temperature, mass)
}

/// Exact single-step TG curve: the residual is `1 - v * alpha(t)`.
pub fn synthesize_single_step(
    k: &SingleStepKinetics,
    volatile_fraction: f64,
    beta: f64,
    t_range: (f64, f64),
    n_points: usize,
) -> Result<TgaCurve, TgaError> {
    check_program(beta, t_range)?;
    if n_points < MIN_POINTS {
        return Err(TgaError::InvalidInput(format!("need n_points >= {MIN_POINTS}")));
    }
    let (t0, t1) = t_range;
    let duration = (t1 - t0) / beta;
    let time: Vec<f64> = (0..n_points).map(|j| duration * j as f64 / (n_points - 1) as f64).collect();
    let temperature: Vec<f64> = time.iter().map(|t| t0 + beta * t).collect();
    let integrals = arrhenius_integrals(k.ln_a, k.ea, &time, &temperature);
    let mass =
        integrals.iter().map(|&i| 1.0 - volatile_fraction * (1.0 - remaining_after_integral(1.0, k.n, i))).collect();
    TgaCurve::from_mass(time, temperature, mass)
}

const GL_NODES: [f64; 4] =
    [-0.861_136_311_594_052_6, -0.339_981_043_584_856_3, 0.339_981_043_584_856_3, 0.861_136_311_594_052_6];
const GL_WEIGHTS: [f64; 4] =
    [0.347_854_845_137_453_9, 0.652_145_154_862_546_1, 0.652_145_154_862_546_1, 0.347_854_845_137_453_9];

/// Cumulative `int_0^t A exp(-Ea / (R T(s))) ds` at each grid time, with T
/// linear between grid points (4-point Gauss-Legendre per interval).
pub(crate) fn arrhenius_integrals(ln_a: f64, ea: f64, time: &[f64], temperature: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(time.len());
    let mut acc = 0.0;
    out.push(0.0);
    let c = ea / R_GAS;
    for j in 1..time.len() {
        let half = 0.5 * (time[j] - time[j - 1]);
        let (ta, tb) = (temperature[j - 1], temperature[j]);
        let mut s = 0.0;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let t = 0.5 * (ta + tb) + 0.5 * (tb - ta) * x;
            s += w * (ln_a - c / t).exp();
        }
        acc += half * s;
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tga::builtin_fuels;

    #[test]
    fn no_solid_reactions_gives_flat_curve() {
        let mech = ReactionMechanism::builtin("first_order").unwrap();
        let curve = run_virtual_tga(
            &builtin_fuels()[0],
            1.0,
            (300.0, 900.0),
            &Ambient::default(),
            &mech,
            &TgaOptions::default(),
        )
        .unwrap();
        assert!(curve.mass_fraction.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn rejects_bad_program() {
        let mech = ReactionMechanism::reference();
        let f = &builtin_fuels()[0];
        let o = TgaOptions::default();
        assert!(run_virtual_tga(f, 0.0, (300.0, 900.0), &Ambient::default(), &mech, &o).is_err());
        assert!(run_virtual_tga(f, 1.0, (900.0, 300.0), &Ambient::default(), &mech, &o).is_err());
        assert!(run_virtual_tga(f, 1.0, (300.0, 2000.0), &Ambient::default(), &mech, &o).is_err());
    }

    #[test]
    fn arrhenius_integral_of_constant_rate() {
        let time = [0.0, 1.0, 3.0];
        let temp = [500.0, 600.0, 800.0];
        let i = arrhenius_integrals(2.0f64.ln(), 0.0, &time, &temp);
        assert!((i[2] - 6.0).abs() < 1e-12);
    }
}

//! Lagrangian fuel particles: Stokes-drag motion, the lumped energy balance,
//! drying and single-step devolatilization, and hat-function deposition of
//! their exchange terms onto the gas grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::fluid::{GasCell, GasState, GasThermo, Grid1D, SourceTerms, THETA_FLOOR};
use crate::kinetics::{
    heat_of_reaction, rate_constant, ArrheniusParams, KineticsError, ReactionMechanism, SingleStepKinetics,
};
use crate::tga::{SolidLoading, Yields};

pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8;
/// Largest conversion increment per devolatilization sub-step.
pub const MAX_DALPHA: f64 = 0.05;
const MAX_SUBSTEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParticleError {
    #[error("invalid particle input: {0}")]
    InvalidInput(String),
    #[error("particle {id} at z = {z} m is outside the grid")]
    OutsideGrid { id: u64, z: f64 },
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

type Result<T> = std::result::Result<T, ParticleError>;

/// A parcel of `n_real` identical lumped-capacitance fuel particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub id: u64,
    /// Height, m.
    pub z: f64,
    /// Axial velocity, m/s, positive upward.
    pub v: f64,
    /// Diameter, m; particles do not shrink.
    pub d_p: f64,
    /// Component masses of one real particle, kg.
    pub moisture: f64,
    pub volatile: f64,
    pub char: f64,
    /// Ash plus anything the mechanism does not represent.
    pub ash: f64,
    pub m_p: f64,
    /// J/(kg K)
    pub c_p: f64,
    pub t_p: f64,
    pub alpha: f64,
    /// Smoothed heating rate, K/s.
    pub beta_est: f64,
    /// Volatile mass at injection, kg.
    pub volatile0: f64,
    /// Real particles represented by this parcel.
    pub n_real: f64,
    beta_ema: f64,
    beta_weight: f64,
}

impl Particle {
    /// A fresh particle of density `rho_p` with the fuel's composition.
    #[allow(clippy::too_many_arguments)]
    pub fn from_loading(
        id: u64,
        loading: &SolidLoading,
        d_p: f64,
        rho_p: f64,
        c_p: f64,
        t_p: f64,
        z: f64,
        n_real: f64,
    ) -> Result<Self> {
        if !(d_p > 0.0 && rho_p > 0.0 && c_p > 0.0 && t_p > 0.0 && n_real > 0.0) {
            return Err(ParticleError::InvalidInput(format!(
                "particle {id}: d_p, rho_p, c_p, T_p and n_real must be > 0"
            )));
        }
        let m = rho_p * PI / 6.0 * d_p.powi(3);
        let mut p = Self {
            id,
            z,
            v: 0.0,
            d_p,
            moisture: loading.moisture * m,
            volatile: loading.volatile * m,
            char: loading.char * m,
            ash: (loading.ash + loading.inert) * m,
            m_p: 0.0,
            c_p,
            t_p,
            alpha: 0.0,
            beta_est: 0.0,
            volatile0: loading.volatile * m,
            n_real,
            beta_ema: 0.0,
            beta_weight: 0.0,
        };
        p.refresh_mass();
        Ok(p)
    }

    fn refresh_mass(&mut self) {
        self.m_p = self.moisture + self.volatile + self.char + self.ash;
    }

    pub fn volume(&self) -> f64 {
        PI / 6.0 * self.d_p.powi(3)
    }

    pub fn surface(&self) -> f64 {
        PI * self.d_p * self.d_p
    }

    /// Apparent density, kg/m^3; falls as volatiles leave.
    pub fn density(&self) -> f64 {
        self.m_p / self.volume()
    }

    /// Stokes response time `rho_p d^2 / (18 mu)`.
    pub fn response_time(&self, mu_gas: f64) -> f64 {
        self.density() * self.d_p * self.d_p / (18.0 * mu_gas)
    }

    /// Parcel mass, kg.
    pub fn parcel_mass(&self) -> f64 {
        self.m_p * self.n_real
    }

    /// Feeds one heating-rate sample into the bias-corrected moving average.
    pub fn observe_heating(&mut self, rate: f64, window: usize) {
        let a = 2.0 / (window as f64 + 1.0);
        self.beta_ema = (1.0 - a) * self.beta_ema + a * rate;
        self.beta_weight = (1.0 - a) * self.beta_weight + a;
        self.beta_est = self.beta_ema / self.beta_weight;
    }
}

/// Gas-side properties and closures for particle exchange.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExchangeConfig {
    /// Pa s
    pub mu_gas: f64,
    /// W/(m K)
    pub k_gas: f64,
    pub prandtl: f64,
    pub emissivity: f64,
    /// Radiating environment (wall or bed) temperature, K.
    pub t_env: f64,
    /// m/s^2, acting downward.
    pub gravity: f64,
    /// Heating-rate smoothing window, steps.
    pub beta_window: usize,
}

impl Default for ExchangeConfig {
    fn default() -> Self {
        Self {
            mu_gas: 4.5e-5,
            k_gas: 0.07,
            prandtl: 0.7,
            emissivity: 0.9,
            t_env: 1073.0,
            gravity: 9.81,
            beta_window: 50,
        }
    }
}

impl ExchangeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.mu_gas, self.k_gas, self.prandtl];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ParticleError::InvalidInput("mu_gas, k_gas and prandtl must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.emissivity) || !(self.t_env > 0.0) || !self.gravity.is_finite() {
            return Err(ParticleError::InvalidInput(
                "emissivity in [0, 1], t_env > 0 and finite gravity required".into(),
            ));
        }
        if self.beta_window == 0 {
            return Err(ParticleError::InvalidInput("beta_window must be >= 1".into()));
        }
        Ok(())
    }

    /// Ranz-Marshall heat-transfer coefficient, W/(m^2 K).
    pub fn heat_transfer_coefficient(&self, p: &Particle, gas: &GasCell) -> f64 {
        let re = gas.rho * (gas.u - p.v).abs() * p.d_p / self.mu_gas;
        let nu = 2.0 + 0.6 * re.sqrt() * self.prandtl.cbrt();
        nu * self.k_gas / p.d_p
    }
}

/// Time-averaged exchange powers over one energy update, W per particle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleHeatTerms {
    /// Convective gain from the gas.
    pub q_conv: f64,
    /// Radiative gain from the environment.
    pub q_rad: f64,
    /// Power consumed by reactions.
    pub dh_rs: f64,
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ParticleError::InvalidInput(format!("dt = {dt} must be > 0")));
    }
    Ok(())
}

/// Particles after a motion step, split into those still inside and those
/// that left through the top.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionOutcome {
    pub inside: Vec<Particle>,
    pub exited: Vec<Particle>,
}

/// Stokes drag plus gravity against the local cell velocity.
///
/// Each sub-step (at most `0.1 tau_p`) uses the exact exponential solution
/// for a frozen gas velocity; the bottom reflects.
pub fn advance_motion(particles: &[Particle], gas: &GasState, cfg: &ExchangeConfig, dt: f64) -> Result<MotionOutcome> {
    check_dt(dt)?;
    let height = gas.grid.height();
    let moved: Vec<Particle> = particles
        .iter()
        .map(|p| {
            let mut p = p.clone();
            let tau = p.response_time(cfg.mu_gas);
            let n = ((dt / (0.1 * tau)).ceil() as usize).clamp(1, MAX_SUBSTEPS);
            let h = dt / n as f64;
            let decay = (-h / tau).exp();
            for _ in 0..n {
                let Some(j) = gas.cell_at(p.z) else { break };
                let terminal = gas.cells[j].u - cfg.gravity * tau;
                let dv = p.v - terminal;
                p.z += terminal * h + dv * tau * (1.0 - decay);
                p.v = terminal + dv * decay;
                if p.z < 0.0 {
                    p.z = -p.z;
                    p.v = -p.v;
                }
                if p.z > height {
                    break;
                }
            }
            p
        })
        .collect();
    let (exited, inside) = moved.into_iter().partition(|p| p.z > height);
    Ok(MotionOutcome { inside, exited })
}

/// Lumped energy balance `m C_p dT/dt = Q_conv + Q_rad - kin_heat`.
///
/// Convection is integrated exactly; radiation and `kin_heat` are frozen
/// over sub-steps no longer than a fifth of the shorter of the convective
/// and linearized radiative time scales. Also updates `beta_est`.
pub fn advance_energy(
    p: &Particle,
    gas: &GasCell,
    cfg: &ExchangeConfig,
    kin_heat: f64,
    dt: f64,
) -> Result<(Particle, ParticleHeatTerms)> {
    check_dt(dt)?;
    let mut out = p.clone();
    let mc = p.m_p * p.c_p;
    let area = p.surface();
    let ha = cfg.heat_transfer_coefficient(p, gas) * area;
    let rad = cfg.emissivity * STEFAN_BOLTZMANN * area;
    let tau_conv = mc / ha;
    let tau_rad = if rad > 0.0 { mc / (4.0 * rad * p.t_p.max(cfg.t_env).powi(3)) } else { f64::INFINITY };
    let n = ((dt / (0.2 * tau_conv.min(tau_rad))).ceil() as usize).clamp(1, MAX_SUBSTEPS);
    let h = dt / n as f64;
    let a = ha / mc;
    let decay = (-a * h).exp();
    let (mut e_conv, mut e_rad) = (0.0, 0.0);
    let mut t = p.t_p;
    for _ in 0..n {
        let q_rad = rad * (cfg.t_env.powi(4) - t.powi(4));
        let t_eq = gas.t + (q_rad - kin_heat) / ha;
        let next = t_eq + (t - t_eq) * decay;
        // int (T_f - T) over the sub-step, exact for the frozen forcing
        e_conv += ha * ((gas.t - t_eq) * h - (t - t_eq) * (1.0 - decay) / a);
        e_rad += q_rad * h;
        t = next;
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(ParticleError::InvalidInput(format!("particle {} temperature became {t}", p.id)));
    }
    out.t_p = t;
    out.observe_heating((t - p.t_p) / dt, cfg.beta_window);
    Ok((out, ParticleHeatTerms { q_conv: e_conv / dt, q_rad: e_rad / dt, dh_rs: kin_heat }))
}

/// Mechanism-derived data for the particle's solid reactions.
#[derive(Debug, Clone)]
pub struct SolidChemistry {
    mech: ReactionMechanism,
    devol: usize,
    /// kg/mol of the devolatilizing species.
    volatile_molar_mass: f64,
    /// Gas-species indices and in-lump mass shares of the gas and liquid
    /// devolatilization products.
    gas_lump: Vec<(usize, f64)>,
    liquid_lump: Vec<(usize, f64)>,
    drying: Option<Drying>,
    n_gas: usize,
}

#[derive(Debug, Clone)]
struct Drying {
    reaction: usize,
    rate: ArrheniusParams,
    moisture_molar_mass: f64,
    vapour: usize,
}

impl SolidChemistry {
    pub fn new(mech: &ReactionMechanism, thermo: &GasThermo) -> Result<Self> {
        let roles = mech.roles()?;
        let rx = &mech.reactions[roles.devolatilization];
        let mut gas_lump = Vec::new();
        let mut liquid_lump = Vec::new();
        for &(i, nu) in &rx.products {
            if mech.species[i].phase == crate::kinetics::Phase::Solid {
                continue;
            }
            let g = thermo.mech_index.iter().position(|&k| k == i).ok_or_else(|| {
                ParticleError::InvalidInput(format!("product {} missing from gas thermo", mech.species[i].name))
            })?;
            let entry = (g, nu * mech.species[i].molar_mass);
            if roles.liquid_products.contains(&i) {
                liquid_lump.push(entry);
            } else {
                gas_lump.push(entry);
            }
        }
        for lump in [&mut gas_lump, &mut liquid_lump] {
            let total: f64 = lump.iter().map(|e| e.1).sum();
            lump.iter_mut().for_each(|e| e.1 /= total);
        }
        let drying = match (roles.drying, roles.moisture) {
            (Some(r), Some(m)) => {
                let rx = &mech.reactions[r];
                let vapour = rx
                    .products
                    .iter()
                    .find_map(|&(i, _)| thermo.mech_index.iter().position(|&k| k == i))
                    .ok_or_else(|| ParticleError::InvalidInput("drying produces no gas species".into()))?;
                Some(Drying { reaction: r, rate: rx.forward, moisture_molar_mass: mech.species[m].molar_mass, vapour })
            }
            _ => None,
        };
        Ok(Self {
            mech: mech.clone(),
            devol: roles.devolatilization,
            volatile_molar_mass: mech.species[roles.volatile].molar_mass,
            gas_lump,
            liquid_lump,
            drying,
            n_gas: thermo.n_species(),
        })
    }

    pub fn n_gas(&self) -> usize {
        self.n_gas
    }

    /// Heat consumed per kg of volatile converted at `t`, J/kg.
    pub fn devolatilization_heat(&self, t: f64) -> Result<f64> {
        Ok(heat_of_reaction(&self.mech, self.devol, t)? / self.volatile_molar_mass)
    }
}

/// Mass and heat a particle gave up in one step, per real particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    /// kg per gas species, in [`GasThermo`] order.
    pub species: Vec<f64>,
    /// Reaction heat consumed, J.
    pub heat: f64,
    /// Volatile mass converted (including what became char), kg.
    pub volatile_converted: f64,
}

impl Release {
    pub fn none(n_gas: usize) -> Self {
        Self { species: vec![0.0; n_gas], heat: 0.0, volatile_converted: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.species.iter().sum()
    }
}

/// Single-step devolatilization at the particle's current temperature.
///
/// Sub-steps keep each conversion increment at or below [`MAX_DALPHA`];
/// each is the closed-form isothermal solution. The converted volatile
/// splits by `yields`: the solid share is credited to char, the gas and
/// liquid shares are released across the mechanism's product species.
pub fn devolatilize(
    p: &Particle,
    k: &SingleStepKinetics,
    yields: &Yields,
    chem: &SolidChemistry,
    dt: f64,
) -> Result<(Particle, Release)> {
    check_dt(dt)?;
    let mut out = p.clone();
    let mut rel = Release::none(chem.n_gas);
    if p.volatile0 <= 0.0 || p.alpha >= 1.0 {
        return Ok((out, rel));
    }
    let k_t = k.rate_constant(p.t_p);
    let estimate = crate::kinetics::devol_rate(k, p.alpha, p.t_p) * dt;
    let n = ((estimate / MAX_DALPHA).ceil() as usize).clamp(1, MAX_SUBSTEPS);
    let h = dt / n as f64;
    let mut remaining = 1.0 - p.alpha;
    for _ in 0..n {
        remaining = crate::kinetics::remaining_after_integral(remaining, k.n, k_t * h);
    }
    let alpha = (1.0 - remaining).clamp(p.alpha, 1.0);
    let converted = (p.volatile - p.volatile0 * (1.0 - alpha)).clamp(0.0, p.volatile);
    if converted == 0.0 {
        return Ok((out, rel));
    }
    for (lump, share) in [(&chem.gas_lump, yields.gas), (&chem.liquid_lump, yields.liquid)] {
        for &(g, f) in lump {
            rel.species[g] += converted * share * f;
        }
    }
    let released: f64 = rel.species.iter().sum();
    out.volatile -= converted;
    out.char += converted - released;
    out.alpha = 1.0 - out.volatile / p.volatile0;
    rel.heat = chem.devolatilization_heat(p.t_p)? * converted;
    rel.volatile_converted = converted;
    out.refresh_mass();
    Ok((out, rel))
}

/// First-order drying by the mechanism's drying reaction, exact at the
/// particle's current temperature. Adds to `rel`.
pub fn dry(p: &mut Particle, chem: &SolidChemistry, rel: &mut Release, dt: f64) -> Result<()> {
    check_dt(dt)?;
    let Some(d) = &chem.drying else { return Ok(()) };
    if p.moisture <= 0.0 {
        return Ok(());
    }
    let k = rate_constant(&d.rate, p.t_p)?;
    let lost = p.moisture * -(-k * dt).exp_m1();
    p.moisture -= lost;
    rel.species[d.vapour] += lost;
    rel.heat += heat_of_reaction(&chem.mech, d.reaction, p.t_p)? / d.moisture_molar_mass * lost;
    p.refresh_mass();
    Ok(())
}

/// Lower cell and its weight for hat-function interpolation at `z`.
fn hat_weights(grid: &Grid1D, z: f64) -> [(usize, f64); 2] {
    let n = grid.n_cells;
    let s = z / grid.dz - 0.5;
    if s <= 0.0 {
        return [(0, 1.0), (0, 0.0)];
    }
    let j = s.floor() as usize;
    if j + 1 >= n {
        return [(n - 1, 1.0), (n - 1, 0.0)];
    }
    let w = s - j as f64;
    [(j, 1.0 - w), (j + 1, w)]
}

fn check_inside(p: &Particle, grid: &Grid1D) -> Result<()> {
    if !(p.z >= 0.0 && p.z <= grid.height()) {
        return Err(ParticleError::OutsideGrid { id: p.id, z: p.z });
    }
    Ok(())
}

/// What a particle hands the gas in one step, per real particle.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    /// Released mass per gas species, kg.
    pub species: Vec<f64>,
    /// Energy delivered to the gas, J.
    pub energy: f64,
}

/// Spreads each particle's exchange over the two nearest cell centers.
///
/// Accumulation runs in slice order, so results do not depend on how the
/// exchanges were computed. `dm_p` is closed as the species sum.
pub fn deposit_sources(
    particles: &[Particle],
    exchanges: &[Exchange],
    grid: &Grid1D,
    n_gas: usize,
    dt: f64,
) -> Result<SourceTerms> {
    check_dt(dt)?;
    if particles.len() != exchanges.len() {
        return Err(ParticleError::InvalidInput("one exchange per particle required".into()));
    }
    let mut src = SourceTerms::zeros(grid.n_cells, n_gas);
    let scale = 1.0 / (grid.cell_volume() * dt);
    for (p, ex) in particles.iter().zip(exchanges) {
        check_inside(p, grid)?;
        for (j, w) in hat_weights(grid, p.z) {
            if w == 0.0 {
                continue;
            }
            let f = w * p.n_real * scale;
            for (d, m) in src.dm_i[j].iter_mut().zip(&ex.species) {
                *d += f * m;
            }
            src.s_h[j] += f * ex.energy;
        }
    }
    src.close_species();
    Ok(src)
}

/// Gas volume fraction from hat-deposited particle volume, floored at
/// [`THETA_FLOOR`]; also returns how many cells hit the floor.
pub fn update_theta(particles: &[Particle], grid: &Grid1D) -> Result<(Vec<f64>, usize)> {
    let mut solid = vec![0.0; grid.n_cells];
    for p in particles {
        check_inside(p, grid)?;
        for (j, w) in hat_weights(grid, p.z) {
            solid[j] += w * p.n_real * p.volume();
        }
    }
    let v = grid.cell_volume();
    let mut saturated = 0;
    let theta = solid
        .iter()
        .map(|s| {
            let th = 1.0 - s / v;
            if th < THETA_FLOOR {
                saturated += 1;
                THETA_FLOOR
            } else {
                th
            }
        })
        .collect();
    if saturated > 0 {
        log::warn!("{saturated} cell(s) hit the gas volume fraction floor {THETA_FLOOR}");
    }
    Ok((theta, saturated))
}

/// Biot number `h d / (6 k_p)` of a particle, for the lumped-capacitance check.
pub fn biot_number(p: &Particle, gas: &GasCell, cfg: &ExchangeConfig, k_particle: f64) -> f64 {
    cfg.heat_transfer_coefficient(p, gas) * p.d_p / (6.0 * k_particle)
}

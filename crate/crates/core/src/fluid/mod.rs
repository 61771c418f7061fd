//! One-dimensional axial gas phase: conservative upwind finite volumes for
//! mass, species and enthalpy, an ideal-gas closure at uniform pressure,
//! and continuity-derived velocity.

mod thermo;
mod transport;

use std::sync::Arc;

pub use thermo::{eos_density, GasThermo, T_TABLE_RANGE};
pub use transport::{
    advance_energy, advance_gas, advance_mass, advance_species, check_stability, homogeneous_reactions,
    update_velocity, GasAudit, CFL_MAX, DIFFUSION_MAX,
};

use crate::kinetics::KineticsError;

/// Volume fraction floor applied when particles crowd a cell.
pub const THETA_FLOOR: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FluidError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("CFL number {courant:.3} in cell {cell} exceeds {max}; use dt <= {suggested_dt:.3e} s", max = CFL_MAX)]
    Cfl { courant: f64, cell: usize, suggested_dt: f64 },
    #[error("{what} stability number {number:.3} exceeds {max}; use dt <= {suggested_dt:.3e} s", max = DIFFUSION_MAX)]
    Stability { what: &'static str, number: f64, suggested_dt: f64 },
    #[error("enthalpy {h:.6e} J/kg outside the closure range [{h_min:.6e}, {h_max:.6e}]")]
    EnthalpyOutOfRange { h: f64, h_min: f64, h_max: f64 },
    #[error("gas mass vanished in cell {cell}")]
    EmptyCell { cell: usize },
    #[error("non-finite {what} in cell {cell}")]
    NonFinite { what: &'static str, cell: usize },
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    pub n_cells: usize,
    /// Cell height, m.
    pub dz: f64,
    /// Cross-section, m^2.
    pub area: f64,
}

impl Grid1D {
    pub fn new(n_cells: usize, dz: f64, area: f64) -> Result<Self, FluidError> {
        if n_cells < 4 {
            return Err(FluidError::Config(format!("grid needs at least 4 cells, got {n_cells}")));
        }
        if !(dz > 0.0 && area > 0.0 && dz.is_finite() && area.is_finite()) {
            return Err(FluidError::Config("cell height and area must be positive".into()));
        }
        Ok(Self { n_cells, dz, area })
    }

    pub fn cell_volume(&self) -> f64 {
        self.dz * self.area
    }

    pub fn height(&self) -> f64 {
        self.dz * self.n_cells as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dz
    }
}

/// Bottom boundary; the top is always an outflow.
#[derive(Debug, Clone, PartialEq)]
pub enum Boundary {
    /// No flow through either end.
    Closed,
    Inlet {
        /// kg/s
        mass_flow: f64,
        temperature: f64,
        mass_fractions: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasCell {
    pub theta: f64,
    /// Gas density, kg/m^3 of gas.
    pub rho: f64,
    /// Axial velocity at the cell center, m/s.
    pub u: f64,
    pub p: f64,
    pub t: f64,
    /// Absolute specific enthalpy, J/kg.
    pub h: f64,
    /// Species mass fractions in [`GasThermo`] order.
    pub y: Vec<f64>,
}

impl GasCell {
    /// Gas mass per unit cell volume, `theta * rho`.
    pub fn mass_density(&self) -> f64 {
        self.theta * self.rho
    }
}

/// Interphase and external sources per unit cell volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms {
    /// kg/(m^3 s), the sum of `dm_i` over species.
    pub dm_p: Vec<f64>,
    /// kg/(m^3 s) per cell and species.
    pub dm_i: Vec<Vec<f64>>,
    /// Interphase energy exchange, W/m^3, including the enthalpy carried by
    /// released species.
    pub s_h: Vec<f64>,
    /// External energy source, W/m^3.
    pub q_dot: Vec<f64>,
}

impl SourceTerms {
    pub fn zeros(n_cells: usize, n_species: usize) -> Self {
        Self {
            dm_p: vec![0.0; n_cells],
            dm_i: vec![vec![0.0; n_species]; n_cells],
            s_h: vec![0.0; n_cells],
            q_dot: vec![0.0; n_cells],
        }
    }

    /// Recomputes `dm_p` as the species sum, making the invariant exact.
    pub fn close_species(&mut self) {
        for (p, d) in self.dm_p.iter_mut().zip(&self.dm_i) {
            *p = d.iter().sum();
        }
    }
}

/// Effective diffusivities and conductivity. Viscous dissipation is taken
/// as zero and pressure as uniform and constant, so neither appears here.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportClosures {
    /// m^2/s per species.
    pub diffusivity: Vec<f64>,
    /// W/(m K)
    pub k_th: f64,
}

impl TransportClosures {
    pub fn uniform(n_species: usize, d: f64, k_th: f64) -> Self {
        Self { diffusivity: vec![d; n_species], k_th }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasState {
    pub grid: Grid1D,
    pub thermo: Arc<GasThermo>,
    pub cells: Vec<GasCell>,
    /// Mass flow through each face, kg/s, positive upward; face 0 is the
    /// bottom boundary and face `n` the top.
    pub face_flow: Vec<f64>,
    pub boundary: Boundary,
}

impl GasState {
    /// Uniform gas at rest (closed) or carrying the inlet flow through every
    /// face (open).
    pub fn uniform(
        grid: Grid1D,
        thermo: Arc<GasThermo>,
        p: f64,
        t: f64,
        y: Vec<f64>,
        boundary: Boundary,
    ) -> Result<Self, FluidError> {
        if y.len() != thermo.n_species() {
            return Err(FluidError::Config(format!(
                "{} mass fractions for {} gas species",
                y.len(),
                thermo.n_species()
            )));
        }
        if (y.iter().sum::<f64>() - 1.0).abs() > 1e-9 || y.iter().any(|v| *v < 0.0) {
            return Err(FluidError::Config("mass fractions must be non-negative and sum to 1".into()));
        }
        if !(p > 0.0 && t > 0.0) {
            return Err(FluidError::Config("pressure and temperature must be positive".into()));
        }
        if let Boundary::Inlet { mass_flow, temperature, mass_fractions } = &boundary {
            if !(*mass_flow > 0.0 && *temperature > 0.0) || mass_fractions.len() != y.len() {
                return Err(FluidError::Config("inlet needs positive flow, temperature and full composition".into()));
            }
        }
        let rho = eos_density(p, t, &y, &thermo);
        let h = thermo.mixture_enthalpy(&y, t);
        let cell = GasCell { theta: 1.0, rho, u: 0.0, p, t, h, y };
        let mut s =
            Self { grid, thermo, cells: vec![cell; grid.n_cells], face_flow: vec![0.0; grid.n_cells + 1], boundary };
        update_velocity(&mut s, &vec![0.0; grid.n_cells], None)?;
        Ok(s)
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Total gas mass, kg.
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|c| c.mass_density()).sum::<f64>() * self.grid.cell_volume()
    }

    /// Total absolute gas enthalpy, J.
    pub fn total_enthalpy(&self) -> f64 {
        self.cells.iter().map(|c| c.mass_density() * c.h).sum::<f64>() * self.grid.cell_volume()
    }

    /// Total mass of species `i`, kg.
    pub fn species_mass(&self, i: usize) -> f64 {
        self.cells.iter().map(|c| c.mass_density() * c.y[i]).sum::<f64>() * self.grid.cell_volume()
    }

    /// Species partial pressures in cell `j`, Pa.
    pub fn partial_pressures(&self, j: usize) -> Vec<f64> {
        let c = &self.cells[j];
        let m_mix = self.thermo.mean_molar_mass(&c.y);
        c.y.iter().zip(&self.thermo.molar_mass).map(|(y, m)| c.p * y * m_mix / m).collect()
    }

    /// Cell containing height `z`, if inside the column.
    pub fn cell_at(&self, z: f64) -> Option<usize> {
        if !(0.0..=self.grid.height()).contains(&z) {
            return None;
        }
        Some(((z / self.grid.dz) as usize).min(self.n_cells() - 1))
    }

    /// Applies new gas volume fractions at fixed gas mass per cell volume.
    pub fn set_theta(&mut self, theta: &[f64]) {
        for (c, &th) in self.cells.iter_mut().zip(theta) {
            let m = c.mass_density();
            c.theta = th;
            c.rho = m / th;
        }
    }
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Boundary, FluidError, GasState, SourceTerms, TransportClosures};
use crate::kinetics::{integrate_point_with, IntegratorOptions, PointState, ReactionMechanism};

pub const CFL_MAX: f64 = 0.9;
pub const DIFFUSION_MAX: f64 = 0.45;

/// Conservation ledger of one gas update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GasAudit {
    /// kg
    pub mass_before: f64,
    pub mass_after: f64,
    /// Net inflow through the boundaries, kg.
    pub boundary_mass: f64,
    /// Net interphase source, kg.
    pub source_mass: f64,
    /// |closure error| / mass_before.
    pub mass_residual: f64,
    /// J
    pub enthalpy_before: f64,
    pub enthalpy_after: f64,
    pub boundary_enthalpy: f64,
    pub source_enthalpy: f64,
    /// |closure error| / sum of |cell enthalpies|.
    pub enthalpy_residual: f64,
    /// Largest |sum Y - 1| removed by renormalization.
    pub species_drift: f64,
}

/// Checks advective, diffusive and thermal stability numbers for `dt`.
pub fn check_stability(s: &GasState, cl: &TransportClosures, dt: f64) -> Result<(), FluidError> {
    let v = s.grid.cell_volume();
    let dz2 = s.grid.dz * s.grid.dz;
    for (j, c) in s.cells.iter().enumerate() {
        let out = s.face_flow[j + 1].max(0.0) + (-s.face_flow[j]).max(0.0);
        let m = c.mass_density();
        if !(m > 0.0) {
            return Err(FluidError::EmptyCell { cell: j });
        }
        let courant = dt * out / (v * m);
        if courant > CFL_MAX {
            return Err(FluidError::Cfl { courant, cell: j, suggested_dt: dt * CFL_MAX / courant });
        }
        let alpha = cl.k_th / (c.rho * s.thermo.mixture_cp(&c.y, c.t));
        let number = alpha * dt / dz2;
        if number > DIFFUSION_MAX {
            return Err(FluidError::Stability { what: "thermal", number, suggested_dt: dt * DIFFUSION_MAX / number });
        }
    }
    let d_max = cl.diffusivity.iter().cloned().fold(0.0, f64::max);
    let number = d_max * dt / dz2;
    if number > DIFFUSION_MAX {
        return Err(FluidError::Stability { what: "diffusion", number, suggested_dt: dt * DIFFUSION_MAX / number });
    }
    Ok(())
}

/// Upwind composition and enthalpy carried by face `k`.
fn upwind<'a>(s: &'a GasState, inlet: &'a (Vec<f64>, f64), k: usize) -> (&'a [f64], f64) {
    let n = s.n_cells();
    let from = if s.face_flow[k] >= 0.0 {
        if k == 0 {
            return (&inlet.0, inlet.1);
        }
        k - 1
    } else {
        k.min(n - 1)
    };
    (&s.cells[from].y, s.cells[from].h)
}

fn inlet_state(s: &GasState) -> (Vec<f64>, f64) {
    match &s.boundary {
        Boundary::Inlet { temperature, mass_fractions, .. } => {
            (mass_fractions.clone(), s.thermo.mixture_enthalpy(mass_fractions, *temperature))
        }
        Boundary::Closed => (s.cells[0].y.clone(), s.cells[0].h),
    }
}

/// Diffusive species mass flows (kg/s) through interior face `k`, corrected
/// to sum to zero.
fn diffusive_flows(s: &GasState, cl: &TransportClosures, k: usize) -> Vec<f64> {
    let (a, b) = (&s.cells[k - 1], &s.cells[k]);
    let m_face = 0.5 * (a.mass_density() + b.mass_density());
    let coef = m_face * s.grid.area / s.grid.dz;
    let mut j: Vec<f64> = (0..a.y.len()).map(|i| -coef * cl.diffusivity[i] * (b.y[i] - a.y[i])).collect();
    let total: f64 = j.iter().sum();
    for (i, ji) in j.iter_mut().enumerate() {
        *ji -= 0.5 * (a.y[i] + b.y[i]) * total;
    }
    j
}

fn mass_kernel(s: &GasState, src: &SourceTerms, dt: f64) -> Vec<f64> {
    let v = s.grid.cell_volume();
    (0..s.n_cells())
        .map(|j| s.cells[j].mass_density() + dt / v * (s.face_flow[j] - s.face_flow[j + 1]) + dt * src.dm_p[j])
        .collect()
}

/// Species mass per cell volume after the update, `theta rho Y_i`.
fn species_kernel(s: &GasState, src: &SourceTerms, cl: &TransportClosures, dt: f64) -> Vec<Vec<f64>> {
    let n = s.n_cells();
    let ns = s.thermo.n_species();
    let v = s.grid.cell_volume();
    let inlet = inlet_state(s);
    let face: Vec<Vec<f64>> = (0..=n)
        .map(|k| {
            let (y, _) = upwind(s, &inlet, k);
            let mut phi: Vec<f64> = y.iter().map(|yi| s.face_flow[k] * yi).collect();
            if k > 0 && k < n {
                for (p, d) in phi.iter_mut().zip(diffusive_flows(s, cl, k)) {
                    *p += d;
                }
            }
            phi
        })
        .collect();
    (0..n)
        .map(|j| {
            let m = s.cells[j].mass_density();
            (0..ns)
                .map(|i| m * s.cells[j].y[i] + dt / v * (face[j][i] - face[j + 1][i]) + dt * src.dm_i[j][i])
                .collect()
        })
        .collect()
}

/// Enthalpy flow through each face, W: advection, enthalpy diffusion and
/// conduction.
fn energy_face_flows(s: &GasState, cl: &TransportClosures) -> Vec<f64> {
    let n = s.n_cells();
    let inlet = inlet_state(s);
    (0..=n)
        .map(|k| {
            let (_, h) = upwind(s, &inlet, k);
            let mut psi = s.face_flow[k] * h;
            if k > 0 && k < n {
                let (a, b) = (&s.cells[k - 1], &s.cells[k]);
                let t_face = 0.5 * (a.t + b.t);
                for (i, d) in diffusive_flows(s, cl, k).iter().enumerate() {
                    psi += d * s.thermo.species_enthalpy(i, t_face);
                }
                let theta_face = 0.5 * (a.theta + b.theta);
                psi -= cl.k_th * theta_face * (b.t - a.t) / s.grid.dz * s.grid.area;
            }
            psi
        })
        .collect()
}

fn energy_kernel(s: &GasState, src: &SourceTerms, cl: &TransportClosures, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let v = s.grid.cell_volume();
    let psi = energy_face_flows(s, cl);
    let e = (0..s.n_cells())
        .map(|j| {
            let c = &s.cells[j];
            c.mass_density() * c.h + dt / v * (psi[j] - psi[j + 1]) + dt * (src.s_h[j] + src.q_dot[j])
        })
        .collect();
    (e, psi)
}

fn check_sources(s: &GasState, src: &SourceTerms) -> Result<(), FluidError> {
    let n = s.n_cells();
    let ns = s.thermo.n_species();
    if src.dm_p.len() != n || src.dm_i.len() != n || src.s_h.len() != n || src.q_dot.len() != n {
        return Err(FluidError::Config(format!("source terms sized for a different grid ({n} cells expected)")));
    }
    for (j, d) in src.dm_i.iter().enumerate() {
        if d.len() != ns {
            return Err(FluidError::Config(format!("cell {j}: {} species sources, expected {ns}", d.len())));
        }
        if d.iter().chain([&src.dm_p[j], &src.s_h[j], &src.q_dot[j]]).any(|v| !v.is_finite()) {
            return Err(FluidError::NonFinite { what: "source term", cell: j });
        }
    }
    Ok(())
}

fn refresh_primitives(s: &mut GasState) {
    let a = s.grid.area;
    for j in 0..s.n_cells() {
        let m = s.cells[j].mass_density();
        s.cells[j].u = 0.5 * (s.face_flow[j] + s.face_flow[j + 1]) / (m * a);
    }
}

fn store_mass(s: &mut GasState, m: &[f64]) -> Result<(), FluidError> {
    for (j, (c, &m)) in s.cells.iter_mut().zip(m).enumerate() {
        if !(m > 0.0 && m.is_finite()) {
            return Err(FluidError::EmptyCell { cell: j });
        }
        c.rho = m / c.theta;
    }
    Ok(())
}

/// Upwind update of `theta rho` from face flows and mass sources.
pub fn advance_mass(s: &GasState, src: &SourceTerms, dt: f64) -> Result<GasState, FluidError> {
    check_sources(s, src)?;
    check_stability(s, &TransportClosures::uniform(s.thermo.n_species(), 0.0, 0.0), dt)?;
    let m = mass_kernel(s, src, dt);
    let mut out = s.clone();
    store_mass(&mut out, &m)?;
    refresh_primitives(&mut out);
    Ok(out)
}

/// Upwind advection, central diffusion and sources for species; the cell
/// mass follows from the species sum.
pub fn advance_species(
    s: &GasState,
    src: &SourceTerms,
    cl: &TransportClosures,
    dt: f64,
) -> Result<GasState, FluidError> {
    check_sources(s, src)?;
    check_stability(s, cl, dt)?;
    let mi = species_kernel(s, src, cl, dt);
    let m: Vec<f64> = mi.iter().map(|r| r.iter().sum()).collect();
    let mut out = s.clone();
    store_mass(&mut out, &m)?;
    for (c, (r, m)) in out.cells.iter_mut().zip(mi.iter().zip(&m)) {
        c.y = r.iter().map(|v| v / m).collect();
    }
    refresh_primitives(&mut out);
    Ok(out)
}

/// Explicit enthalpy update followed by temperature recovery.
pub fn advance_energy(
    s: &GasState,
    src: &SourceTerms,
    cl: &TransportClosures,
    dt: f64,
) -> Result<GasState, FluidError> {
    check_sources(s, src)?;
    check_stability(s, cl, dt)?;
    let m = mass_kernel(s, src, dt);
    let (e, _) = energy_kernel(s, src, cl, dt);
    let mut out = s.clone();
    store_mass(&mut out, &m)?;
    for (j, c) in out.cells.iter_mut().enumerate() {
        c.h = e[j] / m[j];
        c.t = s.thermo.temperature_from_enthalpy(&c.y, c.h, c.t)?;
    }
    refresh_primitives(&mut out);
    Ok(out)
}

/// Mass, species and energy advanced together from one consistent state,
/// with the conservation ledger of the update.
pub fn advance_gas(
    s: &GasState,
    src: &SourceTerms,
    cl: &TransportClosures,
    dt: f64,
) -> Result<(GasState, GasAudit), FluidError> {
    check_sources(s, src)?;
    check_stability(s, cl, dt)?;
    let v = s.grid.cell_volume();
    let n = s.n_cells();
    let m = mass_kernel(s, src, dt);
    let mi = species_kernel(s, src, cl, dt);
    let (e, psi) = energy_kernel(s, src, cl, dt);

    let mut out = s.clone();
    store_mass(&mut out, &m)?;
    let mut drift: f64 = 0.0;
    for j in 0..n {
        let c = &mut out.cells[j];
        let sum: f64 = mi[j].iter().sum();
        drift = drift.max((sum / m[j] - 1.0).abs());
        c.y = mi[j].iter().map(|v| (v / sum).max(0.0)).collect();
        let s2: f64 = c.y.iter().sum();
        c.y.iter_mut().for_each(|y| *y /= s2);
        c.h = e[j] / m[j];
        if !c.h.is_finite() {
            return Err(FluidError::NonFinite { what: "enthalpy", cell: j });
        }
        c.t = s.thermo.temperature_from_enthalpy(&c.y, c.h, c.t)?;
    }
    if drift > 0.0 {
        log::trace!("species renormalization drift {drift:.3e}");
    }
    refresh_primitives(&mut out);

    let mass_before = s.total_mass();
    let mass_after = out.total_mass();
    let boundary_mass = dt * (s.face_flow[0] - s.face_flow[n]);
    let source_mass = dt * v * src.dm_p.iter().sum::<f64>();
    let enthalpy_before = s.total_enthalpy();
    let enthalpy_after = out.total_enthalpy();
    let boundary_enthalpy = dt * (psi[0] - psi[n]);
    let source_enthalpy = dt * v * (0..n).map(|j| src.s_h[j] + src.q_dot[j]).sum::<f64>();
    let scale = v * s.cells.iter().map(|c| (c.mass_density() * c.h).abs()).sum::<f64>();
    let audit = GasAudit {
        mass_before,
        mass_after,
        boundary_mass,
        source_mass,
        mass_residual: (mass_after - mass_before - boundary_mass - source_mass).abs() / mass_before,
        enthalpy_before,
        enthalpy_after,
        boundary_enthalpy,
        source_enthalpy,
        enthalpy_residual: (enthalpy_after - enthalpy_before - boundary_enthalpy - source_enthalpy).abs()
            / scale.max(f64::MIN_POSITIVE),
        species_drift: drift,
    };
    Ok((out, audit))
}

/// Rebuilds face mass flows from continuity.
///
/// Starting from the inlet flow, each cell adds its mass source. With
/// `relax_dt`, each cell also sheds (or draws) the mass separating its
/// `theta rho` from the ideal-gas value over that time, which is how
/// heating and cooling push gas along at uniform pressure. A closed
/// boundary leaves all flows at zero.
pub fn update_velocity(s: &mut GasState, dm_p: &[f64], relax_dt: Option<f64>) -> Result<(), FluidError> {
    let n = s.n_cells();
    let inflow = match &s.boundary {
        Boundary::Closed => {
            s.face_flow.iter_mut().for_each(|f| *f = 0.0);
            refresh_primitives(s);
            return Ok(());
        }
        Boundary::Inlet { mass_flow, .. } => *mass_flow,
    };
    if !(inflow > 0.0) {
        return Err(FluidError::Config(format!("inlet mass flow {inflow} must be positive")));
    }
    let v = s.grid.cell_volume();
    s.face_flow[0] = inflow;
    for j in 0..n {
        let c = &s.cells[j];
        let m = c.mass_density();
        if !(m > 0.0) {
            return Err(FluidError::EmptyCell { cell: j });
        }
        let mut gain = dm_p[j];
        if let Some(dt) = relax_dt {
            let target = c.theta * super::eos_density(c.p, c.t, &c.y, &s.thermo);
            gain -= (target - m) / dt;
        }
        s.face_flow[j + 1] = s.face_flow[j] + v * gain;
    }
    refresh_primitives(s);
    Ok(())
}

/// Homogeneous gas-phase chemistry in every cell at constant pressure and
/// enthalpy: species integrate at the cell temperature, then temperature
/// is recovered from the unchanged mixture enthalpy.
pub fn homogeneous_reactions(
    s: &GasState,
    mech: &ReactionMechanism,
    dt: f64,
    tol: f64,
) -> Result<GasState, FluidError> {
    if mech.reactions.is_empty() {
        return Ok(s.clone());
    }
    let th = &s.thermo;
    let frozen = mech.solid_species();
    let updated: Vec<Result<(Vec<f64>, f64), FluidError>> = s
        .cells
        .par_iter()
        .map(|c| {
            let mut conc = vec![0.0; mech.n_species()];
            for (i, &k) in th.mech_index.iter().enumerate() {
                conc[k] = c.rho * c.y[i] / th.molar_mass[i];
            }
            let (next, _) =
                integrate_point_with(mech, &PointState::new(conc, c.t), dt, IntegratorOptions::new(tol), &frozen)?;
            let mut y: Vec<f64> = th
                .mech_index
                .iter()
                .enumerate()
                .map(|(i, &k)| (next.concentrations[k] * th.molar_mass[i] / c.rho).max(0.0))
                .collect();
            let sum: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= sum);
            let t = th.temperature_from_enthalpy(&y, c.h, c.t)?;
            Ok((y, t))
        })
        .collect();
    let mut out = s.clone();
    for (c, r) in out.cells.iter_mut().zip(updated) {
        let (y, t) = r?;
        c.y = y;
        c.t = t;
    }
    Ok(out)
}

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    local_conditions, query_window, CouplingError, FaultKind, KineticsMode, KineticsProvider, QueryStats,
    ScenarioConfig,
};
use crate::fluid::{
    advance_gas, homogeneous_reactions, update_velocity, Boundary, GasAudit, GasState, GasThermo, Grid1D,
    TransportClosures,
};
use crate::kinetics::ReactionMechanism;
use crate::particles::{
    advance_energy, advance_motion, biot_number, deposit_sources, devolatilize, dry, update_theta, Exchange, Particle,
    ParticleError, Release, SolidChemistry,
};
use crate::tga::{FeatureVector, FuelSpec, SolidLoading, TargetVector};

/// Relative tolerance of every mass ledger, per step.
pub const AUDIT_MASS_TOL: f64 = 1e-10;
/// Relative tolerance of the gas enthalpy ledger, per step.
pub const AUDIT_ENTHALPY_TOL: f64 = 1e-8;
/// Particles this far converted keep their last kinetics.
const ALPHA_DONE: f64 = 0.999;
/// Floors for the relative-change test of the refresh policy.
const BETA_FLOOR: f64 = 1.0;
const PARTIAL_FLOOR: f64 = 100.0;

/// Kinetics last delivered to a particle and the conditions they answer.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedKinetics {
    pub targets: TargetVector,
    /// Windowed features of the query.
    pub features: FeatureVector,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSlot {
    pub particle: Particle,
    pub kinetics: Option<CachedKinetics>,
}

/// Cumulative mass bookkeeping, kg.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub gas_initial: f64,
    pub particles_initial: f64,
    pub fed: f64,
    pub exited: f64,
    /// Mass handed from particles to gas through source terms.
    pub released: f64,
    /// Net gas mass entering through the boundaries.
    pub boundary: f64,
    /// Volatile mass converted, as reported by each devolatilization call.
    pub volatile_converted: f64,
    /// Volatile depletion carried out by exited parcels.
    pub exited_depletion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub step: u64,
    pub gas: GasState,
    pub slots: Vec<ParticleSlot>,
    pub ledger: Ledger,
    rng: ChaCha8Rng,
    next_id: u64,
    /// Fed mass not yet large enough for the next parcel, kg.
    feed_pending: f64,
    next_diameter: f64,
}

impl SimState {
    /// Mass currently held by particles, kg.
    pub fn particle_mass(&self) -> f64 {
        self.slots.iter().map(|s| s.particle.parcel_mass()).sum()
    }

    /// Volatile depletion summed over resident and exited parcels, kg.
    pub fn volatile_depletion(&self) -> f64 {
        self.ledger.exited_depletion
            + self.slots.iter().map(|s| s.particle.n_real * (s.particle.volatile0 - s.particle.volatile)).sum::<f64>()
    }
}

/// Residuals of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub gas_mass: f64,
    pub gas_enthalpy: f64,
    /// Gas mass against initial + boundary + released.
    pub gas_ledger: f64,
    /// Particles + exited + released against initial + fed.
    pub particle_ledger: f64,
    /// Gas + particles + exited against everything that entered.
    pub two_phase: f64,
    /// Converted volatile against particle-by-particle depletion.
    pub volatile: f64,
    pub theta_saturated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub fluid: f64,
    pub particles: f64,
    pub kinetics: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub max_gas_mass: f64,
    pub max_gas_enthalpy: f64,
    pub max_gas_ledger: f64,
    pub max_particle_ledger: f64,
    pub max_two_phase: f64,
    pub max_volatile: f64,
    pub theta_saturations: u64,
}

impl AuditSummary {
    fn absorb(&mut self, a: &StepAudit) {
        self.max_gas_mass = self.max_gas_mass.max(a.gas_mass);
        self.max_gas_enthalpy = self.max_gas_enthalpy.max(a.gas_enthalpy);
        self.max_gas_ledger = self.max_gas_ledger.max(a.gas_ledger);
        self.max_particle_ledger = self.max_particle_ledger.max(a.particle_ledger);
        self.max_two_phase = self.max_two_phase.max(a.two_phase);
        self.max_volatile = self.max_volatile.max(a.volatile);
        self.theta_saturations += a.theta_saturated as u64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub step: u64,
    pub n_particles: usize,
    pub gas_mass: f64,
    pub particle_mass: f64,
    /// Cumulative volatile converted, kg.
    pub volatile_released: f64,
    /// Mass fractions leaving through the top.
    pub outlet: Vec<f64>,
    /// Cell temperatures, K.
    pub temperature: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RunStatus {
    Pass,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: KineticsMode,
    pub status: RunStatus,
    pub failure: Option<String>,
    pub steps: u64,
    pub time: f64,
    pub species: Vec<String>,
    pub snapshots: Vec<Snapshot>,
    pub timings: Timings,
    pub audits: AuditSummary,
    pub queries: QueryStats,
    pub ledger: Ledger,
    /// Largest Biot number over the feed size range at inlet conditions.
    pub biot: f64,
}

/// Immutable pieces of a scenario shared by every step.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub mech: Arc<ReactionMechanism>,
    pub thermo: Arc<GasThermo>,
    pub chem: SolidChemistry,
    pub closures: TransportClosures,
    pub fuel: FuelSpec,
    pub loading: SolidLoading,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, CouplingError> {
        config.validate()?;
        let mech = ReactionMechanism::load(&config.mechanism)?;
        let thermo = Arc::new(GasThermo::from_mechanism(&mech)?);
        let chem = SolidChemistry::new(&mech, &thermo)?;
        let closures =
            TransportClosures::uniform(thermo.n_species(), config.transport.diffusivity, config.transport.k_th);
        let fuel = config.feed.fuel.resolve()?;
        let loading = fuel.loading(&mech)?;
        Ok(Self { config, mech: Arc::new(mech), thermo, chem, closures, fuel, loading })
    }

    pub fn grid(&self) -> Grid1D {
        let g = &self.config.grid;
        Grid1D::new(g.n_cells, g.dz, g.area).expect("validated grid")
    }

    fn composition(&self, pairs: &std::collections::BTreeMap<String, f64>) -> Result<Vec<f64>, CouplingError> {
        let list: Vec<(&str, f64)> = pairs.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(self.thermo.mass_fractions(&list)?)
    }

    pub fn initial_state(&self) -> Result<SimState, CouplingError> {
        let c = &self.config;
        let grid = Grid1D::new(c.grid.n_cells, c.grid.dz, c.grid.area)?;
        let inlet_y = self.composition(&c.inlet.composition)?;
        let (t0, y0) = match &c.initial_gas {
            Some(g) => (g.temperature, self.composition(&g.composition)?),
            None => (c.inlet.temperature, inlet_y.clone()),
        };
        let boundary =
            Boundary::Inlet { mass_flow: c.inlet.mass_flow, temperature: c.inlet.temperature, mass_fractions: inlet_y };
        let gas = GasState::uniform(grid, self.thermo.clone(), c.pressure, t0, y0, boundary)?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let next_diameter = self.draw_diameter(&mut rng)?;
        let ledger = Ledger { gas_initial: gas.total_mass(), ..Ledger::default() };
        Ok(SimState {
            time: 0.0,
            step: 0,
            gas,
            slots: Vec::new(),
            ledger,
            rng,
            next_id: 0,
            feed_pending: 0.0,
            next_diameter,
        })
    }

    fn draw_diameter(&self, rng: &mut ChaCha8Rng) -> Result<f64, CouplingError> {
        let f = &self.config.feed;
        if f.d_std == 0.0 {
            return Ok(f.d_mean);
        }
        let normal = Normal::new(f.d_mean, f.d_std).map_err(|e| CouplingError::Config(e.to_string()))?;
        for _ in 0..10_000 {
            let d = normal.sample(rng);
            if d >= f.d_min && d <= f.d_max {
                return Ok(d);
            }
        }
        Err(CouplingError::Config("feed diameter window is too narrow to sample".into()))
    }

    fn parcel_mass(&self, d: f64) -> f64 {
        self.config.particle.density * std::f64::consts::PI / 6.0 * d.powi(3) * self.config.feed.parcel_weight
    }

    fn feed(&self, s: &mut SimState) -> Result<(), CouplingError> {
        let f = &self.config.feed;
        let t_start = s.time;
        if f.mass_rate == 0.0 || f.until.is_some_and(|u| t_start >= u) {
            return Ok(());
        }
        s.feed_pending += f.mass_rate * self.config.dt;
        while s.feed_pending >= self.parcel_mass(s.next_diameter) {
            let p = Particle::from_loading(
                s.next_id,
                &self.loading,
                s.next_diameter,
                self.config.particle.density,
                self.config.particle.c_p,
                self.config.particle.temperature,
                f.height,
                f.parcel_weight,
            )?;
            s.feed_pending -= self.parcel_mass(s.next_diameter);
            s.ledger.fed += p.parcel_mass();
            s.next_id += 1;
            s.slots.push(ParticleSlot { particle: p, kinetics: None });
            s.next_diameter = self.draw_diameter(&mut s.rng)?;
        }
        Ok(())
    }

    fn cell_of(&self, s: &SimState, p: &Particle) -> Result<usize, CouplingError> {
        s.gas.cell_at(p.z).ok_or(CouplingError::Particle(ParticleError::OutsideGrid { id: p.id, z: p.z }))
    }

    /// Re-queries kinetics for particles whose refresh is due.
    fn refresh_kinetics(&self, s: &mut SimState, provider: &mut KineticsProvider) -> Result<(), CouplingError> {
        let cfg = &provider.config;
        let mut due = Vec::new();
        let mut features = Vec::new();
        for (i, slot) in s.slots.iter().enumerate() {
            if slot.kinetics.is_some() && slot.particle.alpha >= ALPHA_DONE {
                continue;
            }
            let j = self.cell_of(s, &slot.particle)?;
            let f = query_window(&local_conditions(&slot.particle, &s.gas.cells[j], &self.thermo, &self.fuel));
            let needed = match &slot.kinetics {
                None => true,
                Some(c) => s.step - c.step >= cfg.refresh_every || moved(&c.features, &f, cfg.refresh_threshold),
            };
            if needed {
                due.push(i);
                features.push(f);
            }
        }
        if due.is_empty() {
            return Ok(());
        }
        let answers = provider.query_batch(&features)?;
        for ((i, f), targets) in due.into_iter().zip(features).zip(answers) {
            s.slots[i].kinetics = Some(CachedKinetics { targets, features: f, step: s.step });
        }
        Ok(())
    }

    /// Chemistry and energy of one particle in its cell; position unchanged.
    fn particle_update(&self, s: &SimState, slot: &ParticleSlot) -> Result<(Particle, Exchange, f64), CouplingError> {
        let dt = self.config.dt;
        let p = &slot.particle;
        let cell = &s.gas.cells[self.cell_of(s, p)?];
        let k = slot.kinetics.as_ref().expect("refreshed before use");
        let mut q = p.clone();
        let mut rel = Release::none(self.thermo.n_species());
        dry(&mut q, &self.chem, &mut rel, dt)?;
        let (q, devol) = devolatilize(&q, &k.targets.kinetics, &k.targets.yields, &self.chem, dt)?;
        for (a, b) in rel.species.iter_mut().zip(&devol.species) {
            *a += b;
        }
        rel.heat += devol.heat;
        let (q, terms) = advance_energy(&q, cell, &self.config.exchange, rel.heat / dt, dt)?;
        let carried: f64 =
            rel.species.iter().enumerate().map(|(i, m)| m * self.thermo.species_enthalpy(i, p.t_p)).sum();
        let energy = carried - terms.q_conv * dt;
        Ok((q, Exchange { species: rel.species, energy }, devol.volatile_converted))
    }

    /// One coupled step on `state`. On error the state is left exactly as
    /// it was on entry.
    pub fn step(
        &self,
        state: &mut SimState,
        provider: &mut KineticsProvider,
        timings: &mut Timings,
    ) -> Result<StepAudit, CouplingError> {
        let mut next = state.clone();
        match self.advance(&mut next, provider, timings) {
            Ok(audit) => {
                *state = next;
                Ok(audit)
            }
            Err(e) => Err(CouplingError::Step { step: state.step + 1, source: Box::new(e) }),
        }
    }

    fn advance(
        &self,
        s: &mut SimState,
        provider: &mut KineticsProvider,
        timings: &mut Timings,
    ) -> Result<StepAudit, CouplingError> {
        let dt = self.config.dt;
        self.feed(s)?;
        s.step += 1;
        let step = s.step;

        let clock = Instant::now();
        self.refresh_kinetics(s, provider)?;
        timings.kinetics += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let updated: Vec<Result<(Particle, Exchange, f64), CouplingError>> =
            s.slots.par_iter().map(|slot| self.particle_update(s, slot)).collect();
        let mut particles = Vec::with_capacity(updated.len());
        let mut exchanges = Vec::with_capacity(updated.len());
        for r in updated {
            let (p, ex, converted) = r?;
            s.ledger.volatile_converted += p.n_real * converted;
            particles.push(p);
            exchanges.push(ex);
        }
        let grid = s.gas.grid;
        let mut src = deposit_sources(&particles, &exchanges, &grid, self.thermo.n_species(), dt)?;
        let wall = &self.config.wall;
        if wall.htc > 0.0 {
            let per_volume = wall.htc * 2.0 * (std::f64::consts::PI / grid.area).sqrt();
            for (q, c) in src.q_dot.iter_mut().zip(&s.gas.cells) {
                *q += per_volume * (wall.temperature - c.t);
            }
        }
        let moved = advance_motion(&particles, &s.gas, &self.config.exchange, dt)?;
        for p in &moved.exited {
            s.ledger.exited += p.parcel_mass();
            s.ledger.exited_depletion += p.n_real * (p.volatile0 - p.volatile);
        }
        let mut inside = moved.inside.into_iter().peekable();
        let mut slots = Vec::with_capacity(s.slots.len());
        for slot in s.slots.drain(..) {
            if inside.peek().is_some_and(|p| p.id == slot.particle.id) {
                slots.push(ParticleSlot { particle: inside.next().expect("peeked"), kinetics: slot.kinetics });
            }
        }
        s.slots = slots;
        let resident: Vec<Particle> = s.slots.iter().map(|sl| sl.particle.clone()).collect();
        let (theta, saturated) = update_theta(&resident, &grid)?;
        timings.particles += clock.elapsed().as_secs_f64();

        if let Some(f) = self.config.fault.filter(|f| f.step == step) {
            if f.kind == FaultKind::StepError {
                return Err(CouplingError::Injected(step));
            }
        }

        let clock = Instant::now();
        s.gas.set_theta(&theta);
        let (mut gas, audit) = advance_gas(&s.gas, &src, &self.closures, dt)?;
        update_velocity(&mut gas, &src.dm_p, Some(dt))?;
        s.gas = homogeneous_reactions(&gas, &self.mech, dt, self.config.gas_tol)?;
        timings.fluid += clock.elapsed().as_secs_f64();
        s.ledger.boundary += audit.boundary_mass;
        s.ledger.released += audit.source_mass;
        s.time = step as f64 * dt;

        if let Some(f) = self.config.fault.filter(|f| f.step == step && f.kind == FaultKind::MassLeak) {
            s.gas.cells[0].rho *= 1.0 - 1e-6;
            log::debug!("injected mass leak at step {}", f.step);
        }
        let audit = self.audit(s, &audit, saturated);
        let checks = [
            ("gas mass", audit.gas_mass, AUDIT_MASS_TOL),
            ("gas enthalpy", audit.gas_enthalpy, AUDIT_ENTHALPY_TOL),
            ("gas ledger", audit.gas_ledger, AUDIT_MASS_TOL),
            ("particle ledger", audit.particle_ledger, AUDIT_MASS_TOL),
            ("two-phase ledger", audit.two_phase, AUDIT_MASS_TOL),
            ("volatile ledger", audit.volatile, AUDIT_MASS_TOL),
        ];
        for (what, residual, limit) in checks {
            if !(residual <= limit) {
                return Err(CouplingError::Audit { step, what, residual, limit });
            }
        }
        Ok(audit)
    }

    fn audit(&self, s: &SimState, gas: &GasAudit, theta_saturated: usize) -> StepAudit {
        let l = &s.ledger;
        let gas_mass = s.gas.total_mass();
        let particles = s.particle_mass();
        let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        let depletion = s.volatile_depletion();
        StepAudit {
            gas_mass: gas.mass_residual,
            gas_enthalpy: gas.enthalpy_residual,
            gas_ledger: rel(gas_mass, l.gas_initial + l.boundary + l.released),
            particle_ledger: rel(particles + l.exited + l.released, l.particles_initial + l.fed),
            two_phase: rel(gas_mass + particles + l.exited, l.gas_initial + l.particles_initial + l.fed + l.boundary),
            volatile: rel(l.volatile_converted, depletion),
            theta_saturated,
        }
    }

    fn snapshot(&self, s: &SimState) -> Snapshot {
        Snapshot {
            time: s.time,
            step: s.step,
            n_particles: s.slots.len(),
            gas_mass: s.gas.total_mass(),
            particle_mass: s.particle_mass(),
            volatile_released: s.ledger.volatile_converted,
            outlet: s.gas.cells.last().expect("grid has cells").y.clone(),
            temperature: s.gas.cells.iter().map(|c| c.t).collect(),
        }
    }

    /// Largest Biot number over the feed size window at inlet conditions.
    fn biot(&self, s: &SimState) -> Result<f64, CouplingError> {
        let f = &self.config.feed;
        let pp = &self.config.particle;
        let p = Particle::from_loading(0, &self.loading, f.d_max, pp.density, pp.c_p, pp.temperature, 0.0, 1.0)?;
        Ok(biot_number(&p, &s.gas.cells[0], &self.config.exchange, pp.k_solid))
    }

    /// Steps to the configured end time, writing a CSV snapshot row every
    /// `snapshot_every` steps to `sink`. A failing step ends the run with
    /// status FAILED; only I/O problems are returned as errors.
    pub fn run(
        &self,
        provider: &mut KineticsProvider,
        sink: Option<&mut dyn Write>,
    ) -> Result<(RunReport, SimState), CouplingError> {
        let wall = Instant::now();
        let mut state = self.initial_state()?;
        let mut writer = sink.map(|w| csv::Writer::from_writer(w));
        if let Some(w) = writer.as_mut() {
            w.write_record(snapshot_header(&self.thermo.names, self.config.grid.n_cells))?;
        }
        let biot = self.biot(&state)?;
        if biot > 0.1 {
            log::warn!("Biot number {biot:.3} exceeds 0.1; lumped particle temperatures are approximate");
        } else {
            log::info!("Biot number {biot:.3}");
        }
        let mut report = RunReport {
            mode: provider.mode(),
            status: RunStatus::Pass,
            failure: None,
            steps: 0,
            time: 0.0,
            species: self.thermo.names.clone(),
            snapshots: Vec::new(),
            timings: Timings::default(),
            audits: AuditSummary::default(),
            queries: QueryStats::default(),
            ledger: state.ledger.clone(),
            biot,
        };
        let stats_before = provider.stats.clone();
        for _ in 0..self.config.n_steps() {
            match self.step(&mut state, provider, &mut report.timings) {
                Ok(a) => report.audits.absorb(&a),
                Err(e) => {
                    log::error!("{e}");
                    report.status = RunStatus::Failed;
                    report.failure = Some(e.to_string());
                    break;
                }
            }
            if state.step % self.config.snapshot_every == 0 {
                let snap = self.snapshot(&state);
                if let Some(w) = writer.as_mut() {
                    w.write_record(snapshot_record(&snap))?;
                }
                report.snapshots.push(snap);
            }
        }
        if let Some(mut w) = writer {
            w.flush()?;
        }
        report.steps = state.step;
        report.time = state.time;
        report.ledger = state.ledger.clone();
        report.queries = diff_stats(&provider.stats, &stats_before);
        report.timings.total = wall.elapsed().as_secs_f64();
        Ok((report, state))
    }
}

/// Column names of the snapshot CSV.
pub fn snapshot_header(species: &[String], n_cells: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["time", "step", "n_particles", "gas_mass", "particle_mass", "volatile_released"].map(String::from).into();
    h.extend(species.iter().map(|n| format!("outlet_{n}")));
    h.extend((0..n_cells).map(|j| format!("T_{j}")));
    h
}

/// One snapshot CSV row; floats print in shortest round-trip form.
pub fn snapshot_record(s: &Snapshot) -> Vec<String> {
    let mut row = vec![
        format!("{}", s.time),
        s.step.to_string(),
        s.n_particles.to_string(),
        format!("{:e}", s.gas_mass),
        format!("{:e}", s.particle_mass),
        format!("{:e}", s.volatile_released),
    ];
    row.extend(s.outlet.iter().map(|v| format!("{v:e}")));
    row.extend(s.temperature.iter().map(|v| format!("{v}")));
    row
}

/// Writes a report's snapshot history as CSV.
pub fn write_snapshots<W: Write>(report: &RunReport, n_cells: usize, w: W) -> Result<(), CouplingError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(snapshot_header(&report.species, n_cells))?;
    for s in &report.snapshots {
        wr.write_record(snapshot_record(s))?;
    }
    wr.flush()?;
    Ok(())
}

fn diff_stats(after: &QueryStats, before: &QueryStats) -> QueryStats {
    QueryStats {
        queries: after.queries - before.queries,
        cache_hits: after.cache_hits - before.cache_hits,
        evaluations: after.evaluations - before.evaluations,
        clamps: after.clamps - before.clamps,
        evaluation_seconds: after.evaluation_seconds - before.evaluation_seconds,
        query_seconds: after.query_seconds - before.query_seconds,
    }
}

/// Whether any of temperature, heating rate or the partial pressures moved
/// more than `threshold` relative to the last query.
fn moved(old: &FeatureVector, new: &FeatureVector, threshold: f64) -> bool {
    let change = |a: f64, b: f64, floor: f64| (b - a).abs() / a.abs().max(floor);
    change(old.temperature, new.temperature, 1.0) > threshold
        || change(old.beta, new.beta, BETA_FLOOR) > threshold
        || old.partials().iter().zip(new.partials()).any(|(a, b)| change(*a, b, PARTIAL_FLOOR) > threshold)
}

/// Builds the scenario and runs it with `provider`.
pub fn run(
    config: &ScenarioConfig,
    provider: &mut KineticsProvider,
    sink: Option<&mut dyn Write>,
) -> Result<RunReport, CouplingError> {
    Ok(Simulation::new(config.clone())?.run(provider, sink)?.0)
}

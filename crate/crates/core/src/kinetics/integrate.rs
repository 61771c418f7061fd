//! Adaptive integration of the species ODE `dC/dt = S r(C, T)` at fixed temperature.
//!
//! The default scheme is linearly implicit (Rosenbrock) Euler with step
//! doubling: a full step and two half steps are compared for the error
//! estimate and combined by Richardson extrapolation. Both are exact
//! linear maps of conserving increments, so element totals are preserved
//! up to the final clamping of round-off negatives.

use super::mechanism::ReactionMechanism;
use super::rates::{net_rate, pow_order, PointState};
use super::reaction::rate_constant;
use super::KineticsError;

/// Smallest internal step before the integrator reports stiffness failure, s.
pub const DT_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    SemiImplicit,
    /// Dormand-Prince 5(4); only for non-stiff mechanisms.
    Rk45,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub scheme: Scheme,
    /// Relative tolerance against the largest concentration.
    pub tol: f64,
    pub dt_min: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn new(tol: f64) -> Self {
        Self { scheme: Scheme::SemiImplicit, tol, dt_min: DT_MIN, max_steps: 5_000_000 }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub last_step: f64,
}

/// Right-hand side and Jacobian of an autonomous ODE system.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&mut self, y: &[f64], dydt: &mut [f64]) -> Result<(), KineticsError>;
    /// Row-major `dim x dim` Jacobian `d rhs_i / d y_j`.
    fn jacobian(&mut self, y: &[f64], jac: &mut [f64]) -> Result<(), KineticsError>;
}

/// The species ODE of a mechanism at fixed temperature, optionally with
/// some species held constant (frozen).
pub struct MechanismSystem<'a> {
    mech: &'a ReactionMechanism,
    active: Vec<usize>,
    /// position of each species in `active`, if active
    slot: Vec<Option<usize>>,
    reactions: Vec<usize>,
    kf: Vec<f64>,
    kb: Vec<f64>,
    full: Vec<f64>,
    temperature: f64,
}

impl<'a> MechanismSystem<'a> {
    pub fn new(mech: &'a ReactionMechanism, temperature: f64, full: Vec<f64>) -> Result<Self, KineticsError> {
        Self::with_frozen(mech, temperature, full, &[])
    }

    /// `frozen` species keep their value in `full`; only reactions that
    /// change an active species are evaluated.
    pub fn with_frozen(
        mech: &'a ReactionMechanism,
        temperature: f64,
        full: Vec<f64>,
        frozen: &[usize],
    ) -> Result<Self, KineticsError> {
        let n = mech.n_species();
        let active: Vec<usize> = (0..n).filter(|i| !frozen.contains(i)).collect();
        let mut slot = vec![None; n];
        for (k, &i) in active.iter().enumerate() {
            slot[i] = Some(k);
        }
        let reactions: Vec<usize> = (0..mech.reactions.len())
            .filter(|&r| active.iter().any(|&i| mech.reactions[r].net_coefficient(i) != 0.0))
            .collect();
        let mut kf = Vec::with_capacity(reactions.len());
        let mut kb = Vec::with_capacity(reactions.len());
        for &r in &reactions {
            let rx = &mech.reactions[r];
            kf.push(rate_constant(&rx.forward, temperature)?);
            kb.push(match &rx.reverse {
                Some(p) => rate_constant(p, temperature)?,
                None => 0.0,
            });
        }
        Ok(Self { mech, active, slot, reactions, kf, kb, full, temperature })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn pack(&self, full: &[f64]) -> Vec<f64> {
        self.active.iter().map(|&i| full[i]).collect()
    }

    pub fn unpack(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.full.clone();
        for (k, &i) in self.active.iter().enumerate() {
            out[i] = y[k];
        }
        out
    }

    fn scatter(&mut self, y: &[f64]) {
        for (k, &i) in self.active.iter().enumerate() {
            self.full[i] = y[k];
        }
    }
}

impl OdeSystem for MechanismSystem<'_> {
    fn dim(&self) -> usize {
        self.active.len()
    }

    fn rhs(&mut self, y: &[f64], dydt: &mut [f64]) -> Result<(), KineticsError> {
        self.scatter(y);
        dydt.iter_mut().for_each(|v| *v = 0.0);
        for (k, &r) in self.reactions.iter().enumerate() {
            let rx = &self.mech.reactions[r];
            let mut rate = 0.0;
            if self.kf[k] != 0.0 {
                rate += self.kf[k] * product(&rx.forward_orders, &self.full);
            }
            if self.kb[k] != 0.0 {
                rate -= self.kb[k] * product(&rx.reverse_orders, &self.full);
            }
            if !rate.is_finite() {
                // surface the precise cause (negative order at zero, overflow)
                net_rate(self.mech, r, &self.full, self.temperature)?;
                return Err(KineticsError::InvalidState(format!("non-finite rate in reaction {r}")));
            }
            for &(i, v) in &rx.reactants {
                if let Some(s) = self.slot[i] {
                    dydt[s] -= v * rate;
                }
            }
            for &(i, v) in &rx.products {
                if let Some(s) = self.slot[i] {
                    dydt[s] += v * rate;
                }
            }
        }
        Ok(())
    }

    fn jacobian(&mut self, y: &[f64], jac: &mut [f64]) -> Result<(), KineticsError> {
        self.scatter(y);
        let n = self.active.len();
        jac.iter_mut().for_each(|v| *v = 0.0);
        let mut drate = vec![0.0; n];
        for (k, &r) in self.reactions.iter().enumerate() {
            let rx = &self.mech.reactions[r];
            drate.iter_mut().for_each(|v| *v = 0.0);
            accumulate_derivative(self.kf[k], &rx.forward_orders, &self.full, &self.slot, 1.0, &mut drate);
            accumulate_derivative(self.kb[k], &rx.reverse_orders, &self.full, &self.slot, -1.0, &mut drate);
            for i in 0..self.mech.n_species() {
                let Some(row) = self.slot[i] else { continue };
                let nu = rx.net_coefficient(i);
                if nu == 0.0 {
                    continue;
                }
                for col in 0..n {
                    jac[row * n + col] += nu * drate[col];
                }
            }
        }
        Ok(())
    }
}

fn product(orders: &[(usize, f64)], c: &[f64]) -> f64 {
    orders.iter().fold(1.0, |acc, &(i, n)| acc * pow_order(c[i].max(0.0), n))
}

fn accumulate_derivative(
    k: f64,
    orders: &[(usize, f64)],
    c: &[f64],
    slot: &[Option<usize>],
    sign: f64,
    out: &mut [f64],
) {
    if k == 0.0 {
        return;
    }
    for (a, &(j, nj)) in orders.iter().enumerate() {
        let Some(col) = slot[j] else { continue };
        if nj == 0.0 {
            continue;
        }
        let cj = c[j].max(0.0);
        let dj = if nj == 1.0 {
            1.0
        } else if cj > 0.0 {
            nj * cj.powf(nj - 1.0)
        } else if nj > 1.0 {
            0.0
        } else {
            // infinite slope at zero for fractional orders; treat explicitly
            0.0
        };
        let rest = orders
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .fold(1.0, |acc, (_, &(i, n))| acc * pow_order(c[i].max(0.0), n));
        out[col] += sign * k * dj * rest;
    }
}

/// Advances the mechanism's species at fixed temperature by `dt`.
pub fn integrate_point(
    mech: &ReactionMechanism,
    s: &PointState,
    dt: f64,
    tol: f64,
) -> Result<PointState, KineticsError> {
    integrate_point_with(mech, s, dt, IntegratorOptions::new(tol), &[]).map(|(s, _)| s)
}

/// [`integrate_point`] with explicit options and frozen species.
pub fn integrate_point_with(
    mech: &ReactionMechanism,
    s: &PointState,
    dt: f64,
    opts: IntegratorOptions,
    frozen: &[usize],
) -> Result<(PointState, IntegrationStats), KineticsError> {
    s.validate(mech)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KineticsError::InvalidState(format!("dt = {dt} must be > 0")));
    }
    if !(opts.tol > 0.0 && opts.tol <= 1e-2) {
        return Err(KineticsError::InvalidState(format!("tol = {} must lie in (0, 1e-2]", opts.tol)));
    }
    let mut sys = MechanismSystem::with_frozen(mech, s.temperature, s.concentrations.clone(), frozen)?;
    let mut y = sys.pack(&s.concentrations);
    let stats = integrate(&mut sys, &mut y, dt, &opts)?;
    Ok((PointState::new(sys.unpack(&y), s.temperature), stats))
}

/// Integrates `sys` from `y` over `dt` in place.
pub fn integrate<S: OdeSystem>(
    sys: &mut S,
    y: &mut [f64],
    dt: f64,
    opts: &IntegratorOptions,
) -> Result<IntegrationStats, KineticsError> {
    let n = sys.dim();
    let mut stats = IntegrationStats::default();
    if n == 0 {
        return Ok(stats);
    }
    let mut ws = Workspace::new(n);
    let mut t = 0.0;
    let mut h = dt;
    let mut last_err = 0.0;
    while t < dt {
        if dt - t < h {
            h = dt - t;
        }
        let remaining_is_tiny = dt - t <= dt * 1e-14;
        if remaining_is_tiny {
            break;
        }
        if h < opts.dt_min {
            return Err(KineticsError::Stiffness {
                time_reached: t,
                dt,
                step: h,
                error_norm: last_err,
                accepted: stats.accepted,
                rejected: stats.rejected,
            });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(KineticsError::Stiffness {
                time_reached: t,
                dt,
                step: h,
                error_norm: last_err,
                accepted: stats.accepted,
                rejected: stats.rejected,
            });
        }
        let (ok, err, order) = match opts.scheme {
            Scheme::SemiImplicit => semi_implicit_trial(sys, y, h, &mut ws)?,
            Scheme::Rk45 => dopri_trial(sys, y, h, &mut ws)?,
        };
        let scale = opts.tol * max_abs(y).max(max_abs(&ws.y_new)).max(1e-300);
        let mut err_norm = if ok { err / scale } else { f64::INFINITY };
        // reject steps that dig into negative concentrations beyond tolerance
        if err_norm <= 1.0 && ws.y_new.iter().any(|&v| v < -scale) {
            err_norm = 2.0;
        }
        last_err = err_norm;
        if err_norm <= 1.0 {
            for (yi, &v) in y.iter_mut().zip(&ws.y_new) {
                *yi = if v < 0.0 { 0.0 } else { v };
            }
            t += h;
            stats.accepted += 1;
            stats.last_step = h;
            let fac = if err_norm == 0.0 { 4.0 } else { (0.9 * err_norm.powf(-1.0 / order)).clamp(0.2, 4.0) };
            h *= fac;
        } else {
            stats.rejected += 1;
            let fac = if err_norm.is_finite() { (0.9 * err_norm.powf(-1.0 / order)).clamp(0.1, 0.5) } else { 0.25 };
            h *= fac;
        }
    }
    Ok(stats)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Workspace {
    f: Vec<f64>,
    jac: Vec<f64>,
    mat: Vec<f64>,
    rhs: Vec<f64>,
    y_full: Vec<f64>,
    y_half: Vec<f64>,
    y_new: Vec<f64>,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            f: vec![0.0; n],
            jac: vec![0.0; n * n],
            mat: vec![0.0; n * n],
            rhs: vec![0.0; n],
            y_full: vec![0.0; n],
            y_half: vec![0.0; n],
            y_new: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }
}

/// One linearly implicit Euler step `(I - hJ) d = h f(y)` into `out`.
/// Returns false when the linear system is singular.
fn rosenbrock_euler<S: OdeSystem>(
    sys: &mut S,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    out_is_half: bool,
) -> Result<bool, KineticsError> {
    let n = y.len();
    sys.rhs(y, &mut ws.f)?;
    sys.jacobian(y, &mut ws.jac)?;
    for i in 0..n {
        for j in 0..n {
            ws.mat[i * n + j] = if i == j { 1.0 } else { 0.0 } - h * ws.jac[i * n + j];
        }
        ws.rhs[i] = h * ws.f[i];
    }
    if !lu_solve(&mut ws.mat, &mut ws.rhs, n) {
        return Ok(false);
    }
    let out = if out_is_half { &mut ws.y_half } else { &mut ws.y_full };
    for i in 0..n {
        out[i] = y[i] + ws.rhs[i];
    }
    Ok(true)
}

fn semi_implicit_trial<S: OdeSystem>(
    sys: &mut S,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
) -> Result<(bool, f64, f64), KineticsError> {
    if !rosenbrock_euler(sys, y, h, ws, false)? {
        return Ok((false, f64::INFINITY, 2.0));
    }
    if !rosenbrock_euler(sys, y, 0.5 * h, ws, true)? {
        return Ok((false, f64::INFINITY, 2.0));
    }
    let mid = ws.y_half.clone();
    if !rosenbrock_euler(sys, &mid, 0.5 * h, ws, true)? {
        return Ok((false, f64::INFINITY, 2.0));
    }
    let mut err = 0.0f64;
    for i in 0..y.len() {
        let d = ws.y_half[i] - ws.y_full[i];
        err = err.max(d.abs());
        ws.y_new[i] = ws.y_half[i] + d;
    }
    if ws.y_new.iter().any(|v| !v.is_finite()) {
        return Ok((false, f64::INFINITY, 2.0));
    }
    Ok((true, err, 2.0))
}

// Dormand-Prince 5(4) tableau
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

fn dopri_trial<S: OdeSystem>(
    sys: &mut S,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
) -> Result<(bool, f64, f64), KineticsError> {
    let n = y.len();
    debug_assert_eq!(DP_C.len(), 7);
    for stage in 0..7 {
        for i in 0..n {
            let mut acc = y[i];
            for (j, a) in DP_A[stage].iter().enumerate().take(stage) {
                acc += h * a * ws.k[j][i];
            }
            ws.tmp[i] = acc.max(0.0);
        }
        let tmp = ws.tmp.clone();
        sys.rhs(&tmp, &mut ws.k[stage])?;
    }
    let mut err = 0.0f64;
    for i in 0..n {
        let mut y5 = y[i];
        let mut y4 = y[i];
        for s in 0..7 {
            y5 += h * DP_B5[s] * ws.k[s][i];
            y4 += h * DP_B4[s] * ws.k[s][i];
        }
        ws.y_new[i] = y5;
        err = err.max((y5 - y4).abs());
    }
    if ws.y_new.iter().any(|v| !v.is_finite()) {
        return Ok((false, f64::INFINITY, 5.0));
    }
    Ok((true, err, 5.0))
}

/// Gaussian elimination with partial pivoting; solution left in `b`.
fn lu_solve(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for j in col + 1..n {
            acc -= a[col * n + j] * b[j];
        }
        b[col] = acc / a[col * n + col];
    }
    b.iter().all(|v| v.is_finite())
}

use std::sync::Arc;

use proptest::prelude::*;
use pyroflux_core::fluid::*;
use pyroflux_core::kinetics::{ReactionMechanism, R_GAS};

const P: f64 = 101_325.0;

fn thermo() -> Arc<GasThermo> {
    Arc::new(GasThermo::from_mechanism(&ReactionMechanism::reference()).unwrap())
}

/// Single-species gas with constant cp = 29 J/(mol K).
fn constant_cp_thermo() -> Arc<GasThermo> {
    Arc::new(GasThermo {
        names: vec!["X".into(), "Y".into()],
        mech_index: vec![0, 1],
        molar_mass: vec![0.029, 0.029],
        h_form: vec![0.0, 0.0],
        cp_coeffs: vec![vec![29.0], vec![29.0]],
        t_ref: 298.15,
    })
}

fn closed_box(th: Arc<GasThermo>, n: usize, dz: f64, y: Vec<f64>, t: f64) -> GasState {
    GasState::uniform(Grid1D::new(n, dz, 0.01).unwrap(), th, P, t, y, Boundary::Closed).unwrap()
}

fn air(th: &GasThermo) -> Vec<f64> {
    th.mass_fractions(&[("N2", 0.8), ("H2O", 0.2)]).unwrap()
}

#[test]
fn eos_density_examples() {
    let th = thermo();
    let n2 = th.mass_fractions(&[("N2", 1.0)]).unwrap();
    let t = 900.0;
    let p = R_GAS * t / 0.028014;
    assert!((eos_density(p, t, &n2, &th) - 1.0).abs() < 1e-14);
    assert!((eos_density(2.0 * p, t, &n2, &th) - 2.0).abs() < 1e-14);

    let mix = th.mass_fractions(&[("N2", 0.6), ("H2O", 0.4)]).unwrap();
    let m_mix = 1.0 / (0.6 / 0.028014 + 0.4 / 0.018015);
    let expected = P * m_mix / (R_GAS * t);
    assert!((eos_density(P, t, &mix, &th) - expected).abs() <= 1e-14 * expected);
}

#[test]
fn closed_box_mass() {
    let th = thermo();
    let s = closed_box(th.clone(), 8, 0.1, air(&th), 1000.0);
    let zero = SourceTerms::zeros(8, th.n_species());
    let same = advance_mass(&s, &zero, 0.01).unwrap();
    assert_eq!(same.cells, s.cells);

    let mut src = zero.clone();
    let h2o = th.index("H2O").unwrap();
    for j in 0..8 {
        src.dm_i[j][h2o] = 0.3;
    }
    src.close_species();
    let dt = 0.01;
    let grown = advance_mass(&s, &src, dt).unwrap();
    let expected = 0.3 * s.grid.cell_volume() * 8.0 * dt;
    let gained = grown.total_mass() - s.total_mass();
    assert!((gained - expected).abs() <= 1e-12 * expected, "{gained} vs {expected}");
}

/// Open column carrying a uniform mass flow with a tracer profile.
fn tracer_column(n: usize, profile: impl Fn(f64) -> f64) -> GasState {
    let th = constant_cp_thermo();
    let grid = Grid1D::new(n, 1.0 / n as f64, 0.01).unwrap();
    let inlet = Boundary::Inlet { mass_flow: 0.01 * 1.0, temperature: 1000.0, mass_fractions: vec![1.0, 0.0] };
    let mut s = GasState::uniform(grid, th, P, 1000.0, vec![1.0, 0.0], inlet).unwrap();
    for j in 0..n {
        let x = profile(s.grid.center(j));
        s.cells[j].y = vec![1.0 - x, x];
    }
    s
}

fn top_hat(z: f64) -> f64 {
    if (0.2..0.4).contains(&z) {
        1.0
    } else {
        0.0
    }
}

#[test]
fn top_hat_advection_matches_reference_upwind() {
    let mut s = tracer_column(50, top_hat);
    let cl = TransportClosures::uniform(2, 0.0, 0.0);
    let u = s.cells[0].u;
    let dt = 0.5 * s.grid.dz / u;
    let c = u * dt / s.grid.dz;
    let mut reference: Vec<f64> = s.cells.iter().map(|c| c.y[1]).collect();
    let zero = SourceTerms::zeros(50, 2);
    for _ in 0..40 {
        s = advance_gas(&s, &zero, &cl, dt).unwrap().0;
        let prev = reference.clone();
        for j in 0..50 {
            let upstream = if j == 0 { 0.0 } else { prev[j - 1] };
            reference[j] = prev[j] - c * (prev[j] - upstream);
        }
    }
    for (cell, r) in s.cells.iter().zip(&reference) {
        assert!((cell.y[1] - r).abs() < 1e-12, "{} vs {r}", cell.y[1]);
    }
}

#[test]
fn advection_error_falls_with_refinement() {
    let mut errors = Vec::new();
    for n in [50, 100, 200] {
        let mut s = tracer_column(n, top_hat);
        let cl = TransportClosures::uniform(2, 0.0, 0.0);
        let u = s.cells[0].u;
        let t_end = 0.3 / u;
        let steps = (t_end / (0.5 * s.grid.dz / u)).round() as usize;
        let dt = t_end / steps as f64;
        let zero = SourceTerms::zeros(n, 2);
        for _ in 0..steps {
            s = advance_gas(&s, &zero, &cl, dt).unwrap().0;
        }
        let l1: f64 = (0..n).map(|j| (s.cells[j].y[1] - top_hat(s.grid.center(j) - 0.3)).abs() * s.grid.dz).sum();
        errors.push(l1);
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn cfl_violation_suggests_dt() {
    let s = tracer_column(10, |_| 0.0);
    let u = s.cells[0].u;
    let dt = 2.0 * s.grid.dz / u;
    match advance_mass(&s, &SourceTerms::zeros(10, 2), dt) {
        Err(FluidError::Cfl { suggested_dt, .. }) => assert!(suggested_dt < dt && suggested_dt > 0.4 * dt),
        other => panic!("expected CFL error, got {other:?}"),
    }
    let cl = TransportClosures::uniform(2, 1.0, 0.0);
    assert!(matches!(check_stability(&s, &cl, 0.01), Err(FluidError::Stability { what: "diffusion", .. })));
}

#[test]
fn species_diffusion() {
    let th = constant_cp_thermo();
    let cl = TransportClosures::uniform(2, 1e-4, 0.0);
    let mut s = closed_box(th.clone(), 20, 0.01, vec![1.0, 0.0], 800.0);
    let uniform = advance_species(&s, &SourceTerms::zeros(20, 2), &cl, 0.1).unwrap();
    assert_eq!(uniform.cells, s.cells);

    s.cells[7].y = vec![0.0, 1.0];
    let tracer0 = s.species_mass(1);
    for _ in 0..200 {
        s = advance_species(&s, &SourceTerms::zeros(20, 2), &cl, 0.4).unwrap();
    }
    assert!((s.species_mass(1) - tracer0).abs() <= 1e-12 * tracer0);
    assert!(s.cells[0].y[1] > 0.0);
}

#[test]
fn gaussian_variance_grows_as_2dt() {
    let th = constant_cp_thermo();
    let (n, dz, d) = (400, 1e-3, 1e-4);
    let cl = TransportClosures::uniform(2, d, 0.0);
    let mut s = closed_box(th, n, dz, vec![1.0, 0.0], 800.0);
    let z0 = 0.2;
    let sigma0: f64 = 0.005;
    for j in 0..n {
        let x = 0.1 * (-(s.grid.center(j) - z0).powi(2) / (2.0 * sigma0 * sigma0)).exp();
        s.cells[j].y = vec![1.0 - x, x];
    }
    let variance = |s: &GasState| {
        let w: Vec<f64> = s.cells.iter().map(|c| c.y[1]).collect();
        let total: f64 = w.iter().sum();
        let mean: f64 = (0..n).map(|j| w[j] * s.grid.center(j)).sum::<f64>() / total;
        (0..n).map(|j| w[j] * (s.grid.center(j) - mean).powi(2)).sum::<f64>() / total
    };
    let var0 = variance(&s);
    let dt = 0.4 * dz * dz / d;
    let steps = 500;
    for _ in 0..steps {
        s = advance_species(&s, &SourceTerms::zeros(n, 2), &cl, dt).unwrap();
    }
    let grown = variance(&s) - var0;
    let expected = 2.0 * d * dt * steps as f64;
    assert!((grown - expected).abs() <= 0.05 * expected, "{grown} vs {expected}");
}

#[test]
fn adiabatic_box_conserves_enthalpy() {
    let th = thermo();
    let cl = TransportClosures::uniform(th.n_species(), 1e-4, 0.05);
    let mut s = closed_box(th.clone(), 10, 0.05, air(&th), 900.0);
    for j in 0..10 {
        let hot = 900.0 + 30.0 * j as f64;
        let y = th.mass_fractions(&[("N2", 0.8 - 0.02 * j as f64), ("CO2", 0.2 + 0.02 * j as f64)]).unwrap();
        s.cells[j].h = th.mixture_enthalpy(&y, hot);
        s.cells[j].t = hot;
        s.cells[j].y = y;
    }
    let e0 = s.total_enthalpy();
    let scale: f64 = s.cells.iter().map(|c| (c.mass_density() * c.h).abs()).sum::<f64>() * s.grid.cell_volume();
    for _ in 0..100 {
        let (next, audit) = advance_gas(&s, &SourceTerms::zeros(10, th.n_species()), &cl, 0.01).unwrap();
        assert!(audit.enthalpy_residual <= 1e-10 && audit.mass_residual <= 1e-12);
        s = next;
    }
    assert!((s.total_enthalpy() - e0).abs() <= 1e-10 * scale);
    assert!(s.cells[0].t > 900.0 && s.cells[9].t < 1170.0);
}

#[test]
fn uniform_heat_source_raises_temperature_in_closed_form() {
    let th = constant_cp_thermo();
    let s = closed_box(th.clone(), 6, 0.1, vec![1.0, 0.0], 700.0);
    let mut src = SourceTerms::zeros(6, 2);
    src.s_h.iter_mut().for_each(|v| *v = 5e4);
    let dt = 0.01;
    let out = advance_energy(&s, &src, &TransportClosures::uniform(2, 0.0, 0.0), dt).unwrap();
    let cp = 29.0 / 0.029;
    let expected = 5e4 * dt / (s.cells[0].mass_density() * cp);
    for c in &out.cells {
        assert!((c.t - 700.0 - expected).abs() <= 1e-6 * expected);
    }
}

#[test]
fn external_heat_stays_local() {
    let th = thermo();
    let s = closed_box(th.clone(), 8, 0.1, air(&th), 1000.0);
    let mut src = SourceTerms::zeros(8, th.n_species());
    src.q_dot[3] = 1e5;
    let out = advance_energy(&s, &src, &TransportClosures::uniform(th.n_species(), 1e-4, 0.05), 0.01).unwrap();
    for j in 0..8 {
        if j == 3 {
            assert!(out.cells[j].h > s.cells[j].h);
        } else {
            assert_eq!(out.cells[j].h, s.cells[j].h);
        }
    }
}

fn open_column(th: &Arc<GasThermo>, n: usize) -> GasState {
    let y = air(th);
    let inlet = Boundary::Inlet { mass_flow: 8e-4, temperature: 1073.0, mass_fractions: y.clone() };
    GasState::uniform(Grid1D::new(n, 0.1, 0.01).unwrap(), th.clone(), P, 1073.0, y, inlet).unwrap()
}

#[test]
fn velocity_from_continuity() {
    let th = thermo();
    let mut s = open_column(&th, 8);
    let m = s.cells[0].mass_density();
    for c in &s.cells {
        assert!((c.u - 8e-4 / (m * 0.01)).abs() < 1e-12);
    }

    for c in &mut s.cells[4..] {
        c.t *= 2.0;
        c.rho = eos_density(c.p, c.t, &c.y, &th);
        c.h = th.mixture_enthalpy(&c.y, c.t);
    }
    update_velocity(&mut s, &[0.0; 8], Some(1.0)).unwrap();
    assert!((s.cells[6].u / s.cells[1].u - 2.0).abs() < 1e-12);

    let dm = [0.0, 0.01, 0.02, 0.0, 0.05, 0.0, 0.0, 0.03];
    update_velocity(&mut s, &dm, None).unwrap();
    let v = s.grid.cell_volume();
    let mut flow = 8e-4;
    for j in 0..8 {
        let below = flow;
        flow += dm[j] * v;
        assert!((s.face_flow[j + 1] - flow).abs() < 1e-15);
        let expected = 0.5 * (below + flow) / (s.cells[j].mass_density() * 0.01);
        assert!((s.cells[j].u - expected).abs() < 1e-12);
    }
}

#[test]
fn inert_column_stays_at_inlet_state() {
    let th = thermo();
    let mut s = open_column(&th, 16);
    let cl = TransportClosures::uniform(th.n_species(), 1e-3, 0.05);
    let zero = SourceTerms::zeros(16, th.n_species());
    for _ in 0..200 {
        let (next, audit) = advance_gas(&s, &zero, &cl, 0.01).unwrap();
        assert!(audit.mass_residual <= 1e-12);
        s = next;
        update_velocity(&mut s, &zero.dm_p, Some(0.01)).unwrap();
    }
    for c in &s.cells {
        assert!((c.t - 1073.0).abs() < 1e-6);
        assert!((c.y[th.index("N2").unwrap()] - 0.8).abs() < 1e-12);
    }
}

#[test]
fn gas_reactions_conserve_elements_and_enthalpy() {
    let mech = ReactionMechanism::reference();
    let th = thermo();
    let y = th.mass_fractions(&[("N2", 0.5), ("CO", 0.25), ("H2O", 0.25)]).unwrap();
    let s = closed_box(th.clone(), 4, 0.1, y, 1100.0);
    let out = homogeneous_reactions(&s, &mech, 1.0, 1e-8).unwrap();
    let co2 = th.index("CO2").unwrap();
    for (a, b) in s.cells.iter().zip(&out.cells) {
        assert!(b.y[co2] > 0.0);
        assert_eq!(a.h, b.h);
        assert!((th.mixture_enthalpy(&b.y, b.t) - b.h).abs() <= 1e-6 * b.h.abs());
        let carbon = |y: &[f64]| y[th.index("CO").unwrap()] / 0.02801 + y[co2] / 0.044009;
        assert!((carbon(&a.y) - carbon(&b.y)).abs() < 1e-7 * carbon(&a.y));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn open_column_audits_close(
        temps in prop::collection::vec(600.0f64..1400.0, 6),
        sources in prop::collection::vec(0.0f64..0.05, 6),
        heat in prop::collection::vec(-2e4f64..2e4, 6),
        steam in 0.0f64..0.5,
    ) {
        let th = thermo();
        let mut s = open_column(&th, 6);
        for (j, c) in s.cells.iter_mut().enumerate() {
            c.y = th.mass_fractions(&[("N2", 1.0 - steam), ("H2O", steam)]).unwrap();
            c.t = temps[j];
            c.h = th.mixture_enthalpy(&c.y, c.t);
            c.rho = eos_density(c.p, c.t, &c.y, &th);
        }
        let mut src = SourceTerms::zeros(6, th.n_species());
        let co = th.index("CO").unwrap();
        for j in 0..6 {
            src.dm_i[j][co] = sources[j];
            src.s_h[j] = heat[j];
        }
        src.close_species();
        update_velocity(&mut s, &src.dm_p, Some(0.002)).unwrap();
        let cl = TransportClosures::uniform(th.n_species(), 1e-3, 0.05);
        let (out, audit) = advance_gas(&s, &src, &cl, 0.002).unwrap();
        prop_assert!(audit.mass_residual <= 1e-10, "{:?}", audit);
        prop_assert!(audit.enthalpy_residual <= 1e-8, "{:?}", audit);
        prop_assert!(audit.species_drift < 1e-8);
        for c in &out.cells {
            prop_assert!((c.y.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!((th.mixture_enthalpy(&c.y, c.t) - c.h).abs() <= 1e-6 * c.h.abs().max(1.0));
        }
    }
}

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use pyroflux_core::fluid::{Boundary, GasState, GasThermo, Grid1D};
use pyroflux_core::kinetics::{ReactionMechanism, SingleStepKinetics};
use pyroflux_core::particles::*;
use pyroflux_core::tga::{builtin_fuels, devolatilization_yields, Yields};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const P: f64 = 101_325.0;

fn thermo() -> Arc<GasThermo> {
    Arc::new(GasThermo::from_mechanism(&ReactionMechanism::reference()).unwrap())
}

fn chemistry() -> SolidChemistry {
    SolidChemistry::new(&ReactionMechanism::reference(), &thermo()).unwrap()
}

fn column(flow: f64, t: f64) -> GasState {
    let th = thermo();
    let y = th.mass_fractions(&[("N2", 1.0)]).unwrap();
    let boundary = if flow > 0.0 {
        Boundary::Inlet { mass_flow: flow, temperature: t, mass_fractions: y.clone() }
    } else {
        Boundary::Closed
    };
    GasState::uniform(Grid1D::new(16, 0.1, 0.01).unwrap(), th, P, t, y, boundary).unwrap()
}

fn particle(d_p: f64, t_p: f64, z: f64) -> Particle {
    let loading = builtin_fuels()[0].loading(&ReactionMechanism::reference()).unwrap();
    Particle::from_loading(1, &loading, d_p, 700.0, 1500.0, t_p, z, 100.0).unwrap()
}

#[test]
fn fresh_particle_books() {
    let p = particle(5e-4, 300.0, 0.3);
    let m = 700.0 * PI / 6.0 * 5e-4f64.powi(3);
    assert!((p.m_p - m).abs() <= 1e-15 * m);
    assert!((p.moisture + p.volatile + p.char + p.ash - p.m_p).abs() <= 1e-15 * m);
    assert_eq!(p.alpha, 0.0);
}

#[test]
fn motion_at_equilibrium_is_unchanged() {
    let gas = column(8e-4, 1073.0);
    let cfg = ExchangeConfig { gravity: 0.0, ..Default::default() };
    let mut p = particle(5e-4, 300.0, 0.3);
    p.v = gas.cells[0].u;
    let out = advance_motion(&[p.clone()], &gas, &cfg, 0.01).unwrap();
    assert_eq!(out.inside[0].v, p.v);
    assert!((out.inside[0].z - (0.3 + p.v * 0.01)).abs() < 1e-15);
}

#[test]
fn velocity_decays_in_still_gas() {
    let gas = column(0.0, 1073.0);
    let cfg = ExchangeConfig { gravity: 0.0, ..Default::default() };
    let mut p = particle(5e-4, 300.0, 0.5);
    p.v = 0.4;
    let tau = 700.0 * 25e-8 / (18.0 * 4.5e-5);
    let dt = 0.05;
    let mut ps = vec![p];
    for step in 1..=40 {
        ps = advance_motion(&ps, &gas, &cfg, dt).unwrap().inside;
        let exact = 0.4 * (-(step as f64) * dt / tau).exp();
        assert!((ps[0].v - exact).abs() <= 1e-6 * 0.4, "step {step}: {} vs {exact}", ps[0].v);
    }
    assert!((ps[0].z - (0.5 + 0.4 * tau * (1.0 - (-2.0 / tau).exp()))).abs() < 1e-9);
}

#[test]
fn terminal_velocity_in_uniform_flow() {
    let gas = column(8e-4, 1073.0);
    let cfg = ExchangeConfig::default();
    let d = 1e-4;
    let p = particle(d, 300.0, 0.1);
    let tau = 700.0 * d * d / (18.0 * cfg.mu_gas);
    let expected = gas.cells[0].u - cfg.gravity * tau;
    let mut ps = vec![p];
    for _ in 0..200 {
        ps = advance_motion(&ps, &gas, &cfg, 0.005).unwrap().inside;
    }
    assert!((ps[0].v - expected).abs() < 1e-9, "{} vs {expected}", ps[0].v);
}

#[test]
fn motion_reflects_at_bottom_and_flags_exit() {
    let gas = column(0.0, 1073.0);
    let cfg = ExchangeConfig { gravity: 0.0, ..Default::default() };
    let mut down = particle(5e-4, 300.0, 0.01);
    down.v = -1.0;
    let mut up = particle(5e-4, 300.0, 1.59);
    up.v = 1.0;
    up.id = 2;
    let out = advance_motion(&[down, up], &gas, &cfg, 0.05).unwrap();
    assert_eq!(out.inside.len(), 1);
    assert!(out.inside[0].z > 0.0 && out.inside[0].v > 0.0);
    assert_eq!(out.exited[0].id, 2);
    assert!(advance_motion(&[], &gas, &cfg, 0.0).is_err());
}

#[test]
fn energy_equilibrium_and_endothermic_sign() {
    let gas = column(0.0, 1073.0);
    let cfg = ExchangeConfig::default();
    let p = particle(5e-4, 1073.0, 0.3);
    let (same, terms) = advance_energy(&p, &gas.cells[0], &cfg, 0.0, 0.01).unwrap();
    assert_eq!(same.t_p, 1073.0);
    assert_eq!(terms.q_conv, 0.0);

    let cfg = ExchangeConfig { emissivity: 0.0, ..Default::default() };
    let (cooled, terms) = advance_energy(&p, &gas.cells[0], &cfg, 1e-3, 0.01).unwrap();
    assert!(cooled.t_p < 1073.0);
    assert!(terms.q_conv > 0.0);
}

#[test]
fn convective_relaxation_matches_closed_form() {
    let gas = column(0.0, 1000.0);
    let cfg = ExchangeConfig { emissivity: 0.0, ..Default::default() };
    let mut p = particle(5e-4, 300.0, 0.3);
    let rate = 2.0 * cfg.k_gas / p.d_p * PI * p.d_p * p.d_p / (p.m_p * p.c_p);
    let dt = 0.02;
    for step in 1..=100 {
        p = advance_energy(&p, &gas.cells[0], &cfg, 0.0, dt).unwrap().0;
        let exact = 1000.0 - 700.0 * (-rate * step as f64 * dt).exp();
        assert!((p.t_p - exact).abs() <= 1e-4 * exact, "{} vs {exact}", p.t_p);
    }
}

#[test]
fn convective_energy_is_booked_exactly() {
    let gas = column(0.0, 1000.0);
    let cfg = ExchangeConfig { emissivity: 0.0, ..Default::default() };
    let p = particle(5e-4, 300.0, 0.3);
    let (out, terms) = advance_energy(&p, &gas.cells[0], &cfg, 0.0, 0.5).unwrap();
    let gained = p.m_p * p.c_p * (out.t_p - p.t_p);
    assert!((terms.q_conv * 0.5 - gained).abs() <= 1e-10 * gained);
}

#[test]
fn heating_rate_estimate_tracks_ramp() {
    let mut p = particle(5e-4, 300.0, 0.3);
    for _ in 0..50 {
        p.observe_heating(12.0, 50);
    }
    assert!((p.beta_est - 12.0).abs() <= 0.02 * 12.0, "{}", p.beta_est);
    // a slope change is forgotten geometrically, (1 - 2/51)^150 ~ 0.2%
    for _ in 0..150 {
        p.observe_heating(30.0, 50);
    }
    assert!((p.beta_est - 30.0).abs() <= 0.02 * 30.0, "{}", p.beta_est);

    let gas = column(0.0, 1000.0);
    let cfg = ExchangeConfig::default();
    let mut q = particle(5e-4, 300.0, 0.3);
    let (next, _) = advance_energy(&q, &gas.cells[0], &cfg, 0.0, 0.01).unwrap();
    assert!((next.beta_est - (next.t_p - q.t_p) / 0.01).abs() < 1e-9);
    q = next;
    assert!(q.beta_est > 0.0);
}

#[test]
fn devolatilization_limits() {
    let chem = chemistry();
    let y = devolatilization_yields(&ReactionMechanism::reference()).unwrap();
    let k = SingleStepKinetics::new(20.0, 1.2e5, 1.0);
    let mut done = particle(5e-4, 900.0, 0.3);
    done.char += done.volatile;
    done.volatile = 0.0;
    done.alpha = 1.0;
    let (same, rel) = devolatilize(&done, &k, &y, &chem, 0.1).unwrap();
    assert_eq!(same, done);
    assert_eq!(rel.total(), 0.0);

    let cold = particle(5e-4, 1.0, 0.3);
    let (_, rel) = devolatilize(&cold, &k, &y, &chem, 10.0).unwrap();
    assert_eq!(rel.total(), 0.0);
}

#[test]
fn isothermal_first_order_trajectory() {
    let chem = chemistry();
    let y = devolatilization_yields(&ReactionMechanism::reference()).unwrap();
    let k = SingleStepKinetics::new(20.0, 1.5e5, 1.0);
    let t: f64 = 800.0;
    let kt = (20.0 - 1.5e5 / (8.314462618 * t)).exp();
    let mut p = particle(5e-4, t, 0.3);
    let m0 = p.m_p;
    let mut released = 0.0;
    let dt = 0.05;
    for step in 1..=200 {
        let (next, rel) = devolatilize(&p, &k, &y, &chem, dt).unwrap();
        released += rel.total();
        p = next;
        let exact = 1.0 - (-kt * step as f64 * dt).exp();
        assert!((p.alpha - exact).abs() <= 1e-4, "{} vs {exact}", p.alpha);
    }
    assert!(p.alpha > 0.5);
    assert!((m0 - p.m_p - released).abs() <= 1e-12 * m0);
    assert!((p.moisture + p.volatile + p.char + p.ash - p.m_p).abs() <= 1e-15 * m0);
}

#[test]
fn released_species_follow_yields() {
    let chem = chemistry();
    let th = thermo();
    let y = Yields { gas: 0.5, liquid: 0.3, solid: 0.2 };
    let k = SingleStepKinetics::new(30.0, 1.0e5, 1.0);
    let p = particle(5e-4, 1000.0, 0.3);
    let (out, rel) = devolatilize(&p, &k, &y, &chem, 10.0).unwrap();
    assert!((out.alpha - 1.0).abs() < 1e-12);
    let liquid = rel.species[th.index("H2O").unwrap()] + rel.species[th.index("TAR").unwrap()];
    assert!((liquid - 0.3 * p.volatile0).abs() <= 1e-12 * p.volatile0);
    assert!((rel.total() - 0.8 * p.volatile0).abs() <= 1e-12 * p.volatile0);
    assert!((out.char - p.char - 0.2 * p.volatile0).abs() <= 1e-12 * p.volatile0);
    // 12 kJ/mol endothermic on a 26.68 g/mol basis
    assert!((rel.heat - 12_000.0 / 0.02668218 * p.volatile0).abs() <= 1e-9 * rel.heat);
}

#[test]
fn drying_is_first_order() {
    let chem = chemistry();
    let th = thermo();
    let mut p = particle(5e-4, 400.0, 0.3);
    let m0 = p.moisture;
    let mut rel = Release::none(th.n_species());
    dry(&mut p, &chem, &mut rel, 0.5).unwrap();
    let k: f64 = 5.13e10 * (-88_000.0f64 / (8.314462618 * 400.0)).exp();
    assert!((p.moisture - m0 * (-k * 0.5).exp()).abs() <= 1e-12 * m0);
    assert!((rel.species[th.index("H2O").unwrap()] - (m0 - p.moisture)).abs() <= 1e-15 * m0);
    assert!(rel.heat > 0.0);
}

fn exchange(n: usize, mass: f64, energy: f64) -> Exchange {
    let mut species = vec![0.0; n];
    species[3] = mass;
    Exchange { species, energy }
}

#[test]
fn deposition_weights() {
    let grid = Grid1D::new(8, 0.1, 0.01).unwrap();
    let n = thermo().n_species();
    let dt = 0.01;
    let scale = 1.0 / (grid.cell_volume() * dt);

    let mut p = particle(5e-4, 300.0, 0.35);
    p.n_real = 1.0;
    let src = deposit_sources(&[p.clone()], &[exchange(n, 1e-6, 2.0)], &grid, n, dt).unwrap();
    assert!((src.dm_p[3] - 1e-6 * scale).abs() <= 1e-9 * 1e-6 * scale);
    assert!(src.dm_p[2].abs() < 1e-9 * src.dm_p[3] && src.dm_p[4].abs() < 1e-9 * src.dm_p[3]);

    p.z = 0.4;
    let src = deposit_sources(&[p.clone()], &[exchange(n, 1e-6, 2.0)], &grid, n, dt).unwrap();
    assert!((src.dm_p[3] - src.dm_p[4]).abs() < 1e-9 * src.dm_p[3]);
    assert!((src.s_h[3] - 0.5 * 2.0 * scale).abs() < 1e-9 * src.s_h[3]);

    p.z = 0.9;
    p.id = 77;
    let err = deposit_sources(&[p], &[exchange(n, 1e-6, 0.0)], &grid, n, dt).unwrap_err();
    assert!(err.to_string().contains("77"));
}

#[test]
fn deposited_cloud_matches_particle_losses() {
    let grid = Grid1D::new(16, 0.1, 0.01).unwrap();
    let n = thermo().n_species();
    let dt = 2e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut particles = Vec::new();
    let mut exchanges = Vec::new();
    for id in 0..1000 {
        let mut p = particle(5e-4, 300.0, rng.random_range(0.0..1.6));
        p.id = id;
        p.n_real = rng.random_range(1.0..200.0);
        let species: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1e-9)).collect();
        particles.push(p);
        exchanges.push(Exchange { species, energy: rng.random_range(-1e-3..1e-3) });
    }
    let src = deposit_sources(&particles, &exchanges, &grid, n, dt).unwrap();
    let on_grid: f64 = src.dm_p.iter().sum::<f64>() * grid.cell_volume() * dt;
    let lost: f64 = particles.iter().zip(&exchanges).map(|(p, e)| p.n_real * e.species.iter().sum::<f64>()).sum();
    assert!((on_grid - lost).abs() <= 1e-12 * lost);
    for (row, total) in src.dm_i.iter().zip(&src.dm_p) {
        assert!((row.iter().sum::<f64>() - total).abs() <= 1e-14 * total.abs().max(1e-300));
    }
    let energy_grid: f64 = src.s_h.iter().sum::<f64>() * grid.cell_volume() * dt;
    let energy: f64 = particles.iter().zip(&exchanges).map(|(p, e)| p.n_real * e.energy).sum();
    assert!((energy_grid - energy).abs() <= 1e-10 * energy.abs().max(1e-6));
}

#[test]
fn gas_volume_fraction() {
    let grid = Grid1D::new(8, 0.1, 0.01).unwrap();
    let (theta, sat) = update_theta(&[], &grid).unwrap();
    assert!(theta.iter().all(|t| *t == 1.0) && sat == 0);

    let mut p = particle(5e-4, 300.0, 0.25);
    p.n_real = 1000.0;
    let v_s = 1000.0 * PI / 6.0 * 5e-4f64.powi(3);
    let (theta, _) = update_theta(&[p.clone()], &grid).unwrap();
    assert!((theta[2] - (1.0 - v_s / grid.cell_volume())).abs() < 1e-12);

    p.n_real = 1e7;
    let (theta, sat) = update_theta(&[p], &grid).unwrap();
    assert_eq!(theta[2], 0.4);
    assert_eq!(sat, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn particle_books_stay_consistent(
        ln_a in 5.0f64..40.0,
        ea in 5e4f64..2.5e5,
        n in 0.0f64..3.0,
        temps in prop::collection::vec(300.0f64..1400.0, 1..30),
        dt in 1e-3f64..1.0,
        solid in 0.0f64..0.4,
    ) {
        let chem = chemistry();
        let th = thermo();
        let k = SingleStepKinetics::new(ln_a, ea, n);
        let y = Yields { gas: (1.0 - solid) * 0.6, liquid: (1.0 - solid) * 0.4, solid };
        let mut p = particle(5e-4, 300.0, 0.3);
        let m0 = p.m_p;
        let mut released = 0.0;
        for t in temps {
            p.t_p = t;
            let mut rel = Release::none(th.n_species());
            dry(&mut p, &chem, &mut rel, dt).unwrap();
            released += rel.total();
            let (next, rel) = devolatilize(&p, &k, &y, &chem, dt).unwrap();
            released += rel.total();
            p = next;
            prop_assert!(p.moisture >= 0.0 && p.volatile >= 0.0 && p.char >= 0.0 && p.ash >= 0.0);
            prop_assert!((p.moisture + p.volatile + p.char + p.ash - p.m_p).abs() <= 1e-15);
            prop_assert!((p.alpha - (1.0 - p.volatile / p.volatile0)).abs() <= 1e-9);
            prop_assert!((0.0..=1.0).contains(&p.alpha));
        }
        prop_assert!((m0 - p.m_p - released).abs() <= 1e-12 * m0);
    }

    #[test]
    fn relaxation_is_monotone(t0 in 300.0f64..1500.0, steps in 1usize..40) {
        let gas = column(0.0, 1000.0);
        let cfg = ExchangeConfig { t_env: 1000.0, ..Default::default() };
        let mut p = particle(5e-4, t0, 0.3);
        for _ in 0..steps {
            let (next, _) = advance_energy(&p, &gas.cells[0], &cfg, 0.0, 0.05).unwrap();
            let (before, after) = ((p.t_p - 1000.0).abs(), (next.t_p - 1000.0).abs());
            prop_assert!(after <= before);
            prop_assert!((next.t_p - 1000.0).signum() == (t0 - 1000.0).signum() || after < 1e-9);
            p = next;
        }
    }
}

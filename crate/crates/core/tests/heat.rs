use std::f64::consts::PI;

use pfode::heat::{heat_solve, lp_distance, sine_mixture_ic, sine_mode, Boundary, HeatProblem, Norm, SpaceTimeField};
use pfode::spectral::Grid;
use pfode::Error;

fn problem(n: usize, beta: f64, dt: f64) -> HeatProblem {
    HeatProblem::new(beta, Grid::square(n, -1.0, 1.0).unwrap(), dt, Boundary::Dirichlet).unwrap()
}

/// Continuous decay rate of the (k, l) Dirichlet mode on [-1,1]^2.
fn decay_rate(beta: f64, k: usize, l: usize) -> f64 {
    beta * PI * PI * ((k * k + l * l) as f64) / 4.0
}

fn amplitude(field: &[f64], mode: &[f64]) -> f64 {
    let num: f64 = field.iter().zip(mode).map(|(a, b)| a * b).sum();
    num / mode.iter().map(|b| b * b).sum::<f64>()
}

#[test]
fn fundamental_mode_decays_at_the_continuous_rate() {
    let p = problem(128, 0.05, 1e-3);
    assert!(p.cfl_ratio() <= 0.5);
    let ic = sine_mode(&p.grid, 1, 1);
    let out = heat_solve(&p, &ic, &[1.0]).unwrap();
    let expected = (-decay_rate(0.05, 1, 1)).exp();
    let got = amplitude(&out.frames[0], &ic);
    assert!((got / expected - 1.0).abs() < 0.01, "{got} vs {expected}");
}

#[test]
fn higher_modes_decay_at_their_own_rates() {
    let p = problem(64, 0.05, 1e-3);
    for (k, l) in [(1, 2), (2, 3), (3, 1)] {
        let ic = sine_mode(&p.grid, k, l);
        let out = heat_solve(&p, &ic, &[0.5]).unwrap();
        let expected = (-0.5 * decay_rate(0.05, k, l)).exp();
        let got = amplitude(&out.frames[0], &ic);
        assert!((got / expected - 1.0).abs() < 0.01, "({k},{l}): {got} vs {expected}");
    }
}

#[test]
fn spatial_error_is_second_order() {
    // FTCS on a single sine mode: the error is dominated by dx^2 once dt is small.
    let err = |n: usize| {
        let p = problem(n, 0.05, 1e-4);
        let ic = sine_mode(&p.grid, 2, 2);
        let out = heat_solve(&p, &ic, &[0.5]).unwrap();
        (amplitude(&out.frames[0], &ic) - (-0.5 * decay_rate(0.05, 2, 2)).exp()).abs()
    };
    // dx = 2/(n-1): 17 -> 33 halves it exactly
    let ratio = err(17) / err(33);
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn maximum_principle_and_energy_decay() {
    let p = problem(48, 0.05, 1e-3);
    let ic = sine_mixture_ic(&p.grid, 6, 3);
    let times: Vec<f64> = (0..=10).map(|i| 0.1 * i as f64).collect();
    let out = heat_solve(&p, &ic, &times).unwrap();
    let max0 = ic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut last = f64::INFINITY;
    for f in &out.frames {
        assert!(f.iter().all(|v| v.abs() <= max0 + 1e-12));
        let energy: f64 = f.iter().map(|v| v * v).sum();
        assert!(energy <= last);
        last = energy;
    }
}

#[test]
fn neumann_conserves_heat_content() {
    let grid = Grid::square(33, -1.0, 1.0).unwrap();
    let p = HeatProblem::new(0.05, grid.clone(), 1e-3, Boundary::Neumann).unwrap();
    let ic: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| (-4.0 * (x[0] * x[0] + x[1] * x[1])).exp())
        .collect();
    let out = heat_solve(&p, &ic, &[0.0, 2.0]).unwrap();
    // trapezoid weights on each axis make the ghost-node scheme exactly conservative
    let n = grid.points_per_axis();
    let mass = |f: &[f64]| {
        let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        (0..n * n).map(|i| edge(i / n) * edge(i % n) * f[i]).sum::<f64>()
    };
    assert!((mass(&out.frames[0]) - mass(&out.frames[1])).abs() < 1e-10 * mass(&ic));
}

#[test]
fn small_diffusivity_is_stable_and_barely_moves() {
    let p = problem(64, 2e-3, 1e-3);
    let ic = sine_mixture_ic(&p.grid, 4, 0);
    let out = heat_solve(&p, &ic, &[1.0]).unwrap();
    let drift = out.frames[0]
        .iter()
        .zip(&ic)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = ic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(drift.is_finite() && drift < 0.5 * scale);
}

#[test]
fn unstable_step_is_rejected() {
    let grid = Grid::square(64, -1.0, 1.0).unwrap();
    let dt = 1.01 * HeatProblem::max_stable_dt(1.0, &grid);
    assert!(matches!(
        HeatProblem::new(1.0, grid, dt, Boundary::Dirichlet),
        Err(Error::CflViolation { .. })
    ));
}

#[test]
fn space_time_distance_properties() {
    let grid = Grid::square(16, -1.0, 1.0).unwrap();
    let times = vec![0.0, 0.5, 1.0];
    let field = |seed: u64| {
        let frames = (0..3).map(|i| sine_mixture_ic(&grid, 3, seed * 10 + i)).collect();
        SpaceTimeField::new(grid.clone(), times.clone(), frames).unwrap()
    };
    let (a, b, c) = (field(1), field(2), field(3));
    let zero = SpaceTimeField::new(grid.clone(), times.clone(), vec![vec![0.0; grid.len()]; 3]).unwrap();
    for norm in [Norm::L2, Norm::LInf] {
        let d = |x: &SpaceTimeField, y: &SpaceTimeField| lp_distance(x, y, norm).unwrap();
        assert_eq!(d(&zero, &zero), 0.0);
        assert!(d(&a, &b) > 0.0);
        assert_eq!(d(&a, &b), d(&b, &a));
        assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }
}

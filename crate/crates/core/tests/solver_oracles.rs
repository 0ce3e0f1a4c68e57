use std::f64::consts::PI;
use std::time::Instant;

use potlab::field::{CoefficientField, VectorField};
use potlab::grid::{Atom, Grid2D, MeasureData};
use potlab::orlicz::GrowthFunction;
use potlab::solver::{solve_vi, ObstacleProblem, Rhs, SolverConfig};

fn dirac_problem(p: f64, n: usize, trace: impl Fn(f64) -> f64) -> ObstacleProblem {
    let grid = Grid2D::unit(n).unwrap();
    let mu = MeasureData::new(
        vec![Atom {
            position: [0.5, 0.5],
            mass: 1.0,
        }],
        None,
    )
    .unwrap();
    ObstacleProblem {
        field: VectorField::new(
            GrowthFunction::power(p).unwrap(),
            CoefficientField::constant(1.0).unwrap(),
        ),
        obstacle: None,
        boundary: grid.sample(|x| trace((x[0] - 0.5).hypot(x[1] - 0.5))),
        rhs: Rhs::Measure(mu),
    }
}

#[test]
fn laplace_fundamental_solution() {
    let t = Instant::now();
    let prob = dirac_problem(2.0, 128, |r| -(r.ln()) / (2.0 * PI));
    let sol = solve_vi(
        &prob.mollified(8).unwrap(),
        &SolverConfig {
            max_iter: 50_000,
            ..Default::default()
        },
    )
    .unwrap();
    let grid = *prob.grid();
    let mut worst = 0.0_f64;
    for k in 0..grid.len() {
        let x = grid.node_at(k);
        let r = (x[0] - 0.5).hypot(x[1] - 0.5);
        if (0.1..=0.4).contains(&r) {
            let exact = -(r.ln()) / (2.0 * PI);
            worst = worst.max(((sol.u.values()[k] - exact) / exact).abs());
        }
    }
    eprintln!(
        "p=2: sweeps {} worst rel {worst:.3e} in {:?}",
        sol.iterations,
        t.elapsed()
    );
    assert!(worst < 0.02);
}

#[test]
fn radial_flux_p4() {
    let t = Instant::now();
    let c = 1.5 * (2.0 * PI).powf(-1.0 / 3.0);
    let prob = dirac_problem(4.0, 128, |r| -c * r.powf(2.0 / 3.0));
    let sol = solve_vi(
        &prob.mollified(8).unwrap(),
        &SolverConfig {
            max_iter: 50_000,
            ..Default::default()
        },
    )
    .unwrap();
    let grid = *prob.grid();
    let du = sol.u.gradient().norm();
    let mut worst = 0.0_f64;
    for k in 0..grid.len() {
        let x = grid.node_at(k);
        let r = (x[0] - 0.5).hypot(x[1] - 0.5);
        if (0.1..=0.4).contains(&r) {
            let exact = (2.0 * PI * r).powf(-1.0 / 3.0);
            worst = worst.max(((du.values()[k] - exact) / exact).abs());
        }
    }
    eprintln!(
        "p=4: sweeps {} worst rel {worst:.3e} in {:?}",
        sol.iterations,
        t.elapsed()
    );
    assert!(worst < 0.03);
}

use proptest::prelude::*;

use potlab::field::{CoefficientField, CoefficientShape, VectorField};
use potlab::grid::{Atom, Ball, Grid2D, GridFunction, MeasureData};
use potlab::harness::{Flag, Row};
use potlab::orlicz::{GrowthFunction, OrliczG};
use potlab::potentials::{anchored_ladder, frac_maximal, sharp_maximal, wolff, WolffParams};
use potlab::solver::{solve_vi, ObstacleProblem, Rhs, SolverConfig};

const SLACK: f64 = 1e-9;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(n)
    }
}

fn growth() -> impl Strategy<Value = GrowthFunction> {
    prop_oneof![
        (2.0..6.0f64).prop_map(|p| GrowthFunction::power(p).unwrap()),
        (2.0..5.0f64, 0.01..2.0f64)
            .prop_map(|(p, mu)| GrowthFunction::regularized_power(p, mu).unwrap()),
    ]
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

proptest! {
    #![proptest_config(cases(400))]

    #[test]
    fn scaling_sandwich(g in growth(), beta in 1.0..100.0f64, t in log_uniform(1e-6, 1e6)) {
        let (ig, sg) = (g.ig(), g.sg());
        let q = g.g(beta * t) / g.g(t);
        prop_assert!(q >= beta.powf(ig) * (1.0 - SLACK) && q <= beta.powf(sg) * (1.0 + SLACK));
        let q = g.primitive(beta * t) / g.primitive(t);
        prop_assert!(q >= beta.powf(1.0 + ig) * (1.0 - SLACK) && q <= beta.powf(1.0 + sg) * (1.0 + SLACK));
        // mirrored for 1/β
        let b = 1.0 / beta;
        let q = g.g(b * t) / g.g(t);
        prop_assert!(q <= b.powf(ig) * (1.0 + SLACK) && q >= b.powf(sg) * (1.0 - SLACK));
    }

    #[test]
    fn inverse_scaling(g in growth(), beta in 1.0..100.0f64, s in log_uniform(1e-6, 1e6)) {
        let (ig, sg) = (g.ig(), g.sg());
        let o = OrliczG::new(g);
        let q = o.inverse(beta * s).unwrap() / o.inverse(s).unwrap();
        prop_assert!(q >= beta.powf(1.0 / (1.0 + sg)) * (1.0 - SLACK));
        prop_assert!(q <= beta.powf(1.0 / (1.0 + ig)) * (1.0 + SLACK));
    }

    #[test]
    fn conjugate_domination(g in growth(), t in log_uniform(1e-6, 1e6)) {
        let (ig, sg) = (g.ig(), g.sg());
        let kind = g.kind().clone();
        let gt = g.g(t);
        let o = OrliczG::new(g);
        let q = o.young_conjugate(gt).unwrap() / o.value(t);
        prop_assert!(q >= ig * (1.0 - 1e-8) && q <= sg * (1.0 + 1e-8), "ratio {q}");
        if let potlab::orlicz::GrowthKind::Power { p } = kind {
            prop_assert!((q - (p - 1.0)).abs() <= 1e-8 * (p - 1.0));
        }
        // G*(G(t)/t) ≤ G(t)
        let big = o.value(t);
        prop_assert!(o.young_conjugate(big / t).unwrap() <= big * (1.0 + SLACK));
    }

    #[test]
    fn doubling_conditions(g in growth(), t in log_uniform(1e-6, 1e6)) {
        let (ig, sg) = (g.ig(), g.sg());
        let o = OrliczG::new(g);
        prop_assert!(o.value(2.0 * t) <= 2f64.powf(1.0 + sg) * o.value(t) * (1.0 + SLACK));
        let theta = 2f64.powf(1.0 / ig) * 2.0;
        prop_assert!(o.value(t) <= o.value(theta * t) / (2.0 * theta) * (1.0 + SLACK));
    }

    #[test]
    fn inverse_round_trip(g in growth(), t in log_uniform(1e-6, 1e6)) {
        let o = OrliczG::new(g);
        let back = o.inverse(o.value(t)).unwrap();
        prop_assert!((back - t).abs() <= 1e-10 * t);
    }

    #[test]
    fn field_is_monotone_and_coercive(
        p in prop::sample::select(vec![2.0, 3.0, 4.0]),
        eta in prop::array::uniform2(-10.0..10.0f64),
        xi in prop::array::uniform2(-10.0..10.0f64),
    ) {
        prop_assume!((eta[0] - xi[0]).hypot(eta[1] - xi[1]) > 1e-6);
        let growth = GrowthFunction::power(p).unwrap();
        let o = OrliczG::new(growth.clone());
        let field = VectorField::new(growth, CoefficientField::constant(1.0).unwrap());
        let x = [0.5, 0.5];
        let (a, b) = (field.eval_a(x, eta).unwrap(), field.eval_a(x, xi).unwrap());
        let d = [eta[0] - xi[0], eta[1] - xi[1]];
        let c = ((a[0] - b[0]) * d[0] + (a[1] - b[1]) * d[1]) / o.value(d[0].hypot(d[1]));
        prop_assert!(c >= 0.1);
        if p == 2.0 {
            prop_assert!(c >= 2.0 - 1e-9);
        }
        let n = eta[0].hypot(eta[1]);
        prop_assume!(n > 1e-6);
        prop_assert!((a[0] * eta[0] + a[1] * eta[1]) / o.value(n) >= 0.1);
    }

    #[test]
    fn jacobian_matches_differences(
        g in growth(),
        mag in log_uniform(1e-3, 1e3),
        angle in 0.0..std::f64::consts::TAU,
    ) {
        let field = VectorField::new(g, CoefficientField::constant(1.3).unwrap());
        let x = [0.3, 0.6];
        let eta = [mag * angle.cos(), mag * angle.sin()];
        let jac = field.eval_da(x, eta).unwrap();
        let h = 1e-5 * mag;
        for k in 0..2 {
            let mut up = eta;
            let mut down = eta;
            up[k] += h;
            down[k] -= h;
            let (fu, fd) = (field.eval_a(x, up).unwrap(), field.eval_a(x, down).unwrap());
            for i in 0..2 {
                let fdiff = (fu[i] - fd[i]) / (2.0 * h);
                let scale = jac[0][0].abs().max(jac[1][1].abs());
                prop_assert!((fdiff - jac[i][k]).abs() <= 1e-6 * scale, "{i}{k}: {fdiff} vs {}", jac[i][k]);
            }
        }
    }

    #[test]
    fn theta_ignores_constants_and_shifts(
        base in 1.0..3.0f64,
        amp in 0.05..0.5f64,
        shift in 0.0..2.0f64,
        cx in 0.3..0.7f64,
        cy in 0.3..0.7f64,
    ) {
        let grid = Grid2D::unit(32).unwrap();
        let growth = GrowthFunction::power(3.0).unwrap();
        let ball = Ball::new([cx, cy], 0.2);
        let x = [cx + 0.05, cy];
        let flat = VectorField::new(growth.clone(), CoefficientField::constant(base).unwrap());
        prop_assert_eq!(flat.theta(&grid, &ball, x).unwrap(), 0.0);
        let jump = |b: f64| {
            let shape = CoefficientShape::Jump { base: b, amplitude: amp, interface: 0.5 };
            VectorField::new(growth.clone(), CoefficientField::from_shape(shape).unwrap())
        };
        let t0 = jump(base).theta(&grid, &ball, x).unwrap();
        let t1 = jump(base + shift).theta(&grid, &ball, x).unwrap();
        prop_assert!((t0 - t1).abs() <= 1e-12 * (1.0 + t0));
    }

    #[test]
    fn ball_average_is_linear(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        seed in any::<u64>(),
        r in 0.1..0.4f64,
    ) {
        let grid = Grid2D::unit(24).unwrap();
        let f = grid.sample(|p| ((seed % 97) as f64 * p[0]).sin() + p[1]);
        let g = grid.sample(|p| (p[0] * p[1] * (seed % 13) as f64).cos());
        let ball = Ball::new([0.5, 0.5], r);
        let combo = f.zip_map(&g, |u, v| a * u + b * v).unwrap();
        let lhs = combo.ball_average(&ball).unwrap();
        let rhs = a * f.ball_average(&ball).unwrap() + b * g.ball_average(&ball).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn mean_oscillation_within_twice_best_constant(values in prop::collection::vec(-5.0..5.0f64, 16 * 16)) {
        let grid = Grid2D::unit(16).unwrap();
        let f = GridFunction::new(grid, values).unwrap();
        let ball = Ball::new([0.5, 0.5], 0.35);
        let mean = f.ball_average(&ball).unwrap();
        let osc = f.ball_average_of(&ball, |v| (v - mean).abs()).unwrap();
        let best = grid
            .ball_nodes(&ball)
            .into_iter()
            .map(|k| {
                let c = f.values()[k];
                f.ball_average_of(&ball, |v| (v - c).abs()).unwrap()
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(osc <= 2.0 * best + 1e-12);
    }

    #[test]
    fn ball_mass_is_additive_and_monotone(
        atoms in prop::collection::vec((0.05..0.95f64, 0.05..0.95f64, 0.0..2.0f64), 1..8),
        split in 0usize..8,
        r in 0.01..0.6f64,
    ) {
        let atoms: Vec<Atom> = atoms.into_iter().map(|(x, y, m)| Atom { position: [x, y], mass: m }).collect();
        let k = split.min(atoms.len());
        let all = MeasureData::new(atoms.clone(), None).unwrap();
        let left = MeasureData::new(atoms[..k].to_vec(), None).unwrap();
        let right = MeasureData::new(atoms[k..].to_vec(), None).unwrap();
        let ball = Ball::new([0.5, 0.5], r);
        let sum = left.ball_mass(&ball) + right.ball_mass(&ball);
        prop_assert!((all.ball_mass(&ball) - sum).abs() <= 1e-12);
        prop_assert!(all.ball_mass(&Ball::new([0.5, 0.5], r * 1.3)) >= all.ball_mass(&ball));
    }

    #[test]
    fn report_rows_never_divide_by_tiny(lhs in -1e3..1e3f64, rhs in prop_oneof![-1e-13..1e-13f64, -1.0..1.0f64]) {
        let row = Row::ratio("", "g", [0.5, 0.5], 0.1, lhs, rhs);
        match row.ratio {
            Some(q) => prop_assert!(rhs > 1e-14 && q == lhs / rhs),
            None => prop_assert!(matches!(row.flag, Flag::Skipped(_))),
        }
    }
}

proptest! {
    #![proptest_config(cases(40))]

    #[test]
    fn wolff_homogeneity(
        atoms in prop::collection::vec((0.2..0.8f64, 0.2..0.8f64, 0.1..2.0f64), 1..5),
        lambda in 0.01..100.0f64,
        p in 1.5..4.0f64,
        beta in 0.2..1.0f64,
    ) {
        let grid = Grid2D::unit(64).unwrap();
        let atoms: Vec<Atom> = atoms.into_iter().map(|(x, y, m)| Atom { position: [x, y], mass: m }).collect();
        let mu = MeasureData::new(atoms, None).unwrap();
        let wp = WolffParams::new(beta, p, 0.3, &grid);
        let x = [0.5, 0.5];
        let w = wolff(&mu, x, &wp).unwrap().value;
        let ws = wolff(&mu.scaled(lambda), x, &wp).unwrap().value;
        prop_assert!((ws - lambda.powf(1.0 / (p - 1.0)) * w).abs() <= 1e-12 * ws.max(1e-300));
    }

    #[test]
    fn operators_grow_with_radius(
        atoms in prop::collection::vec((0.2..0.8f64, 0.2..0.8f64, 0.1..2.0f64), 1..4),
        x in prop::array::uniform2(0.4..0.6f64),
        alpha in 0.0..1.0f64,
        k in 1usize..20,
    ) {
        let grid = Grid2D::unit(48).unwrap();
        let atoms: Vec<Atom> = atoms.into_iter().map(|(x, y, m)| Atom { position: [x, y], mass: m }).collect();
        let mu = MeasureData::new(atoms, None).unwrap();
        let f = grid.sample(|p| (5.0 * p[0]).sin() * p[1] + p[0] * p[0]);
        let radii = anchored_ladder(2.0 * grid.h(), 0.35, 24);
        let (r0, r1) = (radii[k.min(radii.len() - 2)], radii[(k + 1).min(radii.len() - 1)]);
        let at = |r: f64| {
            let wp = WolffParams::new(0.5, 2.0, r, &grid);
            (
                wolff(&mu, x, &wp).unwrap().value,
                frac_maximal(&f, x, 1.0 - alpha, r).unwrap(),
                sharp_maximal(&f, x, alpha, r).unwrap(),
            )
        };
        let (a, b) = (at(r0), at(r1));
        prop_assert!(b.0 >= a.0 && b.1 >= a.1 && b.2 >= a.2);
    }
}

proptest! {
    #![proptest_config(cases(6))]

    #[test]
    fn solver_iterates_stay_feasible(
        height in 0.0..0.5f64,
        slope in -1.0..1.0f64,
        p in prop::sample::select(vec![2.0, 3.0]),
    ) {
        let grid = Grid2D::unit(20).unwrap();
        let growth = GrowthFunction::power(p).unwrap();
        let field = VectorField::on_domain(growth, CoefficientField::constant(1.0).unwrap(), [0.0, 0.0], 1.0);
        let psi = grid.sample(|q| height - 8.0 * ((q[0] - 0.5).powi(2) + (q[1] - 0.5).powi(2)));
        let boundary = grid.sample(|q| slope * (q[0] - 0.5));
        let prob = ObstacleProblem { field, obstacle: Some(psi.clone()), boundary: boundary.clone(), rhs: Rhs::Zero };
        let cfg = SolverConfig::default();
        let sol = solve_vi(&prob, &cfg).unwrap();
        let n = grid.n();
        for j in 0..n {
            for i in 0..n {
                let k = grid.index(i, j);
                if grid.is_ring(i, j) {
                    prop_assert_eq!(sol.u.values()[k], boundary.values()[k]);
                } else {
                    prop_assert!(sol.u.values()[k] >= psi.values()[k]);
                }
            }
        }
        for w in sol.energy_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        prop_assert!(sol.complementarity <= 10.0 * cfg.tol);
    }
}

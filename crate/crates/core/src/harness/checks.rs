//! The estimate checks. Each computes both sides of one inequality on one
//! sweep cell and returns ratio rows; the driver aggregates cells.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{OscillationModulus, MODULUS_LEVELS};
use crate::grid::{Ball, GridFunction, GridVectorField, Point};
use crate::potentials::{
    anchored_ladder, frac_maximal, frac_maximal_measure, obstacle_maximal, sharp_maximal,
    sharp_maximal_vector, wolff, wolff_psi, WolffParams, LADDER_PER_DECADE,
};
use crate::solver::{comparison_chain, solve_on_ball, Operator, Rhs, Solution};

use super::config::{CheckKind, ExperimentConfig};
use super::instance::Instance;
use super::report::{Flag, Row, RHS_FLOOR};

/// Lower end of fitted radius ranges, in mesh widths.
const FIT_MIN_H: f64 = 4.0;

/// Per-cell state shared by the checks.
pub struct CellContext {
    pub inst: Instance,
    pub label: String,
    pub seed: u64,
    /// Decay exponent in the excess estimate with error terms.
    pub beta: f64,
    /// Hölder exponents tried by the pointwise checks.
    pub alphas: Vec<f64>,
    homogeneous: OnceLock<Solution>,
    approximable: OnceLock<Solution>,
    modulus: OnceLock<OscillationModulus>,
}

fn cached<T>(slot: &OnceLock<T>, make: impl FnOnce() -> Result<T>) -> Result<&T> {
    if let Some(v) = slot.get() {
        return Ok(v);
    }
    let v = make()?;
    Ok(slot.get_or_init(|| v))
}

impl CellContext {
    pub fn new(inst: Instance, seed: u64, beta: f64, alpha_hat: f64) -> Self {
        let label = inst.cell.label();
        let mut alphas = vec![0.0, 0.5 * alpha_hat, alpha_hat];
        alphas.dedup();
        Self {
            inst,
            label,
            seed,
            beta,
            alphas,
            homogeneous: OnceLock::new(),
            approximable: OnceLock::new(),
            modulus: OnceLock::new(),
        }
    }

    /// Homogeneous obstacle problem on the check ball with the instance
    /// boundary data as trace.
    pub fn homogeneous(&self) -> Result<&Solution> {
        cached(&self.homogeneous, || {
            let inst = &self.inst;
            let ball = inst.ball();
            inst.grid.admissible_ball(&ball)?;
            solve_on_ball(
                &inst.operator(),
                None,
                inst.obstacle.as_ref(),
                &ball,
                &inst.boundary,
                &inst.solver,
            )
        })
    }

    pub fn approximable(&self) -> Result<&Solution> {
        cached(&self.approximable, || self.inst.approximable())
    }

    /// `ω` sampled up to `min(2R, side/2)`; identically zero for constant
    /// coefficients.
    pub fn modulus(&self) -> Result<&OscillationModulus> {
        cached(&self.modulus, || {
            let inst = &self.inst;
            let r_min = 2.0 * inst.grid.h();
            let r_max = (2.0 * inst.radius()).min(0.5 * inst.grid.side()).max(r_min);
            if inst.field.coefficient().is_constant() {
                let radii = vec![r_min, r_max.max(r_min * 2.0)];
                return OscillationModulus::from_samples(
                    radii,
                    vec![0.0, 0.0],
                    inst.cell.gamma_prime,
                    inst.sg(),
                );
            }
            OscillationModulus::compute(
                &inst.field,
                &inst.grid,
                r_min,
                r_max,
                MODULUS_LEVELS,
                inst.cell.gamma_prime,
            )
        })
    }

    fn omega_power(&self, r: f64) -> Result<f64> {
        let m = self.modulus()?;
        Ok(m.value_at(r).powf(m.dini_exponent()))
    }
}

/// Rows of one check on one cell plus named metrics.
pub type CheckOutput = (Vec<Row>, Vec<(String, f64)>);

/// Runs one check on one cell; solver and geometry errors become failure rows.
pub fn run_check(kind: CheckKind, ctx: &CellContext) -> CheckOutput {
    let out = match kind {
        CheckKind::Comparison => check_comparison_inhomogeneous(ctx).map(|r| (r, vec![])),
        CheckKind::Frozen => check_frozen_coefficient(ctx).map(|r| (r, vec![])),
        CheckKind::Caccioppoli => check_caccioppoli(ctx).map(|r| (r, vec![])),
        CheckKind::ReverseHolder => check_reverse_holder(ctx).map(|r| (r, vec![])),
        CheckKind::SobolevMedian => check_sobolev_median(ctx).map(|r| (r, vec![])),
        CheckKind::ExcessHomogeneous => check_excess_decay_homogeneous(ctx),
        CheckKind::ExcessErrors => check_excess_decay_with_errors(ctx).map(|r| (r, vec![])),
        CheckKind::MaximalBounds => check_maximal_bounds(ctx).map(|r| (r, vec![])),
        CheckKind::GradientBounds => check_gradient_bounds(ctx).map(|r| (r, vec![])),
    };
    out.unwrap_or_else(|e| (vec![Row::failure("", &ctx.label, e.to_string())], vec![]))
}

fn grad_gap(a: &GridFunction, b: &GridFunction, ball: &Ball) -> Result<f64> {
    a.gradient().sub(&b.gradient())?.norm().ball_average(ball)
}

/// `(|μ|(B̄_R) / R^{n−1})^{1/i_g}`.
pub fn measure_term(mass: f64, radius: f64, ig: f64) -> f64 {
    (mass / radius).powf(1.0 / ig)
}

/// `(R avg_B |f|)^{1/i_g}`.
pub fn density_term(avg_abs: f64, radius: f64, ig: f64) -> f64 {
    (radius * avg_abs).powf(1.0 / ig)
}

/// `avg_{B_R}|Du − Dw|` for `u` with data and `w` homogeneous, both with the
/// instance trace, against the data term.
pub fn check_comparison_inhomogeneous(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let ball = inst.ball();
    inst.grid.admissible_ball(&ball)?;
    let Some(f) = inst.rhs_density()? else {
        return Ok(vec![Row::flagged(
            "",
            &ctx.label,
            ball.center,
            ball.radius,
            0.0,
            0.0,
            Flag::Skipped("degenerate: zero data".into()),
        )]);
    };
    let ig = inst.ig();
    let rhs = if inst.has_atoms() {
        measure_term(inst.measure.ball_mass(&ball), ball.radius, ig)
    } else {
        density_term(f.ball_average_of(&ball, f64::abs)?, ball.radius, ig)
    };
    if rhs <= RHS_FLOOR {
        return Ok(vec![Row::flagged(
            "",
            &ctx.label,
            ball.center,
            ball.radius,
            0.0,
            rhs,
            Flag::Skipped("degenerate: zero data on the ball".into()),
        )]);
    }
    let op = inst.operator();
    let psi = inst.obstacle.as_ref();
    let u = solve_on_ball(&op, Some(&f), psi, &ball, &inst.boundary, &inst.solver)?;
    let w = ctx.homogeneous()?;
    let lhs = grad_gap(&u.u, &w.u, &ball)?;
    Ok(vec![Row::ratio(
        "",
        &ctx.label,
        ball.center,
        ball.radius,
        lhs,
        rhs,
    )])
}

/// Variable-coefficient homogeneous obstacle solution on `B_{2R}` against the
/// frozen one on `B_R` with its trace.
pub fn check_frozen_coefficient(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let ball = inst.ball();
    let double = ball.scaled(2.0);
    inst.grid.admissible_ball(&ball)?;
    inst.grid.admissible_ball(&double)?;
    let psi = inst.obstacle.as_ref();
    let u = solve_on_ball(
        &inst.operator(),
        None,
        psi,
        &double,
        &inst.boundary,
        &inst.solver,
    )?;
    let mean = inst.field.ball_mean(&inst.grid, &ball)?;
    let frozen = Operator::constant(inst.growth(), &inst.grid, mean, inst.solver.epsilon);
    let w = solve_on_ball(&frozen, None, psi, &ball, &u.u, &inst.solver)?;
    let lhs = grad_gap(&u.u, &w.u, &ball)?;
    let omega = ctx.modulus()?.value_at(ball.radius);
    let energy = inst.psi_energy();
    let rhs = ctx.omega_power(ball.radius)?
        * (u.u.gradient().norm().ball_average(&double)?
            + inst.psi_term(energy.as_ref(), &double)?);
    Ok(vec![oscillation_row(
        "",
        &ctx.label,
        &ball,
        lhs,
        rhs,
        omega,
        inst.solver.tol,
    )])
}

/// Rows of estimates whose right-hand side carries `ω`: with `ω = 0` the
/// left side must vanish to tolerance.
fn oscillation_row(
    series: &str,
    group: &str,
    ball: &Ball,
    lhs: f64,
    rhs: f64,
    omega: f64,
    tol: f64,
) -> Row {
    if omega > 0.0 {
        return Row::ratio(series, group, ball.center, ball.radius, lhs, rhs);
    }
    let flag = if lhs <= 10.0 * tol {
        Flag::Exact
    } else {
        Flag::Fail(format!("ω = 0 but the gradient gap is {lhs:e}"))
    };
    Row::flagged(series, group, ball.center, ball.radius, lhs, rhs, flag)
}

/// Radii `R, R/2, R/4` with their series names; drift compares rows of
/// one series across cells.
fn sub_radii(ctx: &CellContext) -> [(&'static str, f64); 3] {
    let r = ctx.inst.radius();
    [("R", r), ("R/2", 0.5 * r), ("R/4", 0.25 * r)]
}

/// `avg_{B_{R/2}} G(|Du|)` against `avg_{B_R} G(|u−λ|/R)` plus the obstacle
/// terms, with `λ` the (nonnegative part of the) mean of `u`.
pub fn check_caccioppoli(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let sol = ctx.homogeneous()?;
    let du = sol.u.gradient().norm();
    let big_g = |t: f64| inst.orlicz.value(t.abs());
    let psi = inst.obstacle.as_ref();
    let dpsi = psi.map(|p| p.gradient().norm());
    let mut rows = Vec::new();
    for (series, r) in sub_radii(ctx) {
        let ball = Ball::new(inst.center, r);
        let half = ball.scaled(0.5);
        if inst.grid.admissible_ball(&half).is_err() {
            rows.push(Row::flagged(
                series,
                &ctx.label,
                ball.center,
                r,
                0.0,
                0.0,
                Flag::Skipped("ball below 2h".into()),
            ));
            continue;
        }
        let lambda = sol.u.ball_average(&ball)?.max(0.0);
        let lhs = du.ball_average_of(&half, big_g)?;
        let mut rhs = sol.u.ball_average_of(&ball, |v| big_g((v - lambda) / r))?;
        if let (Some(psi), Some(dpsi)) = (psi, &dpsi) {
            rhs += psi.ball_average_of(&ball, |v| big_g(v / r))?
                + dpsi.ball_average_of(&ball, big_g)?;
        }
        rows.push(Row::ratio(series, &ctx.label, ball.center, r, lhs, rhs));
    }
    Ok(rows)
}

/// `avg_{B_{3R/4}} G(|Du|)` against `G(avg_{B_R}|Du|)` plus the obstacle
/// terms; `u` and `ψ` are shifted by a common constant so that `u ≥ 0` on
/// the ball, which leaves `Du` unchanged.
pub fn check_reverse_holder(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let sol = ctx.homogeneous()?;
    let du = sol.u.gradient().norm();
    let big_g = |t: f64| inst.orlicz.value(t.abs());
    let psi = inst.obstacle.as_ref();
    let dpsi = psi.map(|p| p.gradient().norm());
    let mut rows = Vec::new();
    for (series, r) in sub_radii(ctx) {
        let ball = Ball::new(inst.center, r);
        let inner = ball.scaled(0.75);
        if inst.grid.admissible_ball(&inner).is_err() {
            rows.push(Row::flagged(
                series,
                &ctx.label,
                ball.center,
                r,
                0.0,
                0.0,
                Flag::Skipped("ball below 2h".into()),
            ));
            continue;
        }
        let low = inst
            .grid
            .ball_nodes(&ball)
            .into_iter()
            .map(|k| sol.u.values()[k])
            .fold(f64::INFINITY, f64::min);
        let shift = (-low).max(0.0);
        let lhs = du.ball_average_of(&inner, big_g)?;
        let mut rhs = big_g(du.ball_average(&ball)?);
        if let (Some(psi), Some(dpsi)) = (psi, &dpsi) {
            rhs += dpsi.ball_average_of(&ball, big_g)?
                + psi.ball_average_of(&ball, |v| big_g(v + shift))?;
        }
        rows.push(Row::ratio(series, &ctx.label, ball.center, r, lhs, rhs));
    }
    Ok(rows)
}

/// `G⁻¹(avg G(|u − m(u)|/R))` against `S⁻¹(avg S(|Du|))` with `m` the
/// largest median.
pub fn check_sobolev_median(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let sol = ctx.homogeneous()?;
    let du = sol.u.gradient().norm();
    let o = &inst.orlicz;
    let big_s = |t: f64| {
        if t > 0.0 {
            o.sobolev(t, 2).unwrap_or(f64::NAN)
        } else {
            0.0
        }
    };
    let mut rows = Vec::new();
    for (series, r) in sub_radii(ctx) {
        let ball = Ball::new(inst.center, r);
        if inst.grid.admissible_ball(&ball).is_err() {
            rows.push(Row::flagged(
                series,
                &ctx.label,
                ball.center,
                r,
                0.0,
                0.0,
                Flag::Skipped("ball below 2h".into()),
            ));
            continue;
        }
        let m = sol.u.median(&ball)?;
        let lhs = o.inverse(
            sol.u
                .ball_average_of(&ball, |v| o.value((v - m).abs() / r))?,
        )?;
        let rhs = o.sobolev_inverse(du.ball_average_of(&ball, big_s)?, 2)?;
        if rhs <= RHS_FLOOR && lhs > RHS_FLOOR {
            return Err(Error::State(
                "nonconstant function with vanishing gradient on a ball".into(),
            ));
        }
        rows.push(Row::ratio(series, &ctx.label, ball.center, r, lhs, rhs));
    }
    Ok(rows)
}

/// Least-squares fit `ln E = ln A + β ln ρ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub beta: f64,
    /// `C` in `E(ρ) = C (ρ/R)^β E(R)`.
    pub constant: f64,
    /// Root-mean-square misfit in log units.
    pub residual: f64,
}

pub fn fit_decay(radii: &[f64], excess: &[f64]) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(excess)
        .filter(|(_, e)| **e > 0.0)
        .map(|(r, e)| (r.ln(), e.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let intercept = my - beta * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - beta * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let (r_top, e_top) = (*radii.last()?, *excess.last()?);
    Some(DecayFit {
        beta,
        constant: (intercept + beta * r_top.ln()).exp() / e_top,
        residual,
    })
}

/// Excess profile `ρ ↦ avg_{B_ρ}|V − (V)_{B_ρ}|` on the ladder `[4h, R]`.
fn excess_profile(
    grad: &GridVectorField,
    center: Point,
    radius: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = grad.grid().h();
    let radii = anchored_ladder(FIT_MIN_H * h, radius, LADDER_PER_DECADE);
    let excess = radii
        .iter()
        .map(|&r| grad.mean_oscillation(&Ball::new(center, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok((radii, excess))
}

/// Solution of the homogeneous equation on `B_{2R}` with the coefficient
/// frozen to its mean there, and the decay fit of its excess on `[4h, R]`.
pub fn homogeneous_decay(inst: &Instance) -> Result<(Vec<f64>, Vec<f64>, Option<DecayFit>)> {
    let ball = inst.ball();
    let double = ball.scaled(2.0);
    inst.grid.admissible_ball(&double)?;
    let mean = inst.field.ball_mean(&inst.grid, &double)?;
    let op = Operator::constant(inst.growth(), &inst.grid, mean, inst.solver.epsilon);
    let v = solve_on_ball(&op, None, None, &double, &inst.boundary, &inst.solver)?;
    let (radii, excess) = excess_profile(&v.u.gradient(), ball.center, ball.radius)?;
    let top = *excess.last().expect("ladder is nonempty");
    if top < 10.0 * inst.solver.tol {
        return Ok((radii, excess, None));
    }
    let fit = fit_decay(&radii, &excess);
    Ok((radii, excess, fit))
}

pub const MIN_DECAY: f64 = 0.05;
pub const MAX_FIT_RESIDUAL: f64 = 0.2;

/// Excess decay of a constant-coefficient homogeneous solution; rows compare
/// the excess with the fitted power law.
pub fn check_excess_decay_homogeneous(ctx: &CellContext) -> Result<CheckOutput> {
    let inst = &ctx.inst;
    let (radii, excess, fit) = homogeneous_decay(inst)?;
    let Some(fit) = fit else {
        return Ok((
            vec![Row::flagged(
                "",
                &ctx.label,
                inst.center,
                inst.radius(),
                *excess.last().unwrap_or(&0.0),
                0.0,
                Flag::Skipped("trivial: excess below tolerance".into()),
            )],
            vec![],
        ));
    };
    let top = *excess.last().expect("nonempty");
    let r_top = inst.radius();
    let mut rows: Vec<Row> = radii
        .iter()
        .zip(&excess)
        .map(|(&r, &e)| {
            Row::ratio(
                "",
                &ctx.label,
                inst.center,
                r,
                e,
                fit.constant * (r / r_top).powf(fit.beta) * top,
            )
        })
        .collect();
    if !(fit.beta > MIN_DECAY && fit.residual < MAX_FIT_RESIDUAL) {
        rows.push(Row::flagged(
            "",
            &ctx.label,
            inst.center,
            r_top,
            fit.beta,
            fit.residual,
            Flag::Fail(format!(
                "fit β̂ = {:.4}, residual {:.4}",
                fit.beta, fit.residual
            )),
        ));
    }
    let metrics = vec![
        (format!("beta[{}]", ctx.label), fit.beta),
        (format!("constant[{}]", ctx.label), fit.constant),
        (format!("residual[{}]", ctx.label), fit.residual),
    ];
    Ok((rows, metrics))
}

/// The three right-hand-side terms of the excess estimate with errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcessErrorTerms {
    pub radius: f64,
    pub beta: f64,
    /// `avg_{B_R}|Du − (Du)_{B_R}|`.
    pub excess: f64,
    /// `(|μ|(B̄_R)/R)^{1/i_g}`.
    pub measure: f64,
    /// `(R avg_{B_R} DΨ)^{1/i_g}`.
    pub obstacle: f64,
    /// `ω(R)^{1/(1+s_g)} {avg_{B_R}|Du| + G⁻¹[avg(G(|Dψ|) + G(|ψ|))]}`.
    pub oscillation: f64,
}

impl ExcessErrorTerms {
    pub fn rhs(&self, rho: f64) -> f64 {
        let grow = (self.radius / rho).powi(2);
        (rho / self.radius).powf(self.beta) * self.excess
            + grow * (self.measure + self.obstacle)
            + grow * self.oscillation
    }
}

/// Excess of the approximable solution against the three-term bound, plus
/// one row per stage of the comparison chain.
pub fn check_excess_decay_with_errors(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let ball = inst.ball();
    if !inst.grid.contains_ball(&ball.scaled(2.0)) {
        return Err(Error::Domain("B_2R leaves the domain".into()));
    }
    let u = ctx.approximable()?;
    let du = u.u.gradient();
    let ig = inst.ig();
    let energy = inst.psi_energy();
    let terms = ExcessErrorTerms {
        radius: ball.radius,
        beta: ctx.beta,
        excess: du.mean_oscillation(&ball)?,
        measure: measure_term(inst.measure.ball_mass(&ball), ball.radius, ig),
        obstacle: match &inst.obstacle_density {
            Some(od) => (ball.radius * od.kernel().ball_average(&ball)?).powf(1.0 / ig),
            None => 0.0,
        },
        oscillation: ctx.omega_power(ball.radius)?
            * (du.norm().ball_average(&ball)? + inst.psi_term(energy.as_ref(), &ball)?),
    };
    let (radii, excess) = excess_profile(&du, ball.center, ball.radius)?;
    let mut rows: Vec<Row> = radii
        .iter()
        .zip(&excess)
        .map(|(&r, &e)| Row::ratio("excess", &ctx.label, ball.center, r, e, terms.rhs(r)))
        .collect();
    rows.extend(chain_rows(ctx, &u.u, &ball)?);
    Ok(rows)
}

fn chain_rows(ctx: &CellContext, u: &GridFunction, ball: &Ball) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let ig = inst.ig();
    let mut prob = inst.problem();
    prob.rhs = match inst.rhs_density()? {
        Some(f) => Rhs::Density(f),
        None => Rhs::Zero,
    };
    let chain = comparison_chain(&prob, u, ball, &inst.solver)?;
    let half = ball.scaled(0.5);
    let mut rows = Vec::new();
    let data = if inst.has_atoms() || inst.measure.is_zero() {
        measure_term(inst.measure.ball_mass(ball), ball.radius, ig)
    } else {
        match &prob.rhs {
            Rhs::Density(f) => density_term(f.ball_average_of(ball, f64::abs)?, ball.radius, ig),
            _ => 0.0,
        }
    };
    let gap = grad_gap(u, &chain.w1.u, ball)?;
    rows.push(if data > RHS_FLOOR {
        Row::ratio("u-w1", &ctx.label, ball.center, ball.radius, gap, data)
    } else {
        let flag = if gap <= 10.0 * inst.solver.tol {
            Flag::Exact
        } else {
            Flag::Skipped("no data".into())
        };
        Row::flagged(
            "u-w1",
            &ctx.label,
            ball.center,
            ball.radius,
            gap,
            data,
            flag,
        )
    });
    let energy = inst.psi_energy();
    let omega = ctx.modulus()?.value_at(half.radius);
    let rhs = ctx.omega_power(half.radius)?
        * (chain.w1.u.gradient().norm().ball_average(ball)?
            + inst.psi_term(energy.as_ref(), ball)?);
    let gap = grad_gap(&chain.w1.u, &chain.w2.u, &half)?;
    rows.push(oscillation_row(
        "w1-w2",
        &ctx.label,
        &half,
        gap,
        rhs,
        omega,
        inst.solver.tol,
    ));
    if let Some(psi) = &inst.obstacle {
        let frozen =
            Operator::constant(inst.growth(), &inst.grid, chain.frozen, inst.solver.epsilon);
        let div = frozen.residual(psi, None);
        let obstacle_rhs = density_term(
            div.ball_average_of(&half, |v| v.abs() + 1.0)?,
            half.radius,
            ig,
        );
        let gap = grad_gap(&chain.w2.u, &chain.w3.u, &half)?;
        rows.push(Row::ratio(
            "w2-w3",
            &ctx.label,
            half.center,
            half.radius,
            gap,
            obstacle_rhs,
        ));
        let gap = grad_gap(&chain.w3.u, &chain.w4.u, &half)?;
        rows.push(Row::ratio(
            "w3-w4",
            &ctx.label,
            half.center,
            half.radius,
            gap,
            obstacle_rhs,
        ));
    }
    Ok(rows)
}

/// Right-hand-side assemblies of the pointwise estimates at one cell.
pub struct PointEstimates<'a> {
    ctx: &'a CellContext,
    pub u: &'a GridFunction,
    pub du: GridVectorField,
    pub du_norm: GridFunction,
    energy: Option<GridFunction>,
}

impl<'a> PointEstimates<'a> {
    pub fn new(ctx: &'a CellContext, u: &'a GridFunction) -> Self {
        let du = u.gradient();
        let du_norm = du.norm();
        Self {
            ctx,
            u,
            du,
            du_norm,
            energy: ctx.inst.psi_energy(),
        }
    }

    fn radius(&self) -> f64 {
        self.ctx.inst.radius()
    }

    /// `W^μ_{β,i_g+1}(x, 2R) + W^{[ψ]}_{β,i_g+1}(x, 2R)`.
    pub fn wolff_pair(&self, x: Point, beta: f64) -> Result<f64> {
        let inst = &self.ctx.inst;
        let wp = WolffParams::new(beta, inst.ig() + 1.0, 2.0 * self.radius(), &inst.grid);
        let mu = wolff(&inst.measure, x, &wp)?.value;
        let psi = match &inst.obstacle_density {
            Some(od) => wolff_psi(od, x, &wp)?.value,
            None => 0.0,
        };
        Ok(mu + psi)
    }

    /// `∫_{2h}^{2R} ω(ρ)^{1/(1+s_g)} G⁻¹[avg_{B_ρ(x)}(G(|Dψ|)+G(|ψ|))] ρ^{-a} dρ/ρ`.
    pub fn dini(&self, x: Point, a: f64) -> Result<f64> {
        let inst = &self.ctx.inst;
        let Some(energy) = self.energy.as_ref() else {
            return Ok(0.0);
        };
        let m = self.ctx.modulus()?;
        if m.values().iter().all(|&v| v == 0.0) {
            return Ok(0.0);
        }
        let weight = |rho: f64| {
            inst.psi_term(Some(energy), &Ball::new(x, rho))
                .unwrap_or(f64::NAN)
        };
        Ok(m.dini_integral_weighted(2.0 * self.radius(), a, weight)?
            .value)
    }

    /// Bound for `M^#_{α,R}(u) + M_{1−α,R}(Du)`.
    pub fn solution_rhs(&self, x: Point, alpha: f64) -> Result<f64> {
        let r = self.radius();
        let ig = self.ctx.inst.ig();
        let avg = self.du_norm.ball_average(&Ball::new(x, r))?;
        Ok(r.powf(1.0 - alpha) * avg
            + self.wolff_pair(x, 1.0 - alpha + alpha / (ig + 1.0))?
            + self.dini(x, alpha - 1.0)?)
    }

    pub fn solution_lhs(&self, x: Point, alpha: f64) -> Result<f64> {
        let r = self.radius();
        Ok(sharp_maximal(self.u, x, alpha, r)? + frac_maximal(&self.du_norm, x, 1.0 - alpha, r)?)
    }

    /// Bound for `M^#_{α,R}(Du)`.
    pub fn gradient_rhs(&self, x: Point, alpha: f64) -> Result<f64> {
        let inst = &self.ctx.inst;
        let r = self.radius();
        let ig = inst.ig();
        let beta = 1.0 - alpha * ig;
        let avg = self.du_norm.ball_average(&Ball::new(x, r))?;
        let mu_max = frac_maximal_measure(&inst.measure, &inst.grid, x, beta, r)?;
        let psi_max = match &inst.obstacle_density {
            Some(od) => obstacle_maximal(od, x, beta, r)?,
            None => 0.0,
        };
        Ok(r.powf(-alpha) * avg
            + mu_max.powf(1.0 / ig)
            + psi_max.powf(1.0 / ig)
            + self.wolff_pair(x, 1.0 / (ig + 1.0))?
            + self.dini(x, alpha)?)
    }

    /// `M*`: the gradient bound at `x`, which is also the solution bound at `α = 1`.
    pub fn m_star(&self, x: Point) -> Result<f64> {
        let ig = self.ctx.inst.ig();
        let avg = self.du_norm.ball_average(&Ball::new(x, self.radius()))?;
        Ok(avg + self.wolff_pair(x, 1.0 / (ig + 1.0))? + self.dini(x, 0.0)?)
    }

    /// Bound for `|Du(x) − Du(y)|`; symmetric in `x` and `y`.
    pub fn oscillation_rhs(&self, x0: Point, x: Point, y: Point, alpha: f64) -> Result<f64> {
        let r = self.radius();
        let ig = self.ctx.inst.ig();
        let dist = (x[0] - y[0]).hypot(x[1] - y[1]);
        let beta = -alpha + (1.0 + alpha) / (1.0 + ig);
        let side =
            |p: Point| -> Result<f64> { Ok(self.wolff_pair(p, beta)? + self.dini(p, alpha)?) };
        let avg = self.du_norm.ball_average(&Ball::new(x0, r))?;
        Ok(avg * (dist / r).powf(alpha) + (side(x)? + side(y)?) * dist.powf(alpha))
    }
}

/// Seeded sample points in the square shrunk by `margin`, away from atoms;
/// identical across meshes of one config. Both distances are padded by the
/// coarsest mesh width so they survive snapping to nodes.
pub fn sample_points(inst: &Instance, seed: u64, margin: f64, count: usize) -> Vec<Point> {
    let o = inst.grid.origin();
    let side = inst.grid.side();
    let pad = 0.5 * inst.exclusion;
    let (lo, hi) = (margin + pad, side - margin - pad);
    if !(hi > lo) {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 1000 * count {
        attempts += 1;
        let p = [o[0] + rng.gen_range(lo..hi), o[1] + rng.gen_range(lo..hi)];
        let near_atom =
            inst.measure.atoms().iter().any(|a| {
                (a.position[0] - p[0]).hypot(a.position[1] - p[1]) <= inst.exclusion + pad
            });
        if !near_atom {
            out.push(p);
        }
    }
    out
}

fn snap(inst: &Instance, p: Point) -> Point {
    let (i, j) = inst.grid.nearest_node(p);
    inst.grid.node(i, j)
}

fn point_ok(inst: &Instance, x: Point, margin: f64) -> bool {
    inst.grid.distance_to_boundary(x) >= margin
        && inst
            .measure
            .atoms()
            .iter()
            .all(|a| (a.position[0] - x[0]).hypot(a.position[1] - x[1]) > 2.0 * inst.grid.h())
}

fn alpha_group(label: &str, alpha: f64) -> String {
    format!("{label} alpha={alpha:.4}")
}

/// Maximal-function bounds for `u` and `Du` at seeded points, for each `α`.
pub fn check_maximal_bounds(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let r = inst.radius();
    if 2.0 * r > 0.5 * inst.grid.side() {
        return Err(Error::Domain(format!(
            "2R = {} exceeds half the domain width",
            2.0 * r
        )));
    }
    let u = ctx.approximable()?;
    let est = PointEstimates::new(ctx, &u.u);
    let mut rows = Vec::new();
    for p in sample_points(inst, ctx.seed, r, inst.points) {
        let x = snap(inst, p);
        if !point_ok(inst, x, r) {
            for &alpha in &ctx.alphas {
                let g = alpha_group(&ctx.label, alpha);
                rows.push(Row::flagged(
                    "solution",
                    &g,
                    x,
                    r,
                    0.0,
                    0.0,
                    Flag::Skipped("R exceeds the distance to the boundary".into()),
                ));
            }
            continue;
        }
        for &alpha in &ctx.alphas {
            let g = alpha_group(&ctx.label, alpha);
            rows.push(Row::ratio(
                "solution",
                &g,
                x,
                r,
                est.solution_lhs(x, alpha)?,
                est.solution_rhs(x, alpha)?,
            ));
            let lhs = sharp_maximal_vector(&est.du, x, alpha, r)?;
            rows.push(Row::ratio(
                "gradient",
                &g,
                x,
                r,
                lhs,
                est.gradient_rhs(x, alpha)?,
            ));
        }
    }
    Ok(rows)
}

/// Pointwise gradient bound at `x₀` and gradient oscillation bound for
/// `x, y ∈ B_{R/4}(x₀)`, with `B_{4R}(x₀)` inside the domain.
pub fn check_gradient_bounds(ctx: &CellContext) -> Result<Vec<Row>> {
    let inst = &ctx.inst;
    let r = inst.radius();
    if r > 0.5 || 2.0 * r > 0.5 * inst.grid.side() {
        return Err(Error::Domain(format!(
            "radius {r} too large for the gradient bounds"
        )));
    }
    let u = ctx.approximable()?;
    let est = PointEstimates::new(ctx, &u.u);
    let ig = inst.ig();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut rows = Vec::new();
    for p in sample_points(inst, ctx.seed, 4.0 * r, inst.points) {
        let x0 = snap(inst, p);
        let offsets: Vec<[Point; 2]> = ctx
            .alphas
            .iter()
            .map(|_| {
                [
                    disk_point(&mut rng, 0.25 * r),
                    disk_point(&mut rng, 0.25 * r),
                ]
            })
            .collect();
        if !point_ok(inst, x0, 4.0 * r) {
            rows.push(Row::flagged(
                "grad",
                &ctx.label,
                x0,
                r,
                0.0,
                0.0,
                Flag::Skipped("B_4R leaves the domain".into()),
            ));
            continue;
        }
        let k = inst.grid.nearest_node(x0);
        let lhs = est.du.at(inst.grid.index(k.0, k.1));
        rows.push(Row::ratio(
            "grad",
            &ctx.label,
            x0,
            r,
            lhs[0].hypot(lhs[1]),
            est.m_star(x0)?,
        ));
        for (&alpha, off) in ctx.alphas.iter().zip(offsets) {
            let g = alpha_group(&ctx.label, alpha);
            let x = snap(inst, [p[0] + off[0][0], p[1] + off[0][1]]);
            let y = snap(inst, [p[0] + off[1][0], p[1] + off[1][1]]);
            let inside = |q: Point| {
                (q[0] - x0[0]).hypot(q[1] - x0[1]) <= 0.25 * r && point_ok(inst, q, 3.0 * r)
            };
            let beta = -alpha + (1.0 + alpha) / (1.0 + ig);
            if x == y || !inside(x) || !inside(y) || beta <= 0.0 {
                rows.push(Row::flagged(
                    "grad-diff",
                    &g,
                    x,
                    r,
                    0.0,
                    0.0,
                    Flag::Skipped("no admissible pair".into()),
                ));
                continue;
            }
            let (ix, iy) = (inst.grid.nearest_node(x), inst.grid.nearest_node(y));
            let dx = est.du.at(inst.grid.index(ix.0, ix.1));
            let dy = est.du.at(inst.grid.index(iy.0, iy.1));
            let lhs = (dx[0] - dy[0]).hypot(dx[1] - dy[1]);
            rows.push(Row::ratio(
                "grad-diff",
                &g,
                x,
                r,
                lhs,
                est.oscillation_rhs(x0, x, y, alpha)?,
            ));
        }
    }
    Ok(rows)
}

fn disk_point(rng: &mut ChaCha8Rng, radius: f64) -> Point {
    loop {
        let p = [
            rng.gen_range(-radius..radius),
            rng.gen_range(-radius..radius),
        ];
        if p[0].hypot(p[1]) <= radius {
            return p;
        }
    }
}

/// `β̂` for the config: the homogeneous decay fit on the finest mesh of the
/// sweep at unit scale, or `None` for trivial data.
pub fn fitted_decay(cfg: &ExperimentConfig) -> Result<Option<DecayFit>> {
    let cells = cfg.cells();
    let n = cells.iter().map(|c| c.n).max().unwrap_or(cfg.grid.n);
    let cell = cells
        .iter()
        .find(|c| c.n == n)
        .copied()
        .map(|c| super::config::Cell { scale: 1.0, ..c })
        .unwrap_or_else(|| cfg.base_cell());
    let inst = Instance::build(cfg, &cell)?;
    Ok(homogeneous_decay(&inst)?.2)
}

//! Command implementations: solve, potential, verify and sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Point;
use crate::potentials::{
    frac_maximal, obstacle_maximal, sharp_maximal, wolff, wolff_psi, WolffParams,
};

use super::checks::{fitted_decay, run_check, CellContext, CheckOutput};
use super::config::{Cell, CheckKind, ExperimentConfig};
use super::instance::Instance;
use super::report::{summary_table, CheckReport};

/// Exponents derived from the homogeneous decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    /// Fitted homogeneous decay exponent, if the data are nontrivial.
    pub fitted: Option<f64>,
    pub beta: f64,
    pub alpha_hat: f64,
}

/// `β` and `α̂` for a config: explicit values win; otherwise both derive
/// from the fitted `β̂`, capped at 1 (1 for trivial data).
pub fn exponents(cfg: &ExperimentConfig, checks: &[CheckKind]) -> Result<Exponents> {
    let needs_fit = checks.iter().any(|c| {
        matches!(c, CheckKind::ExcessErrors) && cfg.checks.beta.is_none()
            || matches!(c, CheckKind::MaximalBounds | CheckKind::GradientBounds)
                && cfg.checks.alpha_hat.is_none()
    });
    let fitted = if needs_fit {
        fitted_decay(cfg)?.map(|f| f.beta)
    } else {
        None
    };
    let ceiling = fitted.map_or(1.0, |b| b.clamp(0.0, 1.0));
    Ok(Exponents {
        fitted,
        beta: cfg.checks.beta.unwrap_or(ceiling.max(f64::MIN_POSITIVE)),
        alpha_hat: cfg.checks.alpha_hat.unwrap_or(0.9 * ceiling),
    })
}

/// Runs `checks` over `cells`; one report per check, drift measured across
/// the cells. Cells run in parallel, results keep cell order.
pub fn run_checks(
    cfg: &ExperimentConfig,
    cells: &[Cell],
    checks: &[CheckKind],
    seed: u64,
) -> Result<Vec<CheckReport>> {
    let exps = exponents(cfg, checks)?;
    let instances = cells
        .iter()
        .map(|c| Instance::build(cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let per_cell: Vec<Vec<CheckOutput>> = instances
        .into_par_iter()
        .map(|inst| {
            let ctx = CellContext::new(inst, seed, exps.beta, exps.alpha_hat);
            info!("cell {}", ctx.label);
            checks.iter().map(|&k| run_check(k, &ctx)).collect()
        })
        .collect();
    let mut reports = Vec::with_capacity(checks.len());
    for (i, kind) in checks.iter().enumerate() {
        let mut rows = Vec::new();
        let mut metrics = Vec::new();
        for cell in &per_cell {
            rows.extend(cell[i].0.iter().cloned());
            metrics.extend(cell[i].1.iter().cloned());
        }
        let mut report = CheckReport::from_rows(kind.name(), rows);
        report.metrics = metrics;
        match kind {
            CheckKind::ExcessErrors => report
                .notes
                .push(format!("decay exponent {:.4}", exps.beta)),
            CheckKind::MaximalBounds | CheckKind::GradientBounds => report
                .notes
                .push(format!("alpha_hat {:.4}", exps.alpha_hat)),
            _ => {}
        }
        if let (Some(b), CheckKind::ExcessHomogeneous) = (exps.fitted, kind) {
            report.metrics.push(("beta_hat".into(), b));
        }
        reports.push(report);
    }
    Ok(reports)
}

fn output_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = match (out, &cfg.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => cfg.resolve(o),
        (None, None) => return Err(Error::Config("no output directory given".into())),
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// All configured checks across the sweep; writes `<check>.csv` and
/// `summary.txt`.
pub fn verify(cfg: &ExperimentConfig, out: Option<&Path>, seed: u64) -> Result<Vec<CheckReport>> {
    let dir = output_dir(cfg, out)?;
    let reports = run_checks(cfg, &cfg.cells(), &cfg.checks.list, seed)?;
    for r in &reports {
        r.write_csv(&dir.join(format!("{}.csv", r.name)))?;
    }
    fs::write(dir.join("summary.txt"), summary_table(&reports))?;
    Ok(reports)
}

/// Every check on each sweep cell separately; writes
/// `cell<k>/<check>.csv` and one summary per cell.
pub fn sweep(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    seed: u64,
) -> Result<Vec<(Cell, Vec<CheckReport>)>> {
    if cfg.sweep.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one [sweep] axis".into(),
        ));
    }
    let dir = output_dir(cfg, out)?;
    let mut all = Vec::new();
    let mut summary = String::new();
    for (k, cell) in cfg.cells().into_iter().enumerate() {
        let reports = run_checks(cfg, &[cell], &cfg.checks.list, seed)?;
        let sub = dir.join(format!("cell{k:03}"));
        fs::create_dir_all(&sub)?;
        for r in &reports {
            r.write_csv(&sub.join(format!("{}.csv", r.name)))?;
        }
        let _ = writeln!(summary, "cell{k:03}: {}", cell.label());
        summary.push_str(&summary_table(&reports));
        summary.push('\n');
        all.push((cell, reports));
    }
    fs::write(dir.join("summary.txt"), summary)?;
    Ok(all)
}

/// Solves the base cell's approximating problem; writes the solution raster
/// and solver diagnostics.
pub fn solve(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<crate::solver::Solution> {
    let dir = output_dir(cfg, out)?;
    let inst = Instance::build(cfg, &cfg.base_cell())?;
    let sol = inst.approximable()?;
    sol.u.write_raster(&dir.join("solution.txt"))?;
    let mut diag = String::new();
    let _ = writeln!(diag, "n {}", inst.grid.n());
    let _ = writeln!(diag, "level {}", inst.cell.level);
    let _ = writeln!(diag, "iterations {}", sol.iterations);
    let _ = writeln!(diag, "residual {:e}", sol.residual);
    let _ = writeln!(diag, "complementarity {:e}", sol.complementarity);
    let _ = writeln!(diag, "energy {:e}", sol.energy);
    fs::write(dir.join("diagnostics.txt"), diag)?;
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    /// `W^μ_{β,p}(x, R)`.
    Wolff,
    /// `W^{[ψ]}_{β,p}(x, R)`.
    WolffObstacle,
    /// `M_{β,R}` of `|Du|` for the base solution.
    FracMaximal,
    /// `M^#_{α,R}` of the base solution.
    SharpMaximal,
    /// `M̄_{β,R}(ψ)`.
    ObstacleMaximal,
}

impl std::str::FromStr for PotentialKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "wolff" => Self::Wolff,
            "wolff-obstacle" => Self::WolffObstacle,
            "frac-maximal" => Self::FracMaximal,
            "sharp-maximal" => Self::SharpMaximal,
            "obstacle-maximal" => Self::ObstacleMaximal,
            _ => return Err(Error::Config(format!("unknown potential `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// `β`, or `α` for the sharp maximal function.
    pub beta: f64,
    /// Wolff exponent; defaults to `i_g + 1`.
    pub p: Option<f64>,
    pub radius: f64,
    /// Evaluate at every `stride`-th node.
    pub stride: usize,
}

/// Evaluates a potential on strided nodes with `B_R(x)` inside the domain;
/// writes `x,y,value,truncation_flag` rows to `potential.csv`.
pub fn potential(
    cfg: &ExperimentConfig,
    spec: &PotentialSpec,
    out: Option<&Path>,
) -> Result<Vec<(Point, f64, bool)>> {
    if spec.stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let dir = output_dir(cfg, out)?;
    let inst = Instance::build(cfg, &cfg.base_cell())?;
    let grid = inst.grid;
    let solution = match spec.kind {
        PotentialKind::FracMaximal | PotentialKind::SharpMaximal => Some(inst.approximable()?.u),
        _ => None,
    };
    let du = solution.as_ref().map(|u| u.gradient().norm());
    let od = inst.obstacle_density.as_ref();
    if matches!(
        spec.kind,
        PotentialKind::WolffObstacle | PotentialKind::ObstacleMaximal
    ) && od.is_none()
    {
        return Err(Error::Config("obstacle potentials need an obstacle".into()));
    }
    let p = spec.p.unwrap_or(inst.ig() + 1.0);
    let wp = WolffParams::new(spec.beta, p, spec.radius, &grid);
    let n = grid.n();
    let points: Vec<Point> = (0..n)
        .step_by(spec.stride)
        .flat_map(|j| (0..n).step_by(spec.stride).map(move |i| (i, j)))
        .map(|(i, j)| grid.node(i, j))
        .filter(|&x| grid.distance_to_boundary(x) >= spec.radius)
        .collect();
    let values = points
        .par_iter()
        .map(|&x| -> Result<(Point, f64, bool)> {
            let (v, t) = match spec.kind {
                PotentialKind::Wolff => {
                    let w = wolff(&inst.measure, x, &wp)?;
                    (w.value, w.truncated)
                }
                PotentialKind::WolffObstacle => {
                    let w = wolff_psi(od.expect("checked"), x, &wp)?;
                    (w.value, w.truncated)
                }
                PotentialKind::FracMaximal => (
                    frac_maximal(du.as_ref().expect("solved"), x, spec.beta, spec.radius)?,
                    false,
                ),
                PotentialKind::SharpMaximal => (
                    sharp_maximal(
                        solution.as_ref().expect("solved"),
                        x,
                        spec.beta,
                        spec.radius,
                    )?,
                    false,
                ),
                PotentialKind::ObstacleMaximal => (
                    obstacle_maximal(od.expect("checked"), x, spec.beta, spec.radius)?,
                    false,
                ),
            };
            Ok((x, v, t))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(dir.join("potential.csv"))?;
    w.write_record(["x", "y", "value", "truncation_flag"])?;
    for (x, v, t) in &values {
        w.write_record([
            x[0].to_string(),
            x[1].to_string(),
            v.to_string(),
            u8::from(*t).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(values)
}

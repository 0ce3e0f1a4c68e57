//! Obstacle problems and equations for the model field.
//!
//! The discrete energy lives on the dual cells spanned by four neighbouring
//! nodes. Each cell averages `G_ε` over its four one-sided corner gradients:
//!
//! ```text
//! E(u) = Σ_cells h² ω(cell) ¼ Σ_corners G_ε(|D_k u|) − Σ_nodes h² f u,
//! G_ε(t) = G(√(t² + ε²)) − G(ε).
//! ```
//!
//! For `G(t) = t²/2` this is the five-point Laplacian. Residuals are reported
//! in strong form, `r = (∂E/∂u) / h² ≈ −div a(x, Du) − f`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{Ball, Grid2D, GridFunction, MeasureData};
use crate::orlicz::{GrowthFunction, GrowthKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Projected nonlinear SOR: one damped Newton step per node and sweep.
    #[default]
    NonlinearSor,
    /// Projected gradient with backtracking on the full energy.
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Bound on the h-scaled ℓ² norm of the projected residual.
    pub tol: f64,
    /// Sweeps (SOR) or gradient steps.
    pub max_iter: usize,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub method: Method,
    /// SOR relaxation; `None` picks `2 / (1 + sin(π/(n−1)))`.
    pub relaxation: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            tol: 1e-8,
            max_iter: 200_000,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            method: Method::NonlinearSor,
            relaxation: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Domain(format!(
                "solver needs tol > 0 and epsilon >= 0, got tol={} epsilon={}",
                self.tol, self.epsilon
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0)
            || !(self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5)
        {
            return Err(Error::Domain("line-search parameters out of range".into()));
        }
        if let Some(w) = self.relaxation {
            if !(w > 0.0 && w < 2.0) {
                return Err(Error::Domain(format!(
                    "relaxation must lie in (0, 2), got {w}"
                )));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Rhs {
    Zero,
    Density(GridFunction),
    Measure(MeasureData),
}

#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub field: VectorField,
    pub obstacle: Option<GridFunction>,
    /// Dirichlet trace; only the outer ring is read.
    pub boundary: GridFunction,
    pub rhs: Rhs,
}

impl ObstacleProblem {
    pub fn grid(&self) -> &Grid2D {
        self.boundary.grid()
    }

    /// Same problem with the measure replaced by its level-`i` mollification.
    pub fn mollified(&self, level: usize) -> Result<Self> {
        let rhs = match &self.rhs {
            Rhs::Measure(mu) => Rhs::Density(mollify_measure(mu, self.grid(), level)?),
            other => other.clone(),
        };
        Ok(Self {
            rhs,
            ..self.clone()
        })
    }

    pub fn without_rhs(&self) -> Self {
        Self {
            rhs: Rhs::Zero,
            ..self.clone()
        }
    }

    pub fn without_obstacle(&self) -> Self {
        Self {
            obstacle: None,
            ..self.clone()
        }
    }

    fn density(&self) -> Result<Option<&GridFunction>> {
        match &self.rhs {
            Rhs::Zero => Ok(None),
            Rhs::Density(f) => {
                f.same_grid(&self.boundary)?;
                Ok(Some(f))
            }
            Rhs::Measure(_) => Err(Error::Data(
                "measure data must be mollified before a direct solve".into(),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    /// `max |min(u − ψ, r)|` over free nodes (`|r|` without an obstacle).
    pub complementarity: f64,
    /// Final h-scaled ℓ² norm of the projected residual.
    pub residual: f64,
    pub energy: f64,
}

/// The discrete operator `u ↦ (∂E/∂u)/h²` and its energy.
#[derive(Debug, Clone)]
pub struct Operator {
    grid: Grid2D,
    growth: GrowthFunction,
    /// Coefficient at dual-cell centres, `(n−1)²` values.
    omega: Vec<f64>,
    eps: f64,
    g_eps: f64,
    quadratic: bool,
}

impl Operator {
    pub fn new(field: &VectorField, grid: &Grid2D, eps: f64) -> Self {
        let n = grid.n();
        let h = grid.h();
        let mut omega = Vec::with_capacity((n - 1) * (n - 1));
        for cj in 0..n - 1 {
            for ci in 0..n - 1 {
                let p = grid.node(ci, cj);
                omega.push(field.omega([p[0] + 0.5 * h, p[1] + 0.5 * h]));
            }
        }
        Self::with_cells(field.growth().clone(), *grid, omega, eps)
    }

    /// Operator with the coefficient frozen to the constant `c`.
    pub fn constant(growth: &GrowthFunction, grid: &Grid2D, c: f64, eps: f64) -> Self {
        let n = grid.n();
        Self::with_cells(growth.clone(), *grid, vec![c; (n - 1) * (n - 1)], eps)
    }

    fn with_cells(growth: GrowthFunction, grid: Grid2D, omega: Vec<f64>, eps: f64) -> Self {
        let quadratic = matches!(growth.kind(), GrowthKind::Power { p } if *p == 2.0);
        let g_eps = growth.primitive(eps);
        Self {
            grid,
            growth,
            omega,
            eps,
            g_eps,
            quadratic,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    fn g_reg(&self, d: [f64; 2]) -> f64 {
        if self.quadratic {
            return 0.5 * (d[0] * d[0] + d[1] * d[1]);
        }
        let s = (d[0] * d[0] + d[1] * d[1] + self.eps * self.eps).sqrt();
        self.growth.primitive(s) - self.g_eps
    }

    #[inline]
    fn kernel_reg(&self, d: [f64; 2]) -> f64 {
        if self.quadratic {
            return 1.0;
        }
        let s = (d[0] * d[0] + d[1] * d[1] + self.eps * self.eps).sqrt();
        self.growth.kernel(s)
    }

    /// `G_ε(|d_old + step|) − G_ε(|d_old|)` without cancellation: large
    /// changes subtract directly, small ones integrate `g` over `[b, a]` by
    /// three-point Gauss–Legendre.
    #[inline]
    fn g_reg_diff(&self, d_old: [f64; 2], step: [f64; 2]) -> f64 {
        let mid = [2.0 * d_old[0] + step[0], 2.0 * d_old[1] + step[1]];
        let delta2 = step[0] * mid[0] + step[1] * mid[1];
        if self.quadratic {
            return 0.5 * delta2;
        }
        let eps2 = self.eps * self.eps;
        let b = (d_old[0] * d_old[0] + d_old[1] * d_old[1] + eps2).sqrt();
        let d_new = [d_old[0] + step[0], d_old[1] + step[1]];
        let a = (d_new[0] * d_new[0] + d_new[1] * d_new[1] + eps2).sqrt();
        if a + b == 0.0 {
            return 0.0;
        }
        let da = delta2 / (a + b);
        if let GrowthKind::Power { p } = self.growth.kind() {
            if p.fract() == 0.0 && *p <= 8.0 {
                // a^p − b^p = (a − b) Σ a^{p−1−k} b^k
                let m = *p as i32;
                let (mut sum, mut apow) = (1.0, 1.0);
                for _ in 1..m {
                    apow *= a;
                    sum = sum * b + apow;
                }
                return da * sum / p;
            }
        }
        if da.abs() > 1e-3 * (a + b) {
            return self.growth.primitive(a) - self.growth.primitive(b);
        }
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let c = b + 0.5 * da;
        let quad: f64 = NODES
            .iter()
            .zip(WEIGHTS)
            .map(|(x, w)| w * self.growth.g(c + 0.5 * da * x))
            .sum();
        0.5 * da * quad
    }

    /// `(E(u_new) − E(u_old)) / h²` summed cell by cell.
    fn scaled_energy_diff(&self, u_new: &[f64], u_old: &[f64], f: Option<&[f64]>) -> f64 {
        let n = self.grid.n();
        let inv_h = 1.0 / self.grid.h();
        let mut total = 0.0;
        for cj in 0..n - 1 {
            for ci in 0..n - 1 {
                let v_old = self.cell_values(u_old, ci, cj);
                let v_new = self.cell_values(u_new, ci, cj);
                if v_old == v_new {
                    continue;
                }
                let d_old = corners(v_old, inv_h);
                let dv = [
                    v_new[0] - v_old[0],
                    v_new[1] - v_old[1],
                    v_new[2] - v_old[2],
                    v_new[3] - v_old[3],
                ];
                let steps = corners(dv, inv_h);
                let w = self.omega[cj * (n - 1) + ci];
                let cell: f64 = (0..4).map(|k| self.g_reg_diff(d_old[k], steps[k])).sum();
                total += 0.25 * w * cell;
            }
        }
        if let Some(f) = f {
            total -= f
                .iter()
                .zip(u_new.iter().zip(u_old))
                .map(|(fi, (a, b))| fi * (a - b))
                .sum::<f64>();
        }
        total
    }

    /// `(k, (g' − k)/s²)` at the regularized magnitude.
    #[inline]
    fn jacobian_parts(&self, d: [f64; 2]) -> (f64, f64) {
        if self.quadratic {
            return (1.0, 0.0);
        }
        let s2 = d[0] * d[0] + d[1] * d[1] + self.eps * self.eps;
        if s2 == 0.0 {
            return (self.growth.kernel(0.0), 0.0);
        }
        let s = s2.sqrt();
        let k = self.growth.kernel(s);
        (k, (self.growth.dg(s) - k) / s2)
    }

    #[inline]
    fn cell_values(&self, u: &[f64], ci: usize, cj: usize) -> [f64; 4] {
        let n = self.grid.n();
        let a = cj * n + ci;
        [u[a], u[a + 1], u[a + n], u[a + n + 1]]
    }

    /// `E / h²`.
    fn scaled_energy(&self, u: &[f64], f: Option<&[f64]>) -> f64 {
        let n = self.grid.n();
        let inv_h = 1.0 / self.grid.h();
        let mut total = 0.0;
        for cj in 0..n - 1 {
            for ci in 0..n - 1 {
                let v = self.cell_values(u, ci, cj);
                let w = self.omega[cj * (n - 1) + ci];
                let cell: f64 = corners(v, inv_h).iter().map(|&d| self.g_reg(d)).sum();
                total += 0.25 * w * cell;
            }
        }
        if let Some(f) = f {
            total -= f.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    }

    pub fn energy(&self, u: &GridFunction, f: Option<&GridFunction>) -> f64 {
        let h = self.grid.h();
        self.scaled_energy(u.values(), f.map(|f| f.values())) * h * h
    }

    /// Strong-form residual at every node; zero on the outer ring.
    fn residual_raw(&self, u: &[f64], f: Option<&[f64]>) -> Vec<f64> {
        let n = self.grid.n();
        let inv_h = 1.0 / self.grid.h();
        let mut r = vec![0.0; n * n];
        for cj in 0..n - 1 {
            for ci in 0..n - 1 {
                let v = self.cell_values(u, ci, cj);
                let w = 0.25 * self.omega[cj * (n - 1) + ci] * inv_h;
                let d = corners(v, inv_h);
                let fl: [[f64; 2]; 4] = d.map(|dk| {
                    let k = self.kernel_reg(dk);
                    [k * dk[0], k * dk[1]]
                });
                let a = cj * n + ci;
                r[a] += w * (-fl[0][0] - fl[0][1] - fl[1][0] - fl[2][1]);
                r[a + 1] += w * (fl[0][0] + fl[1][0] - fl[1][1] - fl[3][1]);
                r[a + n] += w * (fl[0][1] - fl[2][0] + fl[2][1] - fl[3][0]);
                r[a + n + 1] += w * (fl[1][1] + fl[2][0] + fl[3][0] + fl[3][1]);
            }
        }
        if let Some(f) = f {
            for (ri, fi) in r.iter_mut().zip(f) {
                *ri -= fi;
            }
        }
        for j in 0..n {
            for i in 0..n {
                if self.grid.is_ring(i, j) {
                    r[j * n + i] = 0.0;
                }
            }
        }
        r
    }

    /// `−div_h a(x, Du) − f` at every node, zero on the outer ring.
    pub fn residual(&self, u: &GridFunction, f: Option<&GridFunction>) -> GridFunction {
        let values = self.residual_raw(u.values(), f.map(|f| f.values()));
        GridFunction::new(self.grid, values).expect("residual of finite data is finite")
    }
}

/// Corner gradients of a cell with values `[a, b, c, d]` at
/// `(0,0), (1,0), (0,1), (1,1)`, in the same corner order.
#[inline]
fn corners(v: [f64; 4], inv_h: f64) -> [[f64; 2]; 4] {
    let [a, b, c, d] = v;
    let dxb = (b - a) * inv_h;
    let dxt = (d - c) * inv_h;
    let dyl = (c - a) * inv_h;
    let dyr = (d - b) * inv_h;
    [[dxb, dyl], [dxb, dyr], [dxt, dyl], [dxt, dyr]]
}

/// `∂D_k/∂u · h` for the node at cell position `a, b, c, d`.
const CORNER_SENSITIVITY: [[[f64; 2]; 4]; 4] = [
    [[-1.0, -1.0], [-1.0, 0.0], [0.0, -1.0], [0.0, 0.0]],
    [[1.0, 0.0], [1.0, -1.0], [0.0, 0.0], [0.0, -1.0]],
    [[0.0, 1.0], [0.0, 0.0], [-1.0, 1.0], [-1.0, 0.0]],
    [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]],
];

/// A ready-to-run discrete problem.
struct Discrete<'a> {
    op: &'a Operator,
    f: Option<&'a [f64]>,
    psi: Option<&'a [f64]>,
    free: Vec<usize>,
}

impl Discrete<'_> {
    /// Projected residual norm and complementarity.
    fn diagnostics(&self, u: &[f64]) -> (f64, f64) {
        let r = self.op.residual_raw(u, self.f);
        let h = self.op.grid.h();
        let mut sq = 0.0;
        let mut comp = 0.0_f64;
        for &m in &self.free {
            let (proj, c) = match self.psi {
                Some(psi) => {
                    let gap = u[m] - psi[m];
                    let proj = if gap <= 0.0 { r[m].min(0.0) } else { r[m] };
                    (proj, gap.min(r[m]).abs())
                }
                None => (r[m], r[m].abs()),
            };
            sq += proj * proj;
            comp = comp.max(c);
        }
        ((sq * h * h).sqrt(), comp)
    }

    fn converged(&self, res: f64, comp: f64, tol: f64) -> bool {
        res <= tol && comp <= 10.0 * tol
    }

    fn run(&self, mut u: Vec<f64>, cfg: &SolverConfig) -> Result<Solution> {
        let mut residual_history = Vec::new();
        let mut energy_history = Vec::new();
        let h2 = self.op.grid.h().powi(2);
        let (mut res, mut comp) = self.diagnostics(&u);
        let mut energy = self.op.scaled_energy(&u, self.f) * h2;
        residual_history.push(res);
        energy_history.push(energy);
        let mut iterations = 0;
        let mut tau = 0.25 * self.op.grid.h().powi(2);
        while !self.converged(res, comp, cfg.tol) {
            if iterations == cfg.max_iter {
                let sol = self.finish(
                    u,
                    iterations,
                    residual_history,
                    energy_history,
                    comp,
                    res,
                    energy,
                );
                return Err(Error::IterationLimit {
                    iterations,
                    residual: res,
                    last: Box::new(sol),
                });
            }
            let previous = u.clone();
            match cfg.method {
                Method::NonlinearSor => self.sor_sweep(&mut u, cfg),
                Method::ProjectedGradient => self.gradient_step(&mut u, &mut tau, cfg),
            }
            iterations += 1;
            // accumulate exact differences so the history is not swamped by rounding
            energy += self.op.scaled_energy_diff(&u, &previous, self.f) * h2;
            (res, comp) = self.diagnostics(&u);
            residual_history.push(res);
            energy_history.push(energy);
        }
        Ok(self.finish(
            u,
            iterations,
            residual_history,
            energy_history,
            comp,
            res,
            energy,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        u: Vec<f64>,
        iterations: usize,
        residual_history: Vec<f64>,
        energy_history: Vec<f64>,
        complementarity: f64,
        residual: f64,
        energy: f64,
    ) -> Solution {
        Solution {
            u: GridFunction::new(self.op.grid, u).expect("iterates stay finite"),
            iterations,
            residual_history,
            energy_history,
            complementarity,
            residual,
            energy,
        }
    }

    fn sor_sweep(&self, u: &mut [f64], cfg: &SolverConfig) {
        let op = self.op;
        let n = op.grid.n();
        let h = op.grid.h();
        let inv_h = 1.0 / h;
        let relax = cfg
            .relaxation
            .unwrap_or_else(|| 2.0 / (1.0 + (std::f64::consts::PI / (n - 1) as f64).sin()));
        // one (weight, gradient, sensitivity) triple per dependent corner
        let mut terms: [(f64, [f64; 2], [f64; 2]); 12] = [(0.0, [0.0; 2], [0.0; 2]); 12];
        for &m in &self.free {
            let (i, j) = (m % n, m / n);
            let mut count = 0;
            let mut spread = 0.0_f64;
            let mut w_max = 0.0_f64;
            // cells (i−1, j−1), (i, j−1), (i−1, j), (i, j) hold the node at d, c, b, a
            for (ci, cj, pos) in [(i - 1, j - 1, 3), (i, j - 1, 2), (i - 1, j, 1), (i, j, 0)] {
                let v = op.cell_values(u, ci, cj);
                for val in v {
                    spread = spread.max((val - u[m]).abs());
                }
                let w = 0.25 * op.omega[cj * (n - 1) + ci];
                w_max = w_max.max(w);
                let d = corners(v, inv_h);
                for (k, dk) in d.iter().enumerate() {
                    let s = CORNER_SENSITIVITY[pos][k];
                    if s[0] != 0.0 || s[1] != 0.0 {
                        terms[count] = (w, *dk, s);
                        count += 1;
                    }
                }
            }
            let terms = &terms[..count];
            let fm = self.f.map_or(0.0, |f| f[m]);
            let mut gp = -fm;
            let mut gpp = 0.0;
            for &(w, d, s) in terms {
                let (k, c) = op.jacobian_parts(d);
                let ds = d[0] * s[0] + d[1] * s[1];
                gp += w * k * ds * inv_h;
                gpp += w * (k * (s[0] * s[0] + s[1] * s[1]) + c * ds * ds) * inv_h * inv_h;
            }
            if gp == 0.0 {
                continue;
            }
            let floor = match self.psi {
                Some(psi) => psi[m],
                None => f64::NEG_INFINITY,
            };
            if gp > 0.0 && u[m] <= floor {
                continue;
            }
            // cap the Newton step where the local curvature degenerates
            let mut newton = -gp / gpp.max(1e-300);
            if newton.abs() > 2.0 * spread {
                let reach = op
                    .growth
                    .inverse(gp.abs() / w_max.max(1e-300))
                    .unwrap_or(spread / h);
                let cap = (2.0 * (spread + h * reach)).max(1e-300);
                newton = newton.clamp(-cap, cap);
            }
            let mut step = newton * relax;
            let change = |delta: f64| -> f64 {
                let mut e = -fm * delta;
                for &(w, d, s) in terms {
                    e += w * op.g_reg_diff(d, [delta * s[0] * inv_h, delta * s[1] * inv_h]);
                }
                e
            };
            let always = op.quadratic && relax < 2.0 * (1.0 - cfg.sufficient_decrease);
            for _ in 0..60 {
                let target = (u[m] + step).max(floor);
                let delta = target - u[m];
                if delta == 0.0 {
                    break;
                }
                let accept = always || change(delta) <= cfg.sufficient_decrease * gp * delta;
                if accept {
                    u[m] = target;
                    break;
                }
                step *= cfg.backtrack;
            }
        }
    }

    fn gradient_step(&self, u: &mut Vec<f64>, tau: &mut f64, cfg: &SolverConfig) {
        let r = self.op.residual_raw(u, self.f);
        let project = |m: usize, v: f64| match self.psi {
            Some(psi) => v.max(psi[m]),
            None => v,
        };
        *tau *= 2.0;
        for _ in 0..80 {
            let mut trial = u.clone();
            let mut decrease = 0.0;
            for &m in &self.free {
                trial[m] = project(m, u[m] - *tau * r[m]);
                decrease += r[m] * (trial[m] - u[m]);
            }
            if decrease == 0.0 {
                return;
            }
            if self.op.scaled_energy_diff(&trial, u, self.f) <= cfg.sufficient_decrease * decrease {
                *u = trial;
                return;
            }
            *tau *= cfg.backtrack;
        }
    }
}

/// Runs the minimisation over `free` nodes starting from `start`.
fn minimize(
    op: &Operator,
    f: Option<&GridFunction>,
    psi: Option<&GridFunction>,
    free: Vec<usize>,
    start: Vec<f64>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    let mut u = start;
    if let Some(psi) = psi {
        for &m in &free {
            u[m] = u[m].max(psi.values()[m]);
        }
    }
    let d = Discrete {
        op,
        f: f.map(|f| f.values()),
        psi: psi.map(|p| p.values()),
        free,
    };
    d.run(u, cfg)
}

fn interior_nodes(grid: &Grid2D) -> Vec<usize> {
    let n = grid.n();
    (1..n - 1)
        .flat_map(|j| (1..n - 1).map(move |i| j * n + i))
        .collect()
}

fn check_feasible(boundary: &GridFunction, psi: Option<&GridFunction>) -> Result<()> {
    let Some(psi) = psi else { return Ok(()) };
    boundary.same_grid(psi)?;
    let g = boundary.grid();
    for j in 0..g.n() {
        for i in 0..g.n() {
            if g.is_ring(i, j) && boundary.get(i, j) < psi.get(i, j) - 1e-12 {
                return Err(Error::Data(format!(
                    "boundary datum {} lies below the obstacle {} at node ({i}, {j})",
                    boundary.get(i, j),
                    psi.get(i, j)
                )));
            }
        }
    }
    Ok(())
}

/// Ring from the boundary datum, zero inside.
fn default_start(boundary: &GridFunction) -> Vec<f64> {
    let g = boundary.grid();
    let mut u = vec![0.0; g.len()];
    for j in 0..g.n() {
        for i in 0..g.n() {
            if g.is_ring(i, j) {
                u[g.index(i, j)] = boundary.get(i, j);
            }
        }
    }
    u
}

fn start_from(boundary: &GridFunction, guess: Option<&GridFunction>) -> Result<Vec<f64>> {
    let mut u = default_start(boundary);
    if let Some(guess) = guess {
        guess.same_grid(boundary)?;
        let g = boundary.grid();
        for j in 1..g.n() - 1 {
            for i in 1..g.n() - 1 {
                u[g.index(i, j)] = guess.get(i, j);
            }
        }
    }
    Ok(u)
}

/// Solves `OP(ψ; f)`: minimises the energy over `{u ≥ ψ, u = h on the ring}`.
pub fn solve_vi(prob: &ObstacleProblem, cfg: &SolverConfig) -> Result<Solution> {
    solve_vi_from(prob, None, cfg)
}

/// [`solve_vi`] from an explicit initial guess (interior values only).
pub fn solve_vi_from(
    prob: &ObstacleProblem,
    guess: Option<&GridFunction>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let f = prob.density()?;
    check_feasible(&prob.boundary, prob.obstacle.as_ref())?;
    let op = Operator::new(&prob.field, prob.grid(), cfg.epsilon);
    let start = start_from(&prob.boundary, guess)?;
    minimize(
        &op,
        f,
        prob.obstacle.as_ref(),
        interior_nodes(prob.grid()),
        start,
        cfg,
    )
}

/// The equation: same minimisation without the obstacle constraint.
pub fn solve_equation(prob: &ObstacleProblem, cfg: &SolverConfig) -> Result<Solution> {
    if prob.obstacle.is_some() {
        return Err(Error::Data(
            "solve_equation expects a problem without obstacle".into(),
        ));
    }
    solve_vi(prob, cfg)
}

/// Solves with `ω` replaced by its node average over `ball`.
pub fn solve_frozen(prob: &ObstacleProblem, ball: &Ball, cfg: &SolverConfig) -> Result<Solution> {
    let f = prob.density()?;
    check_feasible(&prob.boundary, prob.obstacle.as_ref())?;
    let mean = prob.field.ball_mean(prob.grid(), ball)?;
    let op = Operator::constant(prob.field.growth(), prob.grid(), mean, cfg.epsilon);
    minimize(
        &op,
        f,
        prob.obstacle.as_ref(),
        interior_nodes(prob.grid()),
        default_start(&prob.boundary),
        cfg,
    )
}

/// Nodes strictly inside `ball` and off the outer ring.
pub fn ball_free_nodes(grid: &Grid2D, ball: &Ball) -> Vec<usize> {
    let r2 = ball.radius * ball.radius * (1.0 - 1e-12);
    grid.ball_nodes(ball)
        .into_iter()
        .filter(|&k| {
            let (i, j) = grid.coords(k);
            let p = grid.node(i, j);
            let (dx, dy) = (p[0] - ball.center[0], p[1] - ball.center[1]);
            !grid.is_ring(i, j) && dx * dx + dy * dy < r2
        })
        .collect()
}

/// Solves on the nodes inside `ball`; every other node keeps the value of
/// `donor`, which also seeds the iteration.
pub fn solve_on_ball(
    op: &Operator,
    f: Option<&GridFunction>,
    psi: Option<&GridFunction>,
    ball: &Ball,
    donor: &GridFunction,
    cfg: &SolverConfig,
) -> Result<Solution> {
    if donor.grid() != op.grid() {
        return Err(Error::Shape("trace donor lives on a different grid".into()));
    }
    let free = ball_free_nodes(op.grid(), ball);
    if free.is_empty() {
        return Err(Error::Resolution(format!(
            "ball of radius {} contains no free nodes",
            ball.radius
        )));
    }
    minimize(op, f, psi, free, donor.values().to_vec(), cfg)
}

/// Normalised bump `(1 − |x/r|²)²` on the nodes of `B_r(centre)`, as
/// `(node, weight)` pairs with `Σ weight · h² = 1`. Falls back to the nearest
/// node when no node lies inside.
fn bump_weights(grid: &Grid2D, center: [f64; 2], r: f64) -> Vec<(usize, f64)> {
    let area = grid.h() * grid.h();
    let mut out = Vec::new();
    grid.for_each_in_ball(&Ball::new(center, r), |k| {
        let p = grid.node_at(k);
        let q = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (r * r);
        let w = (1.0 - q).max(0.0).powi(2);
        if w > 0.0 {
            out.push((k, w));
        }
    });
    let total: f64 = out.iter().map(|(_, w)| w).sum::<f64>() * area;
    if total == 0.0 {
        let (i, j) = grid.nearest_node(center);
        return vec![(grid.index(i, j), 1.0 / area)];
    }
    for (_, w) in &mut out {
        *w /= total;
    }
    out
}

/// Mollifier radius at level `i`.
pub fn mollifier_radius(level: usize) -> f64 {
    0.25 / level as f64
}

/// `f_i = μ * φ_i` with a mass-preserving bump of radius `1/(4i)`.
pub fn mollify_measure(mu: &MeasureData, grid: &Grid2D, level: usize) -> Result<GridFunction> {
    if level == 0 {
        return Err(Error::Level(
            "mollification level must be at least 1".into(),
        ));
    }
    mu.check_inside(grid)?;
    let r = mollifier_radius(level);
    let mut f = vec![0.0; grid.len()];
    for atom in mu.atoms() {
        let d = grid.distance_to_boundary(atom.position);
        if r > d {
            return Err(Error::Level(format!(
                "mollifier radius {r} exceeds the distance {d} from atom ({}, {}) to the boundary",
                atom.position[0], atom.position[1]
            )));
        }
        for (k, w) in bump_weights(grid, atom.position, r) {
            f[k] += atom.mass * w;
        }
    }
    if let Some(dens) = mu.density() {
        if dens.grid() != grid {
            return Err(Error::Shape(
                "measure density lives on a different grid".into(),
            ));
        }
        let area = grid.h() * grid.h();
        for (src, &val) in dens.values().iter().enumerate() {
            if val == 0.0 {
                continue;
            }
            for (k, w) in bump_weights(grid, grid.node_at(src), r) {
                f[k] += val * area * w;
            }
        }
    }
    GridFunction::new(*grid, f)
}

#[derive(Debug, Clone)]
pub struct OpSequence {
    pub levels: Vec<usize>,
    pub solutions: Vec<Solution>,
    /// `∫|f_i|` per level.
    pub masses: Vec<f64>,
    /// W^{1,1} distance between consecutive levels.
    pub distances: Vec<f64>,
}

impl OpSequence {
    /// The finest-level solution.
    pub fn finest(&self) -> &Solution {
        self.solutions.last().expect("sequences are nonempty")
    }

    /// Whether the consecutive distances decrease strictly.
    pub fn decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] < w[0])
    }
}

/// Solves the obstacle problem for each mollification level, in parallel.
pub fn solve_op_sequence(
    prob: &ObstacleProblem,
    levels: &[usize],
    cfg: &SolverConfig,
) -> Result<OpSequence> {
    if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "levels must be nonempty and increasing".into(),
        ));
    }
    let solved: Vec<Result<(f64, Solution)>> = levels
        .par_iter()
        .map(|&level| {
            let tag = |e: Error| Error::SequenceLevel {
                level,
                source: Box::new(e),
            };
            let p = prob.mollified(level).map_err(tag)?;
            let mass = match &p.rhs {
                Rhs::Density(f) => f.map(f64::abs).integral(),
                _ => 0.0,
            };
            let sol = solve_vi(&p, cfg).map_err(tag)?;
            Ok((mass, sol))
        })
        .collect();
    let mut masses = Vec::with_capacity(levels.len());
    let mut solutions = Vec::with_capacity(levels.len());
    for item in solved {
        let (m, s) = item?;
        masses.push(m);
        solutions.push(s);
    }
    let distances = solutions
        .windows(2)
        .map(|w| w[0].u.w11_distance(&w[1].u))
        .collect::<Result<Vec<_>>>()?;
    Ok(OpSequence {
        levels: levels.to_vec(),
        solutions,
        masses,
        distances,
    })
}

#[derive(Debug, Clone)]
pub struct ComparisonChain {
    pub ball: Ball,
    /// Frozen coefficient `ω̄` on `B_{R/2}`.
    pub frozen: f64,
    pub w1: Solution,
    pub w2: Solution,
    pub w3: Solution,
    pub w4: Solution,
}

/// The four comparison problems on `B_R` and `B_{R/2}`:
/// `w₁` homogeneous obstacle problem with trace `u`; `w₂` frozen obstacle
/// problem, `w₃` frozen equation with right-hand side `−div ā(Dψ)` and `w₄`
/// frozen homogeneous equation, all three with trace `w₁`.
pub fn comparison_chain(
    prob: &ObstacleProblem,
    u: &GridFunction,
    ball: &Ball,
    cfg: &SolverConfig,
) -> Result<ComparisonChain> {
    let grid = prob.grid();
    if !grid.contains_ball(&ball.scaled(2.0)) {
        return Err(Error::Domain(format!(
            "B_2R at ({}, {}) with R = {} leaves the domain",
            ball.center[0], ball.center[1], ball.radius
        )));
    }
    let stage = |name: &'static str| {
        move |e: Error| Error::Chain {
            stage: name,
            source: Box::new(e),
        }
    };
    let psi = prob.obstacle.as_ref();
    let op = Operator::new(&prob.field, grid, cfg.epsilon);
    let w1 = solve_on_ball(&op, None, psi, ball, u, cfg).map_err(stage("w1"))?;
    let half = ball.scaled(0.5);
    let frozen = prob.field.ball_mean(grid, &half).map_err(stage("w2"))?;
    let op_frozen = Operator::constant(prob.field.growth(), grid, frozen, cfg.epsilon);
    let psi_rhs = psi.map(|psi| op_frozen.residual(psi, None));
    let jobs: [&(dyn Fn() -> Result<Solution> + Sync); 3] = [
        &|| solve_on_ball(&op_frozen, None, psi, &half, &w1.u, cfg).map_err(stage("w2")),
        &|| {
            solve_on_ball(&op_frozen, psi_rhs.as_ref(), None, &half, &w1.u, cfg)
                .map_err(stage("w3"))
        },
        &|| solve_on_ball(&op_frozen, None, None, &half, &w1.u, cfg).map_err(stage("w4")),
    ];
    let mut out: Vec<Result<Solution>> = jobs.par_iter().map(|job| job()).collect();
    let w4 = out.pop().expect("three jobs")?;
    let w3 = out.pop().expect("three jobs")?;
    let w2 = out.pop().expect("three jobs")?;
    Ok(ComparisonChain {
        ball: *ball,
        frozen,
        w1,
        w2,
        w3,
        w4,
    })
}

//! Uniform square grids with nodes at cell centres.
//!
//! Node `(i, j)` sits at `origin + ((i + 1/2) h, (j + 1/2) h)` and values are
//! stored row-major (`j * n + i`). The outermost ring of nodes carries the
//! Dirichlet trace. Balls use the node-centre membership rule
//! `|node - centre| <= r`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_finite, Error, Result};

pub type Point = [f64; 2];

/// Relative slack in ball-membership and containment tests.
const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.center, self.radius * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    origin: Point,
    side: f64,
    n: usize,
}

impl Grid2D {
    pub fn new(origin: Point, side: f64, n: usize) -> Result<Self> {
        check_finite("origin.x", origin[0])?;
        check_finite("origin.y", origin[1])?;
        check_finite("side", side)?;
        if side <= 0.0 {
            return Err(Error::Domain(format!(
                "grid side must be positive, got {side}"
            )));
        }
        if n < 16 {
            return Err(Error::Resolution(format!(
                "grid needs at least 16 cells per axis, got {n}"
            )));
        }
        Ok(Self { origin, side, n })
    }

    /// `[0, 1]²` with `n` cells per axis.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new([0.0, 0.0], 1.0, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn center(&self) -> Point {
        [
            self.origin[0] + 0.5 * self.side,
            self.origin[1] + 0.5 * self.side,
        ]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        let h = self.h();
        [
            self.origin[0] + (i as f64 + 0.5) * h,
            self.origin[1] + (j as f64 + 0.5) * h,
        ]
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        self.node(i, j)
    }

    #[inline]
    pub fn is_ring(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.n || j + 1 == self.n
    }

    pub fn nearest_node(&self, p: Point) -> (usize, usize) {
        let h = self.h();
        let clamp = |v: f64| -> usize { (v.floor().max(0.0) as usize).min(self.n - 1) };
        (
            clamp((p[0] - self.origin[0]) / h),
            clamp((p[1] - self.origin[1]) / h),
        )
    }

    pub fn contains_point(&self, p: Point) -> bool {
        let slack = MEMBERSHIP_SLACK * self.side;
        p[0] >= self.origin[0] - slack
            && p[1] >= self.origin[1] - slack
            && p[0] <= self.origin[0] + self.side + slack
            && p[1] <= self.origin[1] + self.side + slack
    }

    pub fn contains_ball(&self, ball: &Ball) -> bool {
        let slack = MEMBERSHIP_SLACK * self.side;
        let [x, y] = ball.center;
        let r = ball.radius;
        x - r >= self.origin[0] - slack
            && y - r >= self.origin[1] - slack
            && x + r <= self.origin[0] + self.side + slack
            && y + r <= self.origin[1] + self.side + slack
    }

    /// Distance from `p` to the boundary of the square.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        let [x, y] = p;
        let lo = (x - self.origin[0]).min(y - self.origin[1]);
        let hi = (self.origin[0] + self.side - x).min(self.origin[1] + self.side - y);
        lo.min(hi)
    }

    /// Node indices inside the closed ball (node-centre rule), clipped to the grid.
    pub fn ball_nodes(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(ball, |idx| out.push(idx));
        out
    }

    pub fn for_each_in_ball(&self, ball: &Ball, mut visit: impl FnMut(usize)) {
        let h = self.h();
        let r = ball.radius;
        let r2 = r * r * (1.0 + MEMBERSHIP_SLACK);
        let [cx, cy] = ball.center;
        let lo = |c: f64, o: f64| -> usize { (((c - r - o) / h - 0.5).floor().max(0.0)) as usize };
        let hi = |c: f64, o: f64| -> usize {
            let v = ((c + r - o) / h - 0.5).ceil();
            if v < 0.0 {
                0
            } else {
                (v as usize).min(self.n - 1)
            }
        };
        let (i0, i1) = (lo(cx, self.origin[0]), hi(cx, self.origin[0]));
        let (j0, j1) = (lo(cy, self.origin[1]), hi(cy, self.origin[1]));
        if i0 > i1 || j0 > j1 {
            return;
        }
        for j in j0..=j1 {
            let y = self.origin[1] + (j as f64 + 0.5) * h - cy;
            for i in i0..=i1 {
                let x = self.origin[0] + (i as f64 + 0.5) * h - cx;
                if x * x + y * y <= r2 {
                    visit(self.index(i, j));
                }
            }
        }
    }

    /// Checks the preconditions shared by every ball average.
    pub fn admissible_ball(&self, ball: &Ball) -> Result<()> {
        check_finite("radius", ball.radius)?;
        if ball.radius < 2.0 * self.h() * (1.0 - MEMBERSHIP_SLACK) {
            return Err(Error::Resolution(format!(
                "radius {} below 2h = {}",
                ball.radius,
                2.0 * self.h()
            )));
        }
        if !self.contains_ball(ball) {
            return Err(Error::Domain(format!(
                "ball at ({}, {}) of radius {} leaves the domain",
                ball.center[0], ball.center[1], ball.radius
            )));
        }
        Ok(())
    }

    pub fn sample(&self, f: impl Fn(Point) -> f64) -> GridFunction {
        let values = (0..self.len()).map(|idx| f(self.node_at(idx))).collect();
        GridFunction {
            grid: *self,
            values,
        }
    }
}

/// Geometric ladder from `r_min` to `r_max` with `per_decade` steps per factor
/// ten; both endpoints are included exactly.
pub fn radius_ladder(r_min: f64, r_max: f64, per_decade: usize) -> Vec<f64> {
    assert!(r_min > 0.0 && r_max >= r_min && per_decade > 0);
    if r_max == r_min {
        return vec![r_min];
    }
    let steps = ((r_max / r_min).log10() * per_decade as f64)
        .ceil()
        .max(1.0) as usize;
    let ratio = (r_max / r_min).ln() / steps as f64;
    let mut out: Vec<f64> = (0..=steps)
        .map(|k| r_min * (ratio * k as f64).exp())
        .collect();
    out[0] = r_min;
    out[steps] = r_max;
    out
}

/// Arithmetic mean anchored at the first value, so a constant sample
/// averages to itself bit-for-bit.
fn anchored_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut it = values;
    let first = it.next()?;
    let mut count = 1usize;
    let mut acc = 0.0;
    for v in it {
        acc += v - first;
        count += 1;
    }
    Some(first + acc / count as f64)
}

#[derive(Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid2D,
    values: Vec<f64>,
}

impl std::fmt::Debug for GridFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFunction")
            .field("grid", &self.grid)
            .field("min", &self.min())
            .field("max", &self.max())
            .finish()
    }
}

impl GridFunction {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite grid value {v}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: Grid2D) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Shape(
                "grid functions live on different grids".into(),
            ));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Centred differences inside, second-order one-sided on the outer ring.
    pub fn gradient(&self) -> GridVectorField {
        let g = self.grid;
        let n = g.n;
        let inv = 1.0 / g.h();
        let mut gx = vec![0.0; g.len()];
        let mut gy = vec![0.0; g.len()];
        let u = &self.values;
        for j in 0..n {
            for i in 0..n {
                let idx = g.index(i, j);
                gx[idx] = first_difference(|k| u[g.index(k, j)], i, n) * inv;
                gy[idx] = first_difference(|k| u[g.index(i, k)], j, n) * inv;
            }
        }
        GridVectorField {
            grid: g,
            x: gx,
            y: gy,
        }
    }

    /// Second-order stencils; the mixed derivative composes the two
    /// first-difference operators, which commute, so the result is symmetric.
    pub fn hessian(&self) -> Result<HessianField> {
        let g = self.grid;
        let n = g.n;
        if n < 5 {
            return Err(Error::Resolution(
                "hessian needs at least 5 nodes per axis".into(),
            ));
        }
        let inv2 = 1.0 / (g.h() * g.h());
        let u = &self.values;
        let mut xx = vec![0.0; g.len()];
        let mut yy = vec![0.0; g.len()];
        for j in 0..n {
            for i in 0..n {
                let idx = g.index(i, j);
                xx[idx] = second_difference(|k| u[g.index(k, j)], i, n) * inv2;
                yy[idx] = second_difference(|k| u[g.index(i, k)], j, n) * inv2;
            }
        }
        let dy = self.gradient().y;
        let inv = 1.0 / g.h();
        let mut xy = vec![0.0; g.len()];
        for j in 0..n {
            for i in 0..n {
                xy[g.index(i, j)] = first_difference(|k| dy[g.index(k, j)], i, n) * inv;
            }
        }
        Ok(HessianField {
            grid: g,
            xx,
            xy,
            yy,
        })
    }

    /// Mean over the nodes of an admissible ball.
    pub fn ball_average(&self, ball: &Ball) -> Result<f64> {
        self.grid.admissible_ball(ball)?;
        Ok(self.ball_average_unchecked(ball))
    }

    /// Mean over the ball nodes without the containment and resolution checks.
    pub fn ball_average_unchecked(&self, ball: &Ball) -> f64 {
        let nodes = self.grid.ball_nodes(ball);
        anchored_mean(nodes.iter().map(|&k| self.values[k])).unwrap_or(f64::NAN)
    }

    /// Mean of `f(value)` over the nodes of an admissible ball.
    pub fn ball_average_of(&self, ball: &Ball, f: impl Fn(f64) -> f64) -> Result<f64> {
        self.grid.admissible_ball(ball)?;
        let nodes = self.grid.ball_nodes(ball);
        Ok(anchored_mean(nodes.iter().map(|&k| f(self.values[k]))).unwrap_or(f64::NAN))
    }

    /// Largest median `sup { t : #{f > t} > N/2 }` over the ball nodes.
    pub fn median(&self, ball: &Ball) -> Result<f64> {
        self.grid.admissible_ball(ball)?;
        let mut vals: Vec<f64> = self
            .grid
            .ball_nodes(ball)
            .into_iter()
            .map(|k| self.values[k])
            .collect();
        Ok(largest_median(&mut vals))
    }

    /// Pointwise clamp to `[-k, k]`.
    pub fn truncate(&self, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::Domain(format!(
                "truncation level must be positive, got {k}"
            )));
        }
        Ok(self.map(|v| v.clamp(-k, k)))
    }

    /// `∫|f - g| + ∫|Df - Dg|` by the midpoint rule.
    pub fn w11_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.zip_map(other, |a, b| a - b)?;
        let grad = diff.gradient();
        let area = self.grid.h() * self.grid.h();
        let total: f64 = diff
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| v.abs() + grad.x[k].hypot(grad.y[k]))
            .sum();
        Ok(total * area)
    }

    /// `∫ f` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h() * self.grid.h()
    }

    pub fn to_raster(&self) -> String {
        let g = self.grid;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            g.n, g.n, g.origin[0], g.origin[1], g.side
        );
        for j in 0..g.n {
            let row: Vec<String> = (0..g.n).map(|i| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_raster(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| -> Result<&str> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("raster ended before {what}")))
        };
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(e.to_string()));
        let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()));
        let nx = parse_usize(next("nx")?)?;
        let ny = parse_usize(next("ny")?)?;
        if nx != ny {
            return Err(Error::Shape(format!(
                "raster must be square, got {nx}x{ny}"
            )));
        }
        let x0 = parse_f64(next("x0")?)?;
        let y0 = parse_f64(next("y0")?)?;
        let side = parse_f64(next("side")?)?;
        let grid = Grid2D::new([x0, y0], side, nx)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(parse_f64(next("values")?)?);
        }
        if tokens.next().is_some() {
            return Err(Error::Parse("trailing data after raster values".into()));
        }
        Self::new(grid, values)
    }

    pub fn read_raster(path: &Path) -> Result<Self> {
        Self::from_raster(&std::fs::read_to_string(path)?)
    }

    pub fn write_raster(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_raster())?;
        Ok(())
    }
}

/// Order statistic at index `ceil(N/2) - 1` of the ascending sort.
pub fn largest_median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    values[n.div_ceil(2) - 1]
}

fn first_difference(u: impl Fn(usize) -> f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        (-3.0 * u(0) + 4.0 * u(1) - u(2)) * 0.5
    } else if k + 1 == n {
        (3.0 * u(n - 1) - 4.0 * u(n - 2) + u(n - 3)) * 0.5
    } else {
        (u(k + 1) - u(k - 1)) * 0.5
    }
}

fn second_difference(u: impl Fn(usize) -> f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        2.0 * u(0) - 5.0 * u(1) + 4.0 * u(2) - u(3)
    } else if k + 1 == n {
        2.0 * u(n - 1) - 5.0 * u(n - 2) + 4.0 * u(n - 3) - u(n - 4)
    } else {
        u(k + 1) - 2.0 * u(k) + u(k - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridVectorField {
    grid: Grid2D,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GridVectorField {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn at(&self, idx: usize) -> Point {
        [self.x[idx], self.y[idx]]
    }

    pub fn norm(&self) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self
                .x
                .iter()
                .zip(&self.y)
                .map(|(a, b)| a.hypot(*b))
                .collect(),
        }
    }

    pub fn component(&self, axis: usize) -> GridFunction {
        let values = if axis == 0 {
            self.x.clone()
        } else {
            self.y.clone()
        };
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Shape("vector fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        })
    }

    /// Componentwise mean over the ball nodes.
    pub fn ball_average(&self, ball: &Ball) -> Result<Point> {
        self.grid.admissible_ball(ball)?;
        let nodes = self.grid.ball_nodes(ball);
        Ok([
            anchored_mean(nodes.iter().map(|&k| self.x[k])).unwrap_or(f64::NAN),
            anchored_mean(nodes.iter().map(|&k| self.y[k])).unwrap_or(f64::NAN),
        ])
    }

    /// `avg_B |V - (V)_B|`.
    pub fn mean_oscillation(&self, ball: &Ball) -> Result<f64> {
        let [mx, my] = self.ball_average(ball)?;
        let nodes = self.grid.ball_nodes(ball);
        let sum: f64 = nodes
            .iter()
            .map(|&k| (self.x[k] - mx).hypot(self.y[k] - my))
            .sum();
        Ok(sum / nodes.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    grid: Grid2D,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
}

impl HessianField {
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    /// `[[xx, xy], [xy, yy]]` at a node.
    pub fn at(&self, idx: usize) -> [[f64; 2]; 2] {
        [[self.xx[idx], self.xy[idx]], [self.xy[idx], self.yy[idx]]]
    }

    /// Frobenius norm per node.
    pub fn frobenius(&self) -> GridFunction {
        let values = (0..self.grid.len())
            .map(|k| {
                (self.xx[k] * self.xx[k] + 2.0 * self.xy[k] * self.xy[k] + self.yy[k] * self.yy[k])
                    .sqrt()
            })
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: Point,
    pub mass: f64,
}

/// Dirac atoms plus an optional density sampled on a grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasureData {
    atoms: Vec<Atom>,
    density: Option<GridFunction>,
}

impl MeasureData {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(atoms: Vec<Atom>, density: Option<GridFunction>) -> Result<Self> {
        for a in &atoms {
            check_finite("atom mass", a.mass)?;
            check_finite("atom position", a.position[0])?;
            check_finite("atom position", a.position[1])?;
        }
        Ok(Self { atoms, density })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&GridFunction> {
        self.density.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.total_variation() == 0.0
    }

    /// Validates that every atom lies strictly inside `grid`'s square.
    pub fn check_inside(&self, grid: &Grid2D) -> Result<()> {
        for a in &self.atoms {
            if grid.distance_to_boundary(a.position) <= 0.0 {
                return Err(Error::Data(format!(
                    "atom at ({}, {}) is not strictly inside the domain",
                    a.position[0], a.position[1]
                )));
            }
        }
        if let Some(d) = &self.density {
            if d.grid() != grid {
                return Err(Error::Shape("density lives on a different grid".into()));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    position: a.position,
                    mass: a.mass * factor,
                })
                .collect(),
            density: self.density.as_ref().map(|d| d.scale(factor)),
        }
    }

    /// `Σ|mass| + ∫|density|`.
    pub fn total_variation(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|a| a.mass.abs()).sum();
        let dens = self
            .density
            .as_ref()
            .map(|d| d.map(f64::abs).integral())
            .unwrap_or(0.0);
        atoms + dens
    }

    /// `|μ|(closed ball)`: atoms by distance, density by the node-centre rule.
    pub fn ball_mass(&self, ball: &Ball) -> f64 {
        let r2 = ball.radius * ball.radius * (1.0 + MEMBERSHIP_SLACK);
        let [cx, cy] = ball.center;
        let mut mass: f64 = self
            .atoms
            .iter()
            .filter(|a| {
                let dx = a.position[0] - cx;
                let dy = a.position[1] - cy;
                dx * dx + dy * dy <= r2
            })
            .map(|a| a.mass.abs())
            .sum();
        if let Some(d) = &self.density {
            let g = d.grid();
            let area = g.h() * g.h();
            let mut acc = 0.0;
            g.for_each_in_ball(ball, |k| acc += d.values[k].abs());
            mass += acc * area;
        }
        mass
    }

    /// Parses lines `atom x y mass` and `density <raster file>`; relative
    /// raster paths resolve against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut atoms = Vec::new();
        let mut density = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("measure line {}: `{line}`", lineno + 1));
            match cols.as_slice() {
                ["atom", x, y, m] => {
                    let p = |s: &str| s.parse::<f64>().map_err(|_| bad());
                    atoms.push(Atom {
                        position: [p(x)?, p(y)?],
                        mass: p(m)?,
                    });
                }
                ["density", file] => {
                    let path = match base {
                        Some(b) => b.join(file),
                        None => Path::new(file).to_path_buf(),
                    };
                    density = Some(GridFunction::read_raster(&path)?);
                }
                _ => return Err(bad()),
            }
        }
        let measure = Self::new(atoms, density)?;
        if let Some(d) = &measure.density {
            measure.check_inside(&d.grid().clone())?;
        }
        Ok(measure)
    }
}

/// Node offsets of the discrete disks on a radius ladder. Balls centred at
/// nodes are translation invariant, so one offset list serves every centre.
#[derive(Debug, Clone)]
pub struct BallIndex {
    grid: Grid2D,
    radii: Vec<f64>,
    offsets: Vec<Vec<(isize, isize)>>,
}

impl BallIndex {
    pub fn new(grid: Grid2D, radii: Vec<f64>) -> Self {
        let h = grid.h();
        let offsets = radii
            .iter()
            .map(|&r| {
                let m = (r / h).floor() as isize + 1;
                let r2 = (r / h) * (r / h) * (1.0 + MEMBERSHIP_SLACK);
                let mut list = Vec::new();
                for dj in -m..=m {
                    for di in -m..=m {
                        if (di * di + dj * dj) as f64 <= r2 {
                            list.push((di, dj));
                        }
                    }
                }
                list
            })
            .collect();
        Self {
            grid,
            radii,
            offsets,
        }
    }

    /// Ladder from `r_min` to `r_max` with `per_decade` levels per decade.
    pub fn ladder(grid: Grid2D, r_min: f64, r_max: f64, per_decade: usize) -> Self {
        Self::new(grid, radius_ladder(r_min, r_max, per_decade))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn count(&self, level: usize) -> usize {
        self.offsets[level].len()
    }

    /// Node indices of the disk of the given level around node `(i, j)`,
    /// skipping nodes that fall off the grid.
    pub fn nodes(&self, i: usize, j: usize, level: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.grid.n as isize;
        self.offsets[level].iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && b >= 0 && a < n && b < n).then(|| (b * n + a) as usize)
        })
    }
}

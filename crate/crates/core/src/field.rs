//! The model vector field `a(x, η) = ω(x) g(|η|)/|η| η`, its coefficient
//! oscillation `θ` and the oscillation modulus `ω(R)`.

use rayon::prelude::*;

use crate::error::{check_finite, Error, Result};
use crate::grid::{radius_ladder, Ball, BallIndex, Grid2D, GridFunction, Point};
use crate::orlicz::GrowthFunction;

/// Directions and magnitudes used by [`VectorField::theta_sampled`].
pub const THETA_DIRECTIONS: usize = 32;
pub const THETA_MAGNITUDES: usize = 24;
/// Radius levels of [`OscillationModulus::compute`].
pub const MODULUS_LEVELS: usize = 16;
/// Target number of sampled centres per axis in the modulus sup.
const MODULUS_CENTERS: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientShape {
    Constant {
        c: f64,
    },
    /// `c0 + gx x + gy y`.
    Affine {
        c0: f64,
        gx: f64,
        gy: f64,
    },
    /// `base + amplitude sign(x - interface)`.
    Jump {
        base: f64,
        amplitude: f64,
        interface: f64,
    },
    /// `base + amplitude sign(sin(2πx/period) sin(2πy/period))`.
    Checkerboard {
        base: f64,
        amplitude: f64,
        period: f64,
    },
    /// Bilinear interpolation of node samples.
    Sampled(GridFunction),
}

impl CoefficientShape {
    fn raw(&self, x: Point) -> f64 {
        let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
        match self {
            Self::Constant { c } => *c,
            Self::Affine { c0, gx, gy } => c0 + gx * x[0] + gy * x[1],
            Self::Jump {
                base,
                amplitude,
                interface,
            } => base + amplitude * sign(x[0] - interface),
            Self::Checkerboard {
                base,
                amplitude,
                period,
            } => {
                let k = 2.0 * std::f64::consts::PI / period;
                base + amplitude * sign((k * x[0]).sin() * (k * x[1]).sin())
            }
            Self::Sampled(f) => bilinear(f, x),
        }
    }
}

fn bilinear(f: &GridFunction, x: Point) -> f64 {
    let g = f.grid();
    let n = g.n();
    let h = g.h();
    let o = g.origin();
    let locate = |v: f64, o: f64| -> (usize, f64) {
        let s = ((v - o) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let k = (s.floor() as usize).min(n - 2);
        (k, s - k as f64)
    };
    let (i, tx) = locate(x[0], o[0]);
    let (j, ty) = locate(x[1], o[1]);
    let v00 = f.get(i, j);
    let v10 = f.get(i + 1, j);
    let v01 = f.get(i, j + 1);
    let v11 = f.get(i + 1, j + 1);
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}

/// A coefficient clamped to `[c_low, c_high]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    shape: CoefficientShape,
    c_low: f64,
    c_high: f64,
}

impl CoefficientField {
    pub fn new(shape: CoefficientShape, c_low: f64, c_high: f64) -> Result<Self> {
        check_finite("c_low", c_low)?;
        check_finite("c_high", c_high)?;
        if !(c_low > 0.0 && c_high >= c_low) {
            return Err(Error::Domain(format!(
                "coefficient bounds need 0 < c_low <= c_high, got [{c_low}, {c_high}]"
            )));
        }
        Ok(Self {
            shape,
            c_low,
            c_high,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(CoefficientShape::Constant { c }, c, c)
    }

    /// Bounds taken from the shape itself where they are explicit.
    pub fn from_shape(shape: CoefficientShape) -> Result<Self> {
        let (lo, hi) = match &shape {
            CoefficientShape::Constant { c } => (*c, *c),
            CoefficientShape::Jump {
                base, amplitude, ..
            }
            | CoefficientShape::Checkerboard {
                base, amplitude, ..
            } => (base - amplitude.abs(), base + amplitude.abs()),
            CoefficientShape::Affine { c0, gx, gy } => {
                // extremes over the unit square
                let corners = [c0, &(c0 + gx), &(c0 + gy), &(c0 + gx + gy)].map(|v| *v);
                (
                    corners.iter().copied().fold(f64::INFINITY, f64::min),
                    corners.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            CoefficientShape::Sampled(f) => (f.min(), f.max()),
        };
        Self::new(shape, lo, hi)
    }

    pub fn shape(&self) -> &CoefficientShape {
        &self.shape
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c_low, self.c_high)
    }

    pub fn is_constant(&self) -> bool {
        let flat = match &self.shape {
            CoefficientShape::Constant { .. } => true,
            CoefficientShape::Affine { gx, gy, .. } => *gx == 0.0 && *gy == 0.0,
            CoefficientShape::Jump { amplitude, .. }
            | CoefficientShape::Checkerboard { amplitude, .. } => *amplitude == 0.0,
            CoefficientShape::Sampled(f) => f.min() == f.max(),
        };
        flat || self.c_low == self.c_high
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        self.shape.raw(x).clamp(self.c_low, self.c_high)
    }

    pub fn sample(&self, grid: &Grid2D) -> GridFunction {
        grid.sample(|x| self.eval(x))
    }
}

#[derive(Debug, Clone)]
pub struct VectorField {
    growth: GrowthFunction,
    coefficient: CoefficientField,
    origin: Point,
    side: f64,
    v: f64,
    big_l: f64,
}

impl VectorField {
    /// Field on the unit square.
    pub fn new(growth: GrowthFunction, coefficient: CoefficientField) -> Self {
        Self::on_domain(growth, coefficient, [0.0, 0.0], 1.0)
    }

    pub fn on_domain(
        growth: GrowthFunction,
        coefficient: CoefficientField,
        origin: Point,
        side: f64,
    ) -> Self {
        let (c_low, c_high) = coefficient.bounds();
        let ig = growth.ig();
        let sg = growth.sg();
        let v = (c_low * ig.min(1.0)).min(1.0);
        let big_l = (c_high * (1.0 + sg.max(1.0))).max(1.0);
        Self {
            growth,
            coefficient,
            origin,
            side,
            v,
            big_l,
        }
    }

    pub fn growth(&self) -> &GrowthFunction {
        &self.growth
    }

    pub fn coefficient(&self) -> &CoefficientField {
        &self.coefficient
    }

    /// `(v, L)`.
    pub fn ellipticity(&self) -> (f64, f64) {
        (self.v, self.big_l)
    }

    /// Same growth with the coefficient replaced by the constant `c`.
    pub fn with_constant_coefficient(&self, c: f64) -> Result<Self> {
        let mut out = Self::on_domain(
            self.growth.clone(),
            CoefficientField::constant(c)?,
            self.origin,
            self.side,
        );
        out.v = self.v;
        out.big_l = self.big_l;
        Ok(out)
    }

    /// Same growth with the coefficient field replaced.
    pub fn with_coefficient(&self, coefficient: CoefficientField) -> Self {
        Self::on_domain(self.growth.clone(), coefficient, self.origin, self.side)
    }

    fn check_point(&self, x: Point) -> Result<()> {
        check_finite("x", x[0])?;
        check_finite("y", x[1])?;
        let slack = 1e-12 * self.side;
        let inside = x[0] >= self.origin[0] - slack
            && x[1] >= self.origin[1] - slack
            && x[0] <= self.origin[0] + self.side + slack
            && x[1] <= self.origin[1] + self.side + slack;
        if inside {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point ({}, {}) outside the domain",
                x[0], x[1]
            )))
        }
    }

    #[inline]
    pub fn omega(&self, x: Point) -> f64 {
        self.coefficient.eval(x)
    }

    pub fn eval_a(&self, x: Point, eta: Point) -> Result<Point> {
        self.check_point(x)?;
        check_finite("eta", eta[0])?;
        check_finite("eta", eta[1])?;
        let t = eta[0].hypot(eta[1]);
        if t == 0.0 {
            return Ok([0.0, 0.0]);
        }
        let k = self.omega(x) * self.growth.kernel(t);
        Ok([k * eta[0], k * eta[1]])
    }

    /// `ω(x) [k(t) I + (g'(t) - k(t)) η⊗η / t²]` with `k = g(t)/t`.
    pub fn eval_da(&self, x: Point, eta: Point) -> Result<[[f64; 2]; 2]> {
        self.check_point(x)?;
        let t = eta[0].hypot(eta[1]);
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(
                "Jacobian is singular at η = 0; use the regularized flux".into(),
            ));
        }
        let w = self.omega(x);
        let k = self.growth.kernel(t);
        let c = (self.growth.dg(t) - k) / (t * t);
        Ok([
            [w * (k + c * eta[0] * eta[0]), w * c * eta[0] * eta[1]],
            [w * c * eta[0] * eta[1], w * (k + c * eta[1] * eta[1])],
        ])
    }

    /// Node average of `ω` over `ball`.
    pub fn ball_mean(&self, grid: &Grid2D, ball: &Ball) -> Result<f64> {
        self.coefficient.sample(grid).ball_average(ball)
    }

    /// `θ(a, B)(x) = sup_η |a(x,η) - ā_B(η)| / g(|η|)`, which for the model
    /// field is `|ω(x) - ω̄_B|`.
    pub fn theta(&self, grid: &Grid2D, ball: &Ball, x: Point) -> Result<f64> {
        self.check_theta_args(grid, ball, x)?;
        Ok((self.omega(x) - self.ball_mean(grid, ball)?).abs())
    }

    /// `θ` by brute force over sampled directions and log-spaced magnitudes
    /// in `[1e-3, 1e3]`.
    pub fn theta_sampled(
        &self,
        grid: &Grid2D,
        ball: &Ball,
        x: Point,
        directions: usize,
        magnitudes: usize,
    ) -> Result<f64> {
        self.check_theta_args(grid, ball, x)?;
        let nodes = grid.ball_nodes(ball);
        let weights: Vec<f64> = nodes.iter().map(|&k| self.omega(grid.node_at(k))).collect();
        let mut best = 0.0_f64;
        for d in 0..directions.max(1) {
            let phi = 2.0 * std::f64::consts::PI * d as f64 / directions.max(1) as f64;
            for m in 0..magnitudes.max(1) {
                let s = if magnitudes > 1 {
                    m as f64 / (magnitudes - 1) as f64
                } else {
                    0.5
                };
                let t = 10f64.powf(-3.0 + 6.0 * s);
                let eta = [t * phi.cos(), t * phi.sin()];
                let here = self.eval_a(x, eta)?;
                let mut mean = [0.0, 0.0];
                let k = self.growth.kernel(t);
                for w in &weights {
                    mean[0] += w * k * eta[0];
                    mean[1] += w * k * eta[1];
                }
                let nn = weights.len() as f64;
                let diff = (here[0] - mean[0] / nn).hypot(here[1] - mean[1] / nn);
                best = best.max(diff / self.growth.g(t));
            }
        }
        Ok(best)
    }

    fn check_theta_args(&self, grid: &Grid2D, ball: &Ball, x: Point) -> Result<()> {
        grid.admissible_ball(ball)?;
        let d = (x[0] - ball.center[0]).hypot(x[1] - ball.center[1]);
        if d > ball.radius * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "point ({}, {}) outside the ball",
                x[0], x[1]
            )));
        }
        Ok(())
    }

    /// `ω(r)` with the default number of radius levels.
    pub fn omega_modulus(&self, r: f64, grid: &Grid2D, gamma_prime: f64) -> Result<f64> {
        let om = OscillationModulus::compute(
            self,
            grid,
            2.0 * grid.h(),
            r,
            MODULUS_LEVELS,
            gamma_prime,
        )?;
        Ok(om.value_at(r))
    }
}

/// Sampled modulus `r ↦ ω(r)`, nondecreasing by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationModulus {
    gamma_prime: f64,
    dini_exponent: f64,
    radii: Vec<f64>,
    values: Vec<f64>,
}

/// A truncated Dini-type integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiniValue {
    /// `∫_{r_min}^{r}` by quadrature.
    pub value: f64,
    /// Lower truncation radius.
    pub r_min: f64,
    /// Power-law extrapolation of `∫_0^{r_min}`; infinite if the integrand
    /// does not decay toward zero.
    pub tail: f64,
}

impl OscillationModulus {
    /// Builds a modulus from explicit samples.
    pub fn from_samples(
        radii: Vec<f64>,
        values: Vec<f64>,
        gamma_prime: f64,
        sg: f64,
    ) -> Result<Self> {
        if radii.len() != values.len() {
            return Err(Error::Shape("radii and values differ in length".into()));
        }
        if !(gamma_prime > 1.0) {
            return Err(Error::Domain(format!(
                "γ' must exceed 1, got {gamma_prime}"
            )));
        }
        if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().is_some_and(|r| *r <= 0.0) {
            return Err(Error::Domain(
                "radii must be positive and increasing".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(
                "modulus values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            gamma_prime,
            dini_exponent: 1.0 / (1.0 + sg),
            radii,
            values,
        })
    }

    /// `ω(ρ) = sup_{x₀, r ≤ ρ} (avg_{B_r(x₀)} θ^{γ'})^{1/γ'}` on `levels`
    /// log-spaced radii in `[r_min, r_max]`, over node centres whose balls
    /// fit in the grid.
    pub fn compute(
        vf: &VectorField,
        grid: &Grid2D,
        r_min: f64,
        r_max: f64,
        levels: usize,
        gamma_prime: f64,
    ) -> Result<Self> {
        if !(gamma_prime > 1.0) {
            return Err(Error::Domain(format!(
                "γ' must exceed 1, got {gamma_prime}"
            )));
        }
        if r_max > 0.5 * grid.side() * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "modulus radius {r_max} exceeds half the domain width"
            )));
        }
        if !(r_min > 0.0 && r_max >= r_min) {
            return Err(Error::Domain(format!(
                "bad modulus radii [{r_min}, {r_max}]"
            )));
        }
        let radii = if levels <= 1 || r_max == r_min {
            vec![r_max]
        } else {
            let ratio = (r_max / r_min).ln() / (levels - 1) as f64;
            let mut v: Vec<f64> = (0..levels)
                .map(|k| r_min * (ratio * k as f64).exp())
                .collect();
            v[levels - 1] = r_max;
            v
        };
        let omega = vf.coefficient.sample(grid);
        let index = BallIndex::new(*grid, radii.clone());
        let n = grid.n();
        let stride = (n / MODULUS_CENTERS).max(1);
        let mut values = Vec::with_capacity(radii.len());
        for (level, &r) in radii.iter().enumerate() {
            let centers: Vec<(usize, usize)> = (0..n)
                .step_by(stride)
                .flat_map(|j| (0..n).step_by(stride).map(move |i| (i, j)))
                .filter(|&(i, j)| grid.contains_ball(&Ball::new(grid.node(i, j), r)))
                .collect();
            let w = omega.values();
            let best = centers
                .par_iter()
                .map(|&(i, j)| {
                    let mut count = 0usize;
                    let mut sum = 0.0;
                    for k in index.nodes(i, j, level) {
                        sum += w[k];
                        count += 1;
                    }
                    if count == 0 {
                        return 0.0;
                    }
                    let mean = sum / count as f64;
                    let moment: f64 = index
                        .nodes(i, j, level)
                        .map(|k| (w[k] - mean).abs().powf(gamma_prime))
                        .sum();
                    (moment / count as f64).powf(1.0 / gamma_prime)
                })
                .reduce(|| 0.0, f64::max);
            values.push(best);
        }
        for k in 1..values.len() {
            values[k] = values[k].max(values[k - 1]);
        }
        Ok(Self {
            gamma_prime,
            dini_exponent: 1.0 / (1.0 + vf.growth.sg()),
            radii,
            values,
        })
    }

    pub fn gamma_prime(&self) -> f64 {
        self.gamma_prime
    }

    pub fn dini_exponent(&self) -> f64 {
        self.dini_exponent
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn r_min(&self) -> f64 {
        self.radii.first().copied().unwrap_or(f64::NAN)
    }

    /// Log-log interpolation between samples, constant past both ends.
    pub fn value_at(&self, r: f64) -> f64 {
        let (radii, values) = (&self.radii, &self.values);
        if radii.is_empty() {
            return 0.0;
        }
        if r <= radii[0] {
            return values[0];
        }
        let last = radii.len() - 1;
        if r >= radii[last] {
            return values[last];
        }
        let k = radii.partition_point(|&x| x <= r);
        let (r0, r1, v0, v1) = (radii[k - 1], radii[k], values[k - 1], values[k]);
        let s = (r / r0).ln() / (r1 / r0).ln();
        if v0 > 0.0 && v1 > 0.0 {
            (v0.ln() + s * (v1 / v0).ln()).exp()
        } else {
            v0 + s * (v1 - v0)
        }
    }

    /// `∫_{r_min}^{r} ω(ρ)^{1/(1+s_g)} ρ^{-α̂} dρ/ρ`.
    pub fn dini_integral(&self, r: f64, alpha_hat: f64) -> Result<DiniValue> {
        self.dini_integral_weighted(r, alpha_hat, |_| 1.0)
    }

    /// `∫_{r_min}^{r} ω(ρ)^{1/(1+s_g)} w(ρ) ρ^{-a} dρ/ρ` on the stored radii
    /// (plus `r` itself); `a` may be any real.
    pub fn dini_integral_weighted(
        &self,
        r: f64,
        a: f64,
        weight: impl Fn(f64) -> f64,
    ) -> Result<DiniValue> {
        if self.radii.is_empty() {
            return Err(Error::State("oscillation modulus has no samples".into()));
        }
        check_finite("r", r)?;
        let r_min = self.radii[0];
        let integrand =
            |rho: f64| self.value_at(rho).powf(self.dini_exponent) * weight(rho) * rho.powf(-a);
        if r <= r_min {
            return Ok(DiniValue {
                value: 0.0,
                r_min,
                tail: 0.0,
            });
        }
        let mut nodes: Vec<f64> = self.radii.iter().copied().filter(|&x| x < r).collect();
        nodes.push(r);
        let vals: Vec<f64> = nodes.iter().map(|&x| integrand(x)).collect();
        let value = log_trapezoid(&nodes, &vals);
        let tail = power_tail(&nodes, &vals);
        Ok(DiniValue { value, r_min, tail })
    }
}

/// `∫ F(ρ) dρ/ρ` over sampled radii, interpolating `F` as a power of `ρ` on
/// each segment (exact for power laws) and linearly in `ln ρ` where a
/// sample is zero.
pub fn log_trapezoid(radii: &[f64], values: &[f64]) -> f64 {
    radii
        .windows(2)
        .zip(values.windows(2))
        .map(|(r, f)| {
            let ds = (r[1] / r[0]).ln();
            if f[0] > 0.0 && f[1] > 0.0 && f[0] != f[1] {
                let q = (f[1] / f[0]).ln();
                if q.abs() < 1e-9 {
                    0.5 * (f[0] + f[1]) * ds
                } else {
                    (f[1] - f[0]) * ds / q
                }
            } else {
                0.5 * (f[0] + f[1]) * ds
            }
        })
        .sum()
}

/// `∫_0^{r_0} F dρ/ρ` extrapolating the first segment as a power law.
fn power_tail(radii: &[f64], values: &[f64]) -> f64 {
    match (values.first(), values.get(1)) {
        (Some(&0.0), _) => 0.0,
        (Some(&f0), Some(&f1)) if f0 > 0.0 && f1 > 0.0 => {
            let slope = (f1 / f0).ln() / (radii[1] / radii[0]).ln();
            if slope > 1e-12 {
                f0 / slope
            } else {
                f64::INFINITY
            }
        }
        _ => f64::INFINITY,
    }
}

/// `r_min = 2h` ladder up to `r_max` for modulus evaluations.
pub fn default_radii(grid: &Grid2D, r_max: f64) -> Vec<f64> {
    radius_ladder(2.0 * grid.h(), r_max.max(2.0 * grid.h()), 24)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn power_field(p: f64, c: f64) -> VectorField {
        VectorField::new(
            GrowthFunction::power(p).unwrap(),
            CoefficientField::constant(c).unwrap(),
        )
    }

    fn affine_field() -> VectorField {
        let coef = CoefficientField::from_shape(CoefficientShape::Affine {
            c0: 1.0,
            gx: 1.0,
            gy: 0.0,
        })
        .unwrap();
        VectorField::new(GrowthFunction::power(2.0).unwrap(), coef)
    }

    #[test]
    fn eval_a_examples() {
        assert_eq!(
            power_field(2.0, 1.0)
                .eval_a([0.5, 0.5], [3.0, 4.0])
                .unwrap(),
            [3.0, 4.0]
        );
        assert_eq!(
            power_field(3.0, 1.7)
                .eval_a([0.5, 0.5], [0.0, 0.0])
                .unwrap(),
            [0.0, 0.0]
        );
        assert_eq!(
            power_field(4.0, 2.0)
                .eval_a([0.5, 0.5], [1.0, 0.0])
                .unwrap(),
            [2.0, 0.0]
        );
        assert!(matches!(
            power_field(2.0, 1.0).eval_a([1.5, 0.5], [1.0, 0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn eval_da_examples() {
        let id = power_field(2.0, 1.0)
            .eval_da([0.3, 0.3], [0.7, -2.0])
            .unwrap();
        assert!(
            (id[0][0] - 1.0).abs() < 1e-15
                && id[0][1].abs() < 1e-15
                && (id[1][1] - 1.0).abs() < 1e-15
        );
        let vf = power_field(4.0, 1.0);
        let d = vf.eval_da([0.5, 0.5], [1.0, 0.0]).unwrap();
        // oracle: centred finite differences of eval_a
        let step = 1e-6;
        let fd = |axis: usize| {
            let mut plus = [1.0, 0.0];
            let mut minus = [1.0, 0.0];
            plus[axis] += step;
            minus[axis] -= step;
            let (ap, am) = (
                vf.eval_a([0.5, 0.5], plus).unwrap(),
                vf.eval_a([0.5, 0.5], minus).unwrap(),
            );
            [
                (ap[0] - am[0]) / (2.0 * step),
                (ap[1] - am[1]) / (2.0 * step),
            ]
        };
        let (c0, c1) = (fd(0), fd(1));
        assert!((c0[0] - 3.0).abs() < 1e-6 && (d[0][0] - 3.0).abs() < 1e-12);
        assert!((c1[1] - 1.0).abs() < 1e-6 && (d[1][1] - 1.0).abs() < 1e-12);
        assert!(vf.eval_da([0.5, 0.5], [0.0, 0.0]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [2.0, 3.0, 4.0, 2.5] {
            let vf = power_field(p, 1.3);
            for _ in 0..200 {
                let t = 10f64.powf(rng.gen_range(-3.0..3.0));
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let eta = [t * phi.cos(), t * phi.sin()];
                let d = vf.eval_da([0.5, 0.5], eta).unwrap();
                let step = 1e-5 * t;
                let scale = vf.growth().g(t) / t;
                for axis in 0..2 {
                    let (mut a, mut b) = (eta, eta);
                    a[axis] += step;
                    b[axis] -= step;
                    let (fa, fb) = (
                        vf.eval_a([0.5, 0.5], a).unwrap(),
                        vf.eval_a([0.5, 0.5], b).unwrap(),
                    );
                    for row in 0..2 {
                        let fd = (fa[row] - fb[row]) / (2.0 * step);
                        assert!(
                            (fd - d[row][axis]).abs() <= 1e-6 * scale * 1.3 * p,
                            "p={p} t={t}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ellipticity_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let coef = CoefficientField::from_shape(CoefficientShape::Checkerboard {
            base: 1.0,
            amplitude: 0.4,
            period: 0.5,
        })
        .unwrap();
        for growth in [
            GrowthFunction::power(3.0).unwrap(),
            GrowthFunction::regularized_power(4.0, 0.5).unwrap(),
        ] {
            let vf = VectorField::new(growth, coef.clone());
            let (v, big_l) = vf.ellipticity();
            for _ in 0..1000 {
                let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                let t = 10f64.powf(rng.gen_range(-3.0..3.0));
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let eta = [t * phi.cos(), t * phi.sin()];
                let a = vf.eval_a(x, eta).unwrap();
                let g = vf.growth().g(t);
                assert!(a[0].hypot(a[1]) <= big_l * g * (1.0 + 1e-12));
                let m = vf.eval_da(x, eta).unwrap();
                let tr = m[0][0] + m[1][1];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                let min_eig = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
                assert!(min_eig >= v * g / t * (1.0 - 1e-9));
                assert!(vf.eval_a(x, [0.0, 0.0]).unwrap() == [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn theta_examples() {
        let grid = Grid2D::unit(64).unwrap();
        let ball = Ball::new([0.5, 0.5], 0.25);
        let constant = power_field(3.0, 1.0);
        assert_eq!(constant.theta(&grid, &ball, [0.6, 0.4]).unwrap(), 0.0);
        let vf = affine_field();
        assert!(vf.theta(&grid, &ball, [0.5, 0.5]).unwrap() < 1e-12);
        // oracle: the grid ball average of 1 + x
        let mean = grid.sample(|x| 1.0 + x[0]).ball_average(&ball).unwrap();
        let th = vf.theta(&grid, &ball, [0.75, 0.5]).unwrap();
        assert!((th - (1.75 - mean).abs()).abs() < 1e-14);
        assert!((th - 0.25).abs() < grid.h());
        assert!(vf
            .theta(&grid, &Ball::new([0.1, 0.5], 0.25), [0.1, 0.5])
            .is_err());
    }

    #[test]
    fn theta_sampled_agrees_with_closed_form() {
        let grid = Grid2D::unit(32).unwrap();
        let coef = CoefficientField::from_shape(CoefficientShape::Jump {
            base: 1.0,
            amplitude: 0.2,
            interface: 0.5,
        })
        .unwrap();
        let vf = VectorField::new(GrowthFunction::power(3.0).unwrap(), coef);
        let ball = Ball::new([0.5, 0.5], 0.2);
        for x in [[0.45, 0.5], [0.6, 0.55]] {
            let exact = vf.theta(&grid, &ball, x).unwrap();
            let sampled = vf
                .theta_sampled(&grid, &ball, x, THETA_DIRECTIONS, THETA_MAGNITUDES)
                .unwrap();
            assert!((exact - sampled).abs() < 1e-12, "{exact} vs {sampled}");
            assert!(exact <= 2.0 * vf.ellipticity().1);
        }
    }

    #[test]
    fn theta_shift_invariance() {
        let grid = Grid2D::unit(32).unwrap();
        let ball = Ball::new([0.4, 0.5], 0.2);
        let shifted = VectorField::new(
            GrowthFunction::power(2.0).unwrap(),
            CoefficientField::from_shape(CoefficientShape::Affine {
                c0: 3.0,
                gx: 1.0,
                gy: 0.0,
            })
            .unwrap(),
        );
        let a = affine_field().theta(&grid, &ball, [0.5, 0.5]).unwrap();
        let b = shifted.theta(&grid, &ball, [0.5, 0.5]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn modulus_examples() {
        let grid = Grid2D::unit(128).unwrap();
        assert_eq!(
            power_field(2.0, 2.0)
                .omega_modulus(0.25, &grid, 2.0)
                .unwrap(),
            0.0
        );
        let jump = VectorField::new(
            GrowthFunction::power(2.0).unwrap(),
            CoefficientField::from_shape(CoefficientShape::Jump {
                base: 1.0,
                amplitude: 0.2,
                interface: 0.5,
            })
            .unwrap(),
        );
        let om =
            OscillationModulus::compute(&jump, &grid, 2.0 * grid.h(), 0.25, MODULUS_LEVELS, 2.0)
                .unwrap();
        assert!(om
            .values()
            .iter()
            .all(|&v| v > 0.0 && v <= 2.0 * jump.ellipticity().1));
        assert!(om.values().windows(2).all(|w| w[1] >= w[0]));
        // oracle: a ball centred on the interface splits evenly, so θ = 0.2 on every node
        let direct = {
            let ball = Ball::new([grid.node(64, 64)[0], 0.5], 0.1);
            let nodes = grid.ball_nodes(&ball);
            let w = jump.coefficient().sample(&grid);
            let mean = nodes.iter().map(|&k| w.values()[k]).sum::<f64>() / nodes.len() as f64;
            (nodes
                .iter()
                .map(|&k| (w.values()[k] - mean).powi(2))
                .sum::<f64>()
                / nodes.len() as f64)
                .sqrt()
        };
        assert!(om.value_at(0.1) >= direct * (1.0 - 1e-12));
        assert!(om.value_at(0.25) <= 0.2 + 1e-12);
        assert!(jump.omega_modulus(0.6, &grid, 2.0).is_err());
    }

    #[test]
    fn dini_examples() {
        let radii = radius_ladder(1e-6, 1.0, 24);
        let sg = 2.0;
        let zero = OscillationModulus::from_samples(radii.clone(), vec![0.0; radii.len()], 2.0, sg)
            .unwrap();
        assert_eq!(zero.dini_integral(1.0, 0.0).unwrap().value, 0.0);
        let linear: Vec<f64> = radii.iter().map(|r| r.powf(1.0 + sg)).collect();
        let om = OscillationModulus::from_samples(radii.clone(), linear, 2.0, sg).unwrap();
        let d = om.dini_integral(1.0, 0.0).unwrap();
        assert!((d.value + d.tail - 1.0).abs() < 1e-10);
        assert!((d.value - (1.0 - 1e-6)).abs() < 1e-10);
        let half: Vec<f64> = radii.iter().map(|r| r.powf(0.5 * (1.0 + sg))).collect();
        let om = OscillationModulus::from_samples(radii.clone(), half, 2.0, sg).unwrap();
        let d = om.dini_integral(1.0, 0.0).unwrap();
        // oracle: ∫_{r_min}^1 ρ^{-1/2} dρ = 2 - 2 √r_min
        assert!((d.value - (2.0 - 2.0 * 1e-3)).abs() < 1e-10);
        assert!((d.value + d.tail - 2.0).abs() < 1e-10);
        let empty = OscillationModulus::from_samples(vec![], vec![], 2.0, sg).unwrap();
        assert!(matches!(
            empty.dini_integral(1.0, 0.0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn log_trapezoid_is_exact_for_powers() {
        let radii = radius_ladder(0.01, 1.0, 3);
        for q in [-1.5, 0.3, 2.0] {
            let vals: Vec<f64> = radii.iter().map(|r: &f64| r.powf(q)).collect();
            let exact = (1.0 - 0.01f64.powf(q)) / q;
            assert!((log_trapezoid(&radii, &vals) - exact).abs() < 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn sampled_coefficient_reproduces_affine() {
        let grid = Grid2D::unit(32).unwrap();
        let samples = grid.sample(|x| 1.0 + 0.5 * x[0] - 0.25 * x[1]);
        let coef = CoefficientField::from_shape(CoefficientShape::Sampled(samples)).unwrap();
        for x in [[0.3, 0.7], [0.51, 0.49], [0.2, 0.2]] {
            assert!((coef.eval(x) - (1.0 + 0.5 * x[0] - 0.25 * x[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping_applies() {
        let coef = CoefficientField::new(
            CoefficientShape::Affine {
                c0: 0.0,
                gx: 10.0,
                gy: 0.0,
            },
            0.5,
            2.0,
        )
        .unwrap();
        assert_eq!(coef.eval([0.0, 0.0]), 0.5);
        assert_eq!(coef.eval([1.0, 0.0]), 2.0);
        assert!(CoefficientField::new(CoefficientShape::Constant { c: 1.0 }, 0.0, 1.0).is_err());
    }
}

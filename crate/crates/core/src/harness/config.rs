//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{Method, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthSpec {
    Power {
        p: f64,
    },
    Regularized {
        p: f64,
        mu: f64,
    },
    /// Two-column `t g(t)` text file, relative to the config file.
    Tabulated {
        table: PathBuf,
    },
}

impl Default for GrowthSpec {
    fn default() -> Self {
        Self::Power { p: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ShapeSpec {
    Constant {
        c: f64,
    },
    Affine {
        c0: f64,
        gx: f64,
        gy: f64,
    },
    Jump {
        base: f64,
        amplitude: f64,
        interface: f64,
    },
    Checkerboard {
        base: f64,
        amplitude: f64,
        period: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    #[serde(flatten)]
    pub shape: ShapeSpec,
    #[serde(default)]
    pub c_low: Option<f64>,
    #[serde(default)]
    pub c_high: Option<f64>,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            shape: ShapeSpec::Constant { c: 1.0 },
            c_low: None,
            c_high: None,
        }
    }
}

/// Closed-form obstacles; all of them scale with the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum ObstacleSpec {
    #[default]
    None,
    /// `a·x + offset`.
    Affine { slope: [f64; 2], offset: f64 },
    /// `height − curvature |x − center|² / 2`.
    Quadratic {
        center: [f64; 2],
        height: f64,
        curvature: f64,
    },
    /// `offset + height (1 − |x − center|²/radius²)₊²`.
    Bump {
        center: [f64; 2],
        radius: f64,
        height: f64,
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    /// `[x, y, mass]` triples.
    #[serde(default)]
    pub atoms: Vec<[f64; 3]>,
    /// Constant absolutely continuous part.
    #[serde(default)]
    pub density: Option<f64>,
    /// Measure file with `atom x y m` and `density <raster>` lines.
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Mollification levels of the approximating sequence.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
}

fn default_levels() -> Vec<usize> {
    vec![2, 4, 8, 16]
}

impl Default for MeasureSpec {
    fn default() -> Self {
        Self {
            atoms: Vec::new(),
            density: None,
            file: None,
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub origin: [f64; 2],
    #[serde(default = "one")]
    pub side: f64,
}

fn default_n() -> usize {
    64
}

fn one() -> f64 {
    1.0
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            origin: [0.0, 0.0],
            side: 1.0,
        }
    }
}

/// Dirichlet data, sampled on the whole grid; it also seeds ball solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    Affine {
        slope: [f64; 2],
        offset: f64,
    },
    /// `offset + x + amplitude sin(2π y)`.
    Wave {
        amplitude: f64,
        offset: f64,
    },
    /// `offset + scale ((x − c₁)² − (y − c₂)²)`.
    Saddle {
        center: [f64; 2],
        scale: f64,
        offset: f64,
    },
    /// Radial solution of the constant-coefficient power-growth equation
    /// with a point mass at `center`.
    Fundamental {
        center: [f64; 2],
        mass: f64,
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub method: String,
    pub relaxation: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            epsilon: d.epsilon,
            tol: d.tol,
            max_iter: d.max_iter,
            method: "sor".into(),
            relaxation: None,
        }
    }
}

impl SolverSpec {
    pub fn to_config(&self) -> Result<SolverConfig> {
        let method = match self.method.as_str() {
            "sor" => Method::NonlinearSor,
            "gradient" => Method::ProjectedGradient,
            other => return Err(Error::Config(format!("unknown solver method `{other}`"))),
        };
        let cfg = SolverConfig {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
            method,
            relaxation: self.relaxation,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Comparison,
    Frozen,
    Caccioppoli,
    ReverseHolder,
    SobolevMedian,
    ExcessHomogeneous,
    ExcessErrors,
    MaximalBounds,
    GradientBounds,
}

impl CheckKind {
    pub const ALL: [CheckKind; 9] = [
        Self::Comparison,
        Self::Frozen,
        Self::Caccioppoli,
        Self::ReverseHolder,
        Self::SobolevMedian,
        Self::ExcessHomogeneous,
        Self::ExcessErrors,
        Self::MaximalBounds,
        Self::GradientBounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Comparison => "comparison",
            Self::Frozen => "frozen",
            Self::Caccioppoli => "caccioppoli",
            Self::ReverseHolder => "reverse_holder",
            Self::SobolevMedian => "sobolev_median",
            Self::ExcessHomogeneous => "excess_homogeneous",
            Self::ExcessErrors => "excess_errors",
            Self::MaximalBounds => "maximal_bounds",
            Self::GradientBounds => "gradient_bounds",
        }
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown check `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    #[serde(default = "all_checks")]
    pub list: Vec<CheckKind>,
    /// Ball centre for the single-ball checks.
    #[serde(default = "mid")]
    pub center: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Sample points of the pointwise checks.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Largest Hölder exponent tried; defaults to `0.9 min(β̂, 1)` with the
    /// fitted homogeneous decay exponent `β̂`.
    #[serde(default)]
    pub alpha_hat: Option<f64>,
    /// Decay exponent in the excess estimate with error terms; defaults to
    /// the fitted `β̂`.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_gamma_prime")]
    pub gamma_prime: f64,
}

fn all_checks() -> Vec<CheckKind> {
    CheckKind::ALL.to_vec()
}

fn mid() -> [f64; 2] {
    [0.5, 0.5]
}

fn default_radius() -> f64 {
    0.2
}

fn default_points() -> usize {
    25
}

fn default_gamma_prime() -> f64 {
    2.0
}

impl Default for ChecksSpec {
    fn default() -> Self {
        Self {
            list: all_checks(),
            center: mid(),
            radius: default_radius(),
            points: default_points(),
            alpha_hat: None,
            beta: None,
            gamma_prime: default_gamma_prime(),
        }
    }
}

/// Sweep axes; an empty axis keeps the base value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub n: Vec<usize>,
    /// Data scalings `λ`: measure by `λ`, boundary data and obstacle by `λ^{1/i_g}`.
    #[serde(default)]
    pub scale: Vec<f64>,
    #[serde(default)]
    pub radius: Vec<f64>,
    #[serde(default)]
    pub level: Vec<usize>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub gamma_prime: Vec<f64>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
            && self.scale.is_empty()
            && self.radius.is_empty()
            && self.level.is_empty()
            && self.epsilon.is_empty()
            && self.gamma_prime.is_empty()
    }
}

/// One point of the sweep cross product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub scale: f64,
    pub radius: f64,
    pub level: usize,
    pub epsilon: f64,
    pub gamma_prime: f64,
}

impl Cell {
    pub fn label(&self) -> String {
        format!(
            "n={} scale={} R={} level={} eps={:e} gamma={}",
            self.n, self.scale, self.radius, self.level, self.epsilon, self.gamma_prime
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub growth: GrowthSpec,
    #[serde(default)]
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub obstacle: ObstacleSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = text.parse()?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialise")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.solver.to_config()?;
        if self.grid.n < 16 {
            return bad(format!("grid.n must be at least 16, got {}", self.grid.n));
        }
        if self.sweep.n.iter().any(|&n| n < 16) {
            return bad("sweep.n entries must be at least 16".into());
        }
        if self.measure.levels.is_empty() || self.measure.levels.contains(&0) {
            return bad("measure.levels must be nonempty and positive".into());
        }
        if self.measure.levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("measure.levels must increase".into());
        }
        if !(self.checks.radius > 0.0) || self.sweep.radius.iter().any(|r| !(*r > 0.0)) {
            return bad("check radii must be positive".into());
        }
        if self
            .sweep
            .scale
            .iter()
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return bad("sweep.scale entries must be positive".into());
        }
        if !(self.checks.gamma_prime > 1.0) || self.sweep.gamma_prime.iter().any(|g| !(*g > 1.0)) {
            return bad("gamma_prime must exceed 1".into());
        }
        if let Some(a) = self.checks.alpha_hat {
            if !(0.0..=1.0).contains(&a) {
                return bad(format!("checks.alpha_hat must lie in [0, 1], got {a}"));
            }
        }
        if let Some(b) = self.checks.beta {
            if !(b > 0.0 && b <= 1.0) {
                return bad(format!("checks.beta must lie in (0, 1], got {b}"));
            }
        }
        if self.checks.points == 0 {
            return bad("checks.points must be positive".into());
        }
        if let ObstacleSpec::Bump { radius, .. } = self.obstacle {
            if !(radius > 0.0) {
                return bad("bump radius must be positive".into());
            }
        }
        Ok(())
    }

    /// The finest mollification level.
    pub fn finest_level(&self) -> usize {
        *self.measure.levels.last().expect("validated nonempty")
    }

    pub fn base_cell(&self) -> Cell {
        Cell {
            n: self.grid.n,
            scale: 1.0,
            radius: self.checks.radius,
            level: self.finest_level(),
            epsilon: self.solver.epsilon,
            gamma_prime: self.checks.gamma_prime,
        }
    }

    /// Cross product of the sweep axes around the base cell.
    pub fn cells(&self) -> Vec<Cell> {
        let base = self.base_cell();
        fn axis<T: Copy>(v: &[T], d: T) -> Vec<T> {
            if v.is_empty() {
                vec![d]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &n in &axis(&self.sweep.n, base.n) {
            for &scale in &axis(&self.sweep.scale, base.scale) {
                for &radius in &axis(&self.sweep.radius, base.radius) {
                    for &level in &axis(&self.sweep.level, base.level) {
                        for &epsilon in &axis(&self.sweep.epsilon, base.epsilon) {
                            for &gamma_prime in &axis(&self.sweep.gamma_prime, base.gamma_prime) {
                                out.push(Cell {
                                    n,
                                    scale,
                                    radius,
                                    level,
                                    epsilon,
                                    gamma_prime,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Coarsest mesh width over the sweep, used to keep sample points
    /// identical across meshes.
    pub fn coarsest_h(&self) -> f64 {
        let n = self
            .sweep
            .n
            .iter()
            .copied()
            .chain([self.grid.n])
            .min()
            .expect("nonempty");
        self.grid.side / n as f64
    }
}

//! Concrete problem instances built from a config and a sweep cell.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{CoefficientField, CoefficientShape, VectorField};
use crate::grid::{Atom, Ball, Grid2D, GridFunction, MeasureData, Point};
use crate::orlicz::{GrowthFunction, GrowthKind, IndexPolicy, OrliczG};
use crate::potentials::ObstacleDensity;
use crate::solver::{
    mollify_measure, solve_vi, ObstacleProblem, Operator, Rhs, Solution, SolverConfig,
};

use super::config::{BoundarySpec, Cell, ExperimentConfig, GrowthSpec, ObstacleSpec, ShapeSpec};

pub fn build_growth(cfg: &ExperimentConfig) -> Result<GrowthFunction> {
    match &cfg.growth {
        GrowthSpec::Power { p } => GrowthFunction::power(*p),
        GrowthSpec::Regularized { p, mu } => GrowthFunction::regularized_power(*p, *mu),
        GrowthSpec::Tabulated { table } => {
            let text = std::fs::read_to_string(cfg.resolve(table))?;
            GrowthFunction::from_table_text(&text, IndexPolicy::Reject)
        }
    }
}

pub fn build_coefficient(cfg: &ExperimentConfig) -> Result<CoefficientField> {
    let shape = match cfg.coefficient.shape {
        ShapeSpec::Constant { c } => CoefficientShape::Constant { c },
        ShapeSpec::Affine { c0, gx, gy } => CoefficientShape::Affine { c0, gx, gy },
        ShapeSpec::Jump {
            base,
            amplitude,
            interface,
        } => CoefficientShape::Jump {
            base,
            amplitude,
            interface,
        },
        ShapeSpec::Checkerboard {
            base,
            amplitude,
            period,
        } => CoefficientShape::Checkerboard {
            base,
            amplitude,
            period,
        },
    };
    match (cfg.coefficient.c_low, cfg.coefficient.c_high) {
        (None, None) => CoefficientField::from_shape(shape),
        (lo, hi) => {
            let (dlo, dhi) = CoefficientField::from_shape(shape.clone())?.bounds();
            CoefficientField::new(shape, lo.unwrap_or(dlo), hi.unwrap_or(dhi))
        }
    }
}

fn obstacle_fn(spec: &ObstacleSpec) -> Option<Box<dyn Fn(Point) -> f64 + '_>> {
    match *spec {
        ObstacleSpec::None => None,
        ObstacleSpec::Affine { slope, offset } => Some(Box::new(move |x| {
            slope[0] * x[0] + slope[1] * x[1] + offset
        })),
        ObstacleSpec::Quadratic {
            center,
            height,
            curvature,
        } => Some(Box::new(move |x| {
            height - 0.5 * curvature * ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2))
        })),
        ObstacleSpec::Bump {
            center,
            radius,
            height,
            offset,
        } => Some(Box::new(move |x| {
            let q = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
            offset + height * (1.0 - q).max(0.0).powi(2)
        })),
    }
}

fn boundary_fn(
    spec: &BoundarySpec,
    growth: &GrowthFunction,
    coefficient: &CoefficientField,
) -> Result<Box<dyn Fn(Point) -> f64>> {
    Ok(match *spec {
        BoundarySpec::Zero => Box::new(|_| 0.0),
        BoundarySpec::Constant { value } => Box::new(move |_| value),
        BoundarySpec::Affine { slope, offset } => {
            Box::new(move |x| slope[0] * x[0] + slope[1] * x[1] + offset)
        }
        BoundarySpec::Wave { amplitude, offset } => {
            Box::new(move |x| offset + x[0] + amplitude * (2.0 * PI * x[1]).sin())
        }
        BoundarySpec::Saddle {
            center,
            scale,
            offset,
        } => Box::new(move |x| {
            offset + scale * ((x[0] - center[0]).powi(2) - (x[1] - center[1]).powi(2))
        }),
        BoundarySpec::Fundamental {
            center,
            mass,
            offset,
        } => {
            let p = match growth.kind() {
                GrowthKind::Power { p } => *p,
                _ => {
                    return Err(Error::Config(
                        "fundamental boundary data needs power growth".into(),
                    ))
                }
            };
            let c = match coefficient.shape() {
                CoefficientShape::Constant { c } => *c,
                _ => {
                    return Err(Error::Config(
                        "fundamental boundary data needs a constant coefficient".into(),
                    ))
                }
            };
            let flux = mass / (2.0 * PI * c);
            Box::new(move |x| {
                let r = (x[0] - center[0]).hypot(x[1] - center[1]).max(1e-12);
                if p == 2.0 {
                    offset - flux * r.ln()
                } else {
                    let e = (p - 2.0) / (p - 1.0);
                    offset - flux.abs().powf(1.0 / (p - 1.0)) * flux.signum() * r.powf(e) / e
                }
            })
        }
    })
}

/// Everything a check needs for one sweep cell.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cell: Cell,
    pub grid: Grid2D,
    pub field: VectorField,
    pub orlicz: OrliczG,
    pub obstacle: Option<GridFunction>,
    pub obstacle_density: Option<ObstacleDensity>,
    /// Scaled measure data.
    pub measure: MeasureData,
    /// Scaled Dirichlet data on the whole grid.
    pub boundary: GridFunction,
    pub solver: SolverConfig,
    pub center: Point,
    pub points: usize,
    /// Exclusion radius around atoms for sample points.
    pub exclusion: f64,
}

impl Instance {
    /// Builds the cell's instance. Data scale covariantly: the measure by
    /// `λ`, the boundary data and obstacle by `λ^{1/i_g}`.
    pub fn build(cfg: &ExperimentConfig, cell: &Cell) -> Result<Self> {
        let grid = Grid2D::new(cfg.grid.origin, cfg.grid.side, cell.n)?;
        let growth = build_growth(cfg)?;
        let coefficient = build_coefficient(cfg)?;
        let s = cell.scale.powf(1.0 / growth.ig());
        let boundary = {
            let f = boundary_fn(&cfg.boundary, &growth, &coefficient)?;
            grid.sample(|x| s * f(x))
        };
        let obstacle = obstacle_fn(&cfg.obstacle).map(|f| grid.sample(|x| s * f(x)));
        let obstacle_density = obstacle
            .as_ref()
            .map(|psi| ObstacleDensity::new(psi, &growth))
            .transpose()?;
        let mut atoms: Vec<Atom> = cfg
            .measure
            .atoms
            .iter()
            .map(|a| Atom {
                position: [a[0], a[1]],
                mass: a[2],
            })
            .collect();
        let mut density = cfg.measure.density.map(|d| GridFunction::constant(grid, d));
        if let Some(file) = &cfg.measure.file {
            let path = cfg.resolve(file);
            let text = std::fs::read_to_string(&path)?;
            let parsed = MeasureData::parse(&text, path.parent())?;
            atoms.extend_from_slice(parsed.atoms());
            if let Some(d) = parsed.density() {
                if d.grid() != &grid {
                    return Err(Error::Shape(format!(
                        "density raster is {}², the cell grid is {}²",
                        d.grid().n(),
                        grid.n()
                    )));
                }
                density = Some(match density {
                    Some(c) => c.zip_map(d, |a, b| a + b)?,
                    None => d.clone(),
                });
            }
        }
        let measure = MeasureData::new(atoms, density)?.scaled(cell.scale);
        measure.check_inside(&grid)?;
        let solver = SolverConfig {
            epsilon: cell.epsilon,
            ..cfg.solver.to_config()?
        };
        solver.validate()?;
        let field =
            VectorField::on_domain(growth.clone(), coefficient, cfg.grid.origin, cfg.grid.side);
        Ok(Self {
            cell: *cell,
            grid,
            field,
            orlicz: OrliczG::new(growth),
            obstacle,
            obstacle_density,
            measure,
            boundary,
            solver,
            center: cfg.checks.center,
            points: cfg.checks.points,
            exclusion: 2.0 * cfg.coarsest_h(),
        })
    }

    pub fn growth(&self) -> &GrowthFunction {
        self.field.growth()
    }

    pub fn ig(&self) -> f64 {
        self.growth().ig()
    }

    pub fn sg(&self) -> f64 {
        self.growth().sg()
    }

    pub fn radius(&self) -> f64 {
        self.cell.radius
    }

    pub fn ball(&self) -> Ball {
        Ball::new(self.center, self.cell.radius)
    }

    pub fn has_atoms(&self) -> bool {
        !self.measure.atoms().is_empty()
    }

    pub fn operator(&self) -> Operator {
        Operator::new(&self.field, &self.grid, self.solver.epsilon)
    }

    /// The problem with the measure kept as is.
    pub fn problem(&self) -> ObstacleProblem {
        ObstacleProblem {
            field: self.field.clone(),
            obstacle: self.obstacle.clone(),
            boundary: self.boundary.clone(),
            rhs: if self.measure.is_zero() {
                Rhs::Zero
            } else {
                Rhs::Measure(self.measure.clone())
            },
        }
    }

    /// The solver right-hand side: mollified at the cell level when atoms
    /// are present, the density itself otherwise.
    pub fn rhs_density(&self) -> Result<Option<GridFunction>> {
        if self.has_atoms() {
            mollify_measure(&self.measure, &self.grid, self.cell.level).map(Some)
        } else {
            Ok(self.measure.density().cloned())
        }
    }

    /// The approximating solution at the cell level on the whole grid.
    pub fn approximable(&self) -> Result<Solution> {
        let mut prob = self.problem();
        prob.rhs = match self.rhs_density()? {
            Some(f) => Rhs::Density(f),
            None => Rhs::Zero,
        };
        solve_vi(&prob, &self.solver)
    }

    /// `G(|Dψ|) + G(|ψ|)`, or `None` without an obstacle.
    pub fn psi_energy(&self) -> Option<GridFunction> {
        let psi = self.obstacle.as_ref()?;
        let dpsi = psi.gradient().norm();
        let big_g = |t: f64| self.orlicz.value(t.abs());
        Some(
            dpsi.zip_map(psi, |d, v| big_g(d) + big_g(v))
                .expect("same grid"),
        )
    }

    /// `G⁻¹[avg_B (G(|Dψ|) + G(|ψ|))]`; zero without an obstacle.
    pub fn psi_term(&self, energy: Option<&GridFunction>, ball: &Ball) -> Result<f64> {
        match energy {
            None => Ok(0.0),
            Some(e) => self.orlicz.inverse(e.ball_average_unchecked(ball).max(0.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac_cfg() -> ExperimentConfig {
        r#"
            [measure]
            atoms = [[0.5, 0.5, 1.0]]
            [boundary]
            kind = "fundamental"
            center = [0.5, 0.5]
            mass = 1.0
            offset = 0.0
        "#
        .parse()
        .unwrap()
    }

    #[test]
    fn covariant_scaling() {
        let mut cfg = dirac_cfg();
        cfg.growth = GrowthSpec::Power { p: 3.0 };
        cfg.obstacle = ObstacleSpec::Affine {
            slope: [0.0, 0.0],
            offset: -5.0,
        };
        let base = Instance::build(&cfg, &cfg.base_cell()).unwrap();
        let cell = Cell {
            scale: 16.0,
            ..cfg.base_cell()
        };
        let big = Instance::build(&cfg, &cell).unwrap();
        assert_eq!(big.measure.total_variation(), 16.0);
        let k = base.grid.index(3, 40);
        assert!((big.boundary.values()[k] - 4.0 * base.boundary.values()[k]).abs() < 1e-12);
        assert!((big.obstacle.as_ref().unwrap().values()[k] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn fundamental_trace_has_the_flux() {
        for p in [2.0, 3.0, 4.0] {
            let mut cfg = dirac_cfg();
            cfg.growth = GrowthSpec::Power { p };
            let g = GrowthFunction::power(p).unwrap();
            let f = boundary_fn(&cfg.boundary, &g, &build_coefficient(&cfg).unwrap()).unwrap();
            let (r, dr) = (0.3, 1e-6);
            let slope = (f([0.5 + r + dr, 0.5]) - f([0.5 + r - dr, 0.5])) / (2.0 * dr);
            // g(|u'|) = 1/(2πr)
            assert!(
                (g.g(slope.abs()) - 1.0 / (2.0 * PI * r)).abs() < 1e-6,
                "p = {p}"
            );
            assert!(slope < 0.0);
        }
    }

    #[test]
    fn rhs_is_mollified_with_unit_mass() {
        let cfg = dirac_cfg();
        let inst = Instance::build(&cfg, &cfg.base_cell()).unwrap();
        let f = inst.rhs_density().unwrap().unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-10);
        assert!(matches!(inst.problem().rhs, Rhs::Measure(_)));
    }

    #[test]
    fn fundamental_needs_power_growth() {
        let mut cfg = dirac_cfg();
        cfg.growth = GrowthSpec::Regularized { p: 3.0, mu: 1.0 };
        assert!(matches!(
            Instance::build(&cfg, &cfg.base_cell()),
            Err(Error::Config(_))
        ));
    }
}

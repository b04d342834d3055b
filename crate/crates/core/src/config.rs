//! Run configuration: a TOML file with fixed sections, validated before any solve.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alifanov::{CostMode, Discrepancy, DpThreshold, StoppingRule};
use crate::benchmarks::{AnalyticalCase, IndustrialCase, InverseSetup, Method};
use crate::error::{Error, Result};
use crate::fvm::RobinTreatment;
use crate::grid::{PatchId, StructuredGrid};
use crate::linalg::{PcgOptions, PreconditionerKind};
use crate::measurements::place_lattice;
use crate::rbf_param::Regularization;
use crate::solvers::PhysicalCase;

pub const ANALYTICAL_PRESET: &str = include_str!("../presets/analytical.toml");
pub const INDUSTRIAL_PRESET: &str = include_str!("../presets/industrial.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Analytical,
    Industrial,
    /// User geometry and readings; no reference flux.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub kind: BenchmarkKind,
    /// `[a, b, c]` of the analytical solution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<[f64; 3]>,
    /// Industrial only: synthesize readings on this grid instead of the inversion grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis_cells: Option<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub cells: [usize; 3],
    pub size: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub conductivity: f64,
    pub heat_transfer_coefficient: f64,
    #[serde(default)]
    pub robin: RobinTreatment,
    /// Custom only: uniform coolant temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coolant_temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane_y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<[usize; 2]>,
    /// CSV with `x,y,z` and optionally `value` columns. Overrides the lattice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Param,
    Alifanov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub kind: MethodKind,
    pub eta: f64,
    /// `lu` or `tsvd:<alpha>`.
    pub reg: String,
    #[serde(default)]
    pub g0: f64,
    pub j_tol: f64,
    pub max_iter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_change_tol: Option<f64>,
    /// Stop the iteration by the discrepancy principle with the noise ω.
    #[serde(default)]
    pub discrepancy: bool,
    #[serde(default)]
    pub dp_threshold: DpThreshold,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    J1,
    J2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub mode: CostKind,
    #[serde(default)]
    pub p_g: f64,
    /// Measured total heat; the benchmark's exact value when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub omega: f64,
    pub omegas: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub levels: Vec<usize>,
    pub etas: Vec<f64>,
    pub pg_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: BenchmarkSection,
    pub grid: GridSection,
    pub physics: PhysicsSection,
    pub sensors: SensorSection,
    pub method: MethodSection,
    pub cost: CostSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub study: StudySection,
    pub output: OutputSection,
}

/// A ready inverse problem. `has_truth` is false for custom runs, whose
/// `reference` is zero and whose error norms are meaningless.
#[derive(Debug, Clone)]
pub struct Problem {
    pub setup: InverseSetup,
    pub has_truth: bool,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "analytical" => Self::parse(ANALYTICAL_PRESET),
            "industrial" => Self::parse(INDUSTRIAL_PRESET),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected 'analytical' or 'industrial')"
            ))),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn regularization(&self) -> Result<Regularization> {
        self.method.reg.parse()
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.cells.contains(&0) {
            return Err(Error::Config("grid cells must be positive".into()));
        }
        for (i, s) in self.grid.size.iter().enumerate() {
            positive(&format!("grid.size[{i}]"), *s)?;
        }
        positive("physics.conductivity", self.physics.conductivity)?;
        positive("physics.heat_transfer_coefficient", self.physics.heat_transfer_coefficient)?;
        positive("method.eta", self.method.eta)?;
        self.regularization()?;
        if !(self.method.j_tol >= 0.0) {
            return Err(Error::Config("method.j_tol must be non-negative".into()));
        }
        if !(self.noise.omega >= 0.0) || self.noise.omegas.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if !(self.cost.p_g >= 0.0) || self.study.pg_values.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("total-heat weights must be non-negative".into()));
        }
        if self.study.etas.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("study.etas must be positive".into()));
        }
        if self.study.levels.windows(2).any(|w| w[0] >= w[1]) || self.study.levels.contains(&0) {
            return Err(Error::Config("study.levels must be positive and ascending".into()));
        }
        positive("solver.tol", self.solver.tol)?;
        if self.sensors.file.is_none() {
            match (self.sensors.plane_y, self.sensors.counts) {
                (Some(y), Some(_)) => positive("sensors.plane_y", y)?,
                _ => {
                    return Err(Error::Config(
                        "sensors need either 'file' or both 'plane_y' and 'counts'".into(),
                    ))
                }
            }
        }
        if self.benchmark.kind == BenchmarkKind::Custom {
            if self.physics.coolant_temperature.is_none() {
                return Err(Error::Config("custom benchmark needs physics.coolant_temperature".into()));
            }
            if self.sensors.file.is_none() {
                return Err(Error::Config("custom benchmark needs sensors.file with readings".into()));
            }
        }
        self.stopping_rule().validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn pcg(&self) -> PcgOptions {
        PcgOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            preconditioner: self.solver.preconditioner,
        }
    }

    pub fn analytical(&self) -> AnalyticalCase {
        let [a, b, c] = self.benchmark.coefficients.unwrap_or([5.0, 10.0, 15.0]);
        AnalyticalCase {
            a,
            b,
            c,
            k: self.physics.conductivity,
            h: self.physics.heat_transfer_coefficient,
            size: self.grid.size,
        }
    }

    pub fn industrial(&self) -> IndustrialCase {
        IndustrialCase {
            k: self.physics.conductivity,
            h: self.physics.heat_transfer_coefficient,
            size: self.grid.size,
            cells: self.grid.cells,
            sensor_plane: self.sensors.plane_y.unwrap_or(0.02),
            sensor_counts: self.sensors.counts.unwrap_or([10, 10]),
        }
    }

    /// Stopping rule; the discrepancy ω and sensor count are filled in per run.
    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            j_tol: self.method.j_tol,
            max_iter: self.method.max_iter,
            rel_change_tol: self.method.rel_change_tol,
            discrepancy: self.method.discrepancy.then_some(Discrepancy {
                omega: self.noise.omega,
                sensors: 1,
                threshold: self.method.dp_threshold,
            }),
            restart_every: self.method.restart_every,
        }
    }

    pub fn method(&self) -> Result<Method> {
        Ok(match self.method.kind {
            MethodKind::Param => Method::Param {
                eta: self.method.eta,
                reg: self.regularization()?,
            },
            MethodKind::Alifanov => Method::Alifanov {
                rule: self.stopping_rule(),
                g0: self.method.g0,
            },
        })
    }

    pub fn cost_mode(&self, total_heat: f64) -> CostMode {
        match self.cost.mode {
            CostKind::J1 => CostMode::J1,
            CostKind::J2 => CostMode::J2 {
                p_g: self.cost.p_g,
                g_hat: self.cost.g_hat.unwrap_or(total_heat),
            },
        }
    }

    fn grid(&self) -> Result<StructuredGrid> {
        let [nx, ny, nz] = self.grid.cells;
        let [lx, ly, lz] = self.grid.size;
        StructuredGrid::new(nx, ny, nz, lx, ly, lz)
    }

    /// Direct problem with the benchmark's true flux (zero for custom runs).
    pub fn physical_case(&self) -> Result<PhysicalCase> {
        let mut case = match self.benchmark.kind {
            BenchmarkKind::Analytical => self.analytical().physical_case(self.grid.cells)?,
            BenchmarkKind::Industrial => self.industrial().physical_case()?,
            BenchmarkKind::Custom => {
                let grid = self.grid()?;
                let t_f = vec![self.physics.coolant_temperature.unwrap_or(0.0); grid.patch_face_count(PatchId::SF)];
                PhysicalCase::new(grid, self.physics.conductivity, self.physics.heat_transfer_coefficient, t_f)?
            }
        };
        case = case.with_robin(self.physics.robin);
        case.pcg = self.pcg();
        Ok(case)
    }

    fn sensor_file(&self) -> Result<Option<(Vec<crate::grid::Point>, Option<Vec<f64>>)>> {
        let Some(path) = &self.sensors.file else { return Ok(None) };
        crate::io::csv::read_sensor_file(path).map(Some)
    }

    /// Sensors, clean readings and reference flux for the configured benchmark.
    pub fn problem(&self) -> Result<Problem> {
        let case = self.physical_case()?;
        let file = self.sensor_file()?;
        let lattice = |grid: &StructuredGrid| -> Result<Vec<crate::grid::Point>> {
            let [cx, cz] = self.sensors.counts.unwrap_or([4, 4]);
            place_lattice(self.sensors.plane_y.unwrap_or(0.2), cx, cz, grid)
        };
        let (sensors, given) = match file {
            Some((p, v)) => (p, v),
            None => (lattice(case.grid())?, None),
        };
        let (clean, reference, total_heat, has_truth) = match self.benchmark.kind {
            BenchmarkKind::Analytical => {
                let an = self.analytical();
                let clean = sensors.iter().map(|&p| an.t_an(p)).collect();
                (clean, an.true_flux(case.grid()), an.total_heat(), true)
            }
            BenchmarkKind::Industrial => {
                let ind = self.industrial();
                let clean = match self.benchmark.synthesis_cells {
                    Some(cells) if cells != self.grid.cells => {
                        let mut fine = ind.physical_case_with(cells)?.with_robin(self.physics.robin);
                        fine.pcg = self.pcg();
                        crate::solvers::solve_direct(&fine)?.sample_points(fine.grid(), &sensors)?
                    }
                    _ => crate::solvers::solve_direct(&case)?.sample_points(case.grid(), &sensors)?,
                };
                (clean, ind.true_flux(case.grid()), ind.total_heat(), true)
            }
            BenchmarkKind::Custom => {
                let values = given
                    .clone()
                    .ok_or_else(|| Error::Config("custom sensors file has no 'value' column".into()))?;
                let n = case.flux_len();
                (values, vec![0.0; n], self.cost.g_hat.unwrap_or(0.0), false)
            }
        };
        // Readings in the file replace synthetic ones for the benchmarks too.
        let clean = given.unwrap_or(clean);
        crate::measurements::MeasurementSet::new(sensors.clone(), clean.clone())?.check_inside(case.grid())?;
        Ok(Problem {
            setup: InverseSetup {
                case,
                sensors,
                clean,
                reference,
                total_heat,
            },
            has_truth,
        })
    }
}

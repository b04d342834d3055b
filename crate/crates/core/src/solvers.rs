//! The four elliptic solves used by the inverse methods, plus cost functionals.
//!
//! All four problems share one stiffness matrix (same grid, `k`, and Robin
//! coefficient on `S_F`), so a [`PhysicalCase`] assembles and preconditions it
//! once and reuses it for every right-hand side.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::fvm::{self, BoundaryCondition, BoundarySpec, DiracRule, RobinTreatment};
use crate::grid::{Point, PatchId, StructuredGrid};
use crate::linalg::{pcg_with, CsrMatrix, PcgOptions, Preconditioner};
use crate::measurements::MeasurementSet;

#[derive(Debug)]
struct Operator {
    matrix: CsrMatrix,
    precond: Preconditioner,
}

/// Geometry, material data and boundary data of the direct problem.
#[derive(Debug, Clone)]
pub struct PhysicalCase {
    grid: StructuredGrid,
    k: f64,
    h: f64,
    /// Coolant temperature on `S_F` faces (K).
    pub t_f: Vec<f64>,
    /// Heat flux on `S_IN` faces (W/m²).
    pub g: Vec<f64>,
    /// Prescribed outward flux on the four exterior faces, in [`PatchId::EXTERIOR`] order.
    pub exterior_flux: [Vec<f64>; 4],
    robin: RobinTreatment,
    pub pcg: PcgOptions,
    pub dirac_rule: DiracRule,
    operator: OnceLock<Arc<Operator>>,
}

impl PhysicalCase {
    /// Case with `g = 0` and adiabatic exterior faces.
    pub fn new(grid: StructuredGrid, k: f64, h: f64, t_f: Vec<f64>) -> Result<Self> {
        Self::with_robin_treatment(grid, k, h, t_f, RobinTreatment::default())
    }

    pub fn with_robin_treatment(
        grid: StructuredGrid,
        k: f64,
        h: f64,
        t_f: Vec<f64>,
        robin: RobinTreatment,
    ) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("conductivity must be positive, got {k}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("heat transfer coefficient must be positive, got {h}")));
        }
        let n_f = grid.patch_face_count(PatchId::SF);
        if t_f.len() != n_f {
            return Err(Error::invalid(format!("T_f has {} values, S_F has {n_f} faces", t_f.len())));
        }
        let g = vec![0.0; grid.patch_face_count(PatchId::SIn)];
        let exterior_flux = PatchId::EXTERIOR.map(|p| vec![0.0; grid.patch_face_count(p)]);
        Ok(PhysicalCase {
            grid,
            k,
            h,
            t_f,
            g,
            exterior_flux,
            robin,
            pcg: PcgOptions::default(),
            dirac_rule: DiracRule::default(),
            operator: OnceLock::new(),
        })
    }

    /// Same case with another Robin face treatment.
    pub fn with_robin(mut self, robin: RobinTreatment) -> Self {
        if robin != self.robin {
            self.robin = robin;
            self.operator = OnceLock::new();
        }
        self
    }

    pub fn with_flux(mut self, g: Vec<f64>) -> Result<Self> {
        self.check_flux(&g)?;
        self.g = g;
        Ok(self)
    }

    pub fn with_exterior_flux(mut self, patch: PatchId, q: Vec<f64>) -> Result<Self> {
        let idx = PatchId::EXTERIOR
            .iter()
            .position(|&p| p == patch)
            .ok_or_else(|| Error::invalid(format!("{} is not an exterior patch", patch.name())))?;
        if q.len() != self.grid.patch_face_count(patch) {
            return Err(Error::invalid(format!("flux on {} has wrong length {}", patch.name(), q.len())));
        }
        self.exterior_flux[idx] = q;
        Ok(self)
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }
    pub fn conductivity(&self) -> f64 {
        self.k
    }
    pub fn heat_transfer_coefficient(&self) -> f64 {
        self.h
    }
    pub fn robin_treatment(&self) -> RobinTreatment {
        self.robin
    }

    pub fn flux_len(&self) -> usize {
        self.grid.patch_face_count(PatchId::SIn)
    }

    fn check_flux(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.flux_len() {
            return Err(Error::invalid(format!(
                "flux field has {} values, S_IN has {} faces",
                g.len(),
                self.flux_len()
            )));
        }
        Ok(())
    }

    fn operator(&self) -> Result<Arc<Operator>> {
        if let Some(op) = self.operator.get() {
            return Ok(op.clone());
        }
        let matrix = fvm::assemble_matrix(&self.grid, self.k, &[(PatchId::SF, self.h)], self.robin)?;
        let precond = Preconditioner::new(&matrix, self.pcg.preconditioner)?;
        let op = Arc::new(Operator { matrix, precond });
        Ok(self.operator.get_or_init(|| op).clone())
    }

    /// Boundary data of the direct problem with `g` on `S_IN` and `ambient` on `S_F`.
    /// Boundary data with `g` on `S_IN`, `ambient` on `S_F` and the exterior flux scaled by `exterior`.
    fn boundary_spec(&self, g: Option<&[f64]>, ambient: Vec<f64>, exterior: f64) -> BoundarySpec {
        let mut bcs = BoundarySpec::adiabatic().with(PatchId::SF, BoundaryCondition::Robin { h: self.h, ambient });
        if let Some(g) = g {
            bcs.set(PatchId::SIn, BoundaryCondition::Neumann(g.to_vec()));
        }
        if exterior != 0.0 {
            for (p, q) in PatchId::EXTERIOR.iter().zip(&self.exterior_flux) {
                if q.iter().any(|&v| v != 0.0) {
                    bcs.set(*p, BoundaryCondition::Neumann(q.iter().map(|v| exterior * v).collect()));
                }
            }
        }
        bcs
    }

    fn solve_rhs(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let op = self.operator()?;
        Ok(pcg_with(&op.matrix, &op.precond, rhs, &self.pcg)?.x)
    }

    fn solve_bcs(&self, bcs: &BoundarySpec, points: &[(Point, f64)]) -> Result<Vec<f64>> {
        let mut rhs = fvm::assemble_rhs(&self.grid, self.k, bcs, None, self.robin)?;
        fvm::deposit_point_sources(&mut rhs, &self.grid, points, self.dirac_rule)?;
        self.solve_rhs(&rhs)
    }

    pub fn stiffness(&self) -> Result<CsrMatrix> {
        Ok(self.operator()?.matrix.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Temperature,
    Sensitivity,
    Adjoint,
    Additive,
}

/// Cell-wise values on the case grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureField {
    pub role: FieldRole,
    pub values: Vec<f64>,
}

impl TemperatureField {
    pub fn sample(&self, grid: &StructuredGrid, p: Point) -> Result<f64> {
        Ok(grid.trilinear_stencil(p)?.apply(&self.values))
    }

    pub fn sample_points(&self, grid: &StructuredGrid, points: &[Point]) -> Result<Vec<f64>> {
        points.iter().map(|&p| self.sample(grid, p)).collect()
    }

    /// Value of the adjacent cell for every face of `patch`.
    pub fn patch_trace(&self, grid: &StructuredGrid, patch: PatchId) -> Vec<f64> {
        (0..grid.patch_face_count(patch))
            .map(|f| self.values[grid.patch_face_cell(patch, f)])
            .collect()
    }
}

/// Direct problem for the flux stored in the case.
pub fn solve_direct(case: &PhysicalCase) -> Result<TemperatureField> {
    solve_direct_with_flux(case, &case.g)
}

/// Direct problem with `g` replacing the case flux on `S_IN`.
pub fn solve_direct_with_flux(case: &PhysicalCase, g: &[f64]) -> Result<TemperatureField> {
    case.check_flux(g)?;
    let bcs = case.boundary_spec(Some(g), case.t_f.clone(), 1.0);
    Ok(TemperatureField {
        role: FieldRole::Temperature,
        values: case.solve_bcs(&bcs, &[])?,
    })
}

/// Response to a flux perturbation: zero exterior flux and zero ambient.
pub fn solve_sensitivity(case: &PhysicalCase, delta_g: &[f64]) -> Result<TemperatureField> {
    case.check_flux(delta_g)?;
    let bcs = case.boundary_spec(Some(delta_g), vec![0.0; case.t_f.len()], 0.0);
    Ok(TemperatureField {
        role: FieldRole::Sensitivity,
        values: case.solve_bcs(&bcs, &[])?,
    })
}

/// Adjoint problem with point sources of strength `T(x_i) - T̂(x_i)`.
pub fn solve_adjoint(case: &PhysicalCase, residuals: &[(Point, f64)]) -> Result<TemperatureField> {
    let bcs = case.boundary_spec(None, vec![0.0; case.t_f.len()], 0.0);
    Ok(TemperatureField {
        role: FieldRole::Adjoint,
        values: case.solve_bcs(&bcs, residuals)?,
    })
}

/// Additive problem: zero flux on `S_IN`, every other datum negated.
///
/// With insulated exterior faces this is the Robin problem with ambient `-T_f`.
/// Carrying `-q` on the exterior faces keeps `T[Σ w_j φ_j] = Σ w_j (T[φ_j] + T_ad) - T_ad`
/// valid when those faces have prescribed flux.
pub fn solve_additive(case: &PhysicalCase) -> Result<TemperatureField> {
    let ambient = case.t_f.iter().map(|t| -t).collect();
    let bcs = case.boundary_spec(None, ambient, -1.0);
    Ok(TemperatureField {
        role: FieldRole::Additive,
        values: case.solve_bcs(&bcs, &[])?,
    })
}

/// Midpoint-rule integral of a face field over a patch.
pub fn patch_integral(grid: &StructuredGrid, patch: PatchId, values: &[f64]) -> f64 {
    grid.patch_face_area(patch) * values.iter().sum::<f64>()
}

/// Area-weighted inner product of two face fields on a patch.
pub fn patch_inner(grid: &StructuredGrid, patch: PatchId, a: &[f64], b: &[f64]) -> f64 {
    grid.patch_face_area(patch) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Sensor residuals `T(x_i) - T̂_i`.
pub fn residuals(t: &TemperatureField, grid: &StructuredGrid, sensors: &MeasurementSet) -> Result<Vec<f64>> {
    Ok(t.sample_points(grid, &sensors.points)?
        .iter()
        .zip(&sensors.values)
        .map(|(a, b)| a - b)
        .collect())
}

pub fn eval_j1(t: &TemperatureField, grid: &StructuredGrid, sensors: &MeasurementSet) -> Result<f64> {
    if sensors.is_empty() {
        return Err(Error::invalid("cost functional needs at least one sensor"));
    }
    Ok(0.5 * residuals(t, grid, sensors)?.iter().map(|r| r * r).sum::<f64>())
}

/// `J1` plus the weighted total-heat mismatch `p_g/2 (∫g - Ĝ)²`.
pub fn eval_j2(
    t: &TemperatureField,
    grid: &StructuredGrid,
    sensors: &MeasurementSet,
    g: &[f64],
    g_hat: f64,
    p_g: f64,
) -> Result<f64> {
    if !(p_g >= 0.0) {
        return Err(Error::invalid(format!("total-heat weight must be non-negative, got {p_g}")));
    }
    let mismatch = patch_integral(grid, PatchId::SIn, g) - g_hat;
    Ok(eval_j1(t, grid, sensors)? + 0.5 * p_g * mismatch * mismatch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_case(n: usize, t_f: f64) -> PhysicalCase {
        let grid = StructuredGrid::cube(n).unwrap();
        let nf = grid.patch_face_count(PatchId::SF);
        PhysicalCase::new(grid, 3.0, 5.0, vec![t_f; nf]).unwrap()
    }

    #[test]
    fn uniform_coolant_gives_uniform_temperature() {
        let case = uniform_case(6, 300.0);
        let t = solve_direct(&case).unwrap();
        assert!(t.values.iter().all(|v| (v - 300.0).abs() < 1e-8));
        let ad = solve_additive(&case).unwrap();
        assert!(ad.values.iter().all(|v| (v + 300.0).abs() < 1e-8));
    }

    #[test]
    fn zero_data_gives_zero_fields() {
        let case = uniform_case(5, 0.0);
        let dg = vec![0.0; case.flux_len()];
        assert!(solve_sensitivity(&case, &dg).unwrap().values.iter().all(|&v| v == 0.0));
        let lam = solve_adjoint(&case, &[([0.5, 0.5, 0.5], 0.0)]).unwrap();
        assert!(lam.values.iter().all(|&v| v == 0.0));
        assert!(solve_additive(&case).unwrap().values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_positive_for_positive_residual() {
        let case = uniform_case(20, 0.0);
        let lam = solve_adjoint(&case, &[([0.43, 0.37, 0.61], 1.0)]).unwrap();
        let min = lam.values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.0, "min {min}");
        let lam2 = solve_adjoint(&case, &[([0.43, 0.37, 0.61], 2.5)]).unwrap();
        for (a, b) in lam.values.iter().zip(&lam2.values) {
            assert!((2.5 * a - b).abs() <= 1e-9 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn sensitivity_superposition() {
        let case = uniform_case(8, 10.0);
        let g = case.grid().clone();
        let d1 = g.sample_patch(PatchId::SIn, |p| p[0] * 4.0);
        let d2 = g.sample_patch(PatchId::SIn, |p| (3.0 * p[2]).sin());
        let d12: Vec<f64> = d1.iter().zip(&d2).map(|(a, b)| a + b).collect();
        let t1 = solve_sensitivity(&case, &d1).unwrap();
        let t2 = solve_sensitivity(&case, &d2).unwrap();
        let t12 = solve_sensitivity(&case, &d12).unwrap();
        let scale = t12.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..t1.values.len() {
            assert!((t1.values[i] + t2.values[i] - t12.values[i]).abs() < 1e-9 * scale);
        }
    }

    #[test]
    fn j1_and_j2_examples() {
        let grid = StructuredGrid::cube(4).unwrap();
        let t = TemperatureField {
            role: FieldRole::Temperature,
            values: grid.sample_cells(|p| 10.0 + p[0]),
        };
        let pts: Vec<Point> = vec![[0.5, 0.5, 0.5]];
        let exact = t.sample_points(&grid, &pts).unwrap();
        let s = MeasurementSet::new(pts.clone(), exact.clone()).unwrap();
        assert_eq!(eval_j1(&t, &grid, &s).unwrap(), 0.0);
        let s = MeasurementSet::new(pts, vec![exact[0] - 2.0]).unwrap();
        assert!((eval_j1(&t, &grid, &s).unwrap() - 2.0).abs() < 1e-12);

        let pts: Vec<Point> = (0..16).map(|i| [0.1 + 0.05 * i as f64, 0.4, 0.6]).collect();
        let vals: Vec<f64> = t.sample_points(&grid, &pts).unwrap().iter().map(|v| v + 0.3).collect();
        let s = MeasurementSet::new(pts, vals).unwrap();
        assert!((eval_j1(&t, &grid, &s).unwrap() - 8.0 * 0.09).abs() < 1e-12);

        let gfield = vec![2.0; grid.patch_face_count(PatchId::SIn)];
        let j1 = eval_j1(&t, &grid, &s).unwrap();
        assert_eq!(eval_j2(&t, &grid, &s, &gfield, 123.0, 0.0).unwrap(), j1);
        assert!((eval_j2(&t, &grid, &s, &gfield, 2.0, 7.0).unwrap() - j1).abs() < 1e-12);
    }
}

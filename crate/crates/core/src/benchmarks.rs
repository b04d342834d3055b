//! The analytical and industrial benchmark cases, error norms and study drivers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alifanov::{self, CostMode, StoppingRule};
use crate::error::{Error, Result};
use crate::grid::{PatchId, Point, StructuredGrid};
use crate::linalg::{condition_number, svd_decompose, DEFAULT_RANK_TOL};
use crate::measurements::{add_noise_stream, place_lattice};
use crate::rbf_param::{build_offline, online_solve, reconstruct_flux, OfflineArtifact, RbfBasis, Regularization};
use crate::solvers::{patch_integral, solve_direct, solve_direct_with_flux, PhysicalCase};

/// Closed-form benchmark on a box with a quadratic harmonic solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticalCase {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub h: f64,
    /// `[L, W, H]` along x, y, z.
    pub size: [f64; 3],
}

impl Default for AnalyticalCase {
    fn default() -> Self {
        AnalyticalCase {
            a: 5.0,
            b: 10.0,
            c: 15.0,
            k: 3.0,
            h: 5.0,
            size: [1.0, 1.0, 1.0],
        }
    }
}

impl AnalyticalCase {
    pub fn t_an(&self, p: Point) -> f64 {
        let [x, y, z] = p;
        self.a * x * x + self.b * x * y + self.c * y - self.a * z * z + self.c
    }

    pub fn g_an(&self, p: Point) -> f64 {
        self.k * (self.b * p[0] + self.c)
    }

    /// Outward flux `-k ∂T/∂n` prescribed on an exterior patch.
    pub fn exterior_flux(&self, patch: PatchId, p: Point) -> f64 {
        let [l, _, h] = self.size;
        match patch {
            PatchId::SExI => 2.0 * self.k * self.a * h,
            PatchId::SExII => -self.k * (2.0 * self.a * l + self.b * p[1]),
            PatchId::SExIII => 0.0,
            PatchId::SExIV => self.k * self.b * p[1],
            PatchId::SIn => self.g_an(p),
            PatchId::SF => f64::NAN,
        }
    }

    /// Coolant temperature making `T_an` satisfy the Robin condition on `y = W`.
    pub fn t_f(&self, p: Point) -> f64 {
        let [x, _, z] = p;
        let w = self.size[1];
        self.k * (self.b * x + self.c) / self.h + self.a * x * x + self.c * w - self.a * z * z + self.b * x * w + self.c
    }

    /// `∫ g_an dΓ` over `S_IN`.
    pub fn total_heat(&self) -> f64 {
        let [l, _, h] = self.size;
        self.k * (self.b * l * l / 2.0 + self.c * l) * h
    }

    pub fn grid(&self, cells: [usize; 3]) -> Result<StructuredGrid> {
        StructuredGrid::new(cells[0], cells[1], cells[2], self.size[0], self.size[1], self.size[2])
    }

    /// Direct problem on a grid with `cells`; the case flux is `g_an`.
    pub fn physical_case(&self, cells: [usize; 3]) -> Result<PhysicalCase> {
        let grid = self.grid(cells)?;
        let t_f = grid.sample_patch(PatchId::SF, |p| self.t_f(p));
        let g = self.true_flux(&grid);
        let mut case = PhysicalCase::new(grid.clone(), self.k, self.h, t_f)?.with_flux(g)?;
        for p in PatchId::EXTERIOR {
            case = case.with_exterior_flux(p, grid.sample_patch(p, |x| self.exterior_flux(p, x)))?;
        }
        Ok(case)
    }

    pub fn true_flux(&self, grid: &StructuredGrid) -> Vec<f64> {
        grid.sample_patch(PatchId::SIn, |p| self.g_an(p))
    }

    /// `count` sensors (a perfect square) on the plane `y = 0.2`.
    pub fn sensor_points(&self, grid: &StructuredGrid, count: usize) -> Result<Vec<Point>> {
        let side = (count as f64).sqrt().round() as usize;
        if side * side != count || count == 0 {
            return Err(Error::invalid(format!("sensor count {count} is not a positive perfect square")));
        }
        place_lattice(0.2, side, side, grid)
    }

    /// Inverse problem with `T̂ = T_an` at the sensors and `Ĝ = ∫ g_an`.
    pub fn inverse_setup(&self, cells: [usize; 3], sensors: usize) -> Result<InverseSetup> {
        let case = self.physical_case(cells)?;
        let points = self.sensor_points(case.grid(), sensors)?;
        let clean = points.iter().map(|&p| self.t_an(p)).collect();
        let reference = self.true_flux(case.grid());
        Ok(InverseSetup {
            case,
            sensors: points,
            clean,
            reference,
            total_heat: self.total_heat(),
        })
    }
}

/// Mold plate with a prescribed coolant profile and flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndustrialCase {
    pub k: f64,
    pub h: f64,
    pub size: [f64; 3],
    pub cells: [usize; 3],
    pub sensor_plane: f64,
    pub sensor_counts: [usize; 2],
}

impl Default for IndustrialCase {
    fn default() -> Self {
        Self::desk()
    }
}

impl IndustrialCase {
    pub const FULL_CELLS: [usize; 3] = [200, 50, 100];
    pub const DESK_CELLS: [usize; 3] = [100, 25, 50];

    pub fn desk() -> Self {
        IndustrialCase {
            k: 300.0,
            h: 5.66e4,
            size: [2.0, 0.1, 1.2],
            cells: Self::DESK_CELLS,
            sensor_plane: 0.02,
            sensor_counts: [10, 10],
        }
    }

    pub fn full() -> Self {
        IndustrialCase {
            cells: Self::FULL_CELLS,
            ..Self::desk()
        }
    }

    pub fn t_f(&self, p: Point) -> f64 {
        303.0 + 8.0 * (self.size[2] - p[2])
    }

    pub fn g_true(&self, p: Point) -> f64 {
        1e5 * (2.0 * (p[0] - 1.0).powi(2) - 2.0 * p[2] - 5.0)
    }

    /// Exact `∫ g_true dΓ` over `S_IN`.
    pub fn total_heat(&self) -> f64 {
        let [l, _, h] = self.size;
        // ∫(x-1)² dx over [0, L] and ∫ z dz over [0, H]
        let xx = ((l - 1.0).powi(3) + 1.0) / 3.0;
        1e5 * (2.0 * xx * h - 2.0 * l * h * h / 2.0 - 5.0 * l * h)
    }

    pub fn grid_with(&self, cells: [usize; 3]) -> Result<StructuredGrid> {
        StructuredGrid::new(cells[0], cells[1], cells[2], self.size[0], self.size[1], self.size[2])
    }

    pub fn grid(&self) -> Result<StructuredGrid> {
        self.grid_with(self.cells)
    }

    /// Direct problem on `cells`; the case flux is `g_true`.
    pub fn physical_case_with(&self, cells: [usize; 3]) -> Result<PhysicalCase> {
        let grid = self.grid_with(cells)?;
        let t_f = grid.sample_patch(PatchId::SF, |p| self.t_f(p));
        let g = self.true_flux(&grid);
        PhysicalCase::new(grid, self.k, self.h, t_f)?.with_flux(g)
    }

    pub fn physical_case(&self) -> Result<PhysicalCase> {
        self.physical_case_with(self.cells)
    }

    pub fn true_flux(&self, grid: &StructuredGrid) -> Vec<f64> {
        grid.sample_patch(PatchId::SIn, |p| self.g_true(p))
    }

    pub fn sensor_points(&self, grid: &StructuredGrid) -> Result<Vec<Point>> {
        place_lattice(self.sensor_plane, self.sensor_counts[0], self.sensor_counts[1], grid)
    }

    /// Smallest distance between neighbouring sensors.
    pub fn sensor_spacing(&self) -> f64 {
        (self.size[0] / self.sensor_counts[0] as f64).min(self.size[2] / self.sensor_counts[1] as f64)
    }

    /// Inverse problem with readings from a direct solve with `g_true`, on the
    /// inversion grid unless `synthesis_cells` names a different one.
    pub fn inverse_setup(&self, synthesis_cells: Option<[usize; 3]>) -> Result<InverseSetup> {
        let case = self.physical_case()?;
        let points = self.sensor_points(case.grid())?;
        let clean = match synthesis_cells {
            Some(cells) if cells != self.cells => {
                let fine = self.physical_case_with(cells)?;
                solve_direct(&fine)?.sample_points(fine.grid(), &points)?
            }
            _ => solve_direct(&case)?.sample_points(case.grid(), &points)?,
        };
        let reference = self.true_flux(case.grid());
        Ok(InverseSetup {
            case,
            sensors: points,
            clean,
            reference,
            total_heat: self.total_heat(),
        })
    }
}

/// Everything an inversion needs: the direct problem, clean readings and the truth.
#[derive(Debug, Clone)]
pub struct InverseSetup {
    pub case: PhysicalCase,
    pub sensors: Vec<Point>,
    pub clean: Vec<f64>,
    pub reference: Vec<f64>,
    pub total_heat: f64,
}

impl InverseSetup {
    pub fn measurements(&self, values: Vec<f64>) -> Result<crate::measurements::MeasurementSet> {
        Ok(crate::measurements::MeasurementSet::new(self.sensors.clone(), values)?.with_total_heat(self.total_heat))
    }
}

/// Relative error of `g` against `g_ref` on `S_IN`: area-weighted L² and max norm.
pub fn relative_error_norms(grid: &StructuredGrid, g: &[f64], g_ref: &[f64]) -> Result<(f64, f64)> {
    let n = grid.patch_face_count(PatchId::SIn);
    if g.len() != n || g_ref.len() != n {
        return Err(Error::invalid(format!(
            "error norms need fields with {n} faces, got {} and {}",
            g.len(),
            g_ref.len()
        )));
    }
    let area = grid.patch_face_area(PatchId::SIn);
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (f, (a, r)) in g.iter().zip(g_ref).enumerate() {
        if *r == 0.0 {
            return Err(Error::ZeroReference { face: f });
        }
        let e = (a - r) / r;
        sum += area * e * e;
        max = max.max(e.abs());
    }
    Ok((sum.sqrt(), max))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Temperatures reconstructed on every face of the grid from cell values and
/// the boundary data: the mean of the two neighbours inside, and a half-cell
/// extrapolation through the prescribed flux or the Robin condition on the
/// boundary. Returns `(face center, weight, value)`; weights are face area
/// times the distance the face represents, so each axis sums to the volume.
pub fn face_temperatures(case: &PhysicalCase, t: &[f64]) -> Vec<(Point, f64, f64)> {
    let grid = case.grid();
    let d = grid.spacing();
    let k = case.conductivity();
    let h = case.heat_transfer_coefficient();
    let mut out = Vec::new();
    for axis in 0..3 {
        let area = grid.cell_volume() / d[axis];
        for c in 0..grid.cell_count() {
            let ijk = grid.cell_ijk(c);
            if ijk[axis] + 1 < grid.cells[axis] {
                let mut n = ijk;
                n[axis] += 1;
                let c1 = grid.cell_index(n[0], n[1], n[2]);
                let mut p = grid.cell_center(c);
                p[axis] += 0.5 * d[axis];
                out.push((p, area * d[axis], 0.5 * (t[c] + t[c1])));
            }
        }
    }
    for patch in PatchId::ALL {
        let half = 0.5 * d[patch.normal_axis()];
        let area = grid.patch_face_area(patch);
        for f in 0..grid.patch_face_count(patch) {
            let tp = t[grid.patch_face_cell(patch, f)];
            let value = match patch {
                PatchId::SF => {
                    let kd = k / half;
                    (kd * tp + h * case.t_f[f]) / (kd + h)
                }
                PatchId::SIn => tp - case.g[f] * half / k,
                p => {
                    let idx = PatchId::EXTERIOR.iter().position(|&e| e == p).unwrap();
                    tp - case.exterior_flux[idx][f] * half / k
                }
            };
            out.push((grid.patch_face_center(patch, f), area * half, value));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub spacing: f64,
    /// L² error of the face-reconstructed temperature (K·m^{3/2}).
    pub abs_l2: f64,
    pub rel_l2: f64,
    /// L² error of the cell-centre values.
    pub cell_abs_l2: f64,
    pub cell_rel_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Log-log slope of `abs_l2` against spacing.
    pub slope: Option<f64>,
    pub cell_slope: Option<f64>,
}

pub fn convergence_row(an: &AnalyticalCase, n: usize) -> Result<ConvergenceRow> {
    let case = an.physical_case([n, n, n])?;
    let t = solve_direct(&case)?;
    let grid = case.grid();
    let (mut e2, mut r2) = (0.0, 0.0);
    for (p, w, v) in face_temperatures(&case, &t.values) {
        let exact = an.t_an(p);
        e2 += w * (v - exact).powi(2);
        r2 += w * exact * exact;
    }
    let (mut c2, mut cr2) = (0.0, 0.0);
    for (c, v) in t.values.iter().enumerate() {
        let exact = an.t_an(grid.cell_center(c));
        c2 += grid.cell_volume() * (v - exact).powi(2);
        cr2 += grid.cell_volume() * exact * exact;
    }
    // the face sum counts each of the three axes once
    let abs_l2 = (e2 / 3.0).sqrt();
    Ok(ConvergenceRow {
        n,
        spacing: an.size[0] / n as f64,
        abs_l2,
        rel_l2: (e2 / r2).sqrt(),
        cell_abs_l2: c2.sqrt(),
        cell_rel_l2: (c2 / cr2).sqrt(),
    })
}

pub fn run_convergence_study(an: &AnalyticalCase, levels: &[usize]) -> Result<ConvergenceReport> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) || levels[0] == 0 {
        return Err(Error::invalid("levels must be positive and strictly ascending"));
    }
    let rows = levels.iter().map(|&n| convergence_row(an, n)).collect::<Result<Vec<_>>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.spacing).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.abs_l2).collect();
    let ec: Vec<f64> = rows.iter().map(|r| r.cell_abs_l2.max(f64::MIN_POSITIVE)).collect();
    Ok(ConvergenceReport {
        slope: loglog_slope(&h, &e),
        cell_slope: loglog_slope(&h, &ec),
        rows,
    })
}

/// Inverse method and its options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Method {
    Param { eta: f64, reg: Regularization },
    Alifanov { rule: StoppingRule, g0: f64 },
}

/// A method with its per-setup precomputation done.
#[derive(Debug, Clone)]
pub enum Estimator {
    Param { artifact: OfflineArtifact, reg: Regularization },
    Alifanov { rule: StoppingRule, g0: f64 },
}

impl Estimator {
    pub fn prepare(setup: &InverseSetup, method: &Method) -> Result<Self> {
        Ok(match method {
            Method::Param { eta, reg } => {
                let basis = RbfBasis::from_sensors(setup.case.grid(), &setup.sensors, *eta)?;
                Estimator::Param {
                    artifact: build_offline(&setup.case, &basis, &setup.sensors)?,
                    reg: *reg,
                }
            }
            Method::Alifanov { rule, g0 } => Estimator::Alifanov {
                rule: rule.clone(),
                g0: *g0,
            },
        })
    }

    pub fn with_regularization(&self, reg: Regularization) -> Self {
        match self {
            Estimator::Param { artifact, .. } => Estimator::Param {
                artifact: artifact.clone(),
                reg,
            },
            other => other.clone(),
        }
    }

    /// Flux estimate from readings `t_hat`; `omega` feeds the discrepancy principle.
    pub fn estimate(&self, setup: &InverseSetup, t_hat: &[f64], mode: &CostMode, omega: f64) -> Result<Vec<f64>> {
        match self {
            Estimator::Param { artifact, reg } => {
                let w = online_solve(artifact, t_hat, *reg, mode)?;
                reconstruct_flux(&artifact.basis(), setup.case.grid(), &w)
            }
            Estimator::Alifanov { rule, g0 } => {
                let mut rule = rule.clone();
                if let Some(dp) = rule.discrepancy.as_mut() {
                    dp.omega = omega;
                    dp.sensors = setup.sensors.len();
                }
                let sensors = setup.measurements(t_hat.to_vec())?;
                let g0 = vec![*g0; setup.case.flux_len()];
                Ok(alifanov::run(&setup.case, &sensors, &g0, &rule, mode, None)?.g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseStats {
    pub omega: f64,
    pub reps: usize,
    pub mean_l2: f64,
    pub q05_l2: f64,
    pub q95_l2: f64,
    pub mean_linf: f64,
    pub q05_linf: f64,
    pub q95_linf: f64,
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(omega: f64, samples: &[(f64, f64)]) -> NoiseStats {
    let n = samples.len() as f64;
    let mut l2: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut li: Vec<f64> = samples.iter().map(|s| s.1).collect();
    l2.sort_by(f64::total_cmp);
    li.sort_by(f64::total_cmp);
    NoiseStats {
        omega,
        reps: samples.len(),
        mean_l2: l2.iter().sum::<f64>() / n,
        q05_l2: quantile(&l2, 0.05),
        q95_l2: quantile(&l2, 0.95),
        mean_linf: li.iter().sum::<f64>() / n,
        q05_linf: quantile(&li, 0.05),
        q95_linf: quantile(&li, 0.95),
    }
}

/// Error samples of `reps` noisy inversions at one noise level. Repetition
/// `r` draws from stream `r` of `seed`, so results do not depend on threading.
pub fn noise_samples(
    setup: &InverseSetup,
    estimator: &Estimator,
    mode: &CostMode,
    omega: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let t_hat = add_noise_stream(&setup.clean, omega, seed, r)?;
            let g = estimator.estimate(setup, &t_hat, mode, omega)?;
            relative_error_norms(setup.case.grid(), &g, &setup.reference)
        })
        .collect()
}

pub fn run_noise_study(
    setup: &InverseSetup,
    estimator: &Estimator,
    mode: &CostMode,
    omegas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<NoiseStats>> {
    if reps < 2 {
        return Err(Error::invalid("a noise study needs at least two repetitions"));
    }
    omegas
        .iter()
        .map(|&w| Ok(summarize(w, &noise_samples(setup, estimator, mode, w, reps, seed)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PgRow {
    pub p_g: f64,
    pub l2: f64,
    pub linf: f64,
    /// `|∫g dΓ - Ĝ| / |Ĝ|`.
    pub total_heat_rel_err: f64,
}

/// J2 inversions of the clean readings for each weight, with `Ĝ` from the setup.
pub fn run_pg_sweep(setup: &InverseSetup, estimator: &Estimator, pg_values: &[f64]) -> Result<Vec<PgRow>> {
    let grid = setup.case.grid();
    pg_values
        .iter()
        .map(|&p_g| {
            if !(p_g >= 0.0) {
                return Err(Error::invalid(format!("p_g must be non-negative, got {p_g}")));
            }
            let mode = CostMode::J2 { p_g, g_hat: setup.total_heat };
            let g = estimator.estimate(setup, &setup.clean, &mode, 0.0)?;
            let (l2, linf) = relative_error_norms(grid, &g, &setup.reference)?;
            let total = patch_integral(grid, PatchId::SIn, &g);
            Ok(PgRow {
                p_g,
                l2,
                linf,
                total_heat_rel_err: ((total - setup.total_heat) / setup.total_heat).abs(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaRow {
    pub eta: f64,
    pub l2: f64,
    pub linf: f64,
    pub condition_number: f64,
    pub rank: usize,
    /// `σ_{M/2} / σ_1` of `ΘᵀΘ`.
    pub sigma_ratio_half: f64,
}

/// Clean-data parameterization inversions for each shape parameter.
pub fn run_eta_sweep(setup: &InverseSetup, etas: &[f64], reg: Regularization) -> Result<Vec<EtaRow>> {
    etas.iter()
        .map(|&eta| {
            let est = Estimator::prepare(setup, &Method::Param { eta, reg })?;
            let Estimator::Param { artifact, .. } = &est else { unreachable!() };
            let (n, _) = artifact.normal_system(&setup.clean, &CostMode::J1)?;
            let svd = svd_decompose(&n, DEFAULT_RANK_TOL)?;
            let m = svd.full_sigma.len();
            let g = est.estimate(setup, &setup.clean, &CostMode::J1, 0.0)?;
            let (l2, linf) = relative_error_norms(setup.case.grid(), &g, &setup.reference)?;
            Ok(EtaRow {
                eta,
                l2,
                linf,
                condition_number: condition_number(&svd),
                rank: svd.rank(),
                sigma_ratio_half: svd.full_sigma[m / 2] / svd.full_sigma[0],
            })
        })
        .collect()
}

/// Flux magnitude close to and away from the sensors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProximityStats {
    /// Largest `|g|` on faces within `near` of a sensor projection.
    pub max_near: f64,
    /// Median `|g|` on faces at least `far` from every sensor projection.
    pub median_far: f64,
    pub near: f64,
    pub far: f64,
    pub near_faces: usize,
    pub far_faces: usize,
}

pub fn proximity_stats(grid: &StructuredGrid, g: &[f64], sensors: &[Point], near: f64, far: f64) -> Result<ProximityStats> {
    let proj = crate::rbf_param::project_to_boundary(grid, sensors);
    let centers = grid.patch_face_centers(PatchId::SIn);
    let mut max_near = 0.0f64;
    let mut far_vals = Vec::new();
    let mut near_faces = 0;
    for (c, v) in centers.iter().zip(g) {
        let d = proj
            .iter()
            .map(|s| ((c[0] - s[0]).powi(2) + (c[2] - s[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        if d <= near {
            max_near = max_near.max(v.abs());
            near_faces += 1;
        } else if d >= far {
            far_vals.push(v.abs());
        }
    }
    if near_faces == 0 || far_vals.is_empty() {
        return Err(Error::invalid("no faces in the near or far region"));
    }
    far_vals.sort_by(f64::total_cmp);
    Ok(ProximityStats {
        max_near,
        median_far: quantile(&far_vals, 0.5),
        near,
        far,
        near_faces,
        far_faces: far_vals.len(),
    })
}

/// Runs a direct solve with `g` and returns the sensor readings.
pub fn forward_readings(setup: &InverseSetup, g: &[f64]) -> Result<Vec<f64>> {
    solve_direct_with_flux(&setup.case, g)?.sample_points(setup.case.grid(), &setup.sensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytical_values() {
        let an = AnalyticalCase::default();
        assert_eq!(an.t_an([1.0, 0.2, 0.5]), 23.75);
        assert_eq!(an.t_an([0.5, 0.2, 0.5]), 19.0);
        assert_eq!(an.t_an([0.0, 0.0, 0.0]), 15.0);
        assert_eq!(an.total_heat(), 60.0);
        let grid = an.grid([10, 10, 10]).unwrap();
        let g = an.true_flux(&grid);
        assert!((patch_integral(&grid, PatchId::SIn, &g) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn analytical_solution_satisfies_boundary_data() {
        use rand::{Rng, SeedableRng};
        let an = AnalyticalCase::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let eps = 1e-2;
        let grad = |p: Point| -> Point {
            let [x, y, z] = p;
            [2.0 * an.a * x + an.b * y, an.b * x + an.c, -2.0 * an.a * z]
        };
        let lap = |p: Point| {
            let mut s = 0.0;
            for a in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[a] += eps;
                pm[a] -= eps;
                s += (an.t_an(pp) - 2.0 * an.t_an(p) + an.t_an(pm)) / (eps * eps);
            }
            s
        };
        for patch in PatchId::ALL {
            let axis = patch.normal_axis();
            let n = patch.outward_normal();
            for _ in 0..100 {
                let mut p: Point = [rng.random(), rng.random(), rng.random()];
                p[axis] = if patch.is_upper() { an.size[axis] } else { 0.0 };
                let gr = grad(p);
                let flux = -an.k * (gr[0] * n[0] + gr[1] * n[1] + gr[2] * n[2]);
                let res = if patch == PatchId::SF {
                    flux - an.h * (an.t_an(p) - an.t_f(p))
                } else {
                    flux - an.exterior_flux(patch, p)
                };
                assert!(res.abs() < 1e-12, "{} {res}", patch.name());
            }
        }
        assert!(lap([0.3, 0.4, 0.5]).abs() < 1e-9);
    }

    #[test]
    fn industrial_values() {
        let ind = IndustrialCase::desk();
        assert!((ind.total_heat() + 1.328e6).abs() < 1e-6);
        assert_eq!(ind.t_f([0.0, 0.1, 1.2]), 303.0);
        let grid = ind.grid().unwrap();
        assert!(ind.true_flux(&grid).iter().all(|&v| v != 0.0));
        assert_eq!(ind.sensor_points(&grid).unwrap().len(), 100);
        assert_eq!(IndustrialCase::full().cells, [200, 50, 100]);
    }

    #[test]
    fn error_norm_examples() {
        let grid = StructuredGrid::new(4, 2, 5, 2.0, 1.0, 1.2).unwrap();
        let r: Vec<f64> = grid.sample_patch(PatchId::SIn, |p| 1.0 + p[0] + p[2]);
        assert_eq!(relative_error_norms(&grid, &r, &r).unwrap(), (0.0, 0.0));
        let s: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        let (l2, li) = relative_error_norms(&grid, &s, &r).unwrap();
        assert!((li - 0.1).abs() < 1e-12);
        assert!((l2 - 0.1 * 2.4f64.sqrt()).abs() < 1e-12);
        let mut z = r.clone();
        z[3] = 0.0;
        assert!(matches!(relative_error_norms(&grid, &r, &z), Err(Error::ZeroReference { face: 3 })));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert!((quantile(&v, 0.05) - 1.2).abs() < 1e-12);
        assert!((quantile(&v, 0.95) - 4.8).abs() < 1e-12);
    }

    #[test]
    fn slope_fit() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&h, &e).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&h[..1], &e[..1]), None);
    }

    #[test]
    fn cell_values_are_exact_and_faces_second_order() {
        let an = AnalyticalCase::default();
        let rep = run_convergence_study(&an, &[4, 8]).unwrap();
        for r in &rep.rows {
            assert!(r.cell_abs_l2 < 1e-8, "{r:?}");
        }
        let s = rep.slope.unwrap();
        assert!((s - 2.0).abs() < 0.1, "{s}");
        let one = run_convergence_study(&an, &[4]).unwrap();
        assert_eq!(one.rows.len(), 1);
        assert_eq!(one.slope, None);
        assert!(run_convergence_study(&an, &[8, 4]).is_err());
    }

    #[test]
    fn zero_noise_has_zero_spread() {
        let setup = AnalyticalCase::default().inverse_setup([6, 6, 6], 16).unwrap();
        let est = Estimator::prepare(&setup, &Method::Param { eta: 2.0, reg: Regularization::Lu }).unwrap();
        let st = run_noise_study(&setup, &est, &CostMode::J1, &[0.0], 3, 1).unwrap();
        assert_eq!(st[0].q05_l2, st[0].q95_l2);
        let clean = est.estimate(&setup, &setup.clean, &CostMode::J1, 0.0).unwrap();
        let (l2, _) = relative_error_norms(setup.case.grid(), &clean, &setup.reference).unwrap();
        assert_eq!(st[0].mean_l2, l2);
        let again = run_noise_study(&setup, &est, &CostMode::J1, &[0.1], 4, 9).unwrap();
        assert_eq!(again, run_noise_study(&setup, &est, &CostMode::J1, &[0.1], 4, 9).unwrap());
        assert!(run_noise_study(&setup, &est, &CostMode::J1, &[0.1], 1, 9).is_err());
    }

    #[test]
    fn pg_zero_matches_j1() {
        let setup = AnalyticalCase::default().inverse_setup([6, 6, 6], 16).unwrap();
        let est = Estimator::prepare(&setup, &Method::Param { eta: 2.0, reg: Regularization::Lu }).unwrap();
        let rows = run_pg_sweep(&setup, &est, &[0.0]).unwrap();
        let g = est.estimate(&setup, &setup.clean, &CostMode::J1, 0.0).unwrap();
        assert_eq!(rows[0].l2, relative_error_norms(setup.case.grid(), &g, &setup.reference).unwrap().0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn error_norms_scale(alpha in -3.0f64..3.0) {
            let grid = StructuredGrid::new(3, 2, 4, 1.5, 1.0, 0.8).unwrap();
            let r: Vec<f64> = grid.sample_patch(PatchId::SIn, |p| 2.0 + p[0] - p[2]);
            let s: Vec<f64> = r.iter().map(|v| alpha * v).collect();
            let (l2, li) = relative_error_norms(&grid, &s, &r).unwrap();
            let d = (alpha - 1.0).abs();
            prop_assert!((li - d).abs() < 1e-12);
            prop_assert!((l2 - d * (1.5f64 * 0.8).sqrt()).abs() < 1e-12);
        }
    }
}

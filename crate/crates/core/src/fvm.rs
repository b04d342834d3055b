//! Cell-centred finite-volume assembly of `-k Δu = s` on a [`StructuredGrid`].
//!
//! Boundary data follow the outward-flux convention `-k ∇u·n = q`: a negative
//! `q` feeds heat into the domain. Units: matrix entries in W/K, right-hand
//! side in W, unknowns in K.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, PatchId, StructuredGrid};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    /// Face-wise outward flux `q` (W/m²).
    Neumann(Vec<f64>),
    /// `-k ∇u·n = h (u - ambient)`, ambient given face-wise.
    Robin { h: f64, ambient: Vec<f64> },
    Adiabatic,
}

/// One boundary condition per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    conditions: [BoundaryCondition; 6],
}

impl Default for BoundarySpec {
    fn default() -> Self {
        Self::adiabatic()
    }
}

impl BoundarySpec {
    pub fn adiabatic() -> Self {
        BoundarySpec {
            conditions: std::array::from_fn(|_| BoundaryCondition::Adiabatic),
        }
    }

    pub fn with(mut self, patch: PatchId, bc: BoundaryCondition) -> Self {
        self.conditions[patch.index()] = bc;
        self
    }

    pub fn set(&mut self, patch: PatchId, bc: BoundaryCondition) {
        self.conditions[patch.index()] = bc;
    }

    pub fn get(&self, patch: PatchId) -> &BoundaryCondition {
        &self.conditions[patch.index()]
    }

    fn validate(&self, grid: &StructuredGrid) -> Result<()> {
        for patch in PatchId::ALL {
            let n = grid.patch_face_count(patch);
            match self.get(patch) {
                BoundaryCondition::Neumann(q) if q.len() != n => {
                    return Err(Error::invalid(format!(
                        "Neumann data on {} has {} values, patch has {n} faces",
                        patch.name(),
                        q.len()
                    )))
                }
                BoundaryCondition::Robin { h, ambient } => {
                    if !(*h > 0.0 && h.is_finite()) {
                        return Err(Error::invalid(format!("Robin coefficient on {} must be positive, got {h}", patch.name())));
                    }
                    if ambient.len() != n {
                        return Err(Error::invalid(format!(
                            "Robin ambient on {} has {} values, patch has {n} faces",
                            patch.name(),
                            ambient.len()
                        )));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// How the face temperature is eliminated on Robin faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobinTreatment {
    /// Conduction over the half cell in series with convection:
    /// `h_eff = 1 / (1/h + d/k)`.
    #[default]
    Series,
    /// Use the cell value as the face value: `h_eff = h`.
    Direct,
}

impl RobinTreatment {
    pub fn effective_h(self, h: f64, k: f64, half_spacing: f64) -> f64 {
        match self {
            RobinTreatment::Series => 1.0 / (1.0 / h + half_spacing / k),
            RobinTreatment::Direct => h,
        }
    }
}

/// How a point source is distributed over cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiracRule {
    /// Whole strength into the containing cell.
    ContainingCell,
    /// Spread with the trilinear sampling weights, i.e. the transpose of
    /// point sampling. This keeps the discrete adjoint exact.
    #[default]
    SamplingTranspose,
}

#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

fn check_conductivity(k: f64) -> Result<()> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("conductivity must be positive, got {k}")));
    }
    Ok(())
}

/// Stiffness matrix; depends only on the grid, `k` and where Robin faces sit.
pub fn assemble_matrix(
    grid: &StructuredGrid,
    k: f64,
    robin: &[(PatchId, f64)],
    treatment: RobinTreatment,
) -> Result<CsrMatrix> {
    check_conductivity(k)?;
    let d = grid.spacing();
    let n = grid.cells;
    // two-point flux coefficient k A_f / d per axis
    let coef = [
        k * d[1] * d[2] / d[0],
        k * d[0] * d[2] / d[1],
        k * d[0] * d[1] / d[2],
    ];
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(grid.cell_count());
    for c in 0..grid.cell_count() {
        let ijk = grid.cell_ijk(c);
        let mut row = Vec::with_capacity(7);
        let mut diag = 0.0;
        for axis in 0..3 {
            let stride = match axis {
                0 => 1,
                1 => n[0],
                _ => n[0] * n[1],
            };
            if ijk[axis] > 0 {
                row.push((c - stride, -coef[axis]));
                diag += coef[axis];
            }
            if ijk[axis] + 1 < n[axis] {
                row.push((c + stride, -coef[axis]));
                diag += coef[axis];
            }
        }
        row.push((c, diag));
        rows.push(row);
    }
    for &(patch, h) in robin {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid(format!("Robin coefficient must be positive, got {h}")));
        }
        let h_eff = treatment.effective_h(h, k, 0.5 * d[patch.normal_axis()]);
        let area = grid.patch_face_area(patch);
        for f in 0..grid.patch_face_count(patch) {
            rows[grid.patch_face_cell(patch, f)].push((grid.patch_face_cell(patch, f), h_eff * area));
        }
    }
    Ok(CsrMatrix::from_rows(rows))
}

/// Right-hand side for the given boundary data and optional cell-integrated source (W).
pub fn assemble_rhs(
    grid: &StructuredGrid,
    k: f64,
    bcs: &BoundarySpec,
    source: Option<&[f64]>,
    treatment: RobinTreatment,
) -> Result<Vec<f64>> {
    check_conductivity(k)?;
    bcs.validate(grid)?;
    let mut b = match source {
        Some(s) if s.len() != grid.cell_count() => {
            return Err(Error::invalid(format!(
                "source has {} values, grid has {} cells",
                s.len(),
                grid.cell_count()
            )))
        }
        Some(s) => s.to_vec(),
        None => vec![0.0; grid.cell_count()],
    };
    let d = grid.spacing();
    for patch in PatchId::ALL {
        let area = grid.patch_face_area(patch);
        match bcs.get(patch) {
            BoundaryCondition::Adiabatic => {}
            BoundaryCondition::Neumann(q) => {
                for (f, qf) in q.iter().enumerate() {
                    b[grid.patch_face_cell(patch, f)] -= qf * area;
                }
            }
            BoundaryCondition::Robin { h, ambient } => {
                let h_eff = treatment.effective_h(*h, k, 0.5 * d[patch.normal_axis()]);
                for (f, amb) in ambient.iter().enumerate() {
                    b[grid.patch_face_cell(patch, f)] += h_eff * area * amb;
                }
            }
        }
    }
    Ok(b)
}

pub fn robin_patches(bcs: &BoundarySpec) -> Vec<(PatchId, f64)> {
    PatchId::ALL
        .iter()
        .filter_map(|&p| match bcs.get(p) {
            BoundaryCondition::Robin { h, .. } => Some((p, *h)),
            _ => None,
        })
        .collect()
}

pub fn assemble(
    grid: &StructuredGrid,
    k: f64,
    bcs: &BoundarySpec,
    source: Option<&[f64]>,
    treatment: RobinTreatment,
) -> Result<DiscreteSystem> {
    let rhs = assemble_rhs(grid, k, bcs, source, treatment)?;
    let matrix = assemble_matrix(grid, k, &robin_patches(bcs), treatment)?;
    Ok(DiscreteSystem { matrix, rhs })
}

/// Deposit point sources (location, strength in W) into a right-hand side.
pub fn deposit_point_sources(
    rhs: &mut [f64],
    grid: &StructuredGrid,
    points: &[(Point, f64)],
    rule: DiracRule,
) -> Result<()> {
    for &(p, strength) in points {
        match rule {
            DiracRule::ContainingCell => rhs[grid.locate_cell(p)?] += strength,
            DiracRule::SamplingTranspose => {
                for (c, w) in grid.trilinear_stencil(p)?.iter() {
                    rhs[c] += w * strength;
                }
            }
        }
    }
    Ok(())
}

/// Dirac sources, each deposited whole into its containing cell.
pub fn add_dirac_sources(system: &mut DiscreteSystem, grid: &StructuredGrid, points: &[(Point, f64)]) -> Result<()> {
    deposit_point_sources(&mut system.rhs, grid, points, DiracRule::ContainingCell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pcg_solve, PcgOptions};
    use proptest::prelude::*;

    fn robin_sf(grid: &StructuredGrid, h: f64, amb: f64) -> BoundarySpec {
        BoundarySpec::adiabatic().with(
            PatchId::SF,
            BoundaryCondition::Robin {
                h,
                ambient: vec![amb; grid.patch_face_count(PatchId::SF)],
            },
        )
    }

    #[test]
    fn single_adiabatic_cell_is_singular() {
        let g = StructuredGrid::cube(1).unwrap();
        let sys = assemble(&g, 1.0, &BoundarySpec::adiabatic(), None, RobinTreatment::Series).unwrap();
        assert_eq!(sys.matrix.diag(0), 0.0);
        assert!(pcg_solve(&sys.matrix, &[1.0], &PcgOptions::default()).is_err());
    }

    #[test]
    fn constant_ambient_gives_constant_solution() {
        let g = StructuredGrid::new(4, 5, 3, 1.0, 2.0, 0.5).unwrap();
        let sys = assemble(&g, 2.0, &robin_sf(&g, 7.0, 42.0), None, RobinTreatment::Series).unwrap();
        let x = pcg_solve(&sys.matrix, &sys.rhs, &PcgOptions::default()).unwrap().x;
        for v in x {
            assert!((v - 42.0).abs() < 1e-9);
        }
    }

    #[test]
    fn matrix_structure() {
        let g = StructuredGrid::new(3, 4, 5, 1.0, 1.0, 1.0).unwrap();
        let neumann = assemble_matrix(&g, 3.0, &[], RobinTreatment::Series).unwrap();
        assert!(neumann.is_symmetric(1e-14));
        for i in 0..neumann.dim() {
            assert!(neumann.row_sum(i).abs() < 1e-12);
            assert!(neumann.row(i).all(|(j, v)| j == i || v <= 0.0));
        }
        let robin = assemble_matrix(&g, 3.0, &[(PatchId::SF, 5.0)], RobinTreatment::Series).unwrap();
        assert!(robin.is_symmetric(1e-14));
        for i in 0..robin.dim() {
            assert!(robin.row_sum(i) >= -1e-12);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let g = StructuredGrid::cube(2).unwrap();
        assert!(assemble(&g, 0.0, &BoundarySpec::adiabatic(), None, RobinTreatment::Series).is_err());
        assert!(assemble(&g, 1.0, &robin_sf(&g, 0.0, 1.0), None, RobinTreatment::Series).is_err());
        let bad = BoundarySpec::adiabatic().with(PatchId::SIn, BoundaryCondition::Neumann(vec![1.0]));
        assert!(assemble(&g, 1.0, &bad, None, RobinTreatment::Series).is_err());
    }

    #[test]
    fn dirac_examples() {
        let g = StructuredGrid::cube(10).unwrap();
        let mut sys = assemble(&g, 1.0, &robin_sf(&g, 1.0, 0.0), None, RobinTreatment::Series).unwrap();
        let c = g.locate_cell([0.55, 0.55, 0.55]).unwrap();
        add_dirac_sources(&mut sys, &g, &[([0.55, 0.55, 0.55], 1.0)]).unwrap();
        assert_eq!(sys.rhs[c], 1.0);
        assert_eq!(sys.rhs.iter().filter(|&&v| v != 0.0).count(), 1);
        add_dirac_sources(&mut sys, &g, &[([0.51, 0.52, 0.53], 2.0)]).unwrap();
        assert_eq!(sys.rhs[c], 3.0);
        // internal face: lower-index cell
        add_dirac_sources(&mut sys, &g, &[([0.2, 0.25, 0.25], 1.0)]).unwrap();
        assert_eq!(sys.rhs[g.cell_index(1, 2, 2)], 1.0);
        assert!(add_dirac_sources(&mut sys, &g, &[([1.2, 0.5, 0.5], 1.0)]).is_err());
    }

    #[test]
    fn global_balance() {
        let g = StructuredGrid::new(6, 4, 5, 1.0, 0.7, 1.3).unwrap();
        let k = 2.5;
        let q_in = g.sample_patch(PatchId::SIn, |p| -10.0 - 3.0 * p[0]);
        let q_x = g.sample_patch(PatchId::SExII, |p| 2.0 * p[1]);
        let amb = g.sample_patch(PatchId::SF, |p| 5.0 + p[2]);
        let bcs = BoundarySpec::adiabatic()
            .with(PatchId::SIn, BoundaryCondition::Neumann(q_in.clone()))
            .with(PatchId::SExII, BoundaryCondition::Neumann(q_x.clone()))
            .with(PatchId::SF, BoundaryCondition::Robin { h: 4.0, ambient: amb.clone() });
        let source: Vec<f64> = (0..g.cell_count()).map(|c| (c % 3) as f64 * 0.01).collect();
        let sys = assemble(&g, k, &bcs, Some(&source), RobinTreatment::Series).unwrap();
        let u = pcg_solve(&sys.matrix, &sys.rhs, &PcgOptions::default()).unwrap().x;
        let h_eff = RobinTreatment::Series.effective_h(4.0, k, 0.5 * g.spacing()[1]);
        let mut outflow = 0.0;
        outflow += q_in.iter().sum::<f64>() * g.patch_face_area(PatchId::SIn);
        outflow += q_x.iter().sum::<f64>() * g.patch_face_area(PatchId::SExII);
        for (f, a) in amb.iter().enumerate() {
            let c = g.patch_face_cell(PatchId::SF, f);
            outflow += h_eff * g.patch_face_area(PatchId::SF) * (u[c] - a);
        }
        let total: f64 = source.iter().sum();
        assert!((outflow - total).abs() < 1e-8, "{outflow} vs {total}");
    }

    proptest! {
        #[test]
        fn rhs_is_linear_in_data(s1 in -5.0f64..5.0, s2 in -5.0f64..5.0, a1 in -5.0f64..5.0, a2 in -5.0f64..5.0) {
            let g = StructuredGrid::new(3, 3, 2, 1.0, 1.0, 1.0).unwrap();
            let n_in = g.patch_face_count(PatchId::SIn);
            let n_f = g.patch_face_count(PatchId::SF);
            let make = |q: f64, amb: f64| BoundarySpec::adiabatic()
                .with(PatchId::SIn, BoundaryCondition::Neumann(vec![q; n_in]))
                .with(PatchId::SF, BoundaryCondition::Robin { h: 2.0, ambient: vec![amb; n_f] });
            let b1 = assemble_rhs(&g, 1.5, &make(s1, a1), None, RobinTreatment::Series).unwrap();
            let b2 = assemble_rhs(&g, 1.5, &make(s2, a2), None, RobinTreatment::Series).unwrap();
            let b12 = assemble_rhs(&g, 1.5, &make(s1 + s2, a1 + a2), None, RobinTreatment::Series).unwrap();
            for i in 0..b1.len() {
                prop_assert!((b1[i] + b2[i] - b12[i]).abs() < 1e-12);
            }
        }
    }
}

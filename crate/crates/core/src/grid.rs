//! Uniform structured hexahedral grids over the box `[0,lx] x [0,ly] x [0,lz]`.
//!
//! Cells are indexed `(i, j, k)` with `x` fastest; the linear index is
//! `i + nx * (j + ny * k)`. Boundary faces of a patch are ordered by the two
//! tangential cell indices, the first tangential axis fastest (see
//! [`PatchId::tangential_axes`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

/// One of the six axis-aligned faces of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatchId {
    /// Mold/steel interface, `y = 0`.
    SIn,
    /// Mold/coolant interface, `y = ly`.
    SF,
    /// Exterior face `z = lz`.
    SExI,
    /// Exterior face `x = lx`.
    SExII,
    /// Exterior face `z = 0`.
    SExIII,
    /// Exterior face `x = 0`.
    SExIV,
}

impl PatchId {
    pub const ALL: [PatchId; 6] = [
        PatchId::SIn,
        PatchId::SF,
        PatchId::SExI,
        PatchId::SExII,
        PatchId::SExIII,
        PatchId::SExIV,
    ];

    pub const EXTERIOR: [PatchId; 4] = [PatchId::SExI, PatchId::SExII, PatchId::SExIII, PatchId::SExIV];

    /// Axis the patch is normal to.
    pub fn normal_axis(self) -> usize {
        match self {
            PatchId::SIn | PatchId::SF => 1,
            PatchId::SExI | PatchId::SExIII => 2,
            PatchId::SExII | PatchId::SExIV => 0,
        }
    }

    /// True when the patch sits at the upper end of its normal axis.
    pub fn is_upper(self) -> bool {
        matches!(self, PatchId::SF | PatchId::SExI | PatchId::SExII)
    }

    /// The two tangential axes, the first one varying fastest in face ordering.
    pub fn tangential_axes(self) -> (usize, usize) {
        match self.normal_axis() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn outward_normal(self) -> Point {
        let mut n = [0.0; 3];
        n[self.normal_axis()] = if self.is_upper() { 1.0 } else { -1.0 };
        n
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PatchId::SIn => "s_in",
            PatchId::SF => "s_f",
            PatchId::SExI => "s_ex_i",
            PatchId::SExII => "s_ex_ii",
            PatchId::SExIII => "s_ex_iii",
            PatchId::SExIV => "s_ex_iv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub center: Point,
    pub area: f64,
    pub cell: usize,
    pub normal: Point,
}

/// Cell weights for interpolating a cell-centred field at a point.
///
/// Entries may repeat a cell when the stencil is clamped at a boundary; the
/// weights always sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub cells: [usize; 8],
    pub weights: [f64; 8],
}

impl Stencil {
    pub fn apply(&self, field: &[f64]) -> f64 {
        self.cells
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w * field[c])
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cells.iter().copied().zip(self.weights.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub cells: [usize; 3],
    pub lengths: [f64; 3],
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::invalid(format!(
                "cell counts must be positive, got ({nx}, {ny}, {nz})"
            )));
        }
        for (name, l) in [("lx", lx), ("ly", ly), ("lz", lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {l}")));
            }
        }
        Ok(StructuredGrid {
            cells: [nx, ny, nz],
            lengths: [lx, ly, lz],
        })
    }

    /// Unit cube with `n` cells per axis.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new(n, n, n, 1.0, 1.0, 1.0)
    }

    pub fn nx(&self) -> usize {
        self.cells[0]
    }
    pub fn ny(&self) -> usize {
        self.cells[1]
    }
    pub fn nz(&self) -> usize {
        self.cells[2]
    }

    pub fn spacing(&self) -> Point {
        [
            self.lengths[0] / self.cells[0] as f64,
            self.lengths[1] / self.cells[1] as f64,
            self.lengths[2] / self.cells[2] as f64,
        ]
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        let d = self.spacing();
        d[0] * d[1] * d[2]
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    #[inline]
    pub fn cell_ijk(&self, c: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [c % nx, (c / nx) % ny, c / (nx * ny)]
    }

    pub fn cell_center(&self, c: usize) -> Point {
        let ijk = self.cell_ijk(c);
        let d = self.spacing();
        [
            (ijk[0] as f64 + 0.5) * d[0],
            (ijk[1] as f64 + 0.5) * d[1],
            (ijk[2] as f64 + 0.5) * d[2],
        ]
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..3).all(|a| {
            let slack = 1e-12 * self.lengths[a];
            p[a].is_finite() && p[a] >= -slack && p[a] <= self.lengths[a] + slack
        })
    }

    fn check_inside(&self, p: Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                x: p[0],
                y: p[1],
                z: p[2],
            })
        }
    }

    /// Index of the cell containing `p` along one axis. Points on an internal
    /// face go to the lower cell.
    fn axis_cell(&self, axis: usize, coord: f64) -> usize {
        let n = self.cells[axis];
        let mut t = coord / self.spacing()[axis];
        let r = t.round();
        if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
            t = r;
        }
        let idx = t.ceil() as i64 - 1;
        idx.clamp(0, n as i64 - 1) as usize
    }

    pub fn locate_cell(&self, p: Point) -> Result<usize> {
        self.check_inside(p)?;
        let i = self.axis_cell(0, p[0]);
        let j = self.axis_cell(1, p[1]);
        let k = self.axis_cell(2, p[2]);
        Ok(self.cell_index(i, j, k))
    }

    /// Trilinear interpolation weights from the surrounding cell centres.
    ///
    /// Along an axis where `p` lies between the boundary and the first (or
    /// last) cell centre, the stencil is clamped to that cell, so in a corner
    /// region the result is the nearest cell value.
    pub fn trilinear_stencil(&self, p: Point) -> Result<Stencil> {
        self.check_inside(p)?;
        let d = self.spacing();
        let mut lo = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.cells[a];
            let t = p[a] / d[a] - 0.5;
            if t <= 0.0 || n == 1 {
                lo[a] = 0;
                frac[a] = 0.0;
            } else if t >= (n - 1) as f64 {
                lo[a] = n - 1;
                frac[a] = 0.0;
            } else {
                let f = t.floor();
                lo[a] = f as usize;
                frac[a] = t - f;
            }
        }
        let mut cells = [0usize; 8];
        let mut weights = [0.0f64; 8];
        for corner in 0..8 {
            let mut idx = [0usize; 3];
            let mut w = 1.0;
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if up {
                    idx[a] = (lo[a] + 1).min(self.cells[a] - 1);
                    w *= frac[a];
                } else {
                    idx[a] = lo[a];
                    w *= 1.0 - frac[a];
                }
            }
            cells[corner] = self.cell_index(idx[0], idx[1], idx[2]);
            weights[corner] = w;
        }
        Ok(Stencil { cells, weights })
    }

    pub fn patch_face_count(&self, patch: PatchId) -> usize {
        let (t0, t1) = patch.tangential_axes();
        self.cells[t0] * self.cells[t1]
    }

    /// Shape of the patch face lattice, `(count along first tangential axis, count along second)`.
    pub fn patch_shape(&self, patch: PatchId) -> (usize, usize) {
        let (t0, t1) = patch.tangential_axes();
        (self.cells[t0], self.cells[t1])
    }

    pub fn patch_face_area(&self, patch: PatchId) -> f64 {
        let (t0, t1) = patch.tangential_axes();
        let d = self.spacing();
        d[t0] * d[t1]
    }

    pub fn patch_area(&self, patch: PatchId) -> f64 {
        let (t0, t1) = patch.tangential_axes();
        self.lengths[t0] * self.lengths[t1]
    }

    /// Cell adjacent to face `f` of `patch`.
    pub fn patch_face_cell(&self, patch: PatchId, f: usize) -> usize {
        let (t0, t1) = patch.tangential_axes();
        let n0 = self.cells[t0];
        let mut ijk = [0usize; 3];
        ijk[t0] = f % n0;
        ijk[t1] = f / n0;
        let a = patch.normal_axis();
        ijk[a] = if patch.is_upper() { self.cells[a] - 1 } else { 0 };
        self.cell_index(ijk[0], ijk[1], ijk[2])
    }

    pub fn patch_face_center(&self, patch: PatchId, f: usize) -> Point {
        let (t0, t1) = patch.tangential_axes();
        let n0 = self.cells[t0];
        let d = self.spacing();
        let mut p = [0.0; 3];
        p[t0] = ((f % n0) as f64 + 0.5) * d[t0];
        p[t1] = ((f / n0) as f64 + 0.5) * d[t1];
        let a = patch.normal_axis();
        p[a] = if patch.is_upper() { self.lengths[a] } else { 0.0 };
        p
    }

    pub fn patch_face_centers(&self, patch: PatchId) -> Vec<Point> {
        (0..self.patch_face_count(patch))
            .map(|f| self.patch_face_center(patch, f))
            .collect()
    }

    pub fn boundary_faces(&self, patch: PatchId) -> Vec<BoundaryFace> {
        let area = self.patch_face_area(patch);
        let normal = patch.outward_normal();
        (0..self.patch_face_count(patch))
            .map(|f| BoundaryFace {
                center: self.patch_face_center(patch, f),
                area,
                cell: self.patch_face_cell(patch, f),
                normal,
            })
            .collect()
    }

    pub fn surface_area(&self) -> f64 {
        let [lx, ly, lz] = self.lengths;
        2.0 * (lx * ly + ly * lz + lx * lz)
    }

    /// Evaluate a function at every face centre of a patch.
    pub fn sample_patch(&self, patch: PatchId, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.patch_face_count(patch))
            .map(|i| f(self.patch_face_center(patch, i)))
            .collect()
    }

    /// Evaluate a function at every cell centre.
    pub fn sample_cells(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        (0..self.cell_count()).map(|c| f(self.cell_center(c))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_cube_volumes() {
        let g = StructuredGrid::cube(10).unwrap();
        assert_eq!(g.cell_count(), 1000);
        assert!((g.cell_volume() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn industrial_grid_size() {
        let g = StructuredGrid::new(200, 50, 100, 2.0, 0.1, 1.2).unwrap();
        assert_eq!(g.cell_count(), 1_000_000);
        assert_eq!(g.boundary_faces(PatchId::SIn).len(), 20_000);
    }

    #[test]
    fn single_cell_has_one_face_per_patch() {
        let g = StructuredGrid::cube(1).unwrap();
        for p in PatchId::ALL {
            let faces = g.boundary_faces(p);
            assert_eq!(faces.len(), 1);
            assert_eq!(faces[0].cell, 0);
            assert_eq!(faces[0].area, 1.0);
        }
    }

    #[test]
    fn rejects_non_positive_arguments() {
        assert!(StructuredGrid::new(0, 1, 1, 1.0, 1.0, 1.0).is_err());
        assert!(StructuredGrid::new(1, 1, 1, 1.0, -1.0, 1.0).is_err());
        assert!(StructuredGrid::new(1, 1, 1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn locate_cell_examples() {
        let g = StructuredGrid::cube(10).unwrap();
        assert_eq!(g.locate_cell([0.05, 0.05, 0.05]).unwrap(), 0);
        assert_eq!(g.locate_cell([0.1, 0.1, 0.1]).unwrap(), 0);
        assert_eq!(g.locate_cell([0.3, 0.0, 1.0]).unwrap(), g.cell_index(2, 0, 9));
        assert!(matches!(
            g.locate_cell([1.5, 0.5, 0.5]),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn s_in_and_s_f_faces() {
        let g = StructuredGrid::cube(10).unwrap();
        let s_in = g.boundary_faces(PatchId::SIn);
        assert_eq!(s_in.len(), 100);
        for f in &s_in {
            assert!((f.area - 1e-2).abs() < 1e-15);
            assert_eq!(f.normal, [0.0, -1.0, 0.0]);
            assert_eq!(f.center[1], 0.0);
        }
        for f in g.boundary_faces(PatchId::SF) {
            assert_eq!(f.normal, [0.0, 1.0, 0.0]);
            assert_eq!(g.cell_ijk(f.cell)[1], 9);
        }
    }

    #[test]
    fn stencil_at_cell_center_is_that_cell() {
        let g = StructuredGrid::new(4, 3, 5, 1.0, 2.0, 3.0).unwrap();
        for c in 0..g.cell_count() {
            let s = g.trilinear_stencil(g.cell_center(c)).unwrap();
            let mut field = vec![0.0; g.cell_count()];
            field[c] = 1.0;
            assert!((s.apply(&field) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stencil_reproduces_linear_fields_in_interior() {
        let g = StructuredGrid::new(6, 5, 4, 1.0, 1.0, 1.0).unwrap();
        let field = g.sample_cells(|p| 1.0 + 2.0 * p[0] - 3.0 * p[1] + 0.5 * p[2]);
        let p = [0.41, 0.33, 0.52];
        let s = g.trilinear_stencil(p).unwrap();
        let exact = 1.0 + 2.0 * p[0] - 3.0 * p[1] + 0.5 * p[2];
        assert!((s.apply(&field) - exact).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn surface_and_volume_sums(nx in 1usize..8, ny in 1usize..8, nz in 1usize..8,
                                   lx in 0.1f64..5.0, ly in 0.1f64..5.0, lz in 0.1f64..5.0) {
            let g = StructuredGrid::new(nx, ny, nz, lx, ly, lz).unwrap();
            let area: f64 = PatchId::ALL.iter()
                .flat_map(|&p| g.boundary_faces(p))
                .map(|f| f.area)
                .sum();
            prop_assert!((area - g.surface_area()).abs() <= 1e-12 * g.surface_area());
            let vol = g.cell_volume() * g.cell_count() as f64;
            prop_assert!((vol - lx * ly * lz).abs() <= 1e-12 * lx * ly * lz);
            for c in 0..g.cell_count() {
                let p = g.cell_center(c);
                prop_assert_eq!(g.locate_cell(p).unwrap(), c);
                for a in 0..3 {
                    prop_assert!(p[a] > 0.0 && p[a] < g.lengths[a]);
                }
            }
            for patch in PatchId::ALL {
                let (n0, n1) = g.patch_shape(patch);
                prop_assert_eq!(g.boundary_faces(patch).len(), n0 * n1);
            }
        }

        #[test]
        fn stencil_weights_sum_to_one(x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0) {
            let g = StructuredGrid::new(5, 7, 3, 1.0, 1.0, 1.0).unwrap();
            let s = g.trilinear_stencil([x, y, z]).unwrap();
            let sum: f64 = s.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
        }
    }
}

//! Legacy ASCII VTK output for cell fields and `S_IN` face fields.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{PatchId, StructuredGrid};
use crate::solvers::TemperatureField;

fn header(out: &mut String, title: &str) {
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{title}");
    out.push_str("ASCII\n");
}

fn scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "CELL_DATA {}", values.len());
    let _ = writeln!(out, "SCALARS {name} double 1");
    out.push_str("LOOKUP_TABLE default\n");
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
}

/// Cell field as `STRUCTURED_POINTS` with one value per cell.
pub fn cell_field_vtk(grid: &StructuredGrid, name: &str, values: &[f64]) -> Result<String> {
    if values.len() != grid.cell_count() {
        return Err(Error::invalid(format!(
            "field has {} values, grid has {} cells",
            values.len(),
            grid.cell_count()
        )));
    }
    let [nx, ny, nz] = grid.cells;
    let [dx, dy, dz] = grid.spacing();
    let mut out = String::new();
    header(&mut out, &format!("moldflux {name}"));
    out.push_str("DATASET STRUCTURED_POINTS\n");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", nx + 1, ny + 1, nz + 1);
    out.push_str("ORIGIN 0 0 0\n");
    let _ = writeln!(out, "SPACING {dx:e} {dy:e} {dz:e}");
    scalars(&mut out, name, values);
    Ok(out)
}

/// Face field on `S_IN` as a flat `STRUCTURED_GRID` over the `(x, z)` face lattice.
pub fn boundary_field_vtk(grid: &StructuredGrid, name: &str, values: &[f64]) -> Result<String> {
    let patch = PatchId::SIn;
    if values.len() != grid.patch_face_count(patch) {
        return Err(Error::invalid(format!(
            "boundary field has {} values, S_IN has {} faces",
            values.len(),
            grid.patch_face_count(patch)
        )));
    }
    let (n0, n1) = grid.patch_shape(patch);
    let (t0, t1) = patch.tangential_axes();
    let d = grid.spacing();
    let mut out = String::new();
    header(&mut out, &format!("moldflux {name} on {}", patch.name()));
    out.push_str("DATASET STRUCTURED_GRID\n");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", n0 + 1, n1 + 1);
    let _ = writeln!(out, "POINTS {} double", (n0 + 1) * (n1 + 1));
    for j in 0..=n1 {
        for i in 0..=n0 {
            let mut p = [0.0; 3];
            p[t0] = i as f64 * d[t0];
            p[t1] = j as f64 * d[t1];
            let _ = writeln!(out, "{:e} {:e} {:e}", p[0], p[1], p[2]);
        }
    }
    scalars(&mut out, name, values);
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_cell_field(path: &Path, grid: &StructuredGrid, field: &TemperatureField, name: &str) -> Result<()> {
    write(path, &cell_field_vtk(grid, name, &field.values)?)
}

pub fn write_boundary_field(path: &Path, grid: &StructuredGrid, name: &str, values: &[f64]) -> Result<()> {
    write(path, &boundary_field_vtk(grid, name, values)?)
}

/// The parts of a legacy file that this module writes.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub dataset: String,
    pub dimensions: [usize; 3],
    pub name: String,
    pub values: Vec<f64>,
}

/// Minimal reader for files produced by this module.
pub fn parse(text: &str) -> Result<VtkData> {
    let bad = |m: &str| Error::invalid(format!("malformed VTK: {m}"));
    let mut lines = text.lines();
    if !lines.next().is_some_and(|l| l.starts_with("# vtk DataFile")) {
        return Err(bad("missing version line"));
    }
    lines.next();
    if lines.next() != Some("ASCII") {
        return Err(bad("only ASCII is supported"));
    }
    let mut dataset = String::new();
    let mut dims = [0usize; 3];
    let mut name = String::new();
    let mut values = Vec::new();
    let mut count = 0usize;
    let mut in_values = false;
    for line in lines {
        let mut tok = line.split_whitespace();
        let Some(first) = tok.next() else { continue };
        if in_values {
            values.push(first.parse::<f64>().map_err(|_| bad("bad value"))?);
            continue;
        }
        match first {
            "DATASET" => dataset = tok.next().unwrap_or_default().to_owned(),
            "DIMENSIONS" => {
                for d in dims.iter_mut() {
                    *d = tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("dimensions"))?;
                }
            }
            "CELL_DATA" => count = tok.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad("cell count"))?,
            "SCALARS" => name = tok.next().unwrap_or_default().to_owned(),
            "LOOKUP_TABLE" => in_values = true,
            _ => {}
        }
    }
    if values.len() != count {
        return Err(bad("value count differs from CELL_DATA"));
    }
    Ok(VtkData { dataset, dimensions: dims, name, values })
}

//! File emitters and readers: CSV tables and legacy VTK.

pub mod csv;
pub mod vtk;

//! Sparse iterative and small dense linear algebra.

pub mod dense;
pub mod sparse;

pub use dense::{
    condition_number, lu_full_pivot_solve, lu_full_pivot_solve_tol, svd_decompose, tsvd_solve, SvdResult,
    DEFAULT_PIVOT_TOL, DEFAULT_RANK_TOL,
};
pub use sparse::{pcg_solve, pcg_with, CsrMatrix, PcgOptions, PcgReport, Preconditioner, PreconditionerKind};

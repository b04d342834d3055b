//! Row-compressed sparse matrices and a preconditioned conjugate gradient
//! solver with diagonal incomplete Cholesky (DIC) or Jacobi preconditioning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl CsrMatrix {
    /// Build from per-row `(column, value)` lists. Duplicate columns in a row
    /// are summed; every row gets an explicit diagonal entry.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.push((i, 0.0));
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < n, "column {c} out of range for {n}x{n} matrix");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    if c == i {
                        diag_pos.push(col_idx.len());
                    }
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
            diag_pos,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.values[self.diag_pos[i]]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    /// Entries strictly right of the diagonal in row `i`.
    fn upper(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.diag_pos[i] + 1..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    /// Diagonal incomplete Cholesky: zero fill-in, only the diagonal is modified.
    #[default]
    Dic,
    Jacobi,
    None,
}

#[derive(Debug, Clone)]
pub enum Preconditioner {
    /// Reciprocal of the DIC-modified diagonal.
    Dic(Vec<f64>),
    /// Reciprocal of the matrix diagonal.
    Jacobi(Vec<f64>),
    Identity,
}

impl Preconditioner {
    pub fn new(a: &CsrMatrix, kind: PreconditionerKind) -> Result<Self> {
        for i in 0..a.dim() {
            let d = a.diag(i);
            if !(d > 0.0) {
                return Err(Error::NotSpd(format!("non-positive diagonal {d:e} in row {i}")));
            }
        }
        match kind {
            PreconditionerKind::None => Ok(Preconditioner::Identity),
            PreconditionerKind::Jacobi => Ok(Preconditioner::Jacobi((0..a.dim()).map(|i| 1.0 / a.diag(i)).collect())),
            PreconditionerKind::Dic => {
                let mut rd: Vec<f64> = (0..a.dim()).map(|i| a.diag(i)).collect();
                for i in 0..a.dim() {
                    if !(rd[i] > 1e-14 * a.diag(i)) {
                        return Err(Error::NotSpd(format!(
                            "incomplete Cholesky breakdown at row {i} (pivot {:e})",
                            rd[i]
                        )));
                    }
                    let inv = 1.0 / rd[i];
                    for (j, v) in a.upper(i) {
                        rd[j] -= v * v * inv;
                    }
                }
                rd.iter_mut().for_each(|d| *d = 1.0 / *d);
                Ok(Preconditioner::Dic(rd))
            }
        }
    }

    pub fn apply(&self, a: &CsrMatrix, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Identity => z.copy_from_slice(r),
            Preconditioner::Jacobi(inv) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * di;
                }
            }
            Preconditioner::Dic(rd) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(rd) {
                    *zi = ri * di;
                }
                for i in 0..a.dim() {
                    let zi = z[i];
                    for (j, v) in a.upper(i) {
                        z[j] -= rd[j] * v * zi;
                    }
                }
                for i in (0..a.dim()).rev() {
                    let mut s = 0.0;
                    for (j, v) in a.upper(i) {
                        s += v * z[j];
                    }
                    z[i] -= rd[i] * s;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcgOptions {
    /// Relative residual target `||Ax - b|| / ||b||`.
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions {
            tol: 1e-12,
            max_iter: 20_000,
            preconditioner: PreconditionerKind::Dic,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PcgReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` for SPD `A` with a prepared preconditioner.
pub fn pcg_with(a: &CsrMatrix, precond: &Preconditioner, b: &[f64], opts: &PcgOptions) -> Result<PcgReport> {
    let n = a.dim();
    assert_eq!(b.len(), n, "rhs length does not match matrix");
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(PcgReport {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut ap = vec![0.0; n];
    precond.apply(a, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotSpd(format!("p^T A p = {pap:e} at iteration {iterations}")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm(&r) / b_norm;
        if !rel.is_finite() {
            break;
        }
        if rel <= opts.tol {
            // Confirm against the true residual; the recurrence drifts.
            a.mul_vec_into(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            rel = norm(&r) / b_norm;
            if rel <= opts.tol {
                return Ok(PcgReport {
                    x,
                    iterations,
                    relative_residual: rel,
                });
            }
            precond.apply(a, &r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        precond.apply(a, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations,
        residual: rel,
    })
}

pub fn pcg_solve(a: &CsrMatrix, b: &[f64], opts: &PcgOptions) -> Result<PcgReport> {
    let precond = Preconditioner::new(a, opts.preconditioner)?;
    pcg_with(a, &precond, b, opts)
}

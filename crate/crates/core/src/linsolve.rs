//! Compressed sparse rows and the direct solver for the coupled systems.

use std::time::Instant;

use faer::prelude::Solve;
use faer::sparse::linalg::LuError;
use faer::sparse::{SparseRowMatRef, SymbolicSparseRowMatRef};
use faer::Col;

use crate::error::{invalid, Error, Result};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_REFINEMENT_STEPS: usize = 3;

/// Square or rectangular matrix in compressed sparse row form with sorted,
/// unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` triplets, summing
    /// duplicates in the order they appear.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(t) = triplets.iter().find(|t| t.0 >= nrows || t.1 >= ncols) {
            return Err(invalid(format!("triplet ({}, {}) outside a {nrows}x{ncols} matrix", t.0, t.1)));
        }
        let mut counts = vec![0usize; nrows + 1];
        for t in triplets {
            counts[t.0 + 1] += 1;
        }
        for r in 0..nrows {
            counts[r + 1] += counts[r];
        }
        // bucket by row, preserving triplet order within a row
        let mut next = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            row.sort_by_key(|e| e.0);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Stored entry, zero when absent from the pattern.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map(|k| vals[k]).unwrap_or(0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "dimension mismatch in matrix-vector product");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(c, v)| v * x[*c]).sum()
            })
            .collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Rows and columns picked by `keep`, in order, as a dense row-major block.
    pub fn dense_block(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter().map(|&r| cols.iter().map(|&c| self.get(r, c)).collect()).collect()
    }

    /// Number of rows without any stored nonzero value.
    fn first_empty_row(&self) -> Option<usize> {
        (0..self.nrows).find(|&r| self.row(r).1.iter().all(|v| *v == 0.0))
    }
}

/// Outcome of a linear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    /// `||b - A x|| / ||b||` against the unfactored matrix.
    pub relative_residual: f64,
    /// Relative residual after the direct solve and after each refinement step.
    pub residual_history: Vec<f64>,
    pub refinement_steps: usize,
    pub unknowns: usize,
    pub nnz: usize,
    pub wall_time: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    a.mul_vec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect()
}

/// Solves `A x = b` by sparse LU with partial pivoting, followed by up to
/// three steps of iterative refinement when the residual is above `tol`.
pub fn solve(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<SolveReport> {
    let start = Instant::now();
    let n = a.nrows();
    if a.ncols() != n {
        return Err(invalid(format!("matrix is {}x{}, expected square", n, a.ncols())));
    }
    if b.len() != n {
        return Err(invalid(format!("rhs has length {} for {n} unknowns", b.len())));
    }
    if b.iter().any(|v| !v.is_finite()) || a.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear system".into()));
    }
    if let Some(r) = a.first_empty_row() {
        return Err(Error::Singular { column: r });
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            relative_residual: 0.0,
            residual_history: vec![0.0],
            refinement_steps: 0,
            unknowns: n,
            nnz: a.nnz(),
            wall_time: start.elapsed().as_secs_f64(),
        });
    }

    let symbolic = SymbolicSparseRowMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
    let view = SparseRowMatRef::new(symbolic, a.values());
    let lu = view.sp_lu().map_err(|e| match e {
        LuError::SymbolicSingular { index } => Error::Singular { column: index },
        LuError::Generic(err) => invalid(format!("sparse LU failed: {err:?}")),
    })?;

    let rhs = Col::<f64>::from_fn(n, |i| b[i]);
    let sol = lu.solve(&rhs);
    let mut x: Vec<f64> = (0..n).map(|i| sol[i]).collect();
    let mut r = residual(a, &x, b);
    let mut history = vec![norm2(&r) / b_norm];
    let mut steps = 0;
    while history.last().is_some_and(|rel| *rel > tol && rel.is_finite()) && steps < MAX_REFINEMENT_STEPS {
        let corr = lu.solve(&Col::<f64>::from_fn(n, |i| r[i]));
        for (xi, i) in x.iter_mut().zip(0..n) {
            *xi += corr[i];
        }
        r = residual(a, &x, b);
        history.push(norm2(&r) / b_norm);
        steps += 1;
    }
    let rel = *history.last().unwrap();
    if !(rel <= tol) {
        return Err(Error::Breakdown { tol, last: rel, residual_history: history });
    }
    Ok(SolveReport {
        solution: x,
        relative_residual: rel,
        residual_history: history,
        refinement_steps: steps,
        unknowns: n,
        nnz: a.nnz(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, &[(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row(1).0, &[0, 2]);
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn identity_system() {
        let b = vec![3.0, -1.0, 0.25, 7.0];
        let rep = solve(&CsrMatrix::identity(4), &b, DEFAULT_TOL).unwrap();
        assert_eq!(rep.solution, b);
        assert!(rep.relative_residual <= DEFAULT_TOL);
    }

    #[test]
    fn nonsymmetric_system() {
        // [[4, 1, 0], [2, 5, 1], [0, 3, 6]] x = [1, 2, 3]
        let t = [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 5.0), (1, 2, 1.0), (2, 1, 3.0), (2, 2, 6.0)];
        let a = CsrMatrix::from_triplets(3, 3, &t).unwrap();
        let rep = solve(&a, &[1.0, 2.0, 3.0], 1e-14).unwrap();
        let r = residual(&a, &rep.solution, &[1.0, 2.0, 3.0]);
        assert!(norm2(&r) < 1e-14);
    }

    #[test]
    fn needs_row_pivoting() {
        let t = [(0, 1, 1.0), (1, 0, 1.0)];
        let a = CsrMatrix::from_triplets(2, 2, &t).unwrap();
        let rep = solve(&a, &[2.0, 3.0], 1e-14).unwrap();
        assert_eq!(rep.solution, vec![3.0, 2.0]);
    }

    #[test]
    fn singular_inputs() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(solve(&a, &[1.0, 1.0], 1e-10), Err(Error::Singular { column: 1 })));
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(matches!(solve(&a, &[1.0, 1.0], 1e-10), Err(Error::Singular { .. } | Error::Breakdown { .. })));
    }

    #[test]
    fn zero_rhs() {
        let rep = solve(&CsrMatrix::identity(3), &[0.0; 3], 1e-10).unwrap();
        assert_eq!(rep.solution, vec![0.0; 3]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]).unwrap();
        assert!(solve(&a, &[1.0, 1.0], 1e-10).is_err());
        assert!(solve(&CsrMatrix::identity(2), &[1.0], 1e-10).is_err());
        assert!(matches!(solve(&CsrMatrix::identity(1), &[f64::NAN], 1e-10), Err(Error::NonFinite(_))));
    }
}

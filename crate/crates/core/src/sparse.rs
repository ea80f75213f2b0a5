//! Compressed sparse row matrices and symmetric positive definite solves.
//!
//! Factorizations are immutable once built; every solve allocates its own
//! workspace, so one [`SpdSolver`] can serve many threads at once.

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Self {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            assert!(i < nrows && j < ncols, "entry ({i}, {j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    /// `y = self * x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `self + diag(d) * scale_diag`, scaling `self` by `scale`.
    pub fn scaled_plus_diagonal(&self, scale: f64, diag: &[f64]) -> CsrMatrix {
        assert_eq!(self.nrows, self.ncols);
        let mut entries: Vec<_> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, scale * v)))
            .collect();
        entries.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, entries)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.nrows).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Coordinate text export: a `% rows cols nnz` header, then one
    /// `row col value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "% {} {} {}", self.nrows, self.ncols, self.nnz())?;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Above this many unknowns [`SpdSolver::auto`] switches from a sparse
/// Cholesky factorization to conjugate gradients.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;

const MAX_REFINEMENT_STEPS: usize = 3;

/// Solver for `A x = b` with `A` symmetric positive definite.
pub enum SpdSolver {
    Cholesky {
        matrix: CsrMatrix,
        factor: Llt<usize, f64>,
        tolerance: f64,
    },
    ConjugateGradient {
        matrix: CsrMatrix,
        inv_diag: Vec<f64>,
        tolerance: f64,
        max_iterations: usize,
    },
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdSolver::Cholesky { matrix, .. } => {
                write!(f, "SpdSolver::Cholesky({} unknowns)", matrix.nrows())
            }
            SpdSolver::ConjugateGradient { matrix, .. } => {
                write!(
                    f,
                    "SpdSolver::ConjugateGradient({} unknowns)",
                    matrix.nrows()
                )
            }
        }
    }
}

impl SpdSolver {
    /// Direct factorization below [`DIRECT_SOLVE_LIMIT`] unknowns, Jacobi
    /// preconditioned conjugate gradients above.
    pub fn auto(matrix: CsrMatrix, tolerance: f64) -> Result<Self> {
        if matrix.nrows() < DIRECT_SOLVE_LIMIT {
            Self::cholesky(matrix, tolerance)
        } else {
            Self::conjugate_gradient(matrix, tolerance)
        }
    }

    pub fn cholesky(matrix: CsrMatrix, tolerance: f64) -> Result<Self> {
        let n = matrix.nrows();
        let upper: Vec<_> = (0..n)
            .flat_map(|i| {
                matrix
                    .row(i)
                    .filter(move |&(j, _)| j >= i)
                    .map(move |(j, v)| Triplet::new(i, j, v))
            })
            .collect();
        let csc = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &upper)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let factor = csc
            .sp_cholesky(Side::Upper)
            .map_err(|e| Error::Factorization(e.to_string()))?;
        Ok(SpdSolver::Cholesky {
            matrix,
            factor,
            tolerance,
        })
    }

    pub fn conjugate_gradient(matrix: CsrMatrix, tolerance: f64) -> Result<Self> {
        let inv_diag = matrix
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d > 0.0 {
                    Ok(1.0 / d)
                } else {
                    Err(Error::Factorization(format!(
                        "non-positive diagonal entry {d} at row {i}"
                    )))
                }
            })
            .collect::<Result<_>>()?;
        let max_iterations = 10 * matrix.nrows().max(100);
        Ok(SpdSolver::ConjugateGradient {
            matrix,
            inv_diag,
            tolerance,
            max_iterations,
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        match self {
            SpdSolver::Cholesky { matrix, .. } | SpdSolver::ConjugateGradient { matrix, .. } => {
                matrix
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix().nrows()
    }

    /// Solves to the configured relative residual.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpdSolver::Cholesky {
                matrix,
                factor,
                tolerance,
            } => {
                let b_norm = norm(b);
                if b_norm == 0.0 {
                    return Ok(vec![0.0; b.len()]);
                }
                let mut x = direct_solve(factor, b);
                // Iterative refinement on the rare ill-conditioned solve.
                for _ in 0..=MAX_REFINEMENT_STEPS {
                    let r = residual(matrix, &x, b);
                    let rel = norm(&r) / b_norm;
                    if rel <= *tolerance {
                        return Ok(x);
                    }
                    let dx = direct_solve(factor, &r);
                    x.iter_mut().zip(dx).for_each(|(xi, d)| *xi += d);
                }
                let rel = norm(&residual(matrix, &x, b)) / b_norm;
                if rel <= *tolerance {
                    Ok(x)
                } else {
                    Err(Error::NotConverged {
                        residual: rel,
                        iterations: MAX_REFINEMENT_STEPS,
                    })
                }
            }
            SpdSolver::ConjugateGradient {
                matrix,
                inv_diag,
                tolerance,
                max_iterations,
            } => pcg(matrix, inv_diag, b, None, *tolerance, *max_iterations),
        }
    }
}

fn direct_solve(factor: &Llt<usize, f64>, b: &[f64]) -> Vec<f64> {
    let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    factor.solve_in_place(rhs.as_mut());
    (0..b.len()).map(|i| rhs[(i, 0)]).collect()
}

pub(crate) fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(bi, axi)| bi - axi).collect()
}

/// Jacobi-preconditioned conjugate gradients.
pub fn pcg(
    a: &CsrMatrix,
    inv_diag: &[f64],
    b: &[f64],
    x0: Option<&[f64]>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = residual(a, &x, b);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, d)| ri * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iterations {
        let rel = norm(&r) / b_norm;
        if rel <= tolerance {
            return Ok(x);
        }
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotConverged {
                residual: rel,
                iterations: it,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / b_norm;
    if rel <= tolerance {
        Ok(x)
    } else {
        Err(Error::NotConverged {
            residual: rel,
            iterations: max_iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 1D Laplacian with a shifted diagonal.
    fn laplacian(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i > 0 {
                t.push((i, i - 1, -1.0));
                t.push((i - 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn cholesky_and_cg_agree() {
        let a = laplacian(200);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let x1 = SpdSolver::cholesky(a.clone(), 1e-12)
            .unwrap()
            .solve(&b)
            .unwrap();
        let x2 = SpdSolver::conjugate_gradient(a.clone(), 1e-12)
            .unwrap()
            .solve(&b)
            .unwrap();
        let diff: f64 = x1
            .iter()
            .zip(&x2)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "{diff}");
        assert!(norm(&residual(&a, &x1, &b)) <= 1e-12 * norm(&b));
    }

    #[test]
    fn indefinite_matrix_fails_to_factor() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, -1.0)]);
        assert!(SpdSolver::cholesky(a.clone(), 1e-12).is_err());
        assert!(SpdSolver::conjugate_gradient(a, 1e-12).is_err());
    }

    #[test]
    fn coordinate_export() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.5), (1, 0, 1.5)]);
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "% 2 2 2\n0 1 1.5\n1 0 1.5\n"
        );
    }
}

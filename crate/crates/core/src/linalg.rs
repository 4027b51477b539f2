//! Sparse direct solves via faer's LU.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::tensor::SparseMatrix;

/// LU factorization of a square sparse matrix, reusable across right-hand
/// sides.
pub struct LuSolver {
    n: usize,
    lu: Lu<usize, f64>,
}

impl LuSolver {
    pub fn new(a: &SparseMatrix) -> Result<LuSolver> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch {
                op: "LuSolver::new",
                expected: a.nrows,
                got: a.ncols,
            });
        }
        let mut triplets = Vec::with_capacity(a.nnz());
        for i in 0..a.nrows {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push(Triplet::new(i, j, v));
            }
        }
        let mat = SparseColMat::try_new_from_triplets(a.nrows, a.ncols, &triplets)
            .map_err(|_| Error::SingularMatrix)?;
        let symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|_| Error::SingularMatrix)?;
        let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref())
            .map_err(|_| Error::SingularMatrix)?;
        Ok(LuSolver { n: a.nrows, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                op: "LuSolver::solve",
                expected: self.n,
                got: rhs.len(),
            });
        }
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        Ok(out)
    }
}

pub fn solve_linear(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    LuSolver::new(a)?.solve(rhs)
}

enum FactorKind {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// A computed direct factorization: Cholesky when the matrix turned out
/// symmetric positive definite, LU otherwise.
pub struct Factor {
    n: usize,
    kind: FactorKind,
}

impl Factor {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                op: "Factor::solve",
                expected: self.n,
                got: rhs.len(),
            });
        }
        let b = Mat::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = match &self.kind {
            FactorKind::Llt(f) => f.solve(&b),
            FactorKind::Lu(f) => f.solve(&b),
        };
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        Ok(out)
    }
}

/// Factors a structurally symmetric matrix, preferring sparse Cholesky and
/// falling back to LU when the matrix is not positive definite.
pub fn factor_symmetric(a: &SparseMatrix) -> Result<Factor> {
    if a.nrows != a.ncols {
        return Err(Error::DimensionMismatch {
            op: "factor_symmetric",
            expected: a.nrows,
            got: a.ncols,
        });
    }
    let mut triplets = Vec::with_capacity(a.nnz());
    for i in 0..a.nrows {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            triplets.push(Triplet::new(i, j, v));
        }
    }
    let mat = SparseColMat::try_new_from_triplets(a.nrows, a.ncols, &triplets)
        .map_err(|_| Error::SingularMatrix)?;
    if let Ok(symbolic) = SymbolicLlt::try_new(mat.symbolic(), Side::Lower) {
        if let Ok(llt) = Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower) {
            return Ok(Factor {
                n: a.nrows,
                kind: FactorKind::Llt(llt),
            });
        }
    }
    let symbolic = SymbolicLu::try_new(mat.symbolic()).map_err(|_| Error::SingularMatrix)?;
    let lu = Lu::try_new_with_symbolic(symbolic, mat.as_ref()).map_err(|_| Error::SingularMatrix)?;
    Ok(Factor {
        n: a.nrows,
        kind: FactorKind::Lu(lu),
    })
}

/// Symbolic analysis of a fixed sparsity pattern, reusable for repeated
/// numeric factorizations of matrices sharing that pattern.
pub struct PatternLu {
    n: usize,
    symbolic_mat: faer::sparse::SymbolicSparseColMat<usize>,
    symbolic_llt: Option<SymbolicLlt<usize>>,
    symbolic_lu: SymbolicLu<usize>,
}

impl PatternLu {
    /// `col_ptr`/`row_idx` describe the pattern in compressed-sparse-column
    /// form with row indices sorted within each column.
    pub fn new(n: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>) -> Result<PatternLu> {
        let symbolic_mat =
            faer::sparse::SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic_llt = SymbolicLlt::try_new(symbolic_mat.as_ref(), Side::Lower).ok();
        let symbolic_lu =
            SymbolicLu::try_new(symbolic_mat.as_ref()).map_err(|_| Error::SingularMatrix)?;
        Ok(PatternLu {
            n,
            symbolic_mat,
            symbolic_llt,
            symbolic_lu,
        })
    }

    /// Numeric factorization for `values` laid out in the pattern's
    /// column-major entry order.
    pub fn factor(&self, values: &[f64]) -> Result<Factor> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMatrix);
        }
        let mat = faer::sparse::SparseColMatRef::new(self.symbolic_mat.as_ref(), values);
        if let Some(symbolic) = &self.symbolic_llt {
            if let Ok(llt) = Llt::try_new_with_symbolic(symbolic.clone(), mat, Side::Lower) {
                return Ok(Factor {
                    n: self.n,
                    kind: FactorKind::Llt(llt),
                });
            }
        }
        let lu = Lu::try_new_with_symbolic(self.symbolic_lu.clone(), mat)
            .map_err(|_| Error::SingularMatrix)?;
        Ok(Factor {
            n: self.n,
            kind: FactorKind::Lu(lu),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[2,1],[1,3]] x = [5, 10] => x = [1, 3]
        let a = SparseMatrix::from_triplets(
            2,
            2,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        )
        .unwrap();
        let x = solve_linear(&a, &[5.0, 10.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reuses_factorization() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            vec![
                (0, 0, 4.0),
                (1, 1, 2.0),
                (2, 2, 8.0),
                (0, 2, 1.0),
                (2, 0, 1.0),
            ],
        )
        .unwrap();
        let lu = LuSolver::new(&a).unwrap();
        for rhs in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.0, -2.0, 5.0]] {
            let x = lu.solve(&rhs).unwrap();
            let ax = a.matvec(&x).unwrap();
            for (l, r) in ax.iter().zip(&rhs) {
                assert!((l - r).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_singular() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(solve_linear(&a, &[1.0, 1.0]).is_err());
    }
}

//! Sparse matrices (CSR), sparse third-order tensors (sorted coordinate
//! format) and the contraction algebra used by the precomputed forms.

use crate::error::{Error, Result};

/// Row-compressed sparse matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from unordered (row, col, value) triplets; duplicates are
    /// accumulated in sorted coordinate order for run-to-run determinism.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, _) in &triplets {
            if i >= nrows {
                return Err(Error::IndexOutOfRange {
                    op: "SparseMatrix::from_triplets",
                    index: i,
                    len: nrows,
                });
            }
            if j >= ncols {
                return Err(Error::IndexOutOfRange {
                    op: "SparseMatrix::from_triplets",
                    index: j,
                    len: ncols,
                });
            }
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] = indices.len();
                last = Some((i, j));
            }
        }
        // make indptr cumulative over empty rows
        for i in 0..nrows {
            if indptr[i + 1] < indptr[i] {
                indptr[i + 1] = indptr[i];
            }
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ncols {
            return Err(Error::DimensionMismatch {
                op: "matvec",
                expected: self.ncols,
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &a) in cols.iter().zip(vals) {
                acc += a * v[j];
            }
            out[i] = acc;
        }
        Ok(out)
    }

    pub fn scale(&self, alpha: f64) -> SparseMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= alpha;
        }
        out
    }

    /// `self + alpha * other`, merging sparsity patterns.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::DimensionMismatch {
                op: "add_scaled",
                expected: self.nrows,
                got: other.nrows,
            });
        }
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(usize::MAX);
                let jb = cb.get(q).copied().unwrap_or(usize::MAX);
                if ja < jb {
                    indices.push(ja);
                    values.push(va[p]);
                    p += 1;
                } else if jb < ja {
                    indices.push(jb);
                    values.push(alpha * vb[q]);
                    q += 1;
                } else {
                    indices.push(ja);
                    values.push(va[p] + alpha * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            indptr[i + 1] = indices.len();
        }
        Ok(SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((j, i, v));
            }
        }
        SparseMatrix::from_triplets(self.ncols, self.nrows, triplets).expect("indices in range")
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols]; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[i][j] = v;
            }
        }
        out
    }
}

/// Third-order tensor in lexicographically sorted coordinate format with
/// merged duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    pub dims: [usize; 3],
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseTensor3 {
    pub fn from_triplets(
        dims: [usize; 3],
        mut entries: Vec<(usize, usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, j, k, _) in &entries {
            for (idx, dim) in [(i, dims[0]), (j, dims[1]), (k, dims[2])] {
                if idx >= dim {
                    return Err(Error::IndexOutOfRange {
                        op: "SparseTensor3::from_triplets",
                        index: idx,
                        len: dim,
                    });
                }
            }
        }
        entries.sort_unstable_by_key(|&(i, j, k, _)| (i, j, k));
        let mut merged: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, k, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j && last.2 == k => last.3 += v,
                _ => merged.push((i, j, k, v)),
            }
        }
        Ok(SparseTensor3 {
            dims,
            entries: merged,
        })
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `(T . v)_{ij} = sum_k T_{ijk} v_k`
    pub fn contract_mode3(&self, v: &[f64]) -> Result<SparseMatrix> {
        if v.len() != self.dims[2] {
            return Err(Error::DimensionMismatch {
                op: "contract_mode3",
                expected: self.dims[2],
                got: v.len(),
            });
        }
        // entries are sorted by (i, j, k), so output (i, j) pairs arrive in
        // CSR order and can be accumulated without hashing
        let mut indptr = vec![0usize; self.dims[0] + 1];
        let mut indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, k, t) in &self.entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += t * v[k];
            } else {
                indices.push(j);
                values.push(t * v[k]);
                indptr[i + 1] = indices.len();
                last = Some((i, j));
            }
        }
        for i in 0..self.dims[0] {
            if indptr[i + 1] < indptr[i] {
                indptr[i + 1] = indptr[i];
            }
        }
        Ok(SparseMatrix {
            nrows: self.dims[0],
            ncols: self.dims[1],
            indptr,
            indices,
            values,
        })
    }

    /// `(T ._2 v)_{ik} = sum_j T_{ijk} v_j`
    pub fn contract_mode2(&self, v: &[f64]) -> Result<SparseMatrix> {
        if v.len() != self.dims[1] {
            return Err(Error::DimensionMismatch {
                op: "contract_mode2",
                expected: self.dims[1],
                got: v.len(),
            });
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for &(i, j, k, t) in &self.entries {
            triplets.push((i, k, t * v[j]));
        }
        SparseMatrix::from_triplets(self.dims[0], self.dims[2], triplets)
    }

    /// `(T : (w ⊗ v))_i = sum_{j,k} T_{ijk} w_j v_k` without materializing
    /// the outer product.
    pub fn double_contract(&self, w: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.dims[1] {
            return Err(Error::DimensionMismatch {
                op: "double_contract",
                expected: self.dims[1],
                got: w.len(),
            });
        }
        if v.len() != self.dims[2] {
            return Err(Error::DimensionMismatch {
                op: "double_contract",
                expected: self.dims[2],
                got: v.len(),
            });
        }
        let mut out = vec![0.0; self.dims[0]];
        for &(i, j, k, t) in &self.entries {
            out[i] += t * w[j] * v[k];
        }
        Ok(out)
    }

    /// Mode-3 slice as a matrix (test helper for per-slice oracles).
    pub fn slice_mode3(&self, k: usize) -> Result<SparseMatrix> {
        let triplets = self
            .entries
            .iter()
            .filter(|&&(_, _, kk, _)| kk == k)
            .map(|&(i, j, _, v)| (i, j, v))
            .collect();
        SparseMatrix::from_triplets(self.dims[0], self.dims[1], triplets)
    }
}

/// Elementwise vector product.
pub fn hadamard(v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if v.len() != w.len() {
        return Err(Error::DimensionMismatch {
            op: "hadamard",
            expected: v.len(),
            got: w.len(),
        });
    }
    Ok(v.iter().zip(w).map(|(a, b)| a * b).collect())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

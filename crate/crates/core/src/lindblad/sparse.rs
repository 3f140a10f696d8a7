//! Minimal compressed-sparse-row complex matrix.
//!
//! Dense operands are row-major slices. Products against dense matrices are
//! split over output rows and run in parallel for large operands.

use num_complex::Complex64;

use crate::exec;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` entries. Duplicates are summed
    /// and exact zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }.pruned()
    }

    fn pruned(self) -> Self {
        if self.values.iter().all(|v| *v != ZERO) {
            return self;
        }
        let entries = self.triplets().filter(|e| e.2 != ZERO).collect::<Vec<_>>();
        let mut indptr = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &entries {
            indptr[r + 1] += 1;
        }
        for r in 0..self.nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn diagonal(d: &[Complex64]) -> Self {
        let n = d.len();
        Self::from_triplets(n, n, d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or(ZERO)
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.nrows * self.ncols];
        for (i, j, v) in self.triplets() {
            out[i * self.ncols + j] = v;
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)).collect())
    }

    pub fn conj(&self) -> Self {
        CsrMatrix { values: self.values.iter().map(|v| v.conj()).collect(), ..self.clone() }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v.conj())).collect())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_triplets(self.nrows, self.ncols, self.triplets().map(|(i, j, v)| (i, j, c * v)).collect())
    }

    /// `sum_k c_k A_k` for equally shaped matrices.
    pub fn linear_combination(terms: &[(Complex64, &CsrMatrix)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut entries = Vec::new();
        for (c, a) in terms {
            assert_eq!((a.nrows, a.ncols), (nrows, ncols), "shape mismatch in linear combination");
            entries.extend(a.triplets().map(|(i, j, v)| (i, j, *c * v)));
        }
        Self::from_triplets(nrows, ncols, entries)
    }

    pub fn add(&self, other: &CsrMatrix) -> Self {
        let one = Complex64::new(1.0, 0.0);
        Self::linear_combination(&[(one, self), (one, other)])
    }

    pub fn sub(&self, other: &CsrMatrix) -> Self {
        Self::linear_combination(&[(Complex64::new(1.0, 0.0), self), (Complex64::new(-1.0, 0.0), other)])
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> Self {
        assert_eq!(self.ncols, other.nrows, "inner dimensions differ");
        let mut entries = Vec::new();
        let mut acc = vec![ZERO; other.ncols];
        let mut touched = Vec::new();
        for i in 0..self.nrows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if acc[j] == ZERO {
                        touched.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            for &j in &touched {
                entries.push((i, j, acc[j]));
                acc[j] = ZERO;
            }
            touched.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, entries)
    }

    /// Kronecker product with `self` as the outer factor.
    pub fn kron(&self, other: &CsrMatrix) -> Self {
        let mut entries = Vec::with_capacity(self.nnz() * other.nnz());
        for (i, j, a) in self.triplets() {
            for (k, l, b) in other.triplets() {
                entries.push((i * other.nrows + k, j * other.ncols + l, a * b));
            }
        }
        Self::from_triplets(self.nrows * other.nrows, self.ncols * other.ncols, entries)
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        exec::for_each_block(y, |off, block| {
            for (k, out) in block.iter_mut().enumerate() {
                *out = self.row(off + k).map(|(j, v)| v * x[j]).sum();
            }
        });
    }

    /// `out = self * m` with `m` of shape `ncols x k`.
    pub fn mul_dense(&self, m: &[Complex64], k: usize, out: &mut [Complex64]) {
        assert_eq!(m.len(), self.ncols * k);
        assert_eq!(out.len(), self.nrows * k);
        exec::for_each_row(out, k, |i, row| {
            row.fill(ZERO);
            for (j, a) in self.row(i) {
                let src = &m[j * k..(j + 1) * k];
                for (o, s) in row.iter_mut().zip(src) {
                    *o += a * s;
                }
            }
        });
    }

    /// `out = m * self` with `m` of shape `k x nrows`.
    pub fn dense_mul(&self, m: &[Complex64], k: usize, out: &mut [Complex64]) {
        assert_eq!(m.len(), k * self.nrows);
        assert_eq!(out.len(), k * self.ncols);
        let (n_in, n_out) = (self.nrows, self.ncols);
        exec::for_each_row(out, n_out, |i, row| {
            row.fill(ZERO);
            for (r, &x) in m[i * n_in..(i + 1) * n_in].iter().enumerate() {
                if x == ZERO {
                    continue;
                }
                for (j, a) in self.row(r) {
                    row[j] += x * a;
                }
            }
        });
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        self.triplets().map(|(i, j, v)| (v - self.get(j, i).conj()).norm()).fold(0.0, f64::max)
    }
}

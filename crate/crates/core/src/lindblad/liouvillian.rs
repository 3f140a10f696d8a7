//! Explicit Liouvillian superoperator.
//!
//! Vectorization is column stacking: `vec(rho)[i + D j] = rho[i, j]`, so that
//! `vec(A rho B) = (B^T ⊗ A) vec(rho)`.

use std::io::Write;

use num_complex::Complex64;

use super::operators::{hamiltonian_from, jumps_from, MemoryBudget, ProductOperators};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::model::ModelParameters;

/// Sparse `D^2 x D^2` generator together with the parameters it was built from.
#[derive(Debug, Clone)]
pub struct LiouvillianMatrix {
    pub matrix: CsrMatrix,
    pub params: ModelParameters,
    /// Hilbert-space dimension `D = (N+1)^2`.
    pub hilbert_dim: usize,
}

impl LiouvillianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Writes `row col re im` lines behind a short header.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# liouvillian, column-stacking vectorization vec(rho)[i + D*j] = rho[i, j]")?;
        writeln!(w, "# D^2 = {}, nnz = {}", self.dim(), self.nnz())?;
        writeln!(w, "row,col,re,im")?;
        for (i, j, v) in self.matrix.triplets() {
            writeln!(w, "{i},{j},{:e},{:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Column-stacked copy of a row-major `dim x dim` matrix.
pub fn vectorize(rho: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            v[i + dim * j] = rho[i * dim + j];
        }
    }
    v
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut rho = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            rho[i * dim + j] = v[i + dim * j];
        }
    }
    rho
}

/// Rough upper bound for the bytes needed to assemble the superoperator.
pub fn assembly_footprint(p: &ModelParameters) -> u64 {
    let d = (p.n_spins as u64 + 1).pow(2);
    // Generous per-row count for H (<= 9 per row) and the dissipators, times
    // both tensor placements, plus the jump sandwich; each stored entry costs a
    // triplet while building and a CSR slot afterwards.
    let per_row = 2 * 12 + 4;
    d * d * per_row * (32 + 24)
}

/// `-i(I ⊗ H - H^T ⊗ I) + sum_k g_k (conj(L_k) ⊗ L_k - I ⊗ L_k^+L_k / 2 - (L_k^+L_k)^T ⊗ I / 2)`.
pub fn assemble_liouvillian(p: &ModelParameters, budget: &MemoryBudget) -> Result<LiouvillianMatrix> {
    let p = p.validate()?;
    budget.check(assembly_footprint(&p))?;
    let ops = ProductOperators::new(p.n_spins)?;
    let d = ops.dimension();
    let h = hamiltonian_from(&p, &ops);
    let jumps = jumps_from(&p, &ops)?;
    let id = CsrMatrix::identity(d);
    let c = |re: f64, im: f64| Complex64::new(re, im);

    let mut parts: Vec<(Complex64, CsrMatrix)> =
        vec![(c(0.0, -1.0), id.kron(&h)), (c(0.0, 1.0), h.transpose().kron(&id))];
    for j in &jumps {
        let ldl = j.op.adjoint().matmul(&j.op);
        parts.push((c(j.rate, 0.0), j.op.conj().kron(&j.op)));
        parts.push((c(-0.5 * j.rate, 0.0), id.kron(&ldl)));
        parts.push((c(-0.5 * j.rate, 0.0), ldl.transpose().kron(&id)));
    }
    let refs: Vec<_> = parts.iter().map(|(k, m)| (*k, m)).collect();
    let matrix = CsrMatrix::linear_combination(&refs);
    if matrix.nrows() != d * d {
        return Err(Error::DimensionMismatch { expected: d * d, got: matrix.nrows() });
    }
    Ok(LiouvillianMatrix { matrix, params: p, hilbert_dim: d })
}

//! Collective spin operators in the Dicke basis and the model's Hamiltonian
//! and jump operators on the product space `C ⊗ D`.
//!
//! Basis states `|S, m>` are ordered `m = S, S-1, ..., -S`; the product index
//! is `c * (N + 1) + d`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::model::{CouplingScheme, ModelParameters};

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Spin-`N/2` angular momentum matrices.
#[derive(Debug, Clone)]
pub struct DickeOperators {
    pub n_spins: usize,
    pub sx: CsrMatrix,
    pub sy: CsrMatrix,
    pub sz: CsrMatrix,
    pub s_plus: CsrMatrix,
    pub s_minus: CsrMatrix,
}

impl DickeOperators {
    pub fn dimension(&self) -> usize {
        self.n_spins + 1
    }

    pub fn total_spin(&self) -> f64 {
        self.n_spins as f64 / 2.0
    }
}

pub fn build_spin_operators(n_spins: usize) -> Result<DickeOperators> {
    if n_spins < 1 {
        return Err(Error::EmptySystem);
    }
    let dim = n_spins + 1;
    let s = n_spins as f64 / 2.0;
    let m = |k: usize| s - k as f64;
    let s_plus = CsrMatrix::from_triplets(
        dim,
        dim,
        (1..dim).map(|k| (k - 1, k, re((s * (s + 1.0) - m(k) * (m(k) + 1.0)).sqrt()))).collect(),
    );
    let s_minus = s_plus.adjoint();
    let half = re(0.5);
    let sx = CsrMatrix::linear_combination(&[(half, &s_plus), (half, &s_minus)]);
    // (S+ - S-) / 2i
    let sy =
        CsrMatrix::linear_combination(&[(Complex64::new(0.0, -0.5), &s_plus), (Complex64::new(0.0, 0.5), &s_minus)]);
    let sz = CsrMatrix::diagonal(&(0..dim).map(|k| re(m(k))).collect::<Vec<_>>());
    Ok(DickeOperators { n_spins, sx, sy, sz, s_plus, s_minus })
}

/// Single-subsystem operators lifted to the product space.
#[derive(Debug, Clone)]
pub struct ProductOperators {
    pub spins: DickeOperators,
    /// `[S_C^x, S_C^y, S_C^z] ⊗ I`.
    pub c: [CsrMatrix; 3],
    /// `I ⊗ [S_D^x, S_D^y, S_D^z]`.
    pub d: [CsrMatrix; 3],
    pub c_minus: CsrMatrix,
    pub c_plus: CsrMatrix,
    pub d_minus: CsrMatrix,
    pub d_plus: CsrMatrix,
}

impl ProductOperators {
    pub fn new(n_spins: usize) -> Result<Self> {
        let spins = build_spin_operators(n_spins)?;
        let id = CsrMatrix::identity(spins.dimension());
        let left = |a: &CsrMatrix| a.kron(&id);
        let right = |a: &CsrMatrix| id.kron(a);
        Ok(ProductOperators {
            c: [left(&spins.sx), left(&spins.sy), left(&spins.sz)],
            d: [right(&spins.sx), right(&spins.sy), right(&spins.sz)],
            c_minus: left(&spins.s_minus),
            c_plus: left(&spins.s_plus),
            d_minus: right(&spins.s_minus),
            d_plus: right(&spins.s_plus),
            spins,
        })
    }

    pub fn dimension(&self) -> usize {
        self.spins.dimension().pow(2)
    }
}

/// `H = Omega S_C^x - (4J/N)(S_D^z)^2 - 2h S_D^x + H_int`.
///
/// The DTC drive carries a factor 2 so that the large-N limit of the
/// Heisenberg equations reproduces the `2h m_D^z` terms of the mean-field
/// equations.
pub fn build_hamiltonian(p: &ModelParameters) -> Result<CsrMatrix> {
    let p = p.validate()?;
    let ops = ProductOperators::new(p.n_spins)?;
    Ok(hamiltonian_from(&p, &ops))
}

pub(crate) fn hamiltonian_from(p: &ModelParameters, ops: &ProductOperators) -> CsrMatrix {
    let n = p.n_spins as f64;
    let dz2 = ops.d[2].matmul(&ops.d[2]);
    let mut terms =
        vec![(re(p.omega), &ops.c[0]), (re(-4.0 * p.j_coupling / n), &dz2), (re(-2.0 * p.h_drive), &ops.d[0])];
    let yx;
    let (pm, mp);
    match p.scheme {
        CouplingScheme::CoherentYX => {
            yx = ops.c[1].matmul(&ops.d[0]);
            terms.push((re(2.0 * p.eta / n), &yx));
        }
        CouplingScheme::Dissipative => {}
        CouplingScheme::SpinExchange => {
            pm = ops.c_plus.matmul(&ops.d_minus);
            mp = ops.c_minus.matmul(&ops.d_plus);
            terms.push((re(2.0 * p.eta / n), &pm));
            terms.push((re(2.0 * p.eta / n), &mp));
        }
    }
    CsrMatrix::linear_combination(&terms)
}

/// A collective jump operator with its rate.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub rate: f64,
    pub op: CsrMatrix,
}

/// `S_C^-` at rate `2 kappa / N` (that is `kappa / S`), plus `S_C^- + S_D^-` at
/// rate `2 eta / N` for dissipative coupling.
pub fn jump_operators(p: &ModelParameters) -> Result<Vec<JumpOperator>> {
    let p = p.validate()?;
    let ops = ProductOperators::new(p.n_spins)?;
    jumps_from(&p, &ops)
}

pub(crate) fn jumps_from(p: &ModelParameters, ops: &ProductOperators) -> Result<Vec<JumpOperator>> {
    let n = p.n_spins as f64;
    let mut jumps = vec![JumpOperator { rate: 2.0 * p.kappa / n, op: ops.c_minus.clone() }];
    if p.scheme == CouplingScheme::Dissipative {
        if p.eta < 0.0 {
            return Err(Error::Config(format!(
                "dissipative coupling needs eta >= 0 at finite N, since eta sets a decay rate (got {})",
                p.eta
            )));
        }
        if p.eta > 0.0 {
            jumps.push(JumpOperator { rate: 2.0 * p.eta / n, op: ops.c_minus.add(&ops.d_minus) });
        }
    }
    Ok(jumps)
}

/// Upper bound on bytes a finite-N operation may allocate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryBudget {
    pub bytes: u64,
}

impl Default for MemoryBudget {
    fn default() -> Self {
        MemoryBudget { bytes: 8 << 30 }
    }
}

impl MemoryBudget {
    pub fn check(&self, needed: u64) -> Result<()> {
        if needed > self.bytes {
            return Err(Error::MemoryBudget { needed, budget: self.bytes });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commutator(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
        a.matmul(b).sub(&b.matmul(a))
    }

    fn max_abs_diff(a: &CsrMatrix, b: &CsrMatrix) -> f64 {
        a.to_dense().iter().zip(b.to_dense()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let s = build_spin_operators(1).unwrap();
        let h = re(0.5);
        assert_eq!(s.sx.to_dense(), vec![re(0.0), h, h, re(0.0)]);
        assert_eq!(s.sy.to_dense(), vec![re(0.0), Complex64::new(0.0, -0.5), Complex64::new(0.0, 0.5), re(0.0)]);
        assert_eq!(s.sz.to_dense(), vec![h, re(0.0), re(0.0), -h]);
    }

    #[test]
    fn spin_one_sz() {
        let s = build_spin_operators(2).unwrap();
        let d = s.sz.to_dense();
        assert_eq!([d[0], d[4], d[8]], [re(1.0), re(0.0), re(-1.0)]);
    }

    #[test]
    fn angular_momentum_algebra() {
        for n in [1, 2, 5, 12, 31] {
            let s = build_spin_operators(n).unwrap();
            let i = Complex64::i();
            let cases = [(&s.sx, &s.sy, &s.sz), (&s.sy, &s.sz, &s.sx), (&s.sz, &s.sx, &s.sy)];
            for (a, b, c) in cases {
                assert!(max_abs_diff(&commutator(a, b), &c.scale(i)) < 1e-13, "N={n}");
            }
            let casimir = s.sx.matmul(&s.sx).add(&s.sy.matmul(&s.sy)).add(&s.sz.matmul(&s.sz));
            let ss = s.total_spin() * (s.total_spin() + 1.0);
            let target = CsrMatrix::identity(n + 1).scale(re(ss));
            assert!(max_abs_diff(&casimir, &target) < 1e-12, "N={n}");
            assert_eq!(s.s_plus, s.s_minus.adjoint());
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for scheme in CouplingScheme::ALL {
            let p = ModelParameters::new(scheme, 2.0, 0.1, 0.25, 0.3).with_n(6);
            assert!(build_hamiltonian(&p).unwrap().hermiticity_error() < 1e-13);
        }
    }

    #[test]
    fn coherent_coupling_equals_four_ladder_form() {
        let n = 7;
        let p = ModelParameters::coherent_reference(0.37).with_n(n);
        let ops = ProductOperators::new(n).unwrap();
        let with = hamiltonian_from(&p, &ops);
        let without = hamiltonian_from(&p.with_eta(0.0), &ops);
        // (2 eta / N) * (1/4i) * (S+ - S-)_C (S+ + S-)_D
        let coef = Complex64::new(0.0, -2.0 * p.eta / n as f64 / 4.0);
        let ladder = CsrMatrix::linear_combination(&[
            (coef, &ops.c_plus.matmul(&ops.d_plus)),
            (coef, &ops.c_plus.matmul(&ops.d_minus)),
            (-coef, &ops.c_minus.matmul(&ops.d_plus)),
            (-coef, &ops.c_minus.matmul(&ops.d_minus)),
        ]);
        assert!(max_abs_diff(&with.sub(&without), &ladder) < 1e-14);
    }

    #[test]
    fn decoupled_hamiltonian_commutes_with_dtc_operators_of_ctc_part() {
        let p = ModelParameters::coherent_reference(0.0).with_n(4);
        let ops = ProductOperators::new(4).unwrap();
        let h = hamiltonian_from(&p, &ops);
        // [H, S_C^a ⊗ I] only contains CTC terms: it equals [Omega S_C^x ⊗ I, S_C^a ⊗ I].
        for a in &ops.c {
            let full = commutator(&h, a);
            let ctc_only = commutator(&ops.c[0].scale(re(p.omega)), a);
            assert!(max_abs_diff(&full, &ctc_only) < 1e-13);
        }
        let z = commutator(&ops.c[0], &ops.d[2]);
        assert_eq!(z.nnz(), 0);
    }

    #[test]
    fn dissipative_hamiltonian_ignores_eta() {
        let a = build_hamiltonian(&ModelParameters::dissipative_reference(0.1).with_n(5)).unwrap();
        let b = build_hamiltonian(&ModelParameters::dissipative_reference(0.9).with_n(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jump_rates() {
        let p = ModelParameters::dissipative_reference(0.3).with_n(10);
        let j = jump_operators(&p).unwrap();
        assert_eq!(j.len(), 2);
        assert!((j[0].rate - 0.2).abs() < 1e-15);
        assert!((j[1].rate - 0.06).abs() < 1e-15);
        assert_eq!(jump_operators(&ModelParameters::coherent_reference(0.3).with_n(10)).unwrap().len(), 1);
        assert!(jump_operators(&p.with_eta(-0.1)).is_err());
    }

    #[test]
    fn zero_spins_rejected() {
        assert!(matches!(build_spin_operators(0), Err(Error::EmptySystem)));
    }
}

#![allow(dead_code)]

use htc_core::lindblad::sparse::CsrMatrix;
use num_complex::Complex64;
use rand::Rng;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Random Hermitian matrix (row-major) with entries of order one; not normalised.
pub fn random_hermitian<R: Rng>(dim: usize, rng: &mut R) -> Vec<Complex64> {
    let mut m = vec![ZERO; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = c(rng.gen_range(-1.0..1.0), 0.0);
        for j in i + 1..dim {
            let z = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            m[i * dim + j] = z;
            m[j * dim + i] = z.conj();
        }
    }
    m
}

/// Column-stacked Lindblad generator for one spin system:
/// `-i(I ⊗ H - H^T ⊗ I) + sum g (conj(L) ⊗ L - I ⊗ L^+L/2 - (L^+L)^T ⊗ I/2)`.
pub fn generator(h: &CsrMatrix, jumps: &[(f64, CsrMatrix)]) -> CsrMatrix {
    let id = CsrMatrix::identity(h.nrows());
    let mut parts = vec![(c(0.0, -1.0), id.kron(h)), (c(0.0, 1.0), h.transpose().kron(&id))];
    for (rate, l) in jumps {
        let ldl = l.adjoint().matmul(l);
        parts.push((c(*rate, 0.0), l.conj().kron(l)));
        parts.push((c(-0.5 * rate, 0.0), id.kron(&ldl)));
        parts.push((c(-0.5 * rate, 0.0), ldl.transpose().kron(&id)));
    }
    let refs: Vec<_> = parts.iter().map(|(k, m)| (*k, m)).collect();
    CsrMatrix::linear_combination(&refs)
}

fn dense_matvec(a: &[Complex64], n: usize, x: &[Complex64], y: &mut [Complex64]) {
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `exp(A t) v` for a dense row-major `n x n` matrix by a Taylor series on
/// sub-intervals short enough that `|A| dt <= 1/2`, summed to machine precision.
pub fn expm_action(a: &[Complex64], n: usize, v: &[Complex64], t: f64) -> Vec<Complex64> {
    let norm = (0..n).map(|i| a[i * n..(i + 1) * n].iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let steps = ((2.0 * norm * t).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let mut x = v.to_vec();
    let mut term = vec![ZERO; n];
    let mut next = vec![ZERO; n];
    for _ in 0..steps {
        term.copy_from_slice(&x);
        for k in 1..80 {
            dense_matvec(a, n, &term, &mut next);
            let f = dt / k as f64;
            let mut size: f64 = 0.0;
            for i in 0..n {
                term[i] = next[i] * f;
                x[i] += term[i];
                size = size.max(term[i].norm());
            }
            if size < 1e-18 {
                break;
            }
        }
    }
    x
}

/// Largest distance from each element of `a` to its nearest unused partner
/// in `b` (greedy matching); `a` and `b` must have equal length.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<&Complex64> = a.iter().collect();
    order.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    for x in order {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

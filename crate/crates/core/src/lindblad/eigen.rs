//! Dominant eigenmodes of the Liouvillian.
//!
//! Small superoperators are diagonalised densely. Larger ones use
//! shift-invert Arnoldi on `(L - sigma)^{-1}` with a sparse LU factorisation,
//! with shifts just right of the imaginary axis next to the expected
//! oscillation frequencies. Every reported pair is checked against the
//! original matrix.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::liouvillian::LiouvillianMatrix;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Eigenvalues with modulus below this are treated as the steady state.
pub const STEADY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeLabel {
    Steady,
    Ctc,
    Dtc,
    Other,
}

/// Eigenvalues sorted by descending real part, with labels and residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenmodeSet {
    pub n_spins: usize,
    pub eigenvalues: Vec<Complex64>,
    pub labels: Vec<ModeLabel>,
    /// `||L v - lambda v|| / ||v||`; NaN when only eigenvalues were computed.
    pub residuals: Vec<f64>,
}

impl EigenmodeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The labelled eigenvalue with non-negative imaginary part.
    pub fn labelled(&self, label: ModeLabel) -> Option<Complex64> {
        self.eigenvalues.iter().zip(&self.labels).filter(|(l, t)| **t == label && l.im >= 0.0).map(|(l, _)| *l).next()
    }

    pub fn count(&self, label: ModeLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["index", "re", "im", "label", "residual"])?;
        for (k, ((l, t), r)) in self.eigenvalues.iter().zip(&self.labels).zip(&self.residuals).enumerate() {
            let label = serde_json::to_value(t)?.as_str().unwrap_or("other").to_string();
            wr.write_record([k.to_string(), format!("{:e}", l.re), format!("{:e}", l.im), label, format!("{r:e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Dense below `dense_limit`, shift-invert above.
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub strategy: Strategy,
    /// Largest superoperator dimension handled densely by `Auto`.
    pub dense_limit: usize,
    /// Shift points; conjugate partners of every found pair are added, so only
    /// shifts with non-negative imaginary part are needed.
    pub shifts: Vec<Complex64>,
    /// Eigenvalues sought around each shift.
    pub per_shift: usize,
    pub krylov_dim: usize,
    pub max_restarts: usize,
    pub residual_tol: f64,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            strategy: Strategy::Auto,
            dense_limit: 2500,
            shifts: vec![Complex64::new(0.01, 0.0)],
            per_shift: 8,
            krylov_dim: 60,
            max_restarts: 40,
            residual_tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

impl SpectrumOptions {
    /// Shifts at `0.01 kappa` and `0.01 kappa + i omega` for each reference frequency.
    pub fn with_frequencies(mut self, kappa: f64, omegas: &[f64]) -> Self {
        self.shifts = std::iter::once(Complex64::new(0.01 * kappa, 0.0))
            .chain(omegas.iter().filter(|w| w.is_finite() && **w > 0.0).map(|&w| Complex64::new(0.01 * kappa, w)))
            .collect();
        self
    }
}

/// The `k` eigenvalues with the largest real part (among those reachable from
/// the shifts in the iterative case). Only the steady state is labelled.
pub fn spectrum(l: &LiouvillianMatrix, k: usize, opts: &SpectrumOptions) -> Result<EigenmodeSet> {
    if k == 0 {
        return Err(Error::Config("requested eigenvalue count must be at least 1".into()));
    }
    let dense = match opts.strategy {
        Strategy::Dense => true,
        Strategy::ShiftInvert => false,
        Strategy::Auto => l.dim() <= opts.dense_limit,
    };
    let mut pairs = if dense { dense_pairs(&l.matrix)? } else { shift_invert_pairs(&l.matrix, opts)? };
    pairs.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
    pairs.truncate(k);
    let worst = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    if worst > opts.residual_tol {
        return Err(Error::NoConvergence { best_residual: worst });
    }
    let eigenvalues: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
    let labels = steady_labels(&eigenvalues);
    Ok(EigenmodeSet { n_spins: l.params.n_spins, eigenvalues, labels, residuals: pairs.iter().map(|p| p.1).collect() })
}

/// Every eigenvalue of `l`, densely; no eigenvectors, no residuals.
pub fn full_spectrum(l: &LiouvillianMatrix) -> Result<Vec<Complex64>> {
    let m = to_faer_dense(&l.matrix);
    m.eigenvalues().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))
}

fn steady_labels(eigenvalues: &[Complex64]) -> Vec<ModeLabel> {
    let mut labels = vec![ModeLabel::Other; eigenvalues.len()];
    if let Some((i, l)) = eigenvalues.iter().enumerate().min_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
        if l.norm() < STEADY_TOL {
            labels[i] = ModeLabel::Steady;
        }
    }
    labels
}

fn to_faer_dense(a: &CsrMatrix) -> Mat<Complex64> {
    let mut m = Mat::<Complex64>::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        m[(i, j)] = v;
    }
    m
}

fn residual(a: &CsrMatrix, lambda: Complex64, v: &[Complex64], scratch: &mut [Complex64]) -> f64 {
    a.matvec(v, scratch);
    let num: f64 = scratch.iter().zip(v).map(|(av, x)| (av - lambda * x).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    num / den
}

fn dense_pairs(a: &CsrMatrix) -> Result<Vec<(Complex64, f64)>> {
    let m = to_faer_dense(a);
    let evd = m.eigen().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let (u, s) = (evd.U(), evd.S());
    let n = a.nrows();
    let mut scratch = vec![ZERO; n];
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let lambda = s[j];
        let v: Vec<Complex64> = (0..n).map(|i| u[(i, j)]).collect();
        out.push((lambda, residual(a, lambda, &v, &mut scratch)));
    }
    Ok(out)
}

struct ShiftedSolver {
    lu: faer::sparse::linalg::solvers::Lu<usize, Complex64>,
    n: usize,
}

impl ShiftedSolver {
    fn new(a: &CsrMatrix, sigma: Complex64) -> Result<Self> {
        let n = a.nrows();
        let mut trips: Vec<Triplet<usize, usize, Complex64>> =
            a.triplets().filter(|t| t.0 != t.1).map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let mut diag = vec![-sigma; n];
        for (i, j, v) in a.triplets() {
            if i == j {
                diag[i] += v;
            }
        }
        trips.extend(diag.into_iter().enumerate().map(|(i, v)| Triplet::new(i, i, v)));
        let m = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let lu = m.sp_lu().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        Ok(ShiftedSolver { lu, n })
    }

    fn solve(&self, x: &mut [Complex64]) {
        let mut col = Mat::<Complex64>::from_fn(self.n, 1, |i, _| x[i]);
        self.lu.solve_in_place(col.as_mut());
        for (i, v) in x.iter_mut().enumerate() {
            *v = col[(i, 0)];
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Orthogonalises `w` against `basis` twice (classical Gram–Schmidt with
/// reorthogonalisation) and returns the accumulated coefficients.
fn orthogonalize(basis: &[Vec<Complex64>], w: &mut [Complex64]) -> Vec<Complex64> {
    let mut coef = vec![ZERO; basis.len()];
    for _ in 0..2 {
        for (c, v) in coef.iter_mut().zip(basis) {
            let h = dot(v, w);
            *c += h;
            for (x, y) in w.iter_mut().zip(v) {
                *x -= h * y;
            }
        }
    }
    coef
}

/// Eigenpairs of `a` closest to `sigma`. Explicitly restarted Arnoldi on
/// `(a - sigma)^{-1}`: each restart begins from the sum of the wanted Ritz
/// vectors. Returns the pairs that met the residual tolerance.
fn arnoldi_near(
    a: &CsrMatrix,
    sigma: Complex64,
    nev: usize,
    opts: &SpectrumOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Complex64, Vec<Complex64>, f64)>> {
    let n = a.nrows();
    let nev = nev.min(n);
    let m = opts.krylov_dim.max(2 * nev + 2).min(n);
    let solver = ShiftedSolver::new(a, sigma)?;
    let mut scratch = vec![ZERO; n];
    let mut start: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut best = f64::INFINITY;
    let mut best_set: Vec<(Complex64, Vec<Complex64>, f64)> = Vec::new();

    for _ in 0..opts.max_restarts.max(1) {
        let s0 = norm(&start);
        if s0 == 0.0 {
            break;
        }
        let mut v: Vec<Vec<Complex64>> = vec![start.iter().map(|x| x / s0).collect()];
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut steps = 0;
        for j in 0..m {
            let mut w = v[j].clone();
            solver.solve(&mut w);
            let coef = orthogonalize(&v, &mut w);
            for (i, c) in coef.into_iter().enumerate() {
                h[i][j] = c;
            }
            let beta = norm(&w);
            h[j + 1][j] = Complex64::new(beta, 0.0);
            steps = j + 1;
            if beta < 1e-14 {
                break;
            }
            if j + 1 < m {
                v.push(w.iter().map(|x| x / beta).collect());
            }
        }
        let hm = Mat::<Complex64>::from_fn(steps, steps, |i, j| h[i][j]);
        let evd = hm.eigen().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let (s, u) = (evd.S(), evd.U());
        // Largest |theta| is closest to sigma.
        let mut order: Vec<usize> = (0..steps).filter(|&i| s[i].norm() > 0.0).collect();
        order.sort_by(|&i, &j| s[j].norm().total_cmp(&s[i].norm()));
        let mut restart = vec![ZERO; n];
        let mut converged = Vec::new();
        let mut worst: f64 = 0.0;
        for &idx in order.iter().take(nev) {
            let mut y = vec![ZERO; n];
            for (k, vk) in v.iter().enumerate().take(steps) {
                let c = u[(k, idx)];
                for (yi, x) in y.iter_mut().zip(vk) {
                    *yi += c * x;
                }
            }
            let yn = norm(&y);
            y.iter_mut().for_each(|x| *x /= yn);
            let lambda = sigma + s[idx].inv();
            let r = residual(a, lambda, &y, &mut scratch);
            worst = worst.max(r);
            for (ri, yi) in restart.iter_mut().zip(&y) {
                *ri += yi;
            }
            if r < opts.residual_tol {
                converged.push((lambda, y, r));
            }
        }
        best = best.min(worst);
        if converged.len() > best_set.len() {
            best_set = converged;
        }
        if best_set.len() >= nev.min(order.len()) {
            break;
        }
        start = restart;
    }
    if best_set.is_empty() {
        return Err(Error::NoConvergence { best_residual: best });
    }
    Ok(best_set)
}

/// Column-stacked `vec(X^+)` from `vec(X)`.
fn vec_adjoint(v: &[Complex64], d: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; v.len()];
    for i in 0..d {
        for j in 0..d {
            out[i + d * j] = v[j + d * i].conj();
        }
    }
    out
}

/// Found eigenpairs; a candidate is a duplicate when its eigenvalue matches
/// existing ones and its vector lies in their span (degenerate eigenvalues
/// are kept once per independent vector).
#[derive(Default)]
struct PairSet {
    values: Vec<Complex64>,
    residuals: Vec<f64>,
    vectors: Vec<Vec<Complex64>>,
}

impl PairSet {
    fn insert(&mut self, lambda: Complex64, v: Vec<Complex64>, r: f64) {
        let scale = lambda.norm().max(1.0);
        let mut basis: Vec<Vec<Complex64>> = Vec::new();
        for (l, w) in self.values.iter().zip(&self.vectors) {
            if (l - lambda).norm() < 1e-6 * scale {
                let mut q = w.clone();
                orthogonalize(&basis, &mut q);
                let qn = norm(&q);
                if qn > 1e-10 {
                    basis.push(q.iter().map(|x| x / qn).collect());
                }
            }
        }
        let mut u = v.clone();
        orthogonalize(&basis, &mut u);
        if norm(&u) > 1e-6 * norm(&v) {
            self.values.push(lambda);
            self.residuals.push(r);
            self.vectors.push(v);
        }
    }
}

fn shift_invert_pairs(a: &CsrMatrix, opts: &SpectrumOptions) -> Result<Vec<(Complex64, f64)>> {
    let n = a.nrows();
    let d = (n as f64).sqrt().round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut found = PairSet::default();
    let mut scratch = vec![ZERO; n];
    for &sigma in &opts.shifts {
        let pairs = arnoldi_near(a, sigma, opts.per_shift, opts, &mut rng)?;
        for (lambda, v, r) in pairs {
            if lambda.im.abs() > STEADY_TOL && d * d == n {
                // The generator preserves Hermiticity, so X -> X^+ maps the
                // eigenvector of lambda onto one of conj(lambda).
                let w = vec_adjoint(&v, d);
                let rc = residual(a, lambda.conj(), &w, &mut scratch);
                found.insert(lambda.conj(), w, rc);
            }
            found.insert(lambda, v, r);
        }
    }
    Ok(found.values.into_iter().zip(found.residuals).collect())
}

/// Labels the steady state and the slowest-decaying modes whose frequency
/// lies within `tol` (relative) of the CTC and DTC reference frequencies.
/// A labelled mode's complex conjugate receives the same label.
pub fn classify_modes(raw: &[Complex64], omega_ctc: f64, omega_dtc: f64, tol: f64) -> Result<EigenmodeSet> {
    if !(omega_ctc > 0.0 && omega_dtc > 0.0) {
        return Err(Error::Config("reference frequencies must be positive".into()));
    }
    let mut set = EigenmodeSet {
        n_spins: 0,
        eigenvalues: raw.to_vec(),
        labels: steady_labels(raw),
        residuals: vec![f64::NAN; raw.len()],
    };
    label_band(&mut set, omega_ctc, tol, ModeLabel::Ctc);
    label_band(&mut set, omega_dtc, tol, ModeLabel::Dtc);
    Ok(set)
}

fn label_band(set: &mut EigenmodeSet, omega: f64, tol: f64, label: ModeLabel) {
    let pick = set
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, l)| set.labels[*i] == ModeLabel::Other && l.re <= 0.0 && (l.im - omega).abs() < tol * omega)
        .max_by(|a, b| a.1.re.total_cmp(&b.1.re))
        .map(|(i, l)| (i, *l));
    let Some((i, lambda)) = pick else { return };
    set.labels[i] = label;
    let partner = set
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(j, _)| set.labels[*j] == ModeLabel::Other)
        .min_by(|a, b| (a.1 - lambda.conj()).norm().total_cmp(&(b.1 - lambda.conj()).norm()));
    if let Some((j, l)) = partner {
        if (l - lambda.conj()).norm() < 1e-6 * lambda.norm().max(1.0) {
            set.labels[j] = label;
        }
    }
}

/// Re-labels a spectrum using mean-field reference frequencies.
pub fn label_spectrum(set: &EigenmodeSet, omega_ctc: f64, omega_dtc: f64, tol: f64) -> Result<EigenmodeSet> {
    let mut out = classify_modes(&set.eigenvalues, omega_ctc, omega_dtc, tol)?;
    out.n_spins = set.n_spins;
    out.residuals = set.residuals.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{assemble_liouvillian, MemoryBudget};
    use crate::model::ModelParameters;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn synthetic_classification() {
        let raw = [c(0.0, 0.0), c(-0.1, 1.0), c(-0.1, -1.0), c(-0.05, 0.25), c(-0.05, -0.25)];
        let set = classify_modes(&raw, 1.0, 0.25, 0.1).unwrap();
        use ModeLabel::*;
        assert_eq!(set.labels, vec![Steady, Ctc, Ctc, Dtc, Dtc]);
    }

    #[test]
    fn empty_band_leaves_label_absent() {
        let raw = [c(0.0, 0.0), c(-0.1, 1.0), c(-0.1, -1.0)];
        let set = classify_modes(&raw, 1.0, 0.25, 0.1).unwrap();
        assert_eq!(set.count(ModeLabel::Dtc), 0);
        assert_eq!(set.count(ModeLabel::Steady), 1);
    }

    #[test]
    fn slowest_mode_in_band_wins() {
        let raw = [c(0.0, 0.0), c(-0.3, 1.02), c(-0.1, 0.97), c(-0.01, 1.5)];
        let set = classify_modes(&raw, 1.0, 0.25, 0.1).unwrap();
        assert_eq!(set.labelled(ModeLabel::Ctc), Some(c(-0.1, 0.97)));
    }

    #[test]
    fn dense_and_shift_invert_agree() {
        let p = ModelParameters::coherent_reference(0.15).with_n(4);
        let l = assemble_liouvillian(&p, &MemoryBudget::default()).unwrap();
        let dense =
            spectrum(&l, l.dim(), &SpectrumOptions { strategy: Strategy::Dense, ..Default::default() }).unwrap();
        let opts =
            SpectrumOptions { strategy: Strategy::ShiftInvert, ..Default::default() }.with_frequencies(1.0, &[1.73]);
        let iter = spectrum(&l, l.dim(), &opts).unwrap();
        assert!(dense.residuals.iter().all(|&r| r < 1e-8));
        assert!(iter.residuals.iter().all(|&r| r < 1e-8));
        assert_eq!(dense.labels[0], ModeLabel::Steady);
        let near = |set: &EigenmodeSet, z: Complex64| set.eigenvalues.iter().any(|m| (m - z).norm() < 1e-8);
        for z in &iter.eigenvalues {
            assert!(near(&dense, *z), "{z} not in dense spectrum");
        }
        // The four dense eigenvalues closest to each shift are all found.
        for sigma in &opts.shifts {
            let mut by_dist = dense.eigenvalues.clone();
            by_dist.sort_by(|a, b| (a - sigma).norm().total_cmp(&(b - sigma).norm()));
            for z in by_dist.iter().take(4) {
                assert!(near(&iter, *z), "{z} near {sigma} missed");
            }
        }
        assert_eq!(iter.eigenvalues.iter().filter(|z| z.norm() < STEADY_TOL).count(), 2);
    }

    #[test]
    fn conjugate_partners_are_verified() {
        let p = ModelParameters::coherent_reference(0.15).with_n(3);
        let l = assemble_liouvillian(&p, &MemoryBudget::default()).unwrap();
        let opts =
            SpectrumOptions { strategy: Strategy::ShiftInvert, ..Default::default() }.with_frequencies(1.0, &[1.7]);
        let set = spectrum(&l, l.dim(), &opts).unwrap();
        for lam in &set.eigenvalues {
            assert!(set.eigenvalues.iter().any(|m| (m - lam.conj()).norm() < 1e-7));
        }
    }

    #[test]
    fn zero_count_rejected() {
        let p = ModelParameters::coherent_reference(0.15).with_n(1);
        let l = assemble_liouvillian(&p, &MemoryBudget::default()).unwrap();
        assert!(spectrum(&l, 0, &SpectrumOptions::default()).is_err());
    }
}

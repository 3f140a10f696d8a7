//! Density matrices and the matrix-free master equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::operators::{hamiltonian_from, jumps_from, MemoryBudget, ProductOperators};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::exec;
use crate::model::{BlochPair, ModelParameters, Trajectory};
use crate::ode::{self, StepControl};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const BYTES_PER_ENTRY: u64 = std::mem::size_of::<Complex64>() as u64;

/// Dense row-major density matrix on the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

/// Amplitudes of `|theta, phi>` in the basis `m = S, S-1, ..., -S`:
/// `sqrt(C(N,k)) cos(theta/2)^(N-k) sin(theta/2)^k e^(i k phi)` with `k = S - m`.
fn coherent_amplitudes(n: usize, dir: &[f64; 3]) -> Result<Vec<Complex64>> {
    let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !len.is_finite() || (len - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("finite-N initial state needs unit Bloch vectors (got length {len})")));
    }
    let theta = (dir[2] / len).clamp(-1.0, 1.0).acos();
    let phi = dir[1].atan2(dir[0]);
    let (c, s) = ((0.5 * theta).cos(), (0.5 * theta).sin());
    let mut ln_binom = 0.0;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        if k > 0 {
            ln_binom += ((n + 1 - k) as f64).ln() - (k as f64).ln();
        }
        let mag = (0.5 * ln_binom).exp() * c.powi((n - k) as i32) * s.powi(k as i32);
        out.push(Complex64::from_polar(mag, k as f64 * phi));
    }
    Ok(out)
}

impl DensityMatrix {
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: data.len() });
        }
        Ok(DensityMatrix { dim, data })
    }

    /// `|psi><psi|` for a (not necessarily normalised) state vector.
    pub fn pure(psi: &[Complex64]) -> Self {
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        let dim = psi.len();
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                data[i * dim + j] = psi[i] * psi[j].conj() / norm;
            }
        }
        DensityMatrix { dim, data }
    }

    /// `|S,S> ⊗ |S,S>`: both subsystems fully polarised along +z.
    pub fn fully_polarized(n_spins: usize) -> Self {
        let dim = (n_spins + 1).pow(2);
        let mut data = vec![ZERO; dim * dim];
        data[0] = Complex64::new(1.0, 0.0);
        DensityMatrix { dim, data }
    }

    /// Product of spin coherent states pointing along the unit Bloch vectors
    /// `state.m_c` and `state.m_d`.
    pub fn coherent(n_spins: usize, state: &BlochPair) -> Result<Self> {
        if n_spins < 1 {
            return Err(Error::EmptySystem);
        }
        let c = coherent_amplitudes(n_spins, &state.m_c)?;
        let d = coherent_amplitudes(n_spins, &state.m_d)?;
        let psi: Vec<Complex64> = c.iter().flat_map(|a| d.iter().map(move |b| a * b)).collect();
        Ok(Self::pure(&psi))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = Complex64::new(1.0 / dim as f64, 0.0);
        }
        DensityMatrix { dim, data }
    }

    /// `rho_C ⊗ rho_D`.
    pub fn product(c: &DensityMatrix, d: &DensityMatrix) -> Self {
        let (a, b) = (c.dim, d.dim);
        let dim = a * b;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..a {
            for j in 0..a {
                for k in 0..b {
                    for l in 0..b {
                        data[(i * b + k) * dim + j * b + l] = c.get(i, j) * d.get(k, l);
                    }
                }
            }
        }
        DensityMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.data, self.dim)
    }

    /// `tr(rho A)`.
    pub fn expectation(&self, a: &CsrMatrix) -> Complex64 {
        a.triplets().map(|(j, i, v)| self.data[i * self.dim + j] * v).sum()
    }

    /// Smallest eigenvalue of the Hermitian part; dense, meant for small N.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let n = self.dim;
        let m = faer::Mat::<Complex64>::from_fn(n, n, |i, j| 0.5 * (self.get(i, j) + self.get(j, i).conj()));
        let ev = m.self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Checks the density-matrix invariants (Hermitian, unit trace).
    pub fn validate(&self) -> Result<()> {
        if !self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFiniteState(0.0));
        }
        let herm = self.hermiticity_error();
        if herm > 1e-12 {
            return Err(Error::Config(format!("density matrix is not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Config(format!("density matrix trace is {tr}, expected 1")));
        }
        Ok(())
    }
}

fn hermiticity_error(data: &[Complex64], dim: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        for j in i..dim {
            worst = worst.max((data[i * dim + j] - data[j * dim + i].conj()).norm());
        }
    }
    worst
}

/// Dissipative part of the generator stored in matrix-free form.
#[derive(Debug, Clone)]
struct Jump {
    rate: f64,
    op: CsrMatrix,
    adj: CsrMatrix,
}

/// Generator of the master equation
/// `d rho/dt = -i[H, rho] + sum_k g_k (L_k rho L_k^+ - {L_k^+ L_k, rho}/2)`,
/// applied without forming the superoperator.
///
/// Internally `H_eff = H - (i/2) sum_k g_k L_k^+ L_k`, so that the commutator
/// and anticommutator collapse into `-i (H_eff rho - rho H_eff^+)`.
#[derive(Debug, Clone)]
pub struct Lindbladian {
    params: ModelParameters,
    ops: ProductOperators,
    dim: usize,
    h_eff: CsrMatrix,
    h_eff_adj: CsrMatrix,
    jumps: Vec<Jump>,
}

/// Scratch buffers reused across applications.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl Workspace {
    fn ensure(&mut self, len: usize) {
        if self.a.len() != len {
            self.a = vec![ZERO; len];
            self.b = vec![ZERO; len];
        }
    }
}

impl Lindbladian {
    pub fn new(p: &ModelParameters) -> Result<Self> {
        let p = p.validate()?;
        let ops = ProductOperators::new(p.n_spins)?;
        let h = hamiltonian_from(&p, &ops);
        let jumps = jumps_from(&p, &ops)?;
        let mut terms = vec![(Complex64::new(1.0, 0.0), h.clone())];
        for j in &jumps {
            terms.push((Complex64::new(0.0, -0.5 * j.rate), j.op.adjoint().matmul(&j.op)));
        }
        let refs: Vec<_> = terms.iter().map(|(c, m)| (*c, m)).collect();
        let h_eff = CsrMatrix::linear_combination(&refs);
        let h_eff_adj = h_eff.adjoint();
        let jumps = jumps.into_iter().map(|j| Jump { rate: j.rate, adj: j.op.adjoint(), op: j.op }).collect();
        Ok(Lindbladian { params: p, dim: ops.dimension(), ops, h_eff, h_eff_adj, jumps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ModelParameters {
        &self.params
    }

    pub fn operators(&self) -> &ProductOperators {
        &self.ops
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim * self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim * self.dim, got: len });
        }
        Ok(())
    }

    /// `out = L(rho)` for an arbitrary (not necessarily Hermitian) row-major `rho`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) -> Result<()> {
        self.check_len(rho.len())?;
        self.check_len(out.len())?;
        let d = self.dim;
        ws.ensure(d * d);
        let mi = Complex64::new(0.0, -1.0);
        self.h_eff.mul_dense(rho, d, &mut ws.a);
        self.h_eff_adj.dense_mul(rho, d, &mut ws.b);
        for ((o, x), y) in out.iter_mut().zip(&ws.a).zip(&ws.b) {
            *o = mi * (x - y);
        }
        for j in &self.jumps {
            j.op.mul_dense(rho, d, &mut ws.a);
            j.adj.dense_mul(&ws.a, d, &mut ws.b);
            for (o, z) in out.iter_mut().zip(&ws.b) {
                *o += z * j.rate;
            }
        }
        Ok(())
    }

    /// Same as [`Lindbladian::apply`] for Hermitian `rho`; half the sparse
    /// products and an exactly Hermitian result.
    pub fn apply_hermitian(&self, rho: &[Complex64], out: &mut [Complex64], ws: &mut Workspace) -> Result<()> {
        self.check_len(rho.len())?;
        self.check_len(out.len())?;
        let d = self.dim;
        ws.ensure(d * d);
        // -i H_eff rho + i (H_eff rho)^+
        self.h_eff.mul_dense(rho, d, &mut ws.a);
        let x = &ws.a;
        exec::for_each_row(out, d, |i, row| {
            for (j, o) in row.iter_mut().enumerate() {
                let a = x[i * d + j];
                let b = x[j * d + i].conj();
                *o = Complex64::new(a.im - b.im, b.re - a.re);
            }
        });
        for jump in &self.jumps {
            jump.op.mul_dense(rho, d, &mut ws.a);
            jump.adj.dense_mul(&ws.a, d, &mut ws.b);
            let z = &ws.b;
            let g = 0.5 * jump.rate;
            exec::for_each_row(out, d, |i, row| {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += (z[i * d + j] + z[j * d + i].conj()) * g;
                }
            });
        }
        Ok(())
    }

    /// `(2/N) tr(rho S)` for the six collective spin components.
    pub fn magnetizations(&self, rho: &[Complex64]) -> BlochPair {
        let d = self.dim;
        let scale = 2.0 / self.params.n_spins as f64;
        let ev = |a: &CsrMatrix| -> f64 {
            let s: Complex64 = a.triplets().map(|(j, i, v)| rho[i * d + j] * v).sum();
            s.re * scale
        };
        BlochPair::new(
            [ev(&self.ops.c[0]), ev(&self.ops.c[1]), ev(&self.ops.c[2])],
            [ev(&self.ops.d[0]), ev(&self.ops.d[1]), ev(&self.ops.d[2])],
        )
    }
}

/// `d rho / dt` for a single density matrix.
pub fn apply_lindbladian(p: &ModelParameters, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let l = Lindbladian::new(p)?;
    let mut out = vec![ZERO; rho.data.len()];
    l.apply(&rho.data, &mut out, &mut Workspace::default())?;
    Ok(DensityMatrix { dim: rho.dim, data: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MasterConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_dt: f64,
    pub memory: MemoryBudget,
    /// Positivity is spot-checked at this many sample times when `N <= 10`.
    pub positivity_checks: usize,
}

impl Default for MasterConfig {
    fn default() -> Self {
        MasterConfig {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            sample_dt: 0.05,
            memory: MemoryBudget::default(),
            positivity_checks: 5,
        }
    }
}

/// Observable trajectory of a master-equation run plus conservation diagnostics.
#[derive(Debug, Clone)]
pub struct FiniteNRun {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
    pub trace_drift: f64,
    pub hermiticity_drift: f64,
    /// `(t, smallest eigenvalue)` at the spot-checked samples.
    pub positivity: Vec<(f64, f64)>,
    pub stats: ode::RunStats,
}

/// Bytes held by an evolution run of dimension `dim`: the integrator keeps
/// nine state-sized vectors, the generator two scratch buffers and the state
/// itself one.
pub fn evolution_footprint(dim: usize) -> u64 {
    12 * (dim as u64).pow(2) * BYTES_PER_ENTRY
}

pub fn evolve_density_matrix(
    p: &ModelParameters,
    rho0: &DensityMatrix,
    t_end: f64,
    cfg: &MasterConfig,
) -> Result<FiniteNRun> {
    let p = p.validate()?;
    let dim = (p.n_spins + 1).pow(2);
    cfg.memory.check(evolution_footprint(dim))?;
    if rho0.dim != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: rho0.dim });
    }
    if !(t_end > 0.0) || !(cfg.sample_dt > 0.0) {
        return Err(Error::Config("t_end and sample_dt must be positive".into()));
    }
    rho0.validate()?;
    let l = Lindbladian::new(&p)?;
    let times = ode::uniform_grid(0.0, t_end, cfg.sample_dt);
    let check_at: Vec<usize> = if p.n_spins <= 10 && cfg.positivity_checks > 0 {
        let last = times.len() - 1;
        let k = cfg.positivity_checks;
        (0..k).map(|i| if k == 1 { last } else { i * last / (k - 1) }).collect()
    } else {
        Vec::new()
    };

    let tr0 = rho0.trace();
    let mut samples = vec![BlochPair::default(); times.len()];
    let mut trace_drift: f64 = 0.0;
    let mut herm_drift: f64 = 0.0;
    let mut positivity = Vec::new();
    let mut positivity_err = None;
    let mut ws = Workspace::default();
    let ctl = StepControl { rtol: cfg.rel_tol, atol: cfg.abs_tol, ..Default::default() };
    let (end, stats) = ode::integrate(
        |_, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| {
            l.apply_hermitian(y, dy, &mut ws).expect("dimension checked above");
        },
        rho0.data.clone(),
        0.0,
        t_end,
        &times,
        &ctl,
        |k, t, y| {
            samples[k] = l.magnetizations(y);
            let tr: Complex64 = (0..dim).map(|i| y[i * dim + i]).sum();
            trace_drift = trace_drift.max((tr - tr0).norm());
            herm_drift = herm_drift.max(hermiticity_error(y, dim));
            if check_at.contains(&k) {
                match (DensityMatrix { dim, data: y.clone() }).min_eigenvalue() {
                    Ok(v) => positivity.push((t, v)),
                    Err(e) => positivity_err = Some(e),
                }
            }
        },
    )?;
    if let Some(e) = positivity_err {
        return Err(e);
    }
    if !end.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::NonFiniteState(t_end));
    }
    Ok(FiniteNRun {
        trajectory: Trajectory { times, samples, meta: p },
        final_state: DensityMatrix { dim, data: end },
        trace_drift,
        hermiticity_drift: herm_drift,
        positivity,
        stats,
    })
}

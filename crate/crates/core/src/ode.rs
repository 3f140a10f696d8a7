//! Adaptive Dormand–Prince 5(4) integrator with continuous output.
//!
//! The integrator is generic over the state representation so the same code
//! drives the six mean-field magnetisations and full density matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;

/// Vector-space operations the integrator needs from a state.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;

    /// `self = base + sum(c_i * x_i)`.
    fn set_lincomb(&mut self, base: &Self, terms: &[(f64, &Self)]);

    /// `self = sum(c_i * x_i)`.
    fn set_sum(&mut self, terms: &[(f64, &Self)]);

    /// Sum of squared scaled errors and the number of real components.
    fn error_sq(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> (f64, usize);

    fn all_finite(&self) -> bool;
}

impl OdeState for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }

    fn set_lincomb(&mut self, base: &Self, terms: &[(f64, &Self)]) {
        for i in 0..self.len() {
            let mut acc = base[i];
            for (c, x) in terms {
                acc += c * x[i];
            }
            self[i] = acc;
        }
    }

    fn set_sum(&mut self, terms: &[(f64, &Self)]) {
        for i in 0..self.len() {
            self[i] = terms.iter().map(|(c, x)| c * x[i]).sum();
        }
    }

    fn error_sq(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> (f64, usize) {
        let mut s = 0.0;
        for i in 0..err.len() {
            let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
            s += (err[i] / sc).powi(2);
        }
        (s, err.len())
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

impl OdeState for Vec<Complex64> {
    fn zeros_like(&self) -> Self {
        vec![Complex64::new(0.0, 0.0); self.len()]
    }

    fn set_lincomb(&mut self, base: &Self, terms: &[(f64, &Self)]) {
        exec::for_each_block(self, |off, block| {
            for (k, out) in block.iter_mut().enumerate() {
                let i = off + k;
                let mut acc = base[i];
                for (c, x) in terms {
                    acc += x[i] * *c;
                }
                *out = acc;
            }
        });
    }

    fn set_sum(&mut self, terms: &[(f64, &Self)]) {
        exec::for_each_block(self, |off, block| {
            for (k, out) in block.iter_mut().enumerate() {
                let i = off + k;
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, x) in terms {
                    acc += x[i] * *c;
                }
                *out = acc;
            }
        });
    }

    fn error_sq(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> (f64, usize) {
        let mut s = 0.0;
        for i in 0..err.len() {
            let sc = atol + rtol * y0[i].norm().max(y1[i].norm());
            s += err[i].norm_sqr() / (sc * sc);
        }
        (s, 2 * err.len())
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-9, atol: 1e-11, max_step: f64::INFINITY, initial_step: None, max_steps: 50_000_000 }
    }
}

/// Counters reported after a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`, calling `observe(k, t_k, y(t_k))`
/// for every entry of the ascending `sample_times`. Samples between steps are
/// produced by the 4th-order continuous extension.
///
/// Returns the final state together with step statistics.
pub fn integrate<S, F, O>(
    f: F,
    y0: S,
    t0: f64,
    t_end: f64,
    sample_times: &[f64],
    ctl: &StepControl,
    observe: O,
) -> Result<(S, RunStats)>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
    O: FnMut(usize, f64, &S),
{
    integrate_projected(f, |_: &mut S| false, y0, t0, t_end, sample_times, ctl, observe)
}

/// Like [`integrate`], but `project` maps every accepted step back onto an
/// invariant manifold before the next step starts; it returns `true` when it
/// modified the state. Samples inside a step come from the unprojected
/// continuous extension.
#[allow(clippy::too_many_arguments)]
pub fn integrate_projected<S, F, P, O>(
    mut f: F,
    mut project: P,
    y0: S,
    t0: f64,
    t_end: f64,
    sample_times: &[f64],
    ctl: &StepControl,
    mut observe: O,
) -> Result<(S, RunStats)>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
    P: FnMut(&mut S) -> bool,
    O: FnMut(usize, f64, &S),
{
    let mut stats = RunStats::default();
    let mut next_sample = 0;
    while next_sample < sample_times.len() && sample_times[next_sample] <= t0 {
        observe(next_sample, sample_times[next_sample], &y0);
        next_sample += 1;
    }
    if t_end <= t0 {
        return Ok((y0, stats));
    }

    let mut y = y0;
    let mut k1 = y.zeros_like();
    let mut k2 = y.zeros_like();
    let mut k3 = y.zeros_like();
    let mut k4 = y.zeros_like();
    let mut k5 = y.zeros_like();
    let mut k6 = y.zeros_like();
    let mut k7 = y.zeros_like();
    let mut ytmp = y.zeros_like();
    let mut ynew = y.zeros_like();

    f(t0, &y, &mut k1);
    stats.rhs_evals += 1;

    let span = t_end - t0;
    let mut h = ctl.initial_step.unwrap_or(1e-3 * span).min(ctl.max_step).min(span);
    let mut t = t0;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    while t < t_end {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        ytmp.set_lincomb(&y, &[(h * A21, &k1)]);
        f(t + C2 * h, &ytmp, &mut k2);
        ytmp.set_lincomb(&y, &[(h * A31, &k1), (h * A32, &k2)]);
        f(t + C3 * h, &ytmp, &mut k3);
        ytmp.set_lincomb(&y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]);
        f(t + C4 * h, &ytmp, &mut k4);
        ytmp.set_lincomb(&y, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]);
        f(t + C5 * h, &ytmp, &mut k5);
        ytmp.set_lincomb(&y, &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]);
        f(t + h, &ytmp, &mut k6);
        ynew.set_lincomb(&y, &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)]);
        f(t + h, &ynew, &mut k7);
        stats.rhs_evals += 6;

        ytmp.set_sum(&[(h * E1, &k1), (h * E3, &k3), (h * E4, &k4), (h * E5, &k5), (h * E6, &k6), (h * E7, &k7)]);
        let (sq, n) = S::error_sq(&ytmp, &y, &ynew, ctl.rtol, ctl.atol);
        let err = (sq / n.max(1) as f64).sqrt();
        if !err.is_finite() || !ynew.all_finite() {
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }

        // PI step-size control (Hairer's DOPRI5 defaults).
        let beta = 0.04;
        let expo1 = 0.2 - beta * 0.75;
        let fac11 = err.max(1e-300).powf(expo1);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(beta) / 0.9).clamp(0.1, 5.0);
            fac_old = err.max(1e-4);
            let t_new = t + h;

            if next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                emit_dense(
                    &y,
                    &ynew,
                    &k1,
                    &k3,
                    &k4,
                    &k5,
                    &k6,
                    &k7,
                    t,
                    h,
                    sample_times,
                    &mut next_sample,
                    &mut ytmp,
                    &mut observe,
                );
            }

            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if t < t_end && project(&mut y) {
                f(t, &y, &mut k1);
                stats.rhs_evals += 1;
            }
            stats.accepted += 1;
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            h = h_new.min(ctl.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).min(10.0);
            last_rejected = true;
        }
    }

    while next_sample < sample_times.len() && sample_times[next_sample] <= t_end * (1.0 + 1e-12) {
        observe(next_sample, sample_times[next_sample], &y);
        next_sample += 1;
    }
    Ok((y, stats))
}

#[allow(clippy::too_many_arguments)]
fn emit_dense<S, O>(
    y0: &S,
    y1: &S,
    k1: &S,
    k3: &S,
    k4: &S,
    k5: &S,
    k6: &S,
    k7: &S,
    t: f64,
    h: f64,
    sample_times: &[f64],
    next_sample: &mut usize,
    out: &mut S,
    observe: &mut O,
) where
    S: OdeState,
    O: FnMut(usize, f64, &S),
{
    // y(theta) = y0 + theta*(r2 + (1-theta)*(r3 + theta*(r4 + (1-theta)*r5)))
    // with r2 = y1-y0, r3 = h k1 - r2, r4 = r2 - h k7 - r3 = 2 r2 - h k1 - h k7,
    // r5 = h * sum(d_i k_i). Expanded into a single linear combination per sample.
    let mut dy = y0.zeros_like();
    dy.set_lincomb(y1, &[(-1.0, y0)]);
    while *next_sample < sample_times.len() && sample_times[*next_sample] <= t + h {
        let ts = sample_times[*next_sample];
        let th = ((ts - t) / h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        // Coefficients of r2..r5 in the nested polynomial.
        let c2 = th;
        let c3 = th * th1;
        let c4 = th * th1 * th;
        let c5 = th * th1 * th * th1;
        // r3 = h k1 - dy ; r4 = 2 dy - h k1 - h k7 ; r5 = h sum d_i k_i
        let c_dy = c2 - c3 + 2.0 * c4;
        let c_k1 = h * (c3 - c4 + c5 * D1);
        let c_k7 = h * (-c4 + c5 * D7);
        out.set_lincomb(
            y0,
            &[
                (c_dy, &dy),
                (c_k1, k1),
                (h * c5 * D3, k3),
                (h * c5 * D4, k4),
                (h * c5 * D5, k5),
                (h * c5 * D6, k6),
                (c_k7, k7),
            ],
        );
        observe(*next_sample, ts, out);
        *next_sample += 1;
    }
}

/// Uniform grid `t0, t0 + dt, ...` up to and including `t_end` (within rounding).
pub fn uniform_grid(t0: f64, t_end: f64, dt: f64) -> Vec<f64> {
    let n = ((t_end - t0) / dt * (1.0 + 1e-12)).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * dt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_dense_output() {
        let omega = 1.3;
        let times = uniform_grid(0.0, 50.0, 0.01);
        let mut max_err: f64 = 0.0;
        let ctl = StepControl { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let (_, stats) = integrate(
            |_, y: &Vec<f64>, dy: &mut Vec<f64>| {
                dy[0] = y[1];
                dy[1] = -omega * omega * y[0];
            },
            vec![1.0, 0.0],
            0.0,
            50.0,
            &times,
            &ctl,
            |_, t, y| max_err = max_err.max((y[0] - (omega * t).cos()).abs()),
        )
        .unwrap();
        assert!(max_err < 1e-8, "max err {max_err}");
        // Far fewer steps than samples: samples come from dense output.
        assert!(stats.accepted < times.len() / 2, "{stats:?}");
    }

    #[test]
    fn exponential_decay_complex() {
        let lambda = Complex64::new(-0.5, 2.0);
        let times = uniform_grid(0.0, 4.0, 0.5);
        let ctl = StepControl { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let mut worst: f64 = 0.0;
        integrate(
            |_, y: &Vec<Complex64>, dy: &mut Vec<Complex64>| dy[0] = lambda * y[0],
            vec![Complex64::new(1.0, 0.0)],
            0.0,
            4.0,
            &times,
            &ctl,
            |_, t, y| worst = worst.max((y[0] - (lambda * t).exp()).norm()),
        )
        .unwrap();
        assert!(worst < 1e-8);
    }

    #[test]
    fn every_sample_is_visited_once() {
        let times = uniform_grid(0.0, 3.0, 0.1);
        let mut seen = vec![0u32; times.len()];
        integrate(
            |_, _y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = 1.0,
            vec![0.0],
            0.0,
            3.0,
            &times,
            &StepControl::default(),
            |k, t, y| {
                seen[k] += 1;
                assert!((y[0] - t).abs() < 1e-12);
            },
        )
        .unwrap();
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn blow_up_reports_failure_time() {
        // y' = y^2 from y(0)=1 explodes at t = 1.
        let r = integrate(
            |_, y: &Vec<f64>, dy: &mut Vec<f64>| dy[0] = y[0] * y[0],
            vec![1.0],
            0.0,
            2.0,
            &[],
            &StepControl::default(),
            |_, _, _| {},
        );
        match r {
            Err(Error::StepUnderflow { t, .. }) => assert!((t - 1.0).abs() < 1e-2, "t = {t}"),
            other => panic!("expected underflow, got {other:?}"),
        }
    }
}

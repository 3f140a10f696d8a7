//! Thermodynamic-limit dynamics.
//!
//! With factorised expectation values the master equation closes on the six
//! magnetisations `m_C`, `m_D`. Each coupling scheme yields its own set of
//! six nonlinear ODEs; [`rhs`] evaluates them literally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BlochPair, CouplingScheme, ModelParameters, Trajectory};
use crate::ode::{self, StepControl};

/// Samples per CTC period used when no explicit `sample_dt` is given.
pub const SAMPLES_PER_PERIOD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub sample_dt: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-9, abs_tol: 1e-11, max_step: f64::INFINITY, sample_dt: 0.05 }
    }
}

impl IntegratorConfig {
    /// Default tolerances with `SAMPLES_PER_PERIOD` samples per decoupled CTC period.
    pub fn for_parameters(p: &ModelParameters, s0: &BlochPair) -> Self {
        let period = estimate_ctc_period(p, s0).unwrap_or(2.0 * std::f64::consts::PI / p.kappa);
        IntegratorConfig { sample_dt: period / SAMPLES_PER_PERIOD as f64, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt.is_finite()) {
            return Err(Error::Config("sample_dt must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::Config("max_step must be positive".into()));
        }
        Ok(())
    }

    fn step_control(&self) -> StepControl {
        StepControl { rtol: self.rel_tol, atol: self.abs_tol, max_step: self.max_step, ..Default::default() }
    }
}

/// Time derivative of the magnetisations for the given coupling scheme.
pub fn rhs(scheme: CouplingScheme, p: &ModelParameters, s: &BlochPair) -> BlochPair {
    BlochPair::from_array(rhs_array(scheme, p, &s.to_array()))
}

pub(crate) fn rhs_array(scheme: CouplingScheme, p: &ModelParameters, s: &[f64; 6]) -> [f64; 6] {
    let (om, k, j, h, e) = (p.omega, p.kappa, p.j_coupling, p.h_drive, p.eta);
    let [cx, cy, cz, dx, dy, dz] = *s;
    let decay = cx * cx + cy * cy;
    match scheme {
        CouplingScheme::CoherentYX => [
            e * cz * dx + k * cz * cx,
            -om * cz + k * cz * cy,
            om * cy - e * cx * dx - k * decay,
            4.0 * j * dz * dy,
            -e * cy * dz + 2.0 * h * dz - 4.0 * j * dz * dx,
            e * cy * dy - 2.0 * h * dy,
        ],
        CouplingScheme::Dissipative => {
            let (sx, sy) = (cx + dx, cy + dy);
            [
                k * cx * cz + e * cz * sx,
                k * cy * cz - om * cz + e * cz * sy,
                om * cy - k * decay - e * (cy * sy + cx * sx),
                4.0 * j * dz * dy + e * dz * sx,
                e * dz * sy + 2.0 * h * dz - 4.0 * j * dz * dx,
                -2.0 * h * dy - e * (dy * sy + dx * sx),
            ]
        }
        CouplingScheme::SpinExchange => [
            2.0 * e * cz * dy + k * cz * cx,
            -om * cz - 2.0 * e * cz * dx + k * cz * cy,
            om * cy + 2.0 * e * (cy * dx - cx * dy) - k * decay,
            4.0 * j * dz * dy + 2.0 * e * dz * cy,
            -2.0 * e * dz * cx + 2.0 * h * dz - 4.0 * j * dz * dx,
            2.0 * e * (dy * cx - dx * cy) - 2.0 * h * dy,
        ],
    }
}

fn rescale(v: &mut [f64], target: f64) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 0.0 && target > 0.0 {
        v.iter_mut().for_each(|x| *x *= target / n);
    }
}

/// Stationary Bloch vector of the uncoupled CTC for `|omega| < kappa`.
pub fn ctc_fixed_point(omega: f64, kappa: f64) -> Result<[f64; 3]> {
    let r = omega / kappa;
    if !r.is_finite() || r.abs() >= 1.0 {
        return Err(Error::NoStationaryPoint(r));
    }
    Ok([0.0, r, -(1.0 - r * r).sqrt()])
}

/// Integrates the mean-field equations from `s0` up to `t_end`, sampling
/// uniformly every `cfg.sample_dt`.
pub fn integrate(p: &ModelParameters, s0: &BlochPair, t_end: f64, cfg: &IntegratorConfig) -> Result<Trajectory> {
    let p = p.validate()?;
    cfg.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be positive (got {t_end})")));
    }
    if !s0.is_finite() {
        return Err(Error::NonFiniteState(0.0));
    }
    let times = ode::uniform_grid(0.0, t_end, cfg.sample_dt);
    let mut samples = vec![BlochPair::default(); times.len()];
    let scheme = p.scheme;
    let (norm_c, norm_d) = (s0.norm_c(), s0.norm_d());
    let (end, _) = ode::integrate_projected(
        |_, y: &Vec<f64>, dy: &mut Vec<f64>| {
            let d = rhs_array(scheme, &p, &[y[0], y[1], y[2], y[3], y[4], y[5]]);
            dy.copy_from_slice(&d);
        },
        |y: &mut Vec<f64>| {
            // Both Bloch lengths are exact invariants of every scheme.
            rescale(&mut y[0..3], norm_c);
            rescale(&mut y[3..6], norm_d);
            true
        },
        s0.to_array().to_vec(),
        0.0,
        t_end,
        &times,
        &cfg.step_control(),
        |k, _, y| samples[k] = BlochPair::from_array([y[0], y[1], y[2], y[3], y[4], y[5]]),
    )?;
    if end.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState(t_end));
    }
    Ok(Trajectory { times, samples, meta: p })
}

/// Period of the uncoupled CTC started from `s0.m_c`, or `None` when it
/// relaxes to a fixed point.
///
/// Runs the `eta = 0` dynamics for a short window and averages the spacing of
/// upward mean crossings of `m_C^z`.
pub fn estimate_ctc_period(p: &ModelParameters, s0: &BlochPair) -> Option<f64> {
    if p.omega.abs() <= p.kappa {
        return None;
    }
    let decoupled = ModelParameters { eta: 0.0, ..*p };
    let t_end = 40.0 * 2.0 * std::f64::consts::PI / (p.omega * p.omega - p.kappa * p.kappa).sqrt();
    let cfg = IntegratorConfig { sample_dt: t_end / 8000.0, ..Default::default() };
    let start = BlochPair { m_d: [0.0, 0.0, 1.0], ..*s0 };
    let traj = integrate(&decoupled, &start, t_end, &cfg).ok()?;
    let z: Vec<f64> = traj.samples.iter().map(|s| s.m_c[2]).collect();
    let tail = &z[z.len() / 4..];
    let t_tail = &traj.times[z.len() / 4..];
    let mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let amp = tail.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if amp < 1e-6 {
        return None;
    }
    let mut crossings = Vec::new();
    for i in 1..tail.len() {
        let (a, b) = (tail[i - 1] - mean, tail[i] - mean);
        if a < 0.0 && b >= 0.0 {
            let frac = a / (a - b);
            crossings.push(t_tail[i - 1] + frac * (t_tail[i] - t_tail[i - 1]));
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Largest deviation of `|m_i|^2` from its initial value, per subsystem.
pub fn norm_drift(traj: &Trajectory) -> (f64, f64) {
    let Some(first) = traj.samples.first() else { return (0.0, 0.0) };
    let (c0, d0) = (first.norm_c().powi(2), first.norm_d().powi(2));
    traj.samples.iter().fold((0.0, 0.0), |(dc, dd), s| {
        (f64::max(dc, (s.norm_c().powi(2) - c0).abs()), f64::max(dd, (s.norm_d().powi(2) - d0).abs()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_initial_state;

    fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[test]
    fn north_pole_derivatives() {
        let s = default_initial_state();
        for scheme in CouplingScheme::ALL {
            let p = ModelParameters { scheme, ..ModelParameters::new(scheme, 1.7, 0.3, 0.41, 0.9) };
            let d = rhs(scheme, &p, &s);
            assert_eq!(d.m_c, [0.0, -1.7, 0.0], "{scheme}");
            assert_eq!(d.m_d, [0.0, 2.0 * 0.41, 0.0], "{scheme}");
        }
    }

    #[test]
    fn fixed_point_values() {
        assert_eq!(ctc_fixed_point(0.0, 1.0).unwrap(), [0.0, 0.0, -1.0]);
        let m = ctc_fixed_point(0.5, 1.0).unwrap();
        assert!((m[1] - 0.5).abs() < 1e-15 && (m[2] + 0.8660254037844386).abs() < 1e-15);
        assert!(matches!(ctc_fixed_point(1.5, 1.0), Err(Error::NoStationaryPoint(_))));
        assert!(ctc_fixed_point(1.0, 1.0).is_err());
    }

    #[test]
    fn fixed_point_is_stationary() {
        for om in [0.0, 0.2, 0.5, 0.9] {
            let m_c = ctc_fixed_point(om, 1.0).unwrap();
            let p = ModelParameters::new(CouplingScheme::CoherentYX, om, 0.1, 0.25, 0.0);
            let d = rhs(p.scheme, &p, &BlochPair::new(m_c, [0.0, 0.0, 1.0]));
            assert!(d.m_c.iter().all(|v| v.abs() < 1e-15), "{:?}", d.m_c);
        }
    }

    #[test]
    fn tangent_to_sphere() {
        let p = ModelParameters::new(CouplingScheme::Dissipative, 2.0, 0.08, 0.25, 0.6);
        let s = BlochPair::new([0.6, 0.0, 0.8], [0.0, -0.28, 0.96]);
        for scheme in CouplingScheme::ALL {
            let d = rhs(scheme, &p, &s);
            assert!(dot3(&s.m_c, &d.m_c).abs() < 1e-14);
            assert!(dot3(&s.m_d, &d.m_d).abs() < 1e-14);
        }
    }

    #[test]
    fn period_estimate_matches_btc_frequency() {
        let p = ModelParameters::coherent_reference(0.0);
        let t = estimate_ctc_period(&p, &default_initial_state()).unwrap();
        // The (0,0,1) orbit of the driven BTC at Omega = 2 has omega ~ 1.731.
        assert!((2.0 * std::f64::consts::PI / t - 1.731).abs() < 5e-3, "T = {t}");
        let q = ModelParameters { omega: 0.5, ..p };
        assert!(estimate_ctc_period(&q, &default_initial_state()).is_none());
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        let p = ModelParameters::coherent_reference(0.1);
        assert!(integrate(&p, &default_initial_state(), 0.0, &IntegratorConfig::default()).is_err());
    }
}

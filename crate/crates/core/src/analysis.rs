//! Frequency-domain diagnostics: normalised spectra, dominant frequencies,
//! the relative-frequency order parameter and rational locking orders.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observable, Trajectory};

/// Minimum number of samples left after discarding the transient.
pub const MIN_SERIES_LEN: usize = 256;

/// Relative oscillation amplitude below which a series counts as stationary.
const STATIONARY_REL_AMPLITUDE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => {
                let m = n.max(2) as f64;
                (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (m - 1.0)).cos()).collect()
            }
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hann" => Ok(Window::Hann),
            "rectangular" | "rect" | "none" => Ok(Window::Rectangular),
            other => Err(Error::Config(format!("unknown window `{other}`"))),
        }
    }
}

/// One-sided amplitude spectrum normalised so the largest non-DC bin is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Angular frequencies, uniform from 0.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub window: Window,
    pub transient_fraction: f64,
}

impl SpectrumResult {
    pub fn d_omega(&self) -> f64 {
        self.frequencies.get(1).copied().unwrap_or(0.0)
    }

    /// Largest amplitude among the bins adjacent to `omega`.
    pub fn amplitude_at(&self, omega: f64) -> f64 {
        let dw = self.d_omega();
        if dw <= 0.0 || omega < 0.0 {
            return 0.0;
        }
        let k = (omega / dw).round() as usize;
        let lo = k.saturating_sub(1).max(1);
        let hi = (k + 1).min(self.amplitudes.len().saturating_sub(1));
        (lo..=hi).map(|i| self.amplitudes[i]).fold(0.0, f64::max)
    }
}

/// Discards the leading `transient_fraction` of `series`, removes the mean,
/// applies `window` and returns the normalised one-sided spectrum.
///
/// Fails with [`Error::NoOscillation`] for (numerically) constant input.
pub fn power_spectrum(series: &[f64], dt: f64, transient_fraction: f64, window: Window) -> Result<SpectrumResult> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::Config(format!("transient_fraction must be in [0, 1), got {transient_fraction}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let skip = (series.len() as f64 * transient_fraction).floor() as usize;
    let tail = &series[skip.min(series.len())..];
    if tail.len() < MIN_SERIES_LEN {
        return Err(Error::SeriesTooShort { required: MIN_SERIES_LEN, got: tail.len() });
    }
    let n = tail.len();
    let mean = tail.iter().sum::<f64>() / n as f64;
    let scale = tail.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let w = window.weights(n);
    let wsum: f64 = w.iter().sum();

    let mut buf: Vec<Complex64> = tail.iter().zip(&w).map(|(x, wi)| Complex64::new((x - mean) * wi, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2 + 1;
    // Physical amplitude: |X_k| * 2 / sum(w).
    let raw: Vec<f64> = buf[..half].iter().map(|c| 2.0 * c.norm() / wsum).collect();
    let peak = raw[1..].iter().copied().fold(0.0, f64::max);
    if !(peak > STATIONARY_REL_AMPLITUDE * scale) || !peak.is_finite() {
        return Err(Error::NoOscillation);
    }
    let d_omega = 2.0 * PI / (n as f64 * dt);
    Ok(SpectrumResult {
        frequencies: (0..half).map(|k| k as f64 * d_omega).collect(),
        amplitudes: raw.iter().map(|a| a / peak).collect(),
        window,
        transient_fraction,
    })
}

/// Frequency of the largest non-DC bin, refined by a three-point parabola
/// through the log-amplitudes around the peak.
pub fn dominant_frequency(s: &SpectrumResult) -> f64 {
    let a = &s.amplitudes;
    let mut k = 1;
    for i in 2..a.len() {
        if a[i] > a[k] {
            k = i;
        }
    }
    let dw = s.d_omega();
    if k + 1 >= a.len() {
        return k as f64 * dw;
    }
    let (l, c, r) = (a[k - 1], a[k], a[k + 1]);
    let delta = if l > 0.0 && r > 0.0 {
        let (l, c, r) = (l.ln(), c.ln(), r.ln());
        let den = l - 2.0 * c + r;
        if den.abs() > 0.0 {
            0.5 * (l - r) / den
        } else {
            0.0
        }
    } else {
        let den = l - 2.0 * c + r;
        if den.abs() > 0.0 {
            0.5 * (l - r) / den
        } else {
            0.0
        }
    };
    (k as f64 + delta.clamp(-0.5, 0.5)) * dw
}

/// Rational locking order `n = p/q` (so that `omega_r = q/p`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    pub p: u64,
    pub q: u64,
}

impl Rational {
    pub fn new(p: u64, q: u64) -> Self {
        let g = gcd(p, q).max(1);
        Rational { p: p / g, q: q / g }
    }

    pub fn value(&self) -> f64 {
        self.p as f64 / self.q as f64
    }

    pub fn is_integer(&self) -> bool {
        self.q == 1
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.q == 1 {
            write!(f, "{}", self.p)
        } else {
            write!(f, "{}/{}", self.p, self.q)
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Finds `n = p/q` with `q <= q_max` among the continued-fraction convergents
/// of `1/omega_r` that is nearest to `omega_r` (in the sense `|omega_r - q/p|`),
/// returning it only when that distance is at most `tol`.
pub fn rational_order(omega_r: f64, q_max: u64, tol: f64) -> Option<Rational> {
    rational_order_bounded(omega_r, q_max, u64::MAX, tol)
}

/// [`rational_order`] with an additional bound on the numerator.
pub fn rational_order_bounded(omega_r: f64, q_max: u64, p_max: u64, tol: f64) -> Option<Rational> {
    if !(omega_r > 0.0) || !omega_r.is_finite() || q_max == 0 {
        return None;
    }
    let x = 1.0 / omega_r;
    let (mut p_prev, mut q_prev) = (1u64, 0u64);
    let (mut p_cur, mut q_cur) = (x.floor() as u64, 1u64);
    let mut frac = x - x.floor();
    let mut best: Option<(f64, Rational)> = None;
    for _ in 0..64 {
        if q_cur > q_max || p_cur > p_max {
            break;
        }
        if p_cur > 0 {
            let err = (omega_r - q_cur as f64 / p_cur as f64).abs();
            if best.is_none_or(|(e, _)| err < e) {
                best = Some((err, Rational::new(p_cur, q_cur)));
            }
        }
        if frac < 1e-12 {
            break;
        }
        let inv = 1.0 / frac;
        let a = inv.floor();
        frac = inv - a;
        let a = a as u64;
        let (p_next, q_next) = (
            a.checked_mul(p_cur).and_then(|v| v.checked_add(p_prev)),
            a.checked_mul(q_cur).and_then(|v| v.checked_add(q_prev)),
        );
        let (Some(pn), Some(qn)) = (p_next, q_next) else { break };
        (p_prev, q_prev, p_cur, q_cur) = (p_cur, q_cur, pn, qn);
    }
    best.filter(|(e, _)| *e <= tol).map(|(_, r)| r)
}

/// Settings shared by every locking diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub transient_fraction: f64,
    pub window: Window,
    pub q_max: u64,
    pub p_max: u64,
    pub tol: f64,
    pub amp_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            transient_fraction: 0.2,
            window: Window::Hann,
            q_max: 12,
            p_max: 40,
            tol: 2e-4,
            amp_threshold: 0.5,
        }
    }
}

impl AnalysisConfig {
    /// Settings for scans expected to contain fractional plateaus.
    pub fn fractional() -> Self {
        AnalysisConfig { q_max: 40, p_max: 40, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return Err(Error::Config("transient_fraction must be in [0, 1)".into()));
        }
        if self.q_max == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("q_max must be >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockingResult {
    pub omega_ctc: f64,
    pub omega_dtc: f64,
    pub omega_r: f64,
    pub order: Option<Rational>,
    pub t_ctc: f64,
    pub t_dtc: f64,
}

/// Which subsystem failed to oscillate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    Ctc,
    Dtc,
}

/// Outcome of the relative-frequency analysis of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    /// No oscillation in the given subsystem.
    Stationary(Subsystem),
    Oscillating(LockingResult),
}

fn spectrum_of(traj: &Trajectory, which: Observable, cfg: &AnalysisConfig) -> Result<SpectrumResult> {
    power_spectrum(&traj.series(which), traj.dt(), cfg.transient_fraction, cfg.window)
}

/// Dominant frequencies of `m_C^z` and `m_D^z`, their ratio and its rational order.
pub fn relative_frequency(traj: &Trajectory, cfg: &AnalysisConfig) -> Result<Phase> {
    let ctc = match spectrum_of(traj, Observable::Cz, cfg) {
        Ok(s) => s,
        Err(Error::NoOscillation) => return Ok(Phase::Stationary(Subsystem::Ctc)),
        Err(e) => return Err(e),
    };
    let dtc = match spectrum_of(traj, Observable::Dz, cfg) {
        Ok(s) => s,
        Err(Error::NoOscillation) => return Ok(Phase::Stationary(Subsystem::Dtc)),
        Err(e) => return Err(e),
    };
    Ok(Phase::Oscillating(locking_from_spectra(&ctc, &dtc, cfg)))
}

fn locking_from_spectra(ctc: &SpectrumResult, dtc: &SpectrumResult, cfg: &AnalysisConfig) -> LockingResult {
    let omega_ctc = dominant_frequency(ctc);
    let omega_dtc = dominant_frequency(dtc);
    let omega_r = omega_dtc / omega_ctc;
    LockingResult {
        omega_ctc,
        omega_dtc,
        omega_r,
        order: rational_order_bounded(omega_r, cfg.q_max, cfg.p_max, cfg.tol),
        t_ctc: 2.0 * PI / omega_ctc,
        t_dtc: 2.0 * PI / omega_dtc,
    }
}

/// Cell classification used by stability maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockingLabel {
    pub phase: Phase,
    /// Normalised DTC amplitude at `omega_CTC * q / p` (0 when unlocked).
    pub amplitude: f64,
    pub label: Option<Rational>,
}

/// Locking order that also passes the amplitude test: the normalised DTC
/// spectrum at `omega_CTC / n` must exceed `cfg.amp_threshold`.
pub fn locking_label(traj: &Trajectory, cfg: &AnalysisConfig) -> Result<LockingLabel> {
    let ctc = match spectrum_of(traj, Observable::Cz, cfg) {
        Ok(s) => s,
        Err(Error::NoOscillation) => {
            return Ok(LockingLabel { phase: Phase::Stationary(Subsystem::Ctc), amplitude: 0.0, label: None })
        }
        Err(e) => return Err(e),
    };
    let dtc = match spectrum_of(traj, Observable::Dz, cfg) {
        Ok(s) => s,
        Err(Error::NoOscillation) => {
            return Ok(LockingLabel { phase: Phase::Stationary(Subsystem::Dtc), amplitude: 0.0, label: None })
        }
        Err(e) => return Err(e),
    };
    let res = locking_from_spectra(&ctc, &dtc, cfg);
    Ok(label_from_result(res, &dtc, cfg.amp_threshold))
}

fn label_from_result(res: LockingResult, dtc: &SpectrumResult, threshold: f64) -> LockingLabel {
    let amplitude = res.order.map_or(0.0, |n| dtc.amplitude_at(res.omega_ctc / n.value()));
    let label = res.order.filter(|_| amplitude > threshold);
    LockingLabel { phase: Phase::Oscillating(res), amplitude, label }
}

/// DTC amplitudes max-pooled onto `bins` cells of `omega/omega_CTC` in `[0, 1.5]`.
///
/// The spectrum is taken over the longest whole number of CTC periods left
/// after the transient.
pub fn stroboscopic_amplitudes(
    traj: &Trajectory,
    omega_ctc: f64,
    bins: usize,
    cfg: &AnalysisConfig,
) -> Result<Vec<f64>> {
    if !(omega_ctc > 0.0) {
        return Err(Error::Config("omega_ctc must be positive".into()));
    }
    if bins < 2 {
        return Err(Error::Config("need at least two heatmap bins".into()));
    }
    let dt = traj.dt();
    let series = traj.series(Observable::Dz);
    let skip = (series.len() as f64 * cfg.transient_fraction).floor() as usize;
    let tail = &series[skip..];
    let period_samples = 2.0 * PI / omega_ctc / dt;
    let periods = (tail.len() as f64 / period_samples).floor();
    let keep = ((periods * period_samples).round() as usize).min(tail.len());
    let spec = power_spectrum(&tail[..keep.max(1)], dt, 0.0, cfg.window)?;

    let width = 1.5 / (bins - 1) as f64;
    let mut out = vec![0.0; bins];
    for (w, a) in spec.frequencies.iter().zip(&spec.amplitudes).skip(1) {
        let x = w / omega_ctc;
        let b = (x / width).round();
        if b >= 0.0 && (b as usize) < bins {
            let b = b as usize;
            out[b] = f64::max(out[b], *a);
        }
    }
    Ok(out)
}

/// Exponential decay rate of the oscillation envelope, from a least-squares
/// line through the log half peak-to-peak amplitude of `windows` consecutive
/// windows. Positive for a decaying signal.
pub fn envelope_decay_rate(series: &[f64], dt: f64, windows: usize) -> Option<f64> {
    if windows < 2 || series.len() < 2 * windows || !(dt > 0.0) {
        return None;
    }
    let len = series.len() / windows;
    let mut t = Vec::with_capacity(windows);
    let mut log_amp = Vec::with_capacity(windows);
    for w in 0..windows {
        let chunk = &series[w * len..(w + 1) * len];
        let (lo, hi) = chunk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let amp = 0.5 * (hi - lo);
        if !(amp > 0.0) {
            return None;
        }
        t.push((w as f64 + 0.5) * len as f64 * dt);
        log_amp.push(amp.ln());
    }
    crate::lindblad::fit_line(&t, &log_amp).map(|f| -f.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlochPair, ModelParameters};

    fn sine(omega: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (omega * i as f64 * dt).sin()).collect()
    }

    fn two_tone_traj(omega_c: f64, omega_d: f64, n: usize, dt: f64) -> Trajectory {
        let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let samples = times
            .iter()
            .map(|t| BlochPair::new([0.0, 0.0, (omega_c * t).cos()], [0.0, 0.0, (omega_d * t).cos()]))
            .collect();
        Trajectory { times, samples, meta: ModelParameters::coherent_reference(0.1) }
    }

    #[test]
    fn envelope_rate_of_damped_cosine() {
        let dt = 0.01;
        let x: Vec<f64> = (0..20000).map(|i| (-0.05 * i as f64 * dt).exp() * (3.0 * i as f64 * dt).cos()).collect();
        let g = envelope_decay_rate(&x, dt, 10).unwrap();
        assert!((g - 0.05).abs() < 2e-3, "{g}");
        let steady: Vec<f64> = (0..20000).map(|i| (3.0 * i as f64 * dt).cos()).collect();
        assert!(envelope_decay_rate(&steady, dt, 10).unwrap().abs() < 1e-3);
    }

    #[test]
    fn sinusoid_peak_within_one_bin() {
        for window in [Window::Hann, Window::Rectangular] {
            let s = power_spectrum(&sine(1.37, 0.05, 4000), 0.05, 0.2, window).unwrap();
            let k = s.amplitudes.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!((s.frequencies[k] - 1.37).abs() <= s.d_omega());
            assert_eq!(s.amplitudes[k], 1.0);
        }
    }

    #[test]
    fn constant_series_has_no_oscillation() {
        let r = power_spectrum(&vec![0.7; 1000], 0.1, 0.2, Window::Hann);
        assert!(matches!(r, Err(Error::NoOscillation)));
    }

    #[test]
    fn short_series_names_required_length() {
        let e = power_spectrum(&vec![0.0; 300], 0.1, 0.2, Window::Hann).unwrap_err();
        assert!(e.to_string().contains("256"), "{e}");
    }

    #[test]
    fn two_tone_picks_stronger() {
        let dt = 0.05;
        let x: Vec<f64> = (0..20000).map(|i| (0.3 * i as f64 * dt).sin() + 0.4 * (0.9 * i as f64 * dt).sin()).collect();
        let s = power_spectrum(&x, dt, 0.2, Window::Hann).unwrap();
        assert!((dominant_frequency(&s) - 0.3).abs() < 1e-3);
    }

    #[test]
    fn interpolation_recovers_off_bin_frequency() {
        // 64 samples per period, 500 periods, frequency deliberately off-grid.
        let omega0 = 1.2345;
        let dt = 2.0 * PI / omega0 / 64.0;
        let s = power_spectrum(&sine(omega0, dt, 64 * 500), dt, 0.2, Window::Hann).unwrap();
        let w = dominant_frequency(&s);
        assert!(((w - omega0) / omega0).abs() < 1e-3, "{w}");
    }

    #[test]
    fn rational_examples() {
        assert_eq!(rational_order(0.2500, 6, 1e-3), Some(Rational::new(4, 1)));
        assert_eq!(rational_order(0.2501, 6, 1e-3), Some(Rational::new(4, 1)));
        assert_eq!(rational_order(0.2499, 6, 1e-3), Some(Rational::new(4, 1)));
        assert_eq!(rational_order(0.3001, 6, 1e-3), Some(Rational::new(10, 3)));
        assert_eq!(rational_order(0.2837, 4, 1e-3), None);
    }

    #[test]
    fn rational_reciprocal_integers() {
        for k in 1..=40u64 {
            assert_eq!(rational_order(1.0 / k as f64, 1, 1e-9), Some(Rational { p: k, q: 1 }));
        }
    }

    #[test]
    fn rational_is_reduced() {
        let r = Rational::new(20, 6);
        assert_eq!((r.p, r.q), (10, 3));
        assert_eq!(r.to_string(), "10/3");
    }

    #[test]
    fn four_dtc_label_and_heatmap() {
        let wc = 1.73;
        let dt = 2.0 * PI / wc / 64.0;
        let traj = two_tone_traj(wc, wc / 4.0, 64 * 1000, dt);
        let cfg = AnalysisConfig::default();
        let lab = locking_label(&traj, &cfg).unwrap();
        assert_eq!(lab.label, Some(Rational::new(4, 1)));
        assert!(lab.amplitude > 0.9);
        let col = stroboscopic_amplitudes(&traj, wc, 301, &cfg).unwrap();
        let k = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!((k as f64 * 1.5 / 300.0 - 0.25).abs() < 1e-9);
        let strong = col.iter().filter(|&&a| a > 0.5).count();
        assert!(strong <= 2, "{strong}");
    }

    #[test]
    fn threshold_above_one_never_labels() {
        let wc = 1.73;
        let dt = 2.0 * PI / wc / 64.0;
        let traj = two_tone_traj(wc, wc / 4.0, 64 * 400, dt);
        let cfg = AnalysisConfig { amp_threshold: 1.01, ..Default::default() };
        assert_eq!(locking_label(&traj, &cfg).unwrap().label, None);
    }

    #[test]
    fn stationary_ctc_is_reported() {
        let times: Vec<f64> = (0..2000).map(|i| i as f64 * 0.1).collect();
        let samples = times.iter().map(|t| BlochPair::new([0.0, 0.5, -0.866], [0.0, 0.0, t.cos()])).collect();
        let traj = Trajectory { times, samples, meta: ModelParameters::coherent_reference(0.0) };
        assert_eq!(relative_frequency(&traj, &AnalysisConfig::default()).unwrap(), Phase::Stationary(Subsystem::Ctc));
    }
}

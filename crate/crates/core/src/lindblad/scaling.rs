//! Finite-size scaling of the dominant CTC and DTC eigenmodes.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::eigen::{label_spectrum, spectrum, EigenmodeSet, ModeLabel, SpectrumOptions};
use super::liouvillian::assemble_liouvillian;
use super::operators::MemoryBudget;
use crate::analysis::{relative_frequency, AnalysisConfig, Phase, Subsystem};
use crate::error::{Error, Result};
use crate::meanfield::{self, IntegratorConfig};
use crate::model::{default_initial_state, ModelParameters};

/// Mean-field `(omega_CTC, omega_DTC)` from the default initial state, taken
/// over `periods` CTC periods.
pub fn mean_field_frequencies(p: &ModelParameters, periods: f64) -> Result<(f64, f64)> {
    let s0 = default_initial_state();
    let cfg = IntegratorConfig::for_parameters(p, &s0);
    let t_ctc = cfg.sample_dt * meanfield::SAMPLES_PER_PERIOD as f64;
    let traj = meanfield::integrate(p, &s0, periods * t_ctc, &cfg)?;
    match relative_frequency(&traj, &AnalysisConfig::default())? {
        Phase::Oscillating(r) => Ok((r.omega_ctc, r.omega_dtc)),
        Phase::Stationary(Subsystem::Ctc) => Err(Error::Config("mean-field CTC is stationary".into())),
        Phase::Stationary(Subsystem::Dtc) => Err(Error::Config("mean-field DTC is stationary".into())),
    }
}

/// Ordinary least-squares line `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// NaN with fewer than three points.
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub points: usize,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        let s2 = ss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(LineFit { slope, intercept, slope_stderr, intercept_stderr, points: n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingOptions {
    pub spectrum: SpectrumOptions,
    /// Relative frequency window for CTC/DTC labels.
    pub label_tol: f64,
    pub memory: MemoryBudget,
    /// CTC periods of the mean-field reference run.
    pub reference_periods: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            spectrum: SpectrumOptions::default(),
            label_tol: 0.15,
            memory: MemoryBudget::default(),
            reference_periods: 400.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n_spins: usize,
    pub ctc: Option<Complex64>,
    pub dtc: Option<Complex64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub params: ModelParameters,
    pub omega_ctc_mf: f64,
    pub omega_dtc_mf: f64,
    pub rows: Vec<ScalingRow>,
    pub modes: Vec<EigenmodeSet>,
    /// `log|Re lambda|` against `log N`.
    pub ctc_decay_fit: Option<LineFit>,
    pub dtc_decay_fit: Option<LineFit>,
    /// `Im lambda` against `1/N`; the intercept is the large-N frequency.
    pub ctc_frequency_fit: Option<LineFit>,
    pub dtc_frequency_fit: Option<LineFit>,
    pub fit_spaces: [String; 2],
}

impl ScalingReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["n", "re_ctc", "im_ctc", "re_dtc", "im_dtc", "status"])?;
        let f =
            |v: Option<Complex64>, im: bool| v.map_or(String::new(), |c| format!("{:e}", if im { c.im } else { c.re }));
        for r in &self.rows {
            wr.write_record([
                r.n_spins.to_string(),
                f(r.ctc, false),
                f(r.ctc, true),
                f(r.dtc, false),
                f(r.dtc, true),
                r.error.clone().unwrap_or_else(|| "ok".into()),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Labelled spectrum for one system size, shifts placed at the reference frequencies.
pub fn labelled_modes(
    p: &ModelParameters,
    omega_ctc: f64,
    omega_dtc: f64,
    opts: &ScalingOptions,
) -> Result<EigenmodeSet> {
    let l = assemble_liouvillian(p, &opts.memory)?;
    let sopts = opts.spectrum.clone().with_frequencies(p.kappa, &[omega_ctc, omega_dtc]);
    let set = spectrum(&l, l.dim(), &sopts)?;
    label_spectrum(&set, omega_ctc, omega_dtc, opts.label_tol)
}

pub fn finite_size_scaling(p: &ModelParameters, n_list: &[usize], opts: &ScalingOptions) -> Result<ScalingReport> {
    let p = p.validate()?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("N list must be non-empty and strictly ascending".into()));
    }
    let (omega_ctc, omega_dtc) = mean_field_frequencies(&p, opts.reference_periods)?;
    let mut rows = Vec::new();
    let mut modes = Vec::new();
    for &n in n_list {
        match labelled_modes(&p.with_n(n), omega_ctc, omega_dtc, opts) {
            Ok(set) => {
                rows.push(ScalingRow {
                    n_spins: n,
                    ctc: set.labelled(ModeLabel::Ctc),
                    dtc: set.labelled(ModeLabel::Dtc),
                    error: None,
                });
                modes.push(set);
            }
            Err(e @ Error::MemoryBudget { .. }) if rows.is_empty() => return Err(e),
            Err(e) => rows.push(ScalingRow { n_spins: n, ctc: None, dtc: None, error: Some(e.to_string()) }),
        }
    }
    let decay = |pick: fn(&ScalingRow) -> Option<Complex64>| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| pick(r).filter(|l| l.re != 0.0).map(|l| ((r.n_spins as f64).ln(), l.re.abs().ln())))
            .collect();
        fit_line(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>())
    };
    let freq = |pick: fn(&ScalingRow) -> Option<Complex64>| {
        let pts: Vec<(f64, f64)> =
            rows.iter().filter_map(|r| pick(r).map(|l| (1.0 / r.n_spins as f64, l.im))).collect();
        fit_line(&pts.iter().map(|p| p.0).collect::<Vec<_>>(), &pts.iter().map(|p| p.1).collect::<Vec<_>>())
    };
    Ok(ScalingReport {
        params: p,
        omega_ctc_mf: omega_ctc,
        omega_dtc_mf: omega_dtc,
        ctc_decay_fit: decay(|r| r.ctc),
        dtc_decay_fit: decay(|r| r.dtc),
        ctc_frequency_fit: freq(|r| r.ctc),
        dtc_frequency_fit: freq(|r| r.dtc),
        rows,
        modes,
        fit_spaces: ["log|Re lambda| vs log N".into(), "Im lambda vs 1/N".into()],
    })
}

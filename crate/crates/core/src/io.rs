//! File formats for trajectories, spectra and locking summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::{LockingLabel, Phase, SpectrumResult};
use crate::error::{Error, Result};
use crate::model::{BlochPair, ModelParameters, Trajectory};

pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "mcx", "mcy", "mcz", "mdx", "mdy", "mdz"];

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(TRAJECTORY_HEADER)?;
    for (t, s) in traj.times.iter().zip(&traj.samples) {
        let a = s.to_array();
        wr.write_record(std::iter::once(*t).chain(a).map(|v| v.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: std::io::Read>(r: R, meta: ModelParameters) -> Result<Trajectory> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_HEADER {
        return Err(Error::Config(format!("unexpected trajectory header {header:?}")));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v: Vec<f64> = rec
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| Error::Config(format!("bad number `{x}`: {e}"))))
            .collect::<Result<_>>()?;
        times.push(v[0]);
        samples.push(BlochPair::from_array([v[1], v[2], v[3], v[4], v[5], v[6]]));
    }
    Ok(Trajectory { times, samples, meta })
}

/// JSON form of a trajectory: parameters plus columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnvelope {
    pub params: ModelParameters,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub samples: Vec<[f64; 6]>,
}

impl From<&Trajectory> for TrajectoryEnvelope {
    fn from(t: &Trajectory) -> Self {
        TrajectoryEnvelope {
            params: t.meta,
            columns: TRAJECTORY_HEADER.iter().map(|s| s.to_string()).collect(),
            times: t.times.clone(),
            samples: t.samples.iter().map(|s| s.to_array()).collect(),
        }
    }
}

impl From<TrajectoryEnvelope> for Trajectory {
    fn from(e: TrajectoryEnvelope) -> Self {
        Trajectory {
            times: e.times,
            samples: e.samples.into_iter().map(BlochPair::from_array).collect(),
            meta: e.params,
        }
    }
}

pub fn write_spectrum_csv<W: Write>(spec: &SpectrumResult, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["omega", "amplitude"])?;
    for (f, a) in spec.frequencies.iter().zip(&spec.amplitudes) {
        wr.write_record([f.to_string(), a.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// One header row and one data row.
pub fn write_locking_csv<W: Write>(label: &LockingLabel, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["phase", "omega_ctc", "omega_dtc", "omega_r", "p", "q", "label", "amplitude"])?;
    let row = match label.phase {
        Phase::Stationary(s) => {
            vec![format!("stationary-{}", format!("{s:?}").to_lowercase()), String::new(), String::new(), String::new()]
        }
        Phase::Oscillating(r) => {
            vec!["oscillating".into(), r.omega_ctc.to_string(), r.omega_dtc.to_string(), r.omega_r.to_string()]
        }
    };
    let order = match label.phase {
        Phase::Oscillating(r) => r.order,
        Phase::Stationary(_) => None,
    };
    let mut rec = row;
    rec.push(order.map_or(String::new(), |o| o.p.to_string()));
    rec.push(order.map_or(String::new(), |o| o.q.to_string()));
    rec.push(label.label.map_or(String::new(), |o| o.to_string()));
    rec.push(label.amplitude.to_string());
    wr.write_record(&rec)?;
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{power_spectrum, Window};

    fn small_traj() -> Trajectory {
        let times: Vec<f64> = (0..5).map(|i| 0.1 * i as f64).collect();
        let samples = times.iter().map(|t| BlochPair::new([t.sin(), 0.0, t.cos()], [0.0, -t.sin(), t.cos()])).collect();
        Trajectory { times, samples, meta: ModelParameters::coherent_reference(0.15) }
    }

    #[test]
    fn trajectory_csv_header_and_rows() {
        let mut buf = Vec::new();
        write_trajectory_csv(&small_traj(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,mcx,mcy,mcz,mdx,mdy,mdz\n"));
        assert_eq!(text.lines().count(), 6);
        let back = read_trajectory_csv(buf.as_slice(), small_traj().meta).unwrap();
        assert_eq!(back, small_traj());
    }

    #[test]
    fn envelope_embeds_parameters() {
        let env = TrajectoryEnvelope::from(&small_traj());
        let json = serde_json::to_value(&env).unwrap();
        assert_eq!(json["params"]["scheme"], "coherent");
        assert_eq!(json["params"]["j"], 0.1);
        let back: Trajectory = serde_json::from_value::<TrajectoryEnvelope>(json).unwrap().into();
        assert_eq!(back, small_traj());
    }

    #[test]
    fn spectrum_csv_columns() {
        let x: Vec<f64> = (0..600).map(|i| (0.7 * i as f64 * 0.1).sin()).collect();
        let s = power_spectrum(&x, 0.1, 0.2, Window::Hann).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&s, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("omega,amplitude\n"));
        assert_eq!(text.lines().count(), s.frequencies.len() + 1);
    }
}

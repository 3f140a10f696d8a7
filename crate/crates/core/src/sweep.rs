//! Parameter sweeps over one or two axes.
//!
//! Every cell starts from the same initial state and is analysed on its own,
//! so results never depend on neighbouring cells or on execution order.
//! Output rows are always sorted by axis index.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{locking_label, stroboscopic_amplitudes, AnalysisConfig, Phase, Rational, Subsystem};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::meanfield::{self, IntegratorConfig, SAMPLES_PER_PERIOD};
use crate::model::{default_initial_state, BlochPair, ModelParameters, SweepAxisName};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: SweepAxisName,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(name: SweepAxisName, min: f64, max: f64, count: usize) -> Self {
        Axis { name, min, max, count }
    }

    /// Evenly spaced grid including both end points.
    pub fn values(&self) -> Vec<f64> {
        let last = self.count.saturating_sub(1);
        (0..self.count)
            .map(|i| if i == last { self.max } else { self.min + (self.max - self.min) * i as f64 / last as f64 })
            .collect()
    }

    /// A one-point axis (`min == max`) is accepted only when `allow_single` is set.
    fn validate(&self, allow_single: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::Config(format!("axis `{}` bounds must be finite", self.name)));
        }
        if allow_single && self.count == 1 && self.min == self.max {
            return Ok(());
        }
        if self.count < 2 {
            return Err(Error::Config(format!("axis `{}` needs at least 2 points", self.name)));
        }
        if self.max <= self.min {
            return Err(Error::Config(format!(
                "axis `{}` needs a finite range with max > min (got [{}, {}])",
                self.name, self.min, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[serde(alias = "meanfield")]
    MeanField,
    FiniteN,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "meanfield" | "mean-field" | "mf" => Ok(Engine::MeanField),
            "finite-n" | "finiten" | "finite" => Ok(Engine::FiniteN),
            other => Err(Error::Config(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: ModelParameters,
    pub axis1: Axis,
    pub axis2: Option<Axis>,
    /// Simulated time in CTC periods of the decoupled CTC.
    pub horizon_periods: f64,
    pub engine: Engine,
    pub analysis: AnalysisConfig,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Heatmap resolution on `omega / omega_CTC` in `[0, 1.5]`; 0 disables it.
    pub heatmap_bins: usize,
}

impl SweepPlan {
    pub fn staircase(base: ModelParameters, eta_min: f64, eta_max: f64, count: usize) -> Self {
        SweepPlan {
            base,
            axis1: Axis::new(SweepAxisName::Eta, eta_min, eta_max, count),
            axis2: None,
            horizon_periods: 1000.0,
            engine: Engine::MeanField,
            analysis: AnalysisConfig::default(),
            rel_tol: 1e-9,
            abs_tol: 1e-11,
            heatmap_bins: 151,
        }
    }

    /// `axis1` indexes rows, `axis2` columns.
    pub fn map(base: ModelParameters, rows: Axis, cols: Axis) -> Self {
        SweepPlan { axis1: rows, axis2: Some(cols), heatmap_bins: 0, ..Self::staircase(base, 0.0, 1.0, 2) }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let is_map = self.axis2.is_some();
        self.axis1.validate(is_map)?;
        if let Some(a) = &self.axis2 {
            a.validate(true)?;
            if a.name == self.axis1.name {
                return Err(Error::Config("the two sweep axes must differ".into()));
            }
        }
        if !(self.horizon_periods >= 100.0) || !self.horizon_periods.is_finite() {
            return Err(Error::Config(format!("horizon_periods must be >= 100 (got {})", self.horizon_periods)));
        }
        if self.engine != Engine::MeanField {
            return Err(Error::Config("sweeps run on the mean-field engine only".into()));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("integrator tolerances must be positive".into()));
        }
        self.analysis.validate()
    }

    pub fn cell_count(&self) -> usize {
        self.axis1.count * self.axis2.map_or(1, |a| a.count)
    }

    /// SHA-256 of the plan's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn cell_params(&self, index: usize) -> (ModelParameters, f64, Option<f64>) {
        let mut p = self.base;
        let (i, j) = self.split(index);
        let v1 = self.axis1.values()[i];
        p.set_axis(self.axis1.name, v1);
        let v2 = self.axis2.map(|a| {
            let v = a.values()[j];
            p.set_axis(a.name, v);
            v
        });
        (p, v1, v2)
    }

    fn split(&self, index: usize) -> (usize, usize) {
        match self.axis2 {
            Some(a) => (index / a.count, index % a.count),
            None => (index, 0),
        }
    }

    fn sweeps_omega(&self) -> bool {
        self.axis1.name == SweepAxisName::Omega || self.axis2.is_some_and(|a| a.name == SweepAxisName::Omega)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    /// Rational order found and its amplitude passes the threshold.
    Locked,
    Unlocked,
    StationaryCtc,
    StationaryDtc,
    Failed(String),
}

impl CellStatus {
    pub fn as_string(&self) -> String {
        match self {
            CellStatus::Locked => "locked".into(),
            CellStatus::Unlocked => "unlocked".into(),
            CellStatus::StationaryCtc => "stationary-ctc".into(),
            CellStatus::StationaryDtc => "stationary-dtc".into(),
            CellStatus::Failed(m) => format!("failed: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub value1: f64,
    pub value2: Option<f64>,
    pub omega_ctc: Option<f64>,
    pub omega_dtc: Option<f64>,
    pub omega_r: Option<f64>,
    /// Rational approximation of `1 / omega_r`, regardless of amplitude.
    pub order: Option<Rational>,
    /// `order` when the locking amplitude passes the threshold.
    pub label: Option<Rational>,
    pub amplitude: f64,
    pub status: CellStatus,
    pub heatmap: Vec<f64>,
}

/// Period of the decoupled CTC used to convert horizons into time.
pub fn reference_period(p: &ModelParameters) -> Result<f64> {
    meanfield::estimate_ctc_period(p, &default_initial_state()).ok_or_else(|| {
        Error::Config(format!("decoupled CTC does not oscillate at omega/kappa = {}", p.omega / p.kappa))
    })
}

fn run_cell(plan: &SweepPlan, index: usize, base_period: Option<f64>) -> CellResult {
    let (p, value1, value2) = plan.cell_params(index);
    let mut cell = CellResult {
        index,
        value1,
        value2,
        omega_ctc: None,
        omega_dtc: None,
        omega_r: None,
        order: None,
        label: None,
        amplitude: 0.0,
        status: CellStatus::Unlocked,
        heatmap: Vec::new(),
    };
    if let Err(e) = evaluate_cell(plan, &p, base_period, &mut cell) {
        cell.status = CellStatus::Failed(e.to_string());
    }
    cell
}

fn evaluate_cell(plan: &SweepPlan, p: &ModelParameters, base_period: Option<f64>, cell: &mut CellResult) -> Result<()> {
    let period = match base_period {
        Some(t) => t,
        None => reference_period(p)?,
    };
    let cfg = IntegratorConfig {
        rel_tol: plan.rel_tol,
        abs_tol: plan.abs_tol,
        max_step: f64::INFINITY,
        sample_dt: period / SAMPLES_PER_PERIOD as f64,
    };
    let s0: BlochPair = default_initial_state();
    let traj = meanfield::integrate(p, &s0, plan.horizon_periods * period, &cfg)?;
    let label = locking_label(&traj, &plan.analysis)?;
    match label.phase {
        Phase::Stationary(Subsystem::Ctc) => cell.status = CellStatus::StationaryCtc,
        Phase::Stationary(Subsystem::Dtc) => cell.status = CellStatus::StationaryDtc,
        Phase::Oscillating(r) => {
            cell.omega_ctc = Some(r.omega_ctc);
            cell.omega_dtc = Some(r.omega_dtc);
            cell.omega_r = Some(r.omega_r);
            cell.order = r.order;
            cell.label = label.label;
            cell.amplitude = label.amplitude;
            cell.status = if label.label.is_some() { CellStatus::Locked } else { CellStatus::Unlocked };
            if plan.heatmap_bins > 0 {
                cell.heatmap = stroboscopic_amplitudes(&traj, r.omega_ctc, plan.heatmap_bins, &plan.analysis)?;
            }
        }
    }
    Ok(())
}

/// All cells of a finished sweep, sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDataset {
    pub plan: SweepPlan,
    pub plan_hash: String,
    pub version: String,
    pub cells: Vec<CellResult>,
}

impl SweepDataset {
    fn new(plan: &SweepPlan, mut cells: Vec<CellResult>) -> Self {
        cells.sort_by_key(|c| c.index);
        SweepDataset { plan: plan.clone(), plan_hash: plan.hash(), version: VERSION.to_string(), cells }
    }

    pub fn labels(&self) -> Vec<Option<Rational>> {
        self.cells.iter().map(|c| c.label).collect()
    }

    /// Cells of row `i` (fixed `axis1` value) of a two-axis sweep.
    pub fn row(&self, i: usize) -> &[CellResult] {
        let width = self.plan.axis2.map_or(1, |a| a.count);
        &self.cells[i * width..(i + 1) * width]
    }

    /// One line per cell: axis values, frequencies, order, amplitude, status.
    pub fn to_csv(&self) -> Result<String> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.plan.axis1.name.to_string()];
        if let Some(a) = &self.plan.axis2 {
            header.push(a.name.to_string());
        }
        header
            .extend(["omega_ctc", "omega_dtc", "omega_r", "p", "q", "label", "amplitude", "status"].map(String::from));
        wr.write_record(&header)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for c in &self.cells {
            let mut rec = vec![c.value1.to_string()];
            if self.plan.axis2.is_some() {
                rec.push(opt(c.value2));
            }
            rec.extend([
                opt(c.omega_ctc),
                opt(c.omega_dtc),
                opt(c.omega_r),
                c.order.map_or(String::new(), |r| r.p.to_string()),
                c.order.map_or(String::new(), |r| r.q.to_string()),
                c.label.map_or(String::new(), |r| r.to_string()),
                c.amplitude.to_string(),
                c.status.as_string(),
            ]);
            wr.write_record(&rec)?;
        }
        String::from_utf8(wr.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Heatmap matrix: first column the axis value, then one column per
    /// `omega / omega_CTC` bin. Cells without a spectrum are left empty.
    pub fn heatmap_csv(&self) -> Result<String> {
        let bins = self.plan.heatmap_bins;
        let mut wr = csv::Writer::from_writer(Vec::new());
        let mut header = vec![self.plan.axis1.name.to_string()];
        header.extend((0..bins).map(|b| format!("{}", 1.5 * b as f64 / (bins - 1).max(1) as f64)));
        wr.write_record(&header)?;
        for c in &self.cells {
            let mut rec = vec![c.value1.to_string()];
            if c.heatmap.len() == bins {
                rec.extend(c.heatmap.iter().map(|a| a.to_string()));
            } else {
                rec.extend(std::iter::repeat_n(String::new(), bins));
            }
            wr.write_record(&rec)?;
        }
        String::from_utf8(wr.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "software": "htc",
            "version": self.version,
            "plan_hash": self.plan_hash,
            "plan": self.plan,
            "cells": self.cells.len(),
        })
    }

    /// Writes `<stem>.csv`, `<stem>_manifest.json` and, when present, `<stem>_heatmap.csv`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv()?.as_bytes())?;
        if self.plan.heatmap_bins > 0 {
            write_atomic(&dir.join(format!("{stem}_heatmap.csv")), self.heatmap_csv()?.as_bytes())?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        write_atomic(&dir.join(format!("{stem}_manifest.json")), manifest.as_bytes())?;
        Ok(())
    }
}

fn base_period(plan: &SweepPlan) -> Result<Option<f64>> {
    if plan.sweeps_omega() {
        Ok(None)
    } else {
        reference_period(&plan.base).map(Some)
    }
}

fn run_cells(plan: &SweepPlan, indices: &[usize], period: Option<f64>, exec: Execution) -> Vec<CellResult> {
    exec.map(indices, |&i| run_cell(plan, i, period))
}

/// One-dimensional sweep over `eta` with heatmap columns.
pub fn staircase_sweep(plan: &SweepPlan, exec: Execution) -> Result<SweepDataset> {
    plan.validate()?;
    if plan.axis1.name != SweepAxisName::Eta || plan.axis2.is_some() {
        return Err(Error::Config("a staircase sweeps eta only".into()));
    }
    run_sweep(plan, exec)
}

/// Two-dimensional locking map.
pub fn stability_map(plan: &SweepPlan, exec: Execution) -> Result<SweepDataset> {
    plan.validate()?;
    if plan.axis2.is_none() {
        return Err(Error::Config("a stability map needs two axes".into()));
    }
    run_sweep(plan, exec)
}

/// Runs any validated plan.
pub fn run_sweep(plan: &SweepPlan, exec: Execution) -> Result<SweepDataset> {
    plan.validate()?;
    let period = base_period(plan)?;
    let indices: Vec<usize> = (0..plan.cell_count()).collect();
    Ok(SweepDataset::new(plan, run_cells(plan, &indices, period, exec)))
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    plan_hash: String,
    version: String,
}

/// Outcome of a checkpointed run.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum CheckpointOutcome {
    Complete(SweepDataset),
    /// Stopped early; `done` cells are on disk.
    Partial {
        done: usize,
        total: usize,
    },
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".into(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn load_checkpoint(path: &Path, plan: &SweepPlan) -> Result<Vec<CellResult>> {
    if !path.exists() || fs::metadata(path)?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut lines = BufReader::new(fs::File::open(path)?).lines();
    let Some(first) = lines.next() else { return Ok(Vec::new()) };
    let header: CheckpointHeader = serde_json::from_str(&first?)?;
    let expected = plan.hash();
    if header.plan_hash != expected {
        return Err(Error::PlanMismatch { expected, found: header.plan_hash });
    }
    let mut cells = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            cells.push(serde_json::from_str::<CellResult>(&line)?);
        }
    }
    Ok(cells)
}

fn save_checkpoint(path: &Path, plan: &SweepPlan, cells: &[CellResult]) -> Result<()> {
    let mut buf = serde_json::to_string(&CheckpointHeader { plan_hash: plan.hash(), version: VERSION.into() })?;
    buf.push('\n');
    for c in cells {
        buf.push_str(&serde_json::to_string(c)?);
        buf.push('\n');
    }
    write_atomic(path, buf.as_bytes())
}

/// Runs `plan`, persisting finished cells to `checkpoint` after every batch
/// of `batch` cells. An existing checkpoint for the same plan is resumed; one
/// for a different plan is refused. `stop_after` limits how many new cells
/// are computed in this call.
pub fn run_with_checkpoints(
    plan: &SweepPlan,
    checkpoint: &Path,
    exec: Execution,
    batch: usize,
    stop_after: Option<usize>,
) -> Result<CheckpointOutcome> {
    plan.validate()?;
    let mut done = load_checkpoint(checkpoint, plan)?;
    let total = plan.cell_count();
    let mut finished = vec![false; total];
    for c in &done {
        if c.index < total {
            finished[c.index] = true;
        }
    }
    let mut todo: Vec<usize> = (0..total).filter(|&i| !finished[i]).collect();
    if let Some(limit) = stop_after {
        todo.truncate(limit);
    }
    let period = if todo.is_empty() { None } else { base_period(plan)? };
    for chunk in todo.chunks(batch.max(1)) {
        done.extend(run_cells(plan, chunk, period, exec));
        done.sort_by_key(|c| c.index);
        save_checkpoint(checkpoint, plan, &done)?;
    }
    if done.is_empty() {
        save_checkpoint(checkpoint, plan, &done)?;
    }
    if done.len() < total {
        return Ok(CheckpointOutcome::Partial { done: done.len(), total });
    }
    Ok(CheckpointOutcome::Complete(SweepDataset::new(plan, done)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CouplingScheme;

    fn quick_plan() -> SweepPlan {
        let mut plan = SweepPlan::staircase(ModelParameters::coherent_reference(0.0), 0.1, 0.3, 4);
        plan.horizon_periods = 120.0;
        plan.heatmap_bins = 31;
        plan
    }

    #[test]
    fn axis_grid_hits_end_points() {
        let a = Axis::new(SweepAxisName::J, 0.05, 0.25, 5);
        let v = a.values();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 0.05);
        assert_eq!(v[4], 0.25);
        assert_eq!(v[1], 0.1);
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut p = quick_plan();
        p.axis1.count = 1;
        assert!(p.validate().is_err());
        let mut p = quick_plan();
        p.axis1.max = p.axis1.min;
        assert!(p.validate().is_err());
        let mut p = quick_plan();
        p.horizon_periods = 50.0;
        assert!(p.validate().is_err());
        let mut p = quick_plan();
        p.engine = Engine::FiniteN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn staircase_rows_sorted_and_complete() {
        let plan = quick_plan();
        let data = staircase_sweep(&plan, Execution::Parallel).unwrap();
        assert_eq!(data.cells.len(), 4);
        assert!(data.cells.windows(2).all(|w| w[0].value1 < w[1].value1));
        assert!(data.cells.iter().all(|c| c.heatmap.len() == 31));
        let csv = data.to_csv().unwrap();
        assert!(csv.starts_with("eta,omega_ctc,omega_dtc,omega_r,p,q,label,amplitude,status\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn failing_cell_does_not_stop_sweep() {
        let mut plan = SweepPlan::map(
            ModelParameters::coherent_reference(0.2),
            Axis::new(SweepAxisName::Omega, 0.5, 2.0, 2),
            Axis::new(SweepAxisName::Eta, 0.1, 0.2, 2),
        );
        plan.horizon_periods = 100.0;
        let data = stability_map(&plan, Execution::Sequential).unwrap();
        assert_eq!(data.cells.len(), 4);
        // Omega/kappa = 0.5: the CTC never oscillates.
        assert!(matches!(data.cells[0].status, CellStatus::Failed(_)));
        assert!(!matches!(data.cells[3].status, CellStatus::Failed(_)));
    }

    #[test]
    fn single_cell_map() {
        let mut plan = SweepPlan::map(
            ModelParameters::coherent_reference(0.0),
            Axis::new(SweepAxisName::J, 0.1, 0.1, 1),
            Axis::new(SweepAxisName::Eta, 0.2, 0.2, 1),
        );
        plan.horizon_periods = 100.0;
        let data = stability_map(&plan, Execution::Sequential).unwrap();
        assert_eq!(data.cells.len(), 1);
        assert_eq!(data.cells[0].value1, 0.1);
        assert_eq!(data.cells[0].value2, Some(0.2));
        let mut p = quick_plan();
        p.axis1 = Axis::new(SweepAxisName::Eta, 0.2, 0.2, 1);
        assert!(p.validate().is_err());
    }

    #[test]
    fn plan_hash_tracks_content() {
        let a = quick_plan();
        let mut b = quick_plan();
        assert_eq!(a.hash(), b.hash());
        b.base.scheme = CouplingScheme::SpinExchange;
        assert_ne!(a.hash(), b.hash());
    }
}

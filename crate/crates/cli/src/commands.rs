use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use htc_core::analysis::{envelope_decay_rate, locking_label, power_spectrum, Phase};
use htc_core::io::{
    read_trajectory_csv, write_locking_csv, write_spectrum_csv, write_trajectory_csv, TrajectoryEnvelope,
};
use htc_core::lindblad::{
    assemble_liouvillian, assembly_footprint, evolve_density_matrix, finite_size_scaling, DensityMatrix, MasterConfig,
    ScalingOptions, SpectrumOptions,
};
use htc_core::meanfield::{self, IntegratorConfig, SAMPLES_PER_PERIOD};
use htc_core::model::{Observable, SweepAxisName};
use htc_core::sweep::{self, run_with_checkpoints, Axis, CheckpointOutcome, Engine, SweepDataset, SweepPlan, VERSION};
use htc_core::{Error, Execution, ModelParameters, Result, Trajectory};
use serde_json::{json, Value};

use crate::config::{sha256_hex, LoadedConfig, RunConfig};

pub enum Job {
    Trajectory,
    Spectrum { input: Option<PathBuf> },
    Staircase,
    StabilityMap,
    Liouvillian,
    ValidateConfig,
}

pub struct Context {
    pub loaded: LoadedConfig,
    pub exec: Execution,
    pub seed: u64,
    pub workers: Option<usize>,
}

/// Windows used for the envelope fit of finite-N runs.
const ENVELOPE_WINDOWS: usize = 8;
/// Cells per checkpoint flush.
const CHECKPOINT_BATCH: usize = 32;

pub fn run(job: Job, mut cfg: RunConfig, ctx: &Context) -> Result<()> {
    cfg.validate_common()?;
    match job {
        Job::Trajectory => trajectory(&mut cfg, ctx),
        Job::Spectrum { input } => spectrum(&mut cfg, input.as_deref(), ctx),
        Job::Staircase => staircase(&mut cfg, ctx),
        Job::StabilityMap => stability_map(&mut cfg, ctx),
        Job::Liouvillian => liouvillian(&mut cfg, ctx),
        Job::ValidateConfig => validate_config(&mut cfg),
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        println!("writing {}", self.dir.join(name).display());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn record(&mut self, name: &str) {
        self.files.push(name.to_string());
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.files.push(name.to_string());
        println!("writing {}", self.dir.join(name).display());
        sweep::write_atomic(&self.dir.join(name), text.as_bytes())
    }

    /// `manifest_<command>.json`: effective config, version, input hashes and outputs.
    fn manifest(mut self, command: &str, cfg: &RunConfig, ctx: &Context, extra: Value) -> Result<()> {
        let effective = serde_json::to_value(cfg)?;
        let effective_hash = sha256_hex(serde_json::to_string(&effective)?.as_bytes());
        let mut inputs = json!({
            "config_file": ctx.loaded.source.as_ref().map(|p| p.display().to_string()),
            "config_sha256": ctx.loaded.source_sha256,
            "effective_config_sha256": effective_hash,
        });
        if let Some(extra_inputs) = extra.get("inputs") {
            if let (Some(a), Some(b)) = (inputs.as_object_mut(), extra_inputs.as_object()) {
                a.extend(b.clone());
            }
        }
        let name = format!("manifest_{command}.json");
        self.files.push(name.clone());
        let manifest = json!({
            "software": "htc",
            "version": VERSION,
            "command": command,
            "effective_config": effective,
            "seed": ctx.seed,
            "workers": ctx.workers,
            "inputs": inputs,
            "outputs": self.files,
            "summary": extra.get("summary").cloned().unwrap_or(Value::Null),
        });
        println!("writing {}", self.dir.join(&name).display());
        sweep::write_atomic(&self.dir.join(name), serde_json::to_string_pretty(&manifest)?.as_bytes())
    }
}

/// Decoupled CTC period used to convert `periods` into time.
fn ctc_period(p: &ModelParameters, cfg: &RunConfig) -> f64 {
    meanfield::estimate_ctc_period(p, &cfg.initial_state()).unwrap_or(2.0 * std::f64::consts::PI / p.kappa)
}

struct Simulation {
    trajectory: Trajectory,
    reference: Option<Trajectory>,
    summary: Value,
}

/// Runs the configured engine, filling resolved defaults back into `cfg`.
fn simulate(cfg: &mut RunConfig) -> Result<Simulation> {
    let p = cfg.model()?;
    let s0 = cfg.initial_state();
    let period = ctc_period(&p, cfg);
    let sample_dt = *cfg.engine.sample_dt.get_or_insert(period / SAMPLES_PER_PERIOD as f64);
    let t_end = cfg.engine.periods * period;
    cfg.kappa.get_or_insert(1.0);
    cfg.n_spins.get_or_insert(p.n_spins);
    let mf_default = IntegratorConfig::default();
    match cfg.engine.kind {
        Engine::MeanField => {
            let icfg = IntegratorConfig {
                rel_tol: *cfg.engine.rel_tol.get_or_insert(mf_default.rel_tol),
                abs_tol: *cfg.engine.abs_tol.get_or_insert(mf_default.abs_tol),
                max_step: cfg.engine.max_step.unwrap_or(f64::INFINITY),
                sample_dt,
            };
            let traj = meanfield::integrate(&p, &s0, t_end, &icfg)?;
            let (dc, dd) = meanfield::norm_drift(&traj);
            let limit = 10.0 * icfg.rel_tol;
            if dc.max(dd) >= limit {
                return Err(Error::NormDrift { drift: dc.max(dd), limit });
            }
            Ok(Simulation {
                trajectory: traj,
                reference: None,
                summary: json!({ "ctc_period": period, "t_end": t_end, "norm_drift": [dc, dd], "norm_drift_limit": limit }),
            })
        }
        Engine::FiniteN => {
            let master_default = MasterConfig::default();
            let mcfg = MasterConfig {
                rel_tol: *cfg.engine.rel_tol.get_or_insert(master_default.rel_tol),
                abs_tol: *cfg.engine.abs_tol.get_or_insert(master_default.abs_tol),
                sample_dt,
                memory: cfg.memory()?,
                positivity_checks: cfg.engine.positivity_checks,
            };
            let rho0 = DensityMatrix::coherent(p.n_spins, &s0)?;
            let run = evolve_density_matrix(&p, &rho0, t_end, &mcfg)?;
            let reference = meanfield::integrate(&p, &s0, t_end, &IntegratorConfig { sample_dt, ..mf_default })?;
            let decay = |o: Observable| envelope_decay_rate(&run.trajectory.series(o), sample_dt, ENVELOPE_WINDOWS);
            let summary = json!({
                "ctc_period": period,
                "t_end": t_end,
                "trace_drift": run.trace_drift,
                "hermiticity_drift": run.hermiticity_drift,
                "min_eigenvalues": run.positivity,
                "envelope_decay_rate": { "mcz": decay(Observable::Cz), "mdz": decay(Observable::Dz) },
                "steps": { "accepted": run.stats.accepted, "rejected": run.stats.rejected, "rhs_evals": run.stats.rhs_evals },
            });
            Ok(Simulation { trajectory: run.trajectory, reference: Some(reference), summary })
        }
    }
}

fn write_trajectory(out: &mut Outputs, stem: &str, traj: &Trajectory, cfg: &RunConfig) -> Result<()> {
    if cfg.output.wants("csv") {
        write_trajectory_csv(traj, out.create(&format!("{stem}.csv"))?)?;
    }
    if cfg.output.wants("json") {
        out.json(&format!("{stem}.json"), &serde_json::to_value(TrajectoryEnvelope::from(traj))?)?;
    }
    Ok(())
}

fn trajectory(cfg: &mut RunConfig, ctx: &Context) -> Result<()> {
    let sim = simulate(cfg)?;
    let mut out = Outputs::new(&cfg.output.dir)?;
    write_trajectory(&mut out, "trajectory", &sim.trajectory, cfg)?;
    if let Some(reference) = &sim.reference {
        write_trajectory(&mut out, "meanfield_reference", reference, cfg)?;
    }
    println!("{} samples over t = {:.3}", sim.trajectory.len(), sim.trajectory.times.last().copied().unwrap_or(0.0));
    out.manifest("trajectory", cfg, ctx, json!({ "summary": sim.summary }))
}

fn spectrum(cfg: &mut RunConfig, input: Option<&Path>, ctx: &Context) -> Result<()> {
    let (traj, summary, inputs) = match input {
        Some(path) => {
            let bytes = fs::read(path)?;
            let meta = cfg.model().unwrap_or_else(|_| ModelParameters::coherent_reference(0.0));
            let traj = read_trajectory_csv(bytes.as_slice(), meta)?;
            if !traj.is_uniform(1e-6) {
                return Err(Error::Config(format!("{} is not uniformly sampled", path.display())));
            }
            let inputs =
                json!({ "trajectory_file": path.display().to_string(), "trajectory_sha256": sha256_hex(&bytes) });
            (traj, Value::Null, inputs)
        }
        None => {
            let sim = simulate(cfg)?;
            (sim.trajectory, sim.summary, json!({}))
        }
    };
    let acfg = cfg.analysis.to_config();
    let mut out = Outputs::new(&cfg.output.dir)?;
    for (name, o) in [("spectrum_mcz.csv", Observable::Cz), ("spectrum_mdz.csv", Observable::Dz)] {
        let s = power_spectrum(&traj.series(o), traj.dt(), acfg.transient_fraction, acfg.window)?;
        write_spectrum_csv(&s, out.create(name)?)?;
    }
    let label = locking_label(&traj, &acfg)?;
    write_locking_csv(&label, out.create("locking.csv")?)?;
    match label.phase {
        Phase::Oscillating(r) => println!(
            "omega_ctc = {:.6}, omega_dtc = {:.6}, omega_r = {:.6}, label = {}",
            r.omega_ctc,
            r.omega_dtc,
            r.omega_r,
            label.label.map_or("-".to_string(), |n| n.to_string())
        ),
        Phase::Stationary(s) => println!("stationary {s:?}"),
    }
    out.manifest(
        "spectrum",
        cfg,
        ctx,
        json!({ "inputs": inputs, "summary": { "simulation": summary, "locking": label } }),
    )
}

/// Axis bounds are given in the same units as the model and rescaled with it.
fn scaled_axis(name: SweepAxisName, min: f64, max: f64, count: usize, kappa: f64) -> Axis {
    Axis::new(name, min / kappa, max / kappa, count)
}

fn sweep_tolerances(cfg: &mut RunConfig, plan: &mut SweepPlan) {
    plan.rel_tol = *cfg.engine.rel_tol.get_or_insert(plan.rel_tol);
    plan.abs_tol = *cfg.engine.abs_tol.get_or_insert(plan.abs_tol);
    plan.analysis = cfg.analysis.to_config();
}

fn run_plan(plan: &SweepPlan, checkpoint: Option<&Path>, exec: Execution) -> Result<SweepDataset> {
    match checkpoint {
        None => sweep::run_sweep(plan, exec),
        Some(path) => match run_with_checkpoints(plan, path, exec, CHECKPOINT_BATCH, None)? {
            CheckpointOutcome::Complete(ds) => Ok(ds),
            CheckpointOutcome::Partial { done, total } => {
                Err(Error::Config(format!("checkpoint run stopped after {done} of {total} cells")))
            }
        },
    }
}

/// `(label, first value, last value, length)` for each run of identical labels.
fn plateaus(ds: &SweepDataset) -> Vec<(String, f64, f64, usize)> {
    let mut runs: Vec<(String, f64, f64, usize)> = Vec::new();
    let mut prev = None;
    for c in &ds.cells {
        match (c.label, runs.last_mut()) {
            (Some(l), Some(r)) if prev == Some(l) => {
                r.2 = c.value1;
                r.3 += 1;
            }
            (Some(l), _) => runs.push((l.to_string(), c.value1, c.value1, 1)),
            (None, _) => {}
        }
        prev = c.label;
    }
    runs
}

fn staircase(cfg: &mut RunConfig, ctx: &Context) -> Result<()> {
    if cfg.engine.kind != Engine::MeanField {
        return Err(Error::Config("staircases run on the mean-field engine".into()));
    }
    let s = cfg.staircase.clone();
    let base = cfg.sweep_base(&[(SweepAxisName::Eta, s.eta_min)])?;
    let kappa = cfg.kappa.unwrap_or(1.0);
    let mut plan = SweepPlan::staircase(base, s.eta_min / kappa, s.eta_max / kappa, s.points);
    plan.horizon_periods = s.horizon_periods;
    plan.heatmap_bins = s.heatmap_bins;
    sweep_tolerances(cfg, &mut plan);
    plan.validate()?;
    println!("staircase: {} cells, {} CTC periods each", plan.cell_count(), plan.horizon_periods);
    let ds = run_plan(&plan, s.checkpoint.as_deref(), ctx.exec)?;
    let mut out = Outputs::new(&cfg.output.dir)?;
    ds.write(&out.dir, "staircase")?;
    out.record("staircase.csv");
    if plan.heatmap_bins > 0 {
        out.record("staircase_heatmap.csv");
    }
    out.record("staircase_manifest.json");
    let runs = plateaus(&ds);
    for (l, a, b, n) in runs.iter().filter(|r| r.3 >= 3) {
        println!("plateau n = {l}: eta in [{a:.5}, {b:.5}] ({n} points)");
    }
    let summary = json!({
        "plan_hash": ds.plan_hash,
        "plateaus": runs.iter().map(|(l, a, b, n)| json!({"label": l, "from": a, "to": b, "points": n})).collect::<Vec<_>>(),
    });
    out.manifest("staircase", cfg, ctx, json!({ "summary": summary }))
}

fn stability_map(cfg: &mut RunConfig, ctx: &Context) -> Result<()> {
    if cfg.engine.kind != Engine::MeanField {
        return Err(Error::Config("stability maps run on the mean-field engine".into()));
    }
    let m = cfg.map.clone();
    let base = cfg.sweep_base(&[(m.rows, m.rows_min), (m.cols, m.cols_min)])?;
    let kappa = cfg.kappa.unwrap_or(1.0);
    let mut plan = SweepPlan::map(
        base,
        scaled_axis(m.rows, m.rows_min, m.rows_max, m.rows_points, kappa),
        scaled_axis(m.cols, m.cols_min, m.cols_max, m.cols_points, kappa),
    );
    plan.horizon_periods = m.horizon_periods;
    sweep_tolerances(cfg, &mut plan);
    plan.validate()?;
    println!("stability map: {} x {} cells", m.rows_points, m.cols_points);
    let ds = run_plan(&plan, m.checkpoint.as_deref(), ctx.exec)?;
    let mut out = Outputs::new(&cfg.output.dir)?;
    ds.write(&out.dir, "stability_map")?;
    out.record("stability_map.csv");
    out.record("stability_map_manifest.json");
    let labelled = ds.cells.iter().filter(|c| c.label.is_some()).count();
    println!("{labelled} of {} cells locked", ds.cells.len());
    out.manifest(
        "stability-map",
        cfg,
        ctx,
        json!({ "summary": { "plan_hash": ds.plan_hash, "locked_cells": labelled } }),
    )
}

fn liouvillian(cfg: &mut RunConfig, ctx: &Context) -> Result<()> {
    let p = cfg.model()?;
    let memory = cfg.memory()?;
    let l = cfg.liouvillian.clone();
    if l.k == 0 {
        return Err(Error::Config("liouvillian.k must be at least 1".into()));
    }
    for &n in &l.n_list {
        if n == 0 {
            return Err(Error::EmptySystem);
        }
        memory.check(assembly_footprint(&p.with_n(n)))?;
    }
    let opts = ScalingOptions {
        spectrum: SpectrumOptions {
            strategy: l.strategy,
            per_shift: l.k,
            residual_tol: l.residual_tol,
            seed: ctx.seed,
            ..SpectrumOptions::default()
        },
        label_tol: l.label_tol,
        memory,
        reference_periods: l.reference_periods,
    };
    println!("liouvillian: N = {:?}", l.n_list);
    let report = finite_size_scaling(&p, &l.n_list, &opts)?;
    let mut out = Outputs::new(&cfg.output.dir)?;
    report.write_csv(out.create("scaling.csv")?)?;
    for set in &report.modes {
        set.write_csv(out.create(&format!("modes_N{}.csv", set.n_spins))?)?;
    }
    if l.dump_coo {
        for &n in &l.n_list {
            let m = assemble_liouvillian(&p.with_n(n), &memory)?;
            m.write_coo(out.create(&format!("liouvillian_N{n}.coo.csv"))?)?;
        }
    }
    out.json("scaling.json", &serde_json::to_value(&report)?)?;
    for r in &report.rows {
        let fmt = |v: Option<num_complex::Complex64>| v.map_or("-".into(), |c| format!("{:.5e}{:+.5}i", c.re, c.im));
        println!("N = {:>3}: ctc {}  dtc {}", r.n_spins, fmt(r.ctc), fmt(r.dtc));
    }
    cfg.kappa.get_or_insert(1.0);
    let summary = json!({
        "omega_ctc_mf": report.omega_ctc_mf,
        "omega_dtc_mf": report.omega_dtc_mf,
        "ctc_decay_fit": report.ctc_decay_fit,
        "dtc_decay_fit": report.dtc_decay_fit,
        "ctc_frequency_fit": report.ctc_frequency_fit,
        "dtc_frequency_fit": report.dtc_frequency_fit,
    });
    out.manifest("liouvillian", cfg, ctx, json!({ "summary": summary }))
}

fn validate_config(cfg: &mut RunConfig) -> Result<()> {
    if cfg.eta.is_some() {
        cfg.model()?;
    }
    let k = cfg.kappa.unwrap_or(1.0);
    let s = &cfg.staircase;
    let mut plan = SweepPlan::staircase(
        cfg.sweep_base(&[(SweepAxisName::Eta, s.eta_min)])?,
        s.eta_min / k,
        s.eta_max / k,
        s.points,
    );
    plan.horizon_periods = s.horizon_periods;
    plan.analysis = cfg.analysis.to_config();
    plan.validate()?;
    let m = &cfg.map;
    let mut map = SweepPlan::map(
        cfg.sweep_base(&[(m.rows, m.rows_min), (m.cols, m.cols_min)])?,
        scaled_axis(m.rows, m.rows_min, m.rows_max, m.rows_points, k),
        scaled_axis(m.cols, m.cols_min, m.cols_max, m.cols_points, k),
    );
    map.horizon_periods = m.horizon_periods;
    map.validate()?;
    let n_list = &cfg.liouvillian.n_list;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::Config("liouvillian.n_list must be positive and strictly ascending".into()));
    }
    print!("{}", cfg.to_toml());
    Ok(())
}

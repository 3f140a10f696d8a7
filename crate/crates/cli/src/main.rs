//! `htc`: command-line front end for the time-crystal simulator.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 resource limit (memory budget, I/O).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use htc_core::analysis::Window;
use htc_core::lindblad::Strategy;
use htc_core::model::SweepAxisName;
use htc_core::sweep::Engine;
use htc_core::{CouplingScheme, Error, ErrorCategory};

use config::RunConfig;

const CONFIG_HELP: &str = "\
CONFIG FILE (TOML; every key optional, flags override file values):
  scheme = \"coherent\" | \"dissipative\" | \"spin-exchange\"
  omega, kappa (1.0), j, h, eta, n_spins (20)
  initial_state = [mcx, mcy, mcz, mdx, mdy, mdz]   (both +z)
  [engine]      kind (\"meanfield\" | \"finite-n\"), periods (200), rel_tol (1e-9 / 1e-8),
                abs_tol (1e-11 / 1e-10), max_step, sample_dt (CTC period / 64),
                memory_gb (8), positivity_checks (5)
  [analysis]    transient_fraction (0.2), window (\"hann\"), q_max (12), p_max (40),
                tol (2e-4), amp_threshold (0.5)
  [staircase]   eta_min (0.05), eta_max (1.0), points (200), horizon_periods (1000),
                heatmap_bins (151), checkpoint
  [map]         rows (\"j\"), rows_min (0.05), rows_max (0.25), rows_points (120),
                cols (\"eta\"), cols_min (0.05), cols_max (1.0), cols_points (120),
                horizon_periods (1000), checkpoint
  [liouvillian] n_list ([4, 6, 8, 10]), k (16), strategy (\"auto\"), label_tol (0.15),
                residual_tol (1e-8), reference_periods (400), dump_coo (false)
  [output]      dir (\"out\"), formats ([\"csv\"]; also \"json\")

EXIT CODES: 0 ok, 2 configuration/usage, 3 numerical failure, 4 resource limit";

#[derive(Debug, Parser)]
#[command(name = "htc", version, about = "Coupled continuous/discrete time-crystal simulator", after_long_help = CONFIG_HELP)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for randomised start vectors of the iterative eigensolver.
    #[arg(long, global = true, default_value_t = 0x5eed)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one trajectory (mean field or finite N).
    Trajectory {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Frequency spectra and locking order of a trajectory.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Analyse an existing trajectory CSV instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Locking order against eta.
    Staircase {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        eta_min: Option<f64>,
        #[arg(long)]
        eta_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        horizon_periods: Option<f64>,
        #[arg(long)]
        heatmap_bins: Option<usize>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Two-parameter locking map.
    StabilityMap {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        rows: Option<SweepAxisName>,
        #[arg(long)]
        rows_min: Option<f64>,
        #[arg(long)]
        rows_max: Option<f64>,
        #[arg(long)]
        rows_points: Option<usize>,
        #[arg(long)]
        cols: Option<SweepAxisName>,
        #[arg(long)]
        cols_min: Option<f64>,
        #[arg(long)]
        cols_max: Option<f64>,
        #[arg(long)]
        cols_points: Option<usize>,
        #[arg(long)]
        horizon_periods: Option<f64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Liouvillian eigenmodes and finite-size scaling.
    Liouvillian {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated system sizes, ascending.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        label_tol: Option<f64>,
        #[arg(long)]
        memory_gb: Option<f64>,
        /// Also write every superoperator as a COO table.
        #[arg(long)]
        dump_coo: bool,
    },
    /// Merge file and flags, validate, print the effective configuration.
    ValidateConfig {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trajectory { .. } => "trajectory",
            Command::Spectrum { .. } => "spectrum",
            Command::Staircase { .. } => "staircase",
            Command::StabilityMap { .. } => "stability-map",
            Command::Liouvillian { .. } => "liouvillian",
            Command::ValidateConfig { .. } => "validate-config",
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    scheme: Option<CouplingScheme>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    n_spins: Option<usize>,
    /// Six comma-separated components `mcx,mcy,mcz,mdx,mdy,mdz`.
    #[arg(long, value_delimiter = ',', num_args = 6)]
    initial_state: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct EngineArgs {
    #[arg(long)]
    engine: Option<Engine>,
    /// Simulated time in CTC periods.
    #[arg(long)]
    periods: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    sample_dt: Option<f64>,
    #[arg(long)]
    memory_gb: Option<f64>,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    #[arg(long)]
    q_max: Option<u64>,
    #[arg(long)]
    p_max: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    amp_threshold: Option<f64>,
    #[arg(long)]
    transient_fraction: Option<f64>,
    #[arg(long)]
    window: Option<Window>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) -> Result<(), Error> {
        set_opt(&mut c.scheme, self.scheme);
        set_opt(&mut c.omega, self.omega);
        set_opt(&mut c.kappa, self.kappa);
        set_opt(&mut c.j, self.j);
        set_opt(&mut c.h, self.h);
        set_opt(&mut c.eta, self.eta);
        set_opt(&mut c.n_spins, self.n_spins);
        if let Some(v) = self.initial_state {
            let arr: [f64; 6] =
                v.try_into().map_err(|_| Error::Config("--initial-state takes six components".into()))?;
            c.initial_state = Some(arr);
        }
        Ok(())
    }
}

impl EngineArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.engine.kind, self.engine);
        set(&mut c.engine.periods, self.periods);
        set_opt(&mut c.engine.rel_tol, self.rel_tol);
        set_opt(&mut c.engine.abs_tol, self.abs_tol);
        set_opt(&mut c.engine.sample_dt, self.sample_dt);
        set(&mut c.engine.memory_gb, self.memory_gb);
    }
}

impl AnalysisArgs {
    fn apply(self, c: &mut RunConfig) {
        let a = &mut c.analysis;
        set(&mut a.q_max, self.q_max);
        set(&mut a.p_max, self.p_max);
        set(&mut a.tol, self.tol);
        set(&mut a.amp_threshold, self.amp_threshold);
        set(&mut a.transient_fraction, self.transient_fraction);
        set(&mut a.window, self.window);
    }
}

/// Folds the subcommand's flags into the file configuration.
fn merge(command: Command, c: &mut RunConfig) -> Result<commands::Job, Error> {
    Ok(match command {
        Command::Trajectory { model, engine } => {
            model.apply(c)?;
            engine.apply(c);
            commands::Job::Trajectory
        }
        Command::Spectrum { model, engine, analysis, input } => {
            model.apply(c)?;
            engine.apply(c);
            analysis.apply(c);
            commands::Job::Spectrum { input }
        }
        Command::Staircase { model, analysis, eta_min, eta_max, points, horizon_periods, heatmap_bins, checkpoint } => {
            model.apply(c)?;
            analysis.apply(c);
            let s = &mut c.staircase;
            set(&mut s.eta_min, eta_min);
            set(&mut s.eta_max, eta_max);
            set(&mut s.points, points);
            set(&mut s.horizon_periods, horizon_periods);
            set(&mut s.heatmap_bins, heatmap_bins);
            set_opt(&mut s.checkpoint, checkpoint);
            commands::Job::Staircase
        }
        Command::StabilityMap {
            model,
            analysis,
            rows,
            rows_min,
            rows_max,
            rows_points,
            cols,
            cols_min,
            cols_max,
            cols_points,
            horizon_periods,
            checkpoint,
        } => {
            model.apply(c)?;
            analysis.apply(c);
            let m = &mut c.map;
            set(&mut m.rows, rows);
            set(&mut m.rows_min, rows_min);
            set(&mut m.rows_max, rows_max);
            set(&mut m.rows_points, rows_points);
            set(&mut m.cols, cols);
            set(&mut m.cols_min, cols_min);
            set(&mut m.cols_max, cols_max);
            set(&mut m.cols_points, cols_points);
            set(&mut m.horizon_periods, horizon_periods);
            set_opt(&mut m.checkpoint, checkpoint);
            commands::Job::StabilityMap
        }
        Command::Liouvillian { model, n_list, k, strategy, label_tol, memory_gb, dump_coo } => {
            model.apply(c)?;
            let l = &mut c.liouvillian;
            set(&mut l.n_list, n_list);
            set(&mut l.k, k);
            if let Some(s) = strategy {
                l.strategy = parse_strategy(&s)?;
            }
            set(&mut l.label_tol, label_tol);
            l.dump_coo |= dump_coo;
            set(&mut c.engine.memory_gb, memory_gb);
            commands::Job::Liouvillian
        }
        Command::ValidateConfig { model, engine, analysis } => {
            model.apply(c)?;
            engine.apply(c);
            analysis.apply(c);
            commands::Job::ValidateConfig
        }
    })
}

fn parse_strategy(s: &str) -> Result<Strategy, Error> {
    match s.to_ascii_lowercase().as_str() {
        "auto" => Ok(Strategy::Auto),
        "dense" => Ok(Strategy::Dense),
        "shift-invert" | "iterative" => Ok(Strategy::ShiftInvert),
        other => Err(Error::Config(format!("unknown eigensolver strategy `{other}`"))),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Numeric => 3,
        ErrorCategory::Resource => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.category() == ErrorCategory::Config {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let loaded = config::load(cli.config.as_deref())?;
    let mut cfg = loaded.config.clone();
    let job = merge(cli.command, &mut cfg)?;
    set(&mut cfg.output.dir, cli.out_dir);
    let exec = match cli.workers {
        Some(0) => return Err(Error::Config("--workers must be at least 1".into())),
        Some(1) => htc_core::Execution::Sequential,
        Some(n) => {
            htc_core::exec::init_global_pool(n).map_err(Error::Config)?;
            htc_core::Execution::Parallel
        }
        None => htc_core::Execution::Parallel,
    };
    let ctx = commands::Context { loaded, exec, seed: cli.seed, workers: cli.workers };
    commands::run(job, cfg, &ctx)
}

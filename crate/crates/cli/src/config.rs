//! Run configuration: a TOML file with top-level model keys and dotted
//! sections, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use htc_core::analysis::{AnalysisConfig, Window};
use htc_core::lindblad::{MemoryBudget, Strategy};
use htc_core::model::SweepAxisName;
use htc_core::sweep::Engine;
use htc_core::{BlochPair, CouplingScheme, Error, ModelParameters, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: Option<CouplingScheme>,
    pub omega: Option<f64>,
    pub kappa: Option<f64>,
    pub j: Option<f64>,
    pub h: Option<f64>,
    pub eta: Option<f64>,
    pub n_spins: Option<usize>,
    /// `[mcx, mcy, mcz, mdx, mdy, mdz]`; both halves polarised along +z when absent.
    pub initial_state: Option<[f64; 6]>,
    pub engine: EngineSection,
    pub analysis: AnalysisSection,
    pub staircase: StaircaseSection,
    pub map: MapSection,
    pub liouvillian: LiouvillianSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub kind: Engine,
    /// Simulated time in decoupled CTC periods.
    pub periods: f64,
    /// Defaults to 1e-9 (mean field) or 1e-8 (finite N) when absent.
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub max_step: Option<f64>,
    /// Defaults to one 64th of the decoupled CTC period.
    pub sample_dt: Option<f64>,
    pub memory_gb: f64,
    pub positivity_checks: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            kind: Engine::MeanField,
            periods: 200.0,
            rel_tol: None,
            abs_tol: None,
            max_step: None,
            sample_dt: None,
            memory_gb: 8.0,
            positivity_checks: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub transient_fraction: f64,
    pub window: Window,
    pub q_max: u64,
    pub p_max: u64,
    pub tol: f64,
    pub amp_threshold: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let a = AnalysisConfig::default();
        AnalysisSection {
            transient_fraction: a.transient_fraction,
            window: a.window,
            q_max: a.q_max,
            p_max: a.p_max,
            tol: a.tol,
            amp_threshold: a.amp_threshold,
        }
    }
}

impl AnalysisSection {
    pub fn to_config(&self) -> AnalysisConfig {
        AnalysisConfig {
            transient_fraction: self.transient_fraction,
            window: self.window,
            q_max: self.q_max,
            p_max: self.p_max,
            tol: self.tol,
            amp_threshold: self.amp_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseSection {
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
    pub horizon_periods: f64,
    pub heatmap_bins: usize,
    /// Resumable JSON-lines checkpoint.
    pub checkpoint: Option<PathBuf>,
}

impl Default for StaircaseSection {
    fn default() -> Self {
        StaircaseSection {
            eta_min: 0.05,
            eta_max: 1.0,
            points: 200,
            horizon_periods: 1000.0,
            heatmap_bins: 151,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapSection {
    pub rows: SweepAxisName,
    pub rows_min: f64,
    pub rows_max: f64,
    pub rows_points: usize,
    pub cols: SweepAxisName,
    pub cols_min: f64,
    pub cols_max: f64,
    pub cols_points: usize,
    pub horizon_periods: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            rows: SweepAxisName::J,
            rows_min: 0.05,
            rows_max: 0.25,
            rows_points: 120,
            cols: SweepAxisName::Eta,
            cols_min: 0.05,
            cols_max: 1.0,
            cols_points: 120,
            horizon_periods: 1000.0,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvillianSection {
    pub n_list: Vec<usize>,
    /// Eigenvalues written per system size.
    pub k: usize,
    pub strategy: Strategy,
    pub label_tol: f64,
    pub residual_tol: f64,
    pub reference_periods: f64,
    pub dump_coo: bool,
}

impl Default for LiouvillianSection {
    fn default() -> Self {
        LiouvillianSection {
            n_list: vec![4, 6, 8, 10],
            k: 16,
            strategy: Strategy::Auto,
            label_tol: 0.15,
            residual_tol: 1e-8,
            reference_periods: 400.0,
            dump_coo: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Any of `csv`, `json`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), formats: vec!["csv".into()] }
    }
}

impl OutputSection {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f.eq_ignore_ascii_case(format))
    }
}

/// File contents plus their digest, kept for the manifest.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    pub source_sha256: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("config: {}", e.message())))
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig> {
    let Some(path) = path else {
        return Ok(LoadedConfig { config: RunConfig::default(), source: None, source_sha256: None });
    };
    let bytes =
        std::fs::read(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::Config("config is not UTF-8".into()))?;
    Ok(LoadedConfig {
        config: parse_config(text)?,
        source: Some(path.to_path_buf()),
        source_sha256: Some(sha256_hex(&bytes)),
    })
}

fn require<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| {
        Error::Config(format!("missing required parameter `{key}` (set it in --config or pass --{key})"))
    })
}

impl RunConfig {
    /// Model parameters with `eta` taken from the config.
    pub fn model(&self) -> Result<ModelParameters> {
        let eta = require(self.eta, "eta")?;
        self.model_with_eta(eta)
    }

    /// Model parameters for sweeps, where `eta` comes from the axis.
    pub fn model_with_eta(&self, eta: f64) -> Result<ModelParameters> {
        let p = ModelParameters {
            omega: require(self.omega, "omega")?,
            kappa: self.kappa.unwrap_or(1.0),
            j_coupling: require(self.j, "j")?,
            h_drive: require(self.h, "h")?,
            eta,
            n_spins: self.n_spins.unwrap_or(20),
            scheme: require(self.scheme, "scheme")?,
        };
        Ok(p.validate()?.in_kappa_units())
    }

    /// Base model for a sweep: parameters swept by `axes` need not be set and
    /// fall back to the axis start value.
    pub fn sweep_base(&self, axes: &[(SweepAxisName, f64)]) -> Result<ModelParameters> {
        let mut c = self.clone();
        for &(name, start) in axes {
            let slot = match name {
                SweepAxisName::Eta => &mut c.eta,
                SweepAxisName::J => &mut c.j,
                SweepAxisName::H => &mut c.h,
                SweepAxisName::Omega => &mut c.omega,
            };
            slot.get_or_insert(start);
        }
        let eta = c.eta.unwrap_or(0.0);
        c.model_with_eta(eta)
    }

    pub fn initial_state(&self) -> BlochPair {
        self.initial_state.map_or_else(htc_core::default_initial_state, BlochPair::from_array)
    }

    pub fn memory(&self) -> Result<MemoryBudget> {
        let gb = self.engine.memory_gb;
        if !(gb > 0.0 && gb.is_finite()) {
            return Err(Error::Config(format!("engine.memory_gb must be positive (got {gb})")));
        }
        Ok(MemoryBudget { bytes: (gb * (1u64 << 30) as f64) as u64 })
    }

    pub fn validate_common(&self) -> Result<()> {
        self.analysis.to_config().validate()?;
        if !(self.engine.periods > 0.0 && self.engine.periods.is_finite()) {
            return Err(Error::Config("engine.periods must be positive".into()));
        }
        for f in &self.output.formats {
            if !matches!(f.to_ascii_lowercase().as_str(), "csv" | "json") {
                return Err(Error::Config(format!("unknown output format `{f}`")));
            }
        }
        if let Some(s) = self.initial_state {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("initial_state must be finite".into()));
            }
        }
        self.memory().map(|_| ())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }
}

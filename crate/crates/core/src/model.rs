//! Parameter and state types shared by every engine.
//!
//! All rates are measured in units of the collective decay rate `kappa`.
//! Configuration files give ratios `X/kappa` with `kappa = 1`; a config that
//! sets `kappa` explicitly is rescaled once by [`ModelParameters::in_kappa_units`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the continuous (C) and discrete (D) subsystems talk to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingScheme {
    /// `H_int = (2 eta / N) S_C^y S_D^x`, the simplified YX form.
    #[serde(rename = "coherent", alias = "coherent-yx", alias = "yx")]
    CoherentYX,
    /// Extra collective jump `S_C^- + S_D^-` at rate `2 eta / N`.
    Dissipative,
    /// `H_int = (2 eta / N)(S_C^+ S_D^- + S_C^- S_D^+)`.
    #[serde(alias = "exchange")]
    SpinExchange,
}

impl CouplingScheme {
    pub const ALL: [CouplingScheme; 3] =
        [CouplingScheme::CoherentYX, CouplingScheme::Dissipative, CouplingScheme::SpinExchange];

    pub fn as_str(self) -> &'static str {
        match self {
            CouplingScheme::CoherentYX => "coherent",
            CouplingScheme::Dissipative => "dissipative",
            CouplingScheme::SpinExchange => "spin-exchange",
        }
    }
}

impl std::str::FromStr for CouplingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coherent" | "coherent-yx" | "yx" => Ok(CouplingScheme::CoherentYX),
            "dissipative" => Ok(CouplingScheme::Dissipative),
            "spin-exchange" | "exchange" | "spinexchange" => Ok(CouplingScheme::SpinExchange),
            other => Err(Error::Config(format!("unknown coupling scheme `{other}`"))),
        }
    }
}

impl std::fmt::Display for CouplingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical rates, subsystem size and coupling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// CTC drive strength.
    pub omega: f64,
    /// Collective decay rate of the CTC.
    #[serde(default = "one")]
    pub kappa: f64,
    /// DTC all-to-all interaction strength.
    #[serde(rename = "j")]
    pub j_coupling: f64,
    /// DTC static drive.
    #[serde(rename = "h")]
    pub h_drive: f64,
    /// Inter-subsystem coupling strength.
    pub eta: f64,
    /// Spins per subsystem (both subsystems have the same size).
    #[serde(default = "default_n")]
    pub n_spins: usize,
    pub scheme: CouplingScheme,
}

fn one() -> f64 {
    1.0
}

fn default_n() -> usize {
    20
}

impl ModelParameters {
    pub fn new(scheme: CouplingScheme, omega: f64, j: f64, h: f64, eta: f64) -> Self {
        ModelParameters { omega, kappa: 1.0, j_coupling: j, h_drive: h, eta, n_spins: default_n(), scheme }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n_spins = n;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    /// Coherent-coupling base point used for the integer staircase
    /// (`Omega = 2, J = 0.1, h = 0.25`).
    pub fn coherent_reference(eta: f64) -> Self {
        Self::new(CouplingScheme::CoherentYX, 2.0, 0.1, 0.25, eta)
    }

    /// Dissipative-coupling base point (`Omega = 2, J = 0.08, h = 0.2522`).
    pub fn dissipative_reference(eta: f64) -> Self {
        Self::new(CouplingScheme::Dissipative, 2.0, 0.08, 0.2522, eta)
    }

    /// Spin-exchange base point (`Omega = 2, J = 0.1157, h = 0.115`).
    pub fn spin_exchange_reference(eta: f64) -> Self {
        Self::new(CouplingScheme::SpinExchange, 2.0, 0.1157, 0.115, eta)
    }

    /// Checks every invariant and hands the parameters back unchanged.
    pub fn validate(self) -> Result<Self> {
        let fields = [
            ("omega", self.omega),
            ("kappa", self.kappa),
            ("j", self.j_coupling),
            ("h", self.h_drive),
            ("eta", self.eta),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
        }
        if self.kappa <= 0.0 {
            return Err(Error::NonPositiveKappa(self.kappa));
        }
        if self.n_spins < 1 {
            return Err(Error::EmptySystem);
        }
        Ok(self)
    }

    /// Returns the same model with every rate divided by `kappa`, so that
    /// `kappa == 1` afterwards.
    pub fn in_kappa_units(self) -> Self {
        let k = self.kappa;
        ModelParameters {
            omega: self.omega / k,
            kappa: 1.0,
            j_coupling: self.j_coupling / k,
            h_drive: self.h_drive / k,
            eta: self.eta / k,
            ..self
        }
    }

    pub(crate) fn set_axis(&mut self, axis: SweepAxisName, value: f64) {
        match axis {
            SweepAxisName::Eta => self.eta = value,
            SweepAxisName::J => self.j_coupling = value,
            SweepAxisName::H => self.h_drive = value,
            SweepAxisName::Omega => self.omega = value,
        }
    }
}

/// Parameters that a sweep axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxisName {
    Eta,
    J,
    H,
    Omega,
}

impl std::str::FromStr for SweepAxisName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepAxisName::Eta),
            "j" => Ok(SweepAxisName::J),
            "h" => Ok(SweepAxisName::H),
            "omega" => Ok(SweepAxisName::Omega),
            other => Err(Error::Config(format!("cannot sweep over `{other}`"))),
        }
    }
}

impl std::fmt::Display for SweepAxisName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxisName::Eta => "eta",
            SweepAxisName::J => "j",
            SweepAxisName::H => "h",
            SweepAxisName::Omega => "omega",
        })
    }
}

/// Rescaled magnetisations `m = 2<S>/N` of both subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochPair {
    pub m_c: [f64; 3],
    pub m_d: [f64; 3],
}

impl BlochPair {
    pub fn new(m_c: [f64; 3], m_d: [f64; 3]) -> Self {
        BlochPair { m_c, m_d }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        BlochPair { m_c: [a[0], a[1], a[2]], m_d: [a[3], a[4], a[5]] }
    }

    pub fn to_array(self) -> [f64; 6] {
        let [cx, cy, cz] = self.m_c;
        let [dx, dy, dz] = self.m_d;
        [cx, cy, cz, dx, dy, dz]
    }

    pub fn norm_c(&self) -> f64 {
        norm3(&self.m_c)
    }

    pub fn norm_d(&self) -> f64 {
        norm3(&self.m_d)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Both spins fully polarised along +z.
pub fn default_initial_state() -> BlochPair {
    BlochPair::new([0.0, 0.0, 1.0], [0.0, 0.0, 1.0])
}

/// Uniformly sampled time series of the six magnetisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub samples: Vec<BlochPair>,
    pub meta: ModelParameters,
}

/// Component selector for trajectory columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Cx,
    Cy,
    Cz,
    Dx,
    Dy,
    Dz,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sampling interval; assumes uniform sampling.
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    pub fn series(&self, which: Observable) -> Vec<f64> {
        let idx = which as usize;
        self.samples.iter().map(|s| s.to_array()[idx]).collect()
    }

    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let dt = self.dt();
        self.times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt)
    }
}

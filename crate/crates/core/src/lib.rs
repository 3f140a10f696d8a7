//! Simulation and analysis of hierarchical time crystals: a boundary time
//! crystal (CTC) coupled to a Lipkin–Meshkov–Glick-type discrete time crystal
//! (DTC), in the mean-field limit and at finite N in the Dicke subspace.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exec;
pub mod io;
pub mod lindblad;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod sweep;

pub use error::{Error, ErrorCategory, Result};
pub use exec::Execution;
pub use model::{default_initial_state, BlochPair, CouplingScheme, ModelParameters, Observable, Trajectory};

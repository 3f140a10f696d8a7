//! Exact finite-N dynamics in the symmetric Dicke subspace of both subsystems.

mod eigen;
mod liouvillian;
mod master;
mod operators;
mod scaling;
pub mod sparse;

pub use eigen::{
    classify_modes, full_spectrum, label_spectrum, spectrum, EigenmodeSet, ModeLabel, SpectrumOptions, Strategy,
    STEADY_TOL,
};
pub use liouvillian::{assemble_liouvillian, assembly_footprint, devectorize, vectorize, LiouvillianMatrix};
pub use master::{
    apply_lindbladian, evolution_footprint, evolve_density_matrix, DensityMatrix, FiniteNRun, Lindbladian,
    MasterConfig, Workspace,
};
pub use operators::{
    build_hamiltonian, build_spin_operators, jump_operators, DickeOperators, JumpOperator, MemoryBudget,
    ProductOperators,
};
pub use scaling::{
    finite_size_scaling, fit_line, labelled_modes, mean_field_frequencies, LineFit, ScalingOptions, ScalingReport,
    ScalingRow,
};

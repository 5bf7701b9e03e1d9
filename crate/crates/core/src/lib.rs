//! Dissipativity analysis and simulation of non-equilibrium radiation
//! hydrodynamics.
//!
//! The crate assembles the linearized matrix families of the system at an
//! equilibrium state, decides genuine coupling, builds compensating
//! matrices, studies the Fourier symbol of the linear problem and evolves
//! the nonlinear 1D system with an IMEX splitting scheme.

// `!(x > 0.0)` is used on purpose: NaN must fail these checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod eos;
pub mod error;
pub mod kawashima;
pub mod linalg;
pub mod linearize;
pub mod harness;
pub mod optimize;
pub mod solver1d;
pub mod spectrum;

pub use eos::{check_weyl_hypotheses, Closure, EosModel, IdealGas, ThermoPoint, WeylReport};
pub use error::{Error, Result};
pub use linearize::{
    assemble_primitive, entropy_frame, entropy_gradient, entropy_value, symmetrize, z_transform, DissipativeSystem,
    EntropyFrame, EquilibriumState, MatrixBundle, ZState,
};
pub use kawashima::{
    compensating_matrix, genuine_coupling, multi_d_witness, CompensatingMatrix, CouplingVerdict, SearchConfig, Witness,
};
pub use spectrum::{
    fit_semigroup_bound, linear_evolve, semigroup_action, spectral_curve, symbol, LinearEvolver, SemigroupFit, SpectralCurve,
    SymbolEvaluation,
};
pub use solver1d::{
    diagnostics, diffusion_relaxation_step, hyperbolic_step, init_perturbation, run, Diagnostics, Perturbation,
    SimConfig, Simulation, StateField1D,
};
pub use harness::{
    consistency_experiment, coupling_sweep, default_suite, fit_decay, full_report, linear_decay_experiment,
    nonlinear_decay_experiment, random_weyl_states, spectrum_scan, DecayReport, Experiment, ExperimentConfig, Report,
};

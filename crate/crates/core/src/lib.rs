//! Mild solutions of linear retarded functional differential equations
//!
//! ```text
//! x'(t) = L x_t + g(t),   L ψ = ∫_{-r}^0 dη(θ) ψ(θ),
//! ```
//!
//! with initial histories in `M¹([-r, 0], ℝⁿ)` that may jump at `θ = 0`,
//! the principal fundamental matrix solution, variation-of-constants
//! formulas, exponential stability fits and decay certificates for
//! nonlinear perturbations.
//!
//! Everything lives on one uniform grid ([`GridSpec`]): delays must sit on
//! grid nodes, all time integrals are composite trapezoid rules, and
//! functions that jump at a node keep both one-sided values ([`GridFn`]).

pub mod convolution;
pub mod error;
pub mod fundamental;
pub mod grid;
pub mod history;
pub mod kernel;
pub mod nonlinear;
pub mod solver;
pub mod stability;
pub mod value;
pub mod voc;

pub use error::{Result, RetardaError};
pub use fundamental::{expm_oracle, fundamental_derivative, principal_fundamental, pure_delay_series};
pub use grid::{GridFn, GridSpec};
pub use history::{History, MatrixTrajectory, Trajectory};
pub use kernel::{ReversedKernel, StieltjesKernel};
pub use nonlinear::{PerturbationSpec, SimulationReport, StabilityCertificate};
pub use stability::{DecayFit, MarginReport, MarginStatus};
pub use solver::{solve_forced_g, solve_forced_integrated, solve_homogeneous, InitialGuess, SolverConfig};
pub use value::{Matrix, Vector};

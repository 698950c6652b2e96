//! Steepest-entropy-ascent dynamics of finite-dimensional density matrices.
//!
//! `drho/dt = -i[H(t), rho] - gamma (rho ln rho - mu rho + nu {rho, H})`, with
//! `mu` and `nu` fixed so that the trace and the mean energy are conserved.
//! Units have `hbar = 1`; logarithms are natural.

pub mod algebra;
pub mod dissipator;
pub mod error;
pub mod evolution;
pub mod models;
pub mod scenario;
pub mod thermo;
pub mod verify;

pub use algebra::{CMatrix, DensityMatrix, EigenSystem, HermitianOperator};
pub use dissipator::{dissipator, generator_via_gram, master_rhs, sea_coefficients, GeneratorOutput, SeaCoefficients};
pub use error::{Result, SeaError};
pub use evolution::{evolve, evolve_unitary, evolve_with, IntegratorConfig, Method, MonitorReport, TrajectoryRecord};
pub use models::HamiltonianModel;
pub use scenario::{parse_config, run_scenario, run_sweep, PresetId, ScenarioConfig};
pub use thermo::{canonical_state, effective_beta, observables, restricted_canonical, CanonicalState, ObservableRow};

//! Sparse feedback control of first-order consensus dynamics.
//!
//! The crate integrates three representations of the same controlled
//! interaction model and checks their Lyapunov decay:
//!
//! * [`micro`]: `N` agents, forward Euler, mean-state feedback `u = k(x̄ − c)`
//!   through an actuation vector `b`;
//! * [`meanfield`]: a weighted particle ensemble with subsampled (MFMC)
//!   interaction estimates;
//! * [`leader_follower`]: weighted followers and controlled leaders, either
//!   fully microscopic or with mean-field followers.
//!
//! [`spectral`] covers the linearization at consensus, [`lyapunov`] the
//! functionals and decay certificates, and [`harness`] the config-driven
//! scenario runner behind the `sparse-consensus` binary.

pub mod error;
pub mod harness;
pub mod kernels;
pub mod leader_follower;
pub mod lyapunov;
pub mod meanfield;
pub mod micro;
pub mod observe;
pub mod seeding;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use leader_follower::{HybridState, LfState, PopulationSplit};
pub use lyapunov::{DecayCertificate, LyapunovKind, LyapunovSeries};
pub use meanfield::{MfmcConfig, ParticleEnsemble};
pub use micro::{AgentState, ControlConfig};
pub use spectral::SpectralReport;

//! Open-quantum-system simulation with correlated system–environment
//! initial states.
//!
//! The crate covers density matrices and their decompositions, the Kraus,
//! Choi and superoperator forms of a channel, quantum discord, linear and
//! maximum-likelihood process tomography, the effect of different input
//! preparation procedures on the reconstructed process, Poissonian counting
//! noise, and a wave-plate model of a photonic CNOT experiment.
//!
//! Conventions used throughout:
//! * matrices are row-major and vectorization stacks columns;
//! * a Choi matrix is `Λ = Σ_ij E_ij ⊗ E(E_ij)` with the input factor first;
//! * in joint system–environment states the system is the first factor.

pub mod channels;
pub mod config;
pub mod correlations;
pub mod error;
pub mod matrix;
pub mod noise;
pub mod optics;
pub mod optimize;
pub mod preparation;
pub mod random;
pub mod states;
pub mod tomography;

pub use channels::{KrausSet, ProcessMatrix, Superoperator};
pub use config::Tolerances;
pub use error::{Error, Result};
pub use matrix::{CMatrix, Subsystem, C64};
pub use states::{BlochVector, DensityMatrix, Polarization};
pub use tomography::{CountRecord, DualBasis, TomographicBasis};

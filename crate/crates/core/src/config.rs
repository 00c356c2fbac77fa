//! Numerical tolerances shared across the crate.

use serde::{Deserialize, Serialize};

/// Tolerance defaults. Every check that takes a tolerance argument falls back
/// to these when the caller has no reason to pick its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max entrywise deviation of `m - m†` accepted as Hermitian.
    pub hermiticity: f64,
    /// Eigenvalues in `[-psd_clamp, 0)` are treated as zero.
    pub psd_clamp: f64,
    /// Default entrywise equality tolerance.
    pub equality: f64,
    /// Choi eigenvalue floor for complete positivity.
    pub cp: f64,
    /// Success probability below which a measurement preparation fails.
    pub preparation_floor: f64,
    /// Eigenvalue clamp applied before taking entropies.
    pub entropy_clamp: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        hermiticity: 1e-9,
        psd_clamp: 1e-10,
        equality: 1e-9,
        cp: 1e-9,
        preparation_floor: 1e-10,
        entropy_clamp: 1e-7,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

//! Fixtures shared by the criterion benchmarks.

use ncptomo::random::{self, SimRng};
use ncptomo::{DensityMatrix, ProcessMatrix};

pub fn rng() -> SimRng {
    random::rng(0x5eed)
}

/// A fixed batch of random two-qubit states.
pub fn two_qubit_states(n: usize) -> Vec<DensityMatrix> {
    let mut g = rng();
    (0..n).map(|_| random::random_state(&mut g, 4)).collect()
}

/// A random qubit channel in Choi form.
pub fn qubit_channel() -> ProcessMatrix {
    random::random_channel(&mut rng(), 2, 3).to_process()
}

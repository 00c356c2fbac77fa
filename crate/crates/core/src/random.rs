//! Seeded random states, unitaries and channels for tests and Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channels::KrausSet;
use crate::matrix::{c, inner, normalize, CMatrix, C64};
use crate::states::DensityMatrix;

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_c64<R: Rng + ?Sized>(r: &mut R) -> C64 {
    c(r.sample(StandardNormal), r.sample(StandardNormal))
}

/// Matrix of i.i.d. standard complex Gaussian entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(r: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| gaussian_c64(r))
}

/// Haar-distributed pure state vector.
pub fn random_ket<R: Rng + ?Sized>(r: &mut R, d: usize) -> Vec<C64> {
    let mut v: Vec<C64> = (0..d).map(|_| gaussian_c64(r)).collect();
    normalize(&mut v);
    v
}

pub fn random_pure_state<R: Rng + ?Sized>(r: &mut R, d: usize) -> DensityMatrix {
    DensityMatrix::from_ket(&random_ket(r, d))
}

/// Mixture of `components` Haar pure states with uniformly drawn weights.
pub fn random_mixed_state<R: Rng + ?Sized>(r: &mut R, d: usize, components: usize) -> DensityMatrix {
    let weights: Vec<f64> = (0..components).map(|_| r.random::<f64>() + 1e-3).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = CMatrix::zeros(d, d);
    for w in weights {
        let ket = random_ket(r, d);
        acc += &CMatrix::outer(&ket).scale_real(w / total);
    }
    DensityMatrix::new(acc).expect("square by construction")
}

/// Mixed state with a random number (2 to 4) of pure components.
pub fn random_state<R: Rng + ?Sized>(r: &mut R, d: usize) -> DensityMatrix {
    let k = r.random_range(2..=4);
    random_mixed_state(r, d, k)
}

/// Gram–Schmidt on the columns of a Gaussian matrix. The phase convention
/// of modified Gram–Schmidt already yields the Haar measure.
pub fn random_unitary<R: Rng + ?Sized>(r: &mut R, d: usize) -> CMatrix {
    let g = gaussian_matrix(r, d, d);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v = g.column_vec(j);
        for u in &cols {
            let p = inner(u, &v);
            for (x, y) in v.iter_mut().zip(u) {
                *x -= p * y;
            }
        }
        normalize(&mut v);
        cols.push(v);
    }
    CMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Trace-preserving Kraus set with `n` operators, cut from the first `d`
/// columns of a random `(n·d)`-dimensional unitary.
pub fn random_channel<R: Rng + ?Sized>(r: &mut R, d: usize, n: usize) -> KrausSet {
    let u = random_unitary(r, n * d);
    let ops = (0..n)
        .map(|k| CMatrix::from_fn(d, d, |i, j| u[(k * d + i, j)]))
        .collect();
    KrausSet::new(ops).expect("uniform shapes")
}

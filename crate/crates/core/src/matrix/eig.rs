//! Hermitian eigendecomposition by cyclic complex Jacobi rotations, plus the
//! spectral functions built on it.

use super::{c, CMatrix, C64, ZERO};
use crate::config::Tolerances;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_RTOL: f64 = 1e-14;

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone)]
pub struct HermEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermEig {
    /// `V f(Λ) V†` for a real spectral function.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        CMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .filter(|&k| fv[k] != 0.0)
                .map(|k| v[(i, k)] * v[(j, k)].conj() * fv[k])
                .sum()
        })
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map(|l| l)
    }

    pub fn min(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Eigenvector `k` as a plain vector.
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column_vec(k)
    }
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let err = m.hermiticity_error();
    if err > Tolerances::DEFAULT.hermiticity * m.max_abs().max(1.0) {
        return Err(Error::NotHermitian(err));
    }
    Ok(())
}

pub fn herm_eig(m: &CMatrix) -> Result<HermEig> {
    check_hermitian(m)?;
    Ok(jacobi(m.hermitian_part()))
}

/// Eigenvalues only, descending. Single qubits take a closed form.
pub fn herm_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    check_hermitian(m)?;
    if m.rows() == 2 {
        let a = m[(0, 0)].re;
        let d = m[(1, 1)].re;
        let b = (m[(0, 1)] + m[(1, 0)].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        return Ok(vec![mean + r, mean - r]);
    }
    Ok(jacobi(m.hermitian_part()).values)
}

fn jacobi(mut a: CMatrix) -> HermEig {
    let n = a.rows();
    let mut v = CMatrix::identity(n);
    let scale = a.max_abs();
    let threshold = OFF_DIAGONAL_RTOL * scale;

    for _ in 0..MAX_SWEEPS {
        let off = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[(p, q)].norm())
            .fold(0.0, f64::max);
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let g = apq.norm();
                if g <= threshold * 1e-3 || g == 0.0 {
                    continue;
                }
                let e = apq / g;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * g);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                rotate(&mut a, &mut v, p, q, cs, sn, e);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    HermEig { values, vectors }
}

/// Applies `A ← W†AW`, `V ← VW` for the rotation acting on indices `p, q`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize, cs: f64, sn: f64, e: C64) {
    let n = a.rows();
    let eb = e.conj();
    for m in [&mut *a, &mut *v] {
        for r in 0..n {
            let xp = m[(r, p)];
            let xq = m[(r, q)];
            m[(r, p)] = xp * cs - xq * eb * sn;
            m[(r, q)] = xp * sn + xq * eb * cs;
        }
    }
    for col in 0..n {
        let xp = a[(p, col)];
        let xq = a[(q, col)];
        a[(p, col)] = xp * cs - xq * e * sn;
        a[(q, col)] = xp * sn + xq * e * cs;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = c(a[(p, p)].re, 0.0);
    a[(q, q)] = c(a[(q, q)].re, 0.0);
}

/// Principal square root of a PSD matrix. Eigenvalues down to `−1e-10` are
/// clamped to zero.
pub fn matrix_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    let floor = Tolerances::DEFAULT.psd_clamp;
    if eig.min() < -floor {
        return Err(Error::NegativeEigenvalue(eig.min()));
    }
    Ok(eig.map(|l| l.max(0.0).sqrt()))
}

/// Moore–Penrose inverse of a Hermitian matrix: eigenvalues with
/// `|λ| ≤ tol` are dropped.
pub fn pseudo_inverse(m: &CMatrix, tol: f64) -> Result<CMatrix> {
    let eig = herm_eig(m)?;
    Ok(eig.map(|l| if l.abs() > tol { 1.0 / l } else { 0.0 }))
}

//! Density matrices, Bloch and Fano coordinates, Schmidt decomposition.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::matrix::{c, herm_eig, herm_eigenvalues, kron_vec, pauli, vec_norm, CMatrix, Subsystem, C64, I, ONE, ZERO};

/// A `d×d` matrix meant to be a quantum state.
///
/// Construction only checks that the matrix is square. Physical validity is
/// a separate question answered by [`DensityMatrix::validate`], because
/// noisy reconstructions routinely produce matrices that fail it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrix", into = "CMatrix")]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl TryFrom<CMatrix> for DensityMatrix {
    type Error = Error;
    fn try_from(m: CMatrix) -> Result<Self> {
        DensityMatrix::new(m)
    }
}

impl From<DensityMatrix> for CMatrix {
    fn from(r: DensityMatrix) -> CMatrix {
        r.mat
    }
}

/// Outcome of the three physicality checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub valid: bool,
    pub min_eigenvalue: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
}

impl DensityMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        if !mat.is_square() || mat.rows() == 0 {
            return Err(Error::dim(format!(
                "density matrix must be square, got {}x{}",
                mat.rows(),
                mat.cols()
            )));
        }
        Ok(DensityMatrix { mat })
    }

    /// `|ψ⟩⟨ψ|`. The vector is used as given; normalize first if needed.
    pub fn from_ket(psi: &[C64]) -> Self {
        DensityMatrix {
            mat: CMatrix::outer(psi),
        }
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix {
            mat: CMatrix::identity(d).scale_real(1.0 / d as f64),
        }
    }

    #[inline]
    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ_ij |ρ_ij|² for Hermitian ρ
        (&self.mat * &self.mat).trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        herm_eigenvalues(&self.mat)
    }

    pub fn validate(&self, tol: f64) -> Validity {
        let hermiticity_error = self.mat.hermiticity_error();
        let trace_error = (self.mat.trace() - ONE).norm();
        let min_eigenvalue = herm_eigenvalues(&self.mat.hermitian_part())
            .map(|v| v.last().copied().unwrap_or(0.0))
            .unwrap_or(f64::NAN);
        Validity {
            valid: hermiticity_error <= tol && trace_error <= tol && min_eigenvalue >= -tol,
            min_eigenvalue,
            trace_error,
            hermiticity_error,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate(Tolerances::DEFAULT.hermiticity).valid
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            mat: self.mat.tensor(&other.mat),
        }
    }

    /// Reduced state of a bipartite state with factor dimensions `dims`.
    pub fn reduce(&self, dims: (usize, usize), keep: Subsystem) -> Result<DensityMatrix> {
        Ok(DensityMatrix {
            mat: self.mat.partial_trace(dims, keep)?,
        })
    }

    /// Reduced state of a two-qubit (or `d×d`) state with equal factors.
    pub fn reduce_square(&self, keep: Subsystem) -> Result<DensityMatrix> {
        let d =
            integer_sqrt(self.dim()).ok_or_else(|| Error::dim(format!("dimension {} is not a square", self.dim())))?;
        self.reduce((d, d), keep)
    }

    /// Fidelity `⟨ψ|ρ|ψ⟩` with a pure state.
    pub fn overlap_with_ket(&self, psi: &[C64]) -> f64 {
        let v = self.mat.apply(psi);
        crate::matrix::inner(psi, &v).re
    }

    /// Convex combination `Σ w_k ρ_k`.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<DensityMatrix> {
        let d = parts
            .first()
            .map(|(_, r)| r.dim())
            .ok_or_else(|| Error::InvalidParameter("empty mixture".into()))?;
        let mut acc = CMatrix::zeros(d, d);
        for (w, r) in parts {
            if r.dim() != d {
                return Err(Error::dim("mixture components differ in dimension"));
            }
            acc += &r.mat.scale_real(*w);
        }
        DensityMatrix::new(acc)
    }
}

pub(crate) fn integer_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

/// Polarization labels used for the standard qubit states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    pub fn ket(self) -> Vec<C64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Polarization::H => vec![ONE, ZERO],
            Polarization::V => vec![ZERO, ONE],
            Polarization::D => vec![c(h, 0.0), c(h, 0.0)],
            Polarization::A => vec![c(h, 0.0), c(-h, 0.0)],
            Polarization::R => vec![c(h, 0.0), c(0.0, h)],
            Polarization::L => vec![c(h, 0.0), c(0.0, -h)],
        }
    }

    pub fn state(self) -> DensityMatrix {
        DensityMatrix::from_ket(&self.ket())
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
            Polarization::D => "D",
            Polarization::A => "A",
            Polarization::R => "R",
            Polarization::L => "L",
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "H" | "h" | "0" => Polarization::H,
            "V" | "v" | "1" => Polarization::V,
            "D" | "d" | "+" => Polarization::D,
            "A" | "a" | "-" => Polarization::A,
            "R" | "r" | "+i" => Polarization::R,
            "L" | "l" | "-i" => Polarization::L,
            other => return Err(Error::Parse(format!("unknown state name `{other}`"))),
        })
    }
}

/// `|Φ⁺⟩ = (|00⟩ + |11⟩)/√2`.
pub fn phi_plus_ket() -> Vec<C64> {
    let h = c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    vec![h, ZERO, ZERO, h]
}

pub fn phi_plus() -> DensityMatrix {
    DensityMatrix::from_ket(&phi_plus_ket())
}

/// Real 3-vector of Pauli expectation values.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl BlochVector {
    pub const fn new(a1: f64, a2: f64, a3: f64) -> Self {
        BlochVector { a1, a2, a3 }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        BlochVector::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.a1, self.a2, self.a3]
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(self) -> f64 {
        self.a1 * self.a1 + self.a2 * self.a2 + self.a3 * self.a3
    }

    pub fn is_physical(self) -> bool {
        self.norm_sqr() <= 1.0 + Tolerances::DEFAULT.hermiticity
    }

    /// `(σ·a)`, without the identity part.
    pub fn pauli_sum(self) -> CMatrix {
        let a = self.to_array();
        (1..=3).fold(CMatrix::zeros(2, 2), |acc, k| &acc + &pauli(k).scale_real(a[k - 1]))
    }
}

/// `ρ = (I + a·σ)/2`.
pub fn from_bloch(b: BlochVector) -> DensityMatrix {
    DensityMatrix {
        mat: (&CMatrix::identity(2) + &b.pauli_sum()).scale_real(0.5),
    }
}

pub fn to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(Error::dim(format!(
            "Bloch vector needs a qubit, got dimension {}",
            rho.dim()
        )));
    }
    let m = rho.mat();
    // tr(ρσ₁) = 2 Re ρ₁₀, tr(ρσ₂) = 2 Im ρ₁₀, tr(ρσ₃) = ρ₀₀ − ρ₁₁
    Ok(BlochVector::new(
        (m[(0, 1)] + m[(1, 0)]).re,
        (I * (m[(0, 1)] - m[(1, 0)])).re,
        (m[(0, 0)] - m[(1, 1)]).re,
    ))
}

/// Two-qubit Pauli coordinates: local Bloch vectors plus the correlation
/// tensor `γ_ij = tr(ρ σ_i⊗σ_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FanoForm {
    pub alpha: BlochVector,
    pub beta: BlochVector,
    pub gamma: [[f64; 3]; 3],
}

pub fn fano(rho: &DensityMatrix) -> Result<FanoForm> {
    if rho.dim() != 4 {
        return Err(Error::dim(format!(
            "Fano form needs a two-qubit state, got dimension {}",
            rho.dim()
        )));
    }
    let expect = |i: usize, j: usize| pauli(i).tensor(&pauli(j)).hs_inner(rho.mat()).re;
    let mut gamma = [[0.0; 3]; 3];
    for (i, row) in gamma.iter_mut().enumerate() {
        for (j, g) in row.iter_mut().enumerate() {
            *g = expect(i + 1, j + 1);
        }
    }
    Ok(FanoForm {
        alpha: BlochVector::new(expect(1, 0), expect(2, 0), expect(3, 0)),
        beta: BlochVector::new(expect(0, 1), expect(0, 2), expect(0, 3)),
        gamma,
    })
}

pub fn from_fano(f: &FanoForm) -> DensityMatrix {
    let id = CMatrix::identity(2);
    let mut acc = CMatrix::identity(4);
    acc += &f.alpha.pauli_sum().tensor(&id);
    acc += &id.tensor(&f.beta.pauli_sum());
    for i in 0..3 {
        for j in 0..3 {
            if f.gamma[i][j] != 0.0 {
                acc += &pauli(i + 1).tensor(&pauli(j + 1)).scale_real(f.gamma[i][j]);
            }
        }
    }
    DensityMatrix {
        mat: acc.scale_real(0.25),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchmidtDecomposition {
    pub coeffs: Vec<f64>,
    pub basis_a: Vec<Vec<C64>>,
    pub basis_b: Vec<Vec<C64>>,
    pub schmidt_number: usize,
}

impl SchmidtDecomposition {
    pub fn reconstruct(&self) -> Vec<C64> {
        let da = self.basis_a.first().map_or(0, Vec::len);
        let db = self.basis_b.first().map_or(0, Vec::len);
        let mut psi = vec![ZERO; da * db];
        for ((l, a), b) in self.coeffs.iter().zip(&self.basis_a).zip(&self.basis_b) {
            for (x, y) in psi.iter_mut().zip(kron_vec(a, b)) {
                *x += y * *l;
            }
        }
        psi
    }
}

/// Schmidt form of a pure bipartite vector from the spectrum of its reduced
/// state: `|i_B⟩ = (⟨i_A|⊗I)|ψ⟩ / λ_i`.
pub fn schmidt(psi: &[C64], dims: (usize, usize)) -> Result<SchmidtDecomposition> {
    let (da, db) = dims;
    if psi.len() != da * db {
        return Err(Error::dim(format!(
            "vector of length {} does not match dims {dims:?}",
            psi.len()
        )));
    }
    let n = vec_norm(psi);
    if (n - 1.0).abs() > Tolerances::DEFAULT.hermiticity {
        return Err(Error::NotNormalized(n));
    }
    let rho_a = CMatrix::outer(psi).partial_trace(dims, Subsystem::First)?;
    let eig = herm_eig(&rho_a)?;
    let cutoff = Tolerances::DEFAULT.hermiticity;
    let mut coeffs = Vec::new();
    let mut basis_a = Vec::new();
    let mut basis_b = Vec::new();
    for (k, &p) in eig.values.iter().enumerate().take(da.min(db)) {
        let lambda = p.max(0.0).sqrt();
        if lambda <= cutoff {
            break;
        }
        let a = eig.vector(k);
        let b: Vec<C64> = (0..db)
            .map(|j| (0..da).map(|i| a[i].conj() * psi[i * db + j]).sum::<C64>() / lambda)
            .collect();
        coeffs.push(lambda);
        basis_a.push(a);
        basis_b.push(b);
    }
    let schmidt_number = coeffs.len();
    Ok(SchmidtDecomposition {
        coeffs,
        basis_a,
        basis_b,
        schmidt_number,
    })
}

/// A joint state from a correlated assignment together with its
/// positivity flag.
#[derive(Debug, Clone)]
pub struct TernoState {
    pub state: DensityMatrix,
    pub valid: bool,
}

/// Largest `|a|` for which `(I + α·σ⊗I + a Σσ_i⊗σ_i)/4` is positive.
pub fn terno_bound(alpha: BlochVector) -> f64 {
    ((4.0 - 3.0 * alpha.norm_sqr()).max(0.0).sqrt() - 1.0) / 3.0
}

/// `(I + α·σ⊗I + a Σ_i σ_i⊗σ_i)/4`, a two-qubit state whose correlations
/// depend only on the first factor's Bloch vector.
pub fn terno_state(a: f64, alpha: BlochVector) -> TernoState {
    let mut gamma = [[0.0; 3]; 3];
    for (i, row) in gamma.iter_mut().enumerate() {
        row[i] = a;
    }
    let state = from_fano(&FanoForm {
        alpha,
        beta: BlochVector::default(),
        gamma,
    });
    let bound = terno_bound(alpha);
    TernoState {
        state,
        valid: alpha.norm_sqr() <= 4.0 / 3.0 && a.abs() <= bound + 1e-12,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use proptest::prelude::*;

    #[test]
    fn bloch_examples() {
        let z = from_bloch(BlochVector::new(0.0, 0.0, 1.0));
        assert!(z.mat().approx_eq(Polarization::H.state().mat(), 1e-15));
        let x = from_bloch(BlochVector::new(1.0, 0.0, 0.0));
        assert!(x.mat().approx_eq(Polarization::D.state().mat(), 1e-15));
        let y = from_bloch(BlochVector::new(0.0, 1.0, 0.0));
        assert!(y.mat().approx_eq(Polarization::R.state().mat(), 1e-15));
        let o = from_bloch(BlochVector::default());
        assert!(o
            .mat()
            .approx_eq(&DensityMatrix::maximally_mixed(2).mat().clone(), 1e-15));
        assert!(to_bloch(&phi_plus()).is_err());
    }

    #[test]
    fn purity_examples() {
        assert!((Polarization::R.state().purity() - 1.0).abs() < 1e-15);
        assert!((DensityMatrix::maximally_mixed(2).purity() - 0.5).abs() < 1e-15);
        let m = DensityMatrix::new(CMatrix::diag_real(&[0.75, 0.25])).unwrap();
        // 0.75² + 0.25²
        assert!((m.purity() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn validity_examples() {
        assert!(Polarization::H.state().validate(1e-9).valid);
        let s = 1.2 / 2f64.sqrt();
        let over = from_bloch(BlochVector::new(s, 0.0, s)).validate(1e-9);
        assert!(!over.valid);
        // eigenvalues (1 ± 1.2)/2
        assert!((over.min_eigenvalue + 0.1).abs() < 1e-12);
        let pt = phi_plus().mat().partial_transpose((2, 2), Subsystem::Second).unwrap();
        let v = DensityMatrix::new(pt).unwrap().validate(1e-9);
        assert!(!v.valid);
        assert!((v.min_eigenvalue + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fano_examples() {
        let hh = Polarization::H.state().tensor(&Polarization::H.state());
        let f = fano(&hh).unwrap();
        assert_eq!(f.alpha.to_array(), [0.0, 0.0, 1.0]);
        assert_eq!(f.beta.to_array(), [0.0, 0.0, 1.0]);
        assert_eq!(f.gamma[2][2], 1.0);
        assert_eq!(f.gamma[0][0], 0.0);

        let t = terno_state(0.2, BlochVector::new(0.3, 0.0, 0.0));
        let f = fano(&t.state).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.2 } else { 0.0 };
                assert!((f.gamma[i][j] - want).abs() < 1e-14);
            }
        }
        assert!(f.beta.norm() < 1e-15);
        assert!((f.alpha.a1 - 0.3).abs() < 1e-15);

        // Φ⁺: ⟨XX⟩ = 1, ⟨YY⟩ = −1, ⟨ZZ⟩ = 1
        let f = fano(&phi_plus()).unwrap();
        let diag = [f.gamma[0][0], f.gamma[1][1], f.gamma[2][2]];
        assert!((diag[0] - 1.0).abs() < 1e-15 && (diag[1] + 1.0).abs() < 1e-15);
        assert!((diag[2] - 1.0).abs() < 1e-15);
        assert!(f.alpha.norm() < 1e-15 && f.beta.norm() < 1e-15);
    }

    #[test]
    fn fano_round_trip_many() {
        let mut g = random::rng(77);
        for _ in 0..1000 {
            let rho = random::random_state(&mut g, 4);
            let back = from_fano(&fano(&rho).unwrap());
            assert!(back.mat().max_diff(rho.mat()) < 1e-10);
        }
    }

    #[test]
    fn terno_validity_flag() {
        let t = terno_state(0.0, BlochVector::default());
        assert!(t.valid);
        assert!(t.state.mat().approx_eq(&CMatrix::identity(4).scale_real(0.25), 1e-15));
        let alpha = BlochVector::new(0.3, 0.0, 0.0);
        let bound = terno_bound(alpha);
        assert!((bound - (3.73f64.sqrt() - 1.0) / 3.0).abs() < 1e-15);
        assert!(terno_state(0.2, alpha).valid);
        assert!(terno_state(0.2, alpha).state.validate(1e-12).valid);
        assert!(!terno_state(0.5, BlochVector::new(0.9, 0.0, 0.0)).valid);
    }

    #[test]
    fn terno_flag_matches_positivity() {
        let mut g = random::rng(5);
        for _ in 0..300 {
            use rand::Rng;
            let a: f64 = g.random_range(-0.4..0.4);
            let alpha = BlochVector::new(g.random_range(-1.0..1.0), g.random_range(-0.5..0.5), 0.0);
            let t = terno_state(a, alpha);
            let psd = t.state.validate(1e-9).valid;
            // the bound is sufficient; for a ≥ 0 it is also necessary along σ-axes
            if t.valid {
                assert!(psd, "a={a} alpha={alpha:?}");
            }
        }
    }

    #[test]
    fn schmidt_examples() {
        let prod = kron_vec(&Polarization::H.ket(), &Polarization::V.ket());
        let s = schmidt(&prod, (2, 2)).unwrap();
        assert_eq!(s.schmidt_number, 1);
        assert!((s.coeffs[0] - 1.0).abs() < 1e-12);
        let s = schmidt(&phi_plus_ket(), (2, 2)).unwrap();
        assert_eq!(s.schmidt_number, 2);
        for l in &s.coeffs {
            assert!((l - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
        assert!(matches!(
            schmidt(&[ONE, ONE, ZERO, ZERO], (2, 2)),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn schmidt_reduced_spectra_and_rank() {
        let mut g = random::rng(21);
        for dims in [(2, 2), (2, 4), (4, 2), (3, 3)] {
            for _ in 0..20 {
                let psi = random::random_ket(&mut g, dims.0 * dims.1);
                let s = schmidt(&psi, dims).unwrap();
                let back = s.reconstruct();
                let err = back.iter().zip(&psi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                assert!(err < 1e-9);
                let total: f64 = s.coeffs.iter().map(|l| l * l).sum();
                assert!((total - 1.0).abs() < 1e-9);
                let rho = CMatrix::outer(&psi);
                let ea = herm_eigenvalues(&rho.partial_trace(dims, Subsystem::First).unwrap()).unwrap();
                let eb = herm_eigenvalues(&rho.partial_trace(dims, Subsystem::Second).unwrap()).unwrap();
                for (k, l) in s.coeffs.iter().enumerate() {
                    assert!((ea[k] - l * l).abs() < 1e-9 && (eb[k] - l * l).abs() < 1e-9);
                }
            }
        }
        // rank of the coefficient matrix equals the Schmidt number
        let psi = kron_vec(&Polarization::D.ket(), &Polarization::R.ket());
        let a = CMatrix::from_fn(2, 2, |i, j| psi[i * 2 + j]);
        let rank = herm_eigenvalues(&(&a * &a.dagger()))
            .unwrap()
            .iter()
            .filter(|&&l| l > 1e-9)
            .count();
        assert_eq!(rank, schmidt(&psi, (2, 2)).unwrap().schmidt_number);
    }

    proptest! {
        #[test]
        fn bloch_round_trip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let b = BlochVector::new(x, y, z);
            prop_assume!(b.norm() <= 1.0);
            let back = to_bloch(&from_bloch(b)).unwrap();
            prop_assert!((back.a1 - x).abs() < 1e-12);
            prop_assert!((back.a2 - y).abs() < 1e-12);
            prop_assert!((back.a3 - z).abs() < 1e-12);
        }

        #[test]
        fn purity_matches_bloch_length(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let b = BlochVector::new(x, y, z);
            prop_assume!(b.norm() <= 1.0);
            let rho = from_bloch(b);
            prop_assert!((rho.purity() - (0.5 + b.norm_sqr() / 2.0)).abs() < 1e-12);
        }

        #[test]
        fn eigenvalues_sum_to_trace(seed in 0u64..10_000) {
            let rho = random::random_state(&mut random::rng(seed), 4);
            let s: f64 = rho.eigenvalues().unwrap().iter().sum();
            prop_assert!((s - rho.trace()).abs() < 1e-10);
        }

        #[test]
        fn partial_trace_preserves_trace(seed in 0u64..10_000) {
            let rho = random::random_state(&mut random::rng(seed), 4);
            for keep in [Subsystem::First, Subsystem::Second] {
                let r = rho.reduce((2, 2), keep).unwrap();
                prop_assert!((r.trace() - rho.trace()).abs() < 1e-12);
            }
        }
    }
}

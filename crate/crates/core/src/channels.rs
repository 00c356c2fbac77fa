//! Kraus, process-matrix and superoperator forms of a channel, the
//! conversions between them, and system–environment evolution.
//!
//! Process matrices use the layout `Λ = Σ_ij E_ij ⊗ E(E_ij)`: the ancilla
//! index is the outer (first) factor and the channel output the inner one.
//! Superoperators act on column-stacked vectors, `|E(ρ)⟩ = Φ|ρ⟩`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::matrix::{herm_eig, herm_eigenvalues, CMatrix, Subsystem};
use crate::states::{integer_sqrt, terno_bound, terno_state, to_bloch, BlochVector, DensityMatrix};
use crate::tomography::{sqpt, TomographicBasis};

/// Operator-sum representation `E(ρ) = Σ K ρ K†`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CMatrix>", into = "Vec<CMatrix>")]
pub struct KrausSet {
    ops: Vec<CMatrix>,
}

impl TryFrom<Vec<CMatrix>> for KrausSet {
    type Error = Error;
    fn try_from(v: Vec<CMatrix>) -> Result<Self> {
        KrausSet::new(v)
    }
}

impl From<KrausSet> for Vec<CMatrix> {
    fn from(k: KrausSet) -> Self {
        k.ops
    }
}

impl KrausSet {
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidParameter("Kraus set is empty".into()))?;
        let d = first.rows();
        if ops.iter().any(|k| k.rows() != d || k.cols() != d) {
            return Err(Error::dim("Kraus operators must all be square and the same size"));
        }
        Ok(KrausSet { ops })
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        Self::new(vec![u])
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn dim(&self) -> usize {
        self.ops[0].rows()
    }

    /// `‖Σ K†K − I‖_max`.
    pub fn completeness_defect(&self) -> f64 {
        let d = self.dim();
        let sum = self
            .ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| &acc + &(&k.dagger() * k));
        sum.max_diff(&CMatrix::identity(d))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.dim(), rho)?;
        let d = self.dim();
        let out = self
            .ops
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, k| &acc + &k.sandwich(rho.mat()));
        DensityMatrix::new(out)
    }

    pub fn to_process(&self) -> ProcessMatrix {
        let d = self.dim();
        let mut m = CMatrix::zeros(d * d, d * d);
        // Λ[(i,a),(j,b)] = Σ_K K_ai conj(K_bj)
        for k in &self.ops {
            let v = k.vectorize();
            for r in 0..d * d {
                for s in 0..d * d {
                    m[(r, s)] += v[(r, 0)] * v[(s, 0)].conj();
                }
            }
        }
        ProcessMatrix { mat: m, d }
    }

    pub fn to_superop(&self) -> Superoperator {
        let d = self.dim();
        let mat = self
            .ops
            .iter()
            .fold(CMatrix::zeros(d * d, d * d), |acc, k| &acc + &k.conj().tensor(k));
        Superoperator { mat, d }
    }
}

fn check_dim(d: usize, rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != d {
        return Err(Error::dim(format!(
            "channel acts on dimension {d}, state has dimension {}",
            rho.dim()
        )));
    }
    Ok(())
}

fn square_root_dim(m: &CMatrix) -> Result<usize> {
    if !m.is_square() {
        return Err(Error::dim(format!("{}x{} is not square", m.rows(), m.cols())));
    }
    integer_sqrt(m.rows())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::dim(format!("size {} is not a perfect square", m.rows())))
}

/// Result of a complete-positivity test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpCheck {
    pub is_cp: bool,
    pub min_eigenvalue: f64,
}

/// Result of a trace-preservation test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpCheck {
    pub is_tp: bool,
    pub defect: f64,
}

/// Choi-form process matrix (`d²×d²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrix", into = "CMatrix")]
pub struct ProcessMatrix {
    mat: CMatrix,
    d: usize,
}

impl TryFrom<CMatrix> for ProcessMatrix {
    type Error = Error;
    fn try_from(m: CMatrix) -> Result<Self> {
        ProcessMatrix::new(m)
    }
}

impl From<ProcessMatrix> for CMatrix {
    fn from(p: ProcessMatrix) -> Self {
        p.mat
    }
}

impl ProcessMatrix {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let d = square_root_dim(&mat)?;
        Ok(ProcessMatrix { mat, d })
    }

    /// `Σ_ij E_ij ⊗ E_ij`.
    pub fn identity(d: usize) -> Self {
        ProcessMatrix {
            mat: crate::matrix::max_entangled_unnormalized(d),
            d,
        }
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_mat(self) -> CMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `E(ρ) = tr_1[Λ(ρᵀ⊗I)] = Σ_ij ρ_ij E(E_ij)`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.d, rho)?;
        DensityMatrix::new(self.apply_mat(rho.mat()))
    }

    pub(crate) fn apply_mat(&self, rho: &CMatrix) -> CMatrix {
        let d = self.d;
        let mut out = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let r = rho[(i, j)];
                if r.norm_sqr() == 0.0 {
                    continue;
                }
                for a in 0..d {
                    for b in 0..d {
                        out[(a, b)] += r * self.mat[(i * d + a, j * d + b)];
                    }
                }
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        herm_eigenvalues(&self.mat)
    }

    pub fn is_cp(&self, tol: f64) -> Result<CpCheck> {
        let min = self.eigenvalues()?.last().copied().unwrap_or(0.0);
        Ok(CpCheck {
            is_cp: min >= -tol,
            min_eigenvalue: min,
        })
    }

    /// Trace over the output slot must give the identity on the ancilla.
    pub fn is_tp(&self, tol: f64) -> TpCheck {
        let defect = self.tp_defect();
        TpCheck {
            is_tp: defect <= tol,
            defect,
        }
    }

    pub fn tp_defect(&self) -> f64 {
        self.output_trace().max_diff(&CMatrix::identity(self.d))
    }

    /// `tr_out(Λ)`, a `d×d` matrix on the ancilla slot.
    pub fn output_trace(&self) -> CMatrix {
        self.mat
            .partial_trace((self.d, self.d), Subsystem::First)
            .expect("process matrix is d²×d²")
    }

    /// Kraus operators `√λ_n · mat(e_n)` from the eigenvectors with
    /// `λ_n > cutoff`.
    pub fn to_kraus(&self, cutoff: f64) -> Result<KrausSet> {
        let eig = herm_eig(&self.mat)?;
        if eig.min() < -cutoff {
            return Err(Error::NotCompletelyPositive {
                eigenvalues: eig.values,
            });
        }
        let ops: Vec<CMatrix> = eig
            .values
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > cutoff)
            .map(|(k, &l)| {
                let v = CMatrix::column(&eig.vector(k)).scale_real(l.sqrt());
                CMatrix::materialize(&v, self.d, self.d).expect("length d²")
            })
            .collect();
        if ops.is_empty() {
            return KrausSet::new(vec![CMatrix::zeros(self.d, self.d)]);
        }
        KrausSet::new(ops)
    }

    pub fn to_superop(&self) -> Superoperator {
        Superoperator {
            mat: reshuffle(&self.mat, self.d).expect("d²×d²"),
            d: self.d,
        }
    }

    /// Process matrix of `E(ρ) = tr_E[U(ρ⊗τ)U†]`.
    pub fn from_fixed_environment(tau: &DensityMatrix, u: &CMatrix) -> Result<Self> {
        let ds = u.rows() / tau.dim();
        let outputs = TomographicBasis::standard(ds)?
            .elements()
            .iter()
            .map(|rho| system_env_evolve(&rho.tensor(tau), u, (ds, tau.dim())))
            .collect::<Result<Vec<_>>>()?;
        sqpt(&TomographicBasis::standard(ds)?, &outputs)
    }
}

/// Superoperator `Φ` acting on column-stacked vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CMatrix", into = "CMatrix")]
pub struct Superoperator {
    mat: CMatrix,
    d: usize,
}

impl TryFrom<CMatrix> for Superoperator {
    type Error = Error;
    fn try_from(m: CMatrix) -> Result<Self> {
        Superoperator::new(m)
    }
}

impl From<Superoperator> for CMatrix {
    fn from(s: Superoperator) -> Self {
        s.mat
    }
}

impl Superoperator {
    pub fn new(mat: CMatrix) -> Result<Self> {
        let d = square_root_dim(&mat)?;
        Ok(Superoperator { mat, d })
    }

    pub fn mat(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_dim(self.d, rho)?;
        let v = &self.mat * &rho.mat().vectorize();
        DensityMatrix::new(CMatrix::materialize(&v, self.d, self.d)?)
    }

    pub fn to_process(&self) -> ProcessMatrix {
        ProcessMatrix {
            mat: reshuffle(&self.mat, self.d).expect("d²×d²"),
            d: self.d,
        }
    }

    pub fn to_kraus(&self, cutoff: f64) -> Result<KrausSet> {
        self.to_process().to_kraus(cutoff)
    }
}

pub fn apply_kraus(k: &KrausSet, rho: &DensityMatrix) -> Result<DensityMatrix> {
    k.apply(rho)
}

pub fn apply_process(l: &ProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    l.apply(rho)
}

pub fn apply_superop(s: &Superoperator, rho: &DensityMatrix) -> Result<DensityMatrix> {
    s.apply(rho)
}

pub fn kraus_to_process(k: &KrausSet) -> ProcessMatrix {
    k.to_process()
}

pub fn kraus_to_superop(k: &KrausSet) -> Superoperator {
    k.to_superop()
}

pub fn process_to_kraus(l: &ProcessMatrix, cutoff: f64) -> Result<KrausSet> {
    l.to_kraus(cutoff)
}

pub fn is_cp(l: &ProcessMatrix, tol: f64) -> Result<CpCheck> {
    l.is_cp(tol)
}

pub fn is_tp(l: &ProcessMatrix, tol: f64) -> TpCheck {
    l.is_tp(tol)
}

/// Index permutation between superoperator and process matrix,
/// `Λ[(m,n),(μ,ν)] = Φ[(ν,n),(μ,m)]`. It is its own inverse.
pub fn reshuffle(m: &CMatrix, d: usize) -> Result<CMatrix> {
    if m.rows() != d * d || m.cols() != d * d {
        return Err(Error::dim(format!(
            "reshuffle expects {0}x{0}, got {1}x{2}",
            d * d,
            m.rows(),
            m.cols()
        )));
    }
    Ok(CMatrix::from_fn(d * d, d * d, |r, s| {
        let (mm, n) = (r / d, r % d);
        let (mu, nu) = (s / d, s % d);
        m[(nu * d + n, mu * d + mm)]
    }))
}

/// `tr_E[U ρ_SE U†]` with the system as the first factor.
pub fn system_env_evolve(rho_se: &DensityMatrix, u: &CMatrix, dims: (usize, usize)) -> Result<DensityMatrix> {
    if u.rows() != rho_se.dim() || !u.is_square() {
        return Err(Error::dim(format!(
            "unitary is {}x{}, joint state has dimension {}",
            u.rows(),
            u.cols(),
            rho_se.dim()
        )));
    }
    let err = u.unitarity_error();
    if err > Tolerances::DEFAULT.hermiticity {
        return Err(Error::NotUnitary(err));
    }
    let evolved = u.sandwich(rho_se.mat());
    DensityMatrix::new(evolved.partial_trace(dims, Subsystem::First)?)
}

/// The partial-swap family `|01⟩ → cosθ|01⟩ − sinθ|10⟩`,
/// `|10⟩ → sinθ|01⟩ + cosθ|10⟩`.
pub fn partial_swap(theta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    CMatrix::from_real_rows(&[
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

/// One point of a non-CP scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub theta: f64,
    pub min_eigenvalue: f64,
}

/// Scans the partial-swap angle for the reduced dynamics induced by the
/// assignment `ρ ↦ (I + α(ρ)·σ⊗I + a Σσ_i⊗σ_i)/4`.
///
/// The assignment is affine in the input's Bloch vector, so SQPT inputs are
/// pushed through it directly and the map is read off by linearity.
/// `alpha` is only used to confirm that `a` admits some physical joint
/// state at that reduced state.
pub fn terno_ncp_scan(a: f64, alpha: BlochVector, thetas: &[f64]) -> Result<Vec<ScanPoint>> {
    if !alpha.is_physical() || a.abs() > terno_bound(alpha) + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "a = {a} exceeds the positivity bound {:.6} for |α| = {:.6}",
            terno_bound(alpha),
            alpha.norm()
        )));
    }
    let basis = TomographicBasis::standard(2)?;
    let joints: Vec<DensityMatrix> = basis
        .elements()
        .iter()
        .map(|rho| to_bloch(rho).map(|b| terno_state(a, b).state))
        .collect::<Result<_>>()?;
    let mut points: Vec<ScanPoint> = thetas
        .par_iter()
        .map(|&theta| {
            let u = partial_swap(theta);
            let outputs = joints
                .iter()
                .map(|g| system_env_evolve(g, &u, (2, 2)))
                .collect::<Result<Vec<_>>>()?;
            let lambda = sqpt(&basis, &outputs)?;
            let eigs = lambda.eigenvalues()?;
            Ok(ScanPoint {
                theta,
                min_eigenvalue: *eigs.last().expect("non-empty"),
            })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|p, q| p.theta.total_cmp(&q.theta));
    Ok(points)
}

/// Channel file format: `{"kind": "kraus"|"choi"|"superop", "d": N,
/// "matrices": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub d: usize,
    pub matrices: Vec<CMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Kraus,
    Choi,
    Superop,
}

impl ChannelSpec {
    pub fn from_process(l: &ProcessMatrix) -> Self {
        ChannelSpec {
            kind: ChannelKind::Choi,
            d: l.dim(),
            matrices: vec![l.mat().clone()],
        }
    }

    /// Resolves the file form to a process matrix.
    pub fn to_process(&self) -> Result<ProcessMatrix> {
        let single = || -> Result<CMatrix> {
            match self.matrices.as_slice() {
                [m] => Ok(m.clone()),
                _ => Err(Error::Parse(format!(
                    "{:?} channel needs exactly one matrix",
                    self.kind
                ))),
            }
        };
        let l = match self.kind {
            ChannelKind::Kraus => KrausSet::new(self.matrices.clone())?.to_process(),
            ChannelKind::Choi => ProcessMatrix::new(single()?)?,
            ChannelKind::Superop => Superoperator::new(single()?)?.to_process(),
        };
        if l.dim() != self.d {
            return Err(Error::dim(format!(
                "declared d = {} but matrices imply d = {}",
                self.d,
                l.dim()
            )));
        }
        Ok(l)
    }
}

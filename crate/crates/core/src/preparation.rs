//! Preparing SQPT inputs out of a correlated system–environment state, the
//! resulting tomography experiment, and the bilinear process matrix that
//! describes preparation by projection.
//!
//! The system is always the first tensor factor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{system_env_evolve, KrausSet, ProcessMatrix};
use crate::config::Tolerances;
use crate::correlations::{discord, Direction, Grid};
use crate::error::{Error, Result};
use crate::matrix::{matrix_sqrt, CMatrix, Subsystem, C64};
use crate::random;
use crate::states::{integer_sqrt, DensityMatrix, Polarization};
use crate::tomography::{sqpt, TomographicBasis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcedureKind {
    /// Replace the system state outright, leaving the environment's
    /// marginal untouched.
    Stochastic,
    /// Project onto one fixed state, then rotate to each target.
    MeasureRotate,
    /// Project directly onto each target.
    MeasureOnly,
    /// Project onto some targets, rotate into the rest.
    Hybrid,
}

/// How one target input is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Reset,
    Project { ket: Vec<C64> },
    ProjectRotate { ket: Vec<C64>, rotation: CMatrix },
}

impl Step {
    /// The system state this step leaves behind.
    pub fn target(&self) -> Option<Vec<C64>> {
        match self {
            Step::Reset => None,
            Step::Project { ket } => Some(ket.clone()),
            Step::ProjectRotate { ket, rotation } => Some(rotation.apply(ket)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreparationProcedure {
    kind: ProcedureKind,
    names: Vec<String>,
    targets: Vec<DensityMatrix>,
    steps: Vec<Step>,
}

/// A unitary whose first column is `ket`, so it maps `|0⟩` to `ket`.
pub fn rotation_from_zero(ket: &[C64]) -> CMatrix {
    let (a, b) = (ket[0], ket[1]);
    CMatrix::from_rows(&[[a, -b.conj()], [b, a.conj()]])
}

fn hvdr() -> [Polarization; 4] {
    [Polarization::H, Polarization::V, Polarization::D, Polarization::R]
}

impl PreparationProcedure {
    pub fn new(kind: ProcedureKind, names: Vec<String>, targets: Vec<DensityMatrix>, steps: Vec<Step>) -> Result<Self> {
        if names.len() != targets.len() || steps.len() != targets.len() {
            return Err(Error::dim("one name and one step per target"));
        }
        for (step, t) in steps.iter().zip(&targets) {
            if let Some(k) = step.target() {
                if DensityMatrix::from_ket(&k).mat().max_diff(t.mat()) > 1e-9 {
                    return Err(Error::InvalidParameter(
                        "preparation step does not produce its target".into(),
                    ));
                }
            }
        }
        Ok(PreparationProcedure {
            kind,
            names,
            targets,
            steps,
        })
    }

    fn standard(kind: ProcedureKind, step: impl Fn(Polarization) -> Step) -> Self {
        let p = hvdr();
        PreparationProcedure {
            kind,
            names: p.iter().map(|x| x.to_string()).collect(),
            targets: p.iter().map(|x| x.state()).collect(),
            steps: p.iter().map(|&x| step(x)).collect(),
        }
    }

    pub fn stochastic() -> Self {
        Self::standard(ProcedureKind::Stochastic, |_| Step::Reset)
    }

    /// Project onto `|H⟩`, then rotate into H, V, D, R.
    pub fn measure_rotate() -> Self {
        Self::standard(ProcedureKind::MeasureRotate, |p| Step::ProjectRotate {
            ket: Polarization::H.ket(),
            rotation: rotation_from_zero(&p.ket()),
        })
    }

    pub fn measure_only() -> Self {
        Self::standard(ProcedureKind::MeasureOnly, |p| Step::Project { ket: p.ket() })
    }

    /// Project onto H, V and D; reach R by rotating the H outcome.
    pub fn hybrid() -> Self {
        Self::standard(ProcedureKind::Hybrid, |p| match p {
            Polarization::R => Step::ProjectRotate {
                ket: Polarization::H.ket(),
                rotation: rotation_from_zero(&p.ket()),
            },
            _ => Step::Project { ket: p.ket() },
        })
    }

    pub fn from_kind(kind: ProcedureKind) -> Self {
        match kind {
            ProcedureKind::Stochastic => Self::stochastic(),
            ProcedureKind::MeasureRotate => Self::measure_rotate(),
            ProcedureKind::MeasureOnly => Self::measure_only(),
            ProcedureKind::Hybrid => Self::hybrid(),
        }
    }

    pub fn kind(&self) -> ProcedureKind {
        self.kind
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn targets(&self) -> &[DensityMatrix] {
        &self.targets
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn basis(&self) -> Result<TomographicBasis> {
        TomographicBasis::new(self.targets.clone(), self.names.clone())
    }
}

/// A prepared product input `ρ_j ⊗ τ` and the probability of reaching it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub state: DensityMatrix,
    pub environment: DensityMatrix,
    pub probability: f64,
}

fn split_dims(gamma: &DensityMatrix, ds: usize) -> Result<(usize, usize)> {
    let de = gamma.dim() / ds;
    if de * ds != gamma.dim() || de == 0 {
        return Err(Error::dim(format!(
            "joint dimension {} does not factor with a {ds}-dimensional system",
            gamma.dim()
        )));
    }
    Ok((ds, de))
}

/// Environment left after projecting the system of `gamma` onto `ket`,
/// together with the success probability `tr((Π⊗I)γ)`.
pub fn project_environment(gamma: &DensityMatrix, ket: &[C64], label: &str) -> Result<(DensityMatrix, f64)> {
    let (ds, de) = split_dims(gamma, ket.len())?;
    let g = gamma.mat();
    // (⟨ψ|⊗I) γ (|ψ⟩⊗I)
    let tau = CMatrix::from_fn(de, de, |a, b| {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..ds {
            for j in 0..ds {
                acc += ket[i].conj() * g[(i * de + a, j * de + b)] * ket[j];
            }
        }
        acc
    });
    let prob = tau.trace().re;
    if prob < Tolerances::DEFAULT.preparation_floor {
        return Err(Error::PreparationFailed {
            target: label.to_string(),
            probability: prob,
        });
    }
    Ok((DensityMatrix::new(tau.scale_real(1.0 / prob))?, prob))
}

/// Prepares target `j` of `proc` from the joint state `gamma`.
pub fn prepare(gamma: &DensityMatrix, proc: &PreparationProcedure, j: usize) -> Result<Prepared> {
    let target = proc
        .targets
        .get(j)
        .ok_or_else(|| Error::InvalidParameter(format!("no target with index {j}")))?;
    let label = &proc.names[j];
    let ds = target.dim();
    let (environment, probability) = match &proc.steps[j] {
        Step::Reset => {
            let dims = split_dims(gamma, ds)?;
            (gamma.reduce(dims, Subsystem::Second)?, 1.0)
        }
        Step::Project { ket } | Step::ProjectRotate { ket, .. } => project_environment(gamma, ket, label)?,
    };
    Ok(Prepared {
        state: target.tensor(&environment),
        environment,
        probability,
    })
}

/// `Σ_j w_j ρ_j ⊗ τ_j`: picking target `j` at random with weight `w_j`.
pub fn prepare_mixed_random(
    gamma: &DensityMatrix,
    weights: &[f64],
    proc: &PreparationProcedure,
) -> Result<DensityMatrix> {
    if weights.len() != proc.len() {
        return Err(Error::dim(format!(
            "{} weights for {} targets",
            weights.len(),
            proc.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter("weights must be a probability vector".into()));
    }
    let n = gamma.dim();
    let mut acc = CMatrix::zeros(n, n);
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        acc += &prepare(gamma, proc, j)?.state.mat().scale_real(w);
    }
    DensityMatrix::new(acc)
}

/// Per-input details of an SQPT run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputReport {
    pub label: String,
    pub probability: f64,
    pub environment: CMatrix,
    pub output: CMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub procedure: ProcedureKind,
    pub lambda: ProcessMatrix,
    pub eigenvalues: Vec<f64>,
    pub cp: bool,
    pub tp_defect: f64,
    pub inputs: Vec<InputReport>,
}

impl ExperimentReport {
    pub fn environments(&self) -> Vec<DensityMatrix> {
        self.inputs
            .iter()
            .map(|i| DensityMatrix::new(i.environment.clone()).expect("square"))
            .collect()
    }
}

/// Prepares every target, evolves the joint state by `u`, discards the
/// environment, and reconstructs the process by SQPT.
pub fn run_sqpt_experiment(
    gamma0: &DensityMatrix,
    u: &CMatrix,
    proc: &PreparationProcedure,
) -> Result<ExperimentReport> {
    let basis = proc.basis()?;
    let ds = basis.dim();
    let dims = split_dims(gamma0, ds)?;
    let inputs = (0..proc.len())
        .into_par_iter()
        .map(|j| {
            let p = prepare(gamma0, proc, j)?;
            let out = system_env_evolve(&p.state, u, dims)?;
            Ok(InputReport {
                label: proc.names[j].clone(),
                probability: p.probability,
                environment: p.environment.into_mat(),
                output: out.into_mat(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let outputs: Vec<DensityMatrix> = inputs
        .iter()
        .map(|i| DensityMatrix::new(i.output.clone()))
        .collect::<Result<_>>()?;
    let lambda = sqpt(&basis, &outputs)?;
    let eigenvalues = lambda.eigenvalues()?;
    let cp = eigenvalues.last().is_none_or(|&m| m >= -Tolerances::DEFAULT.cp);
    Ok(ExperimentReport {
        procedure: proc.kind,
        tp_defect: lambda.tp_defect(),
        lambda,
        eigenvalues,
        cp,
        inputs,
    })
}

/// `d³×d³` matrix of the bilinear preparation-by-projection map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearProcessMatrix {
    pub mat: CMatrix,
    pub d: usize,
}

impl BilinearProcessMatrix {
    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        crate::matrix::herm_eigenvalues(&self.mat)
    }
}

/// `ℳ[(r'',r'),r ; (s'',s'),s] = tr([U]_{rr'} [γ₀]_{r''s''} [U]_{ss'}†)`,
/// where `[X]_{ij}` is the `(i, j)` system block of a joint operator.
pub fn bilinear_matrix(gamma0: &DensityMatrix, u: &CMatrix) -> Result<BilinearProcessMatrix> {
    let n = gamma0.dim();
    let d = integer_sqrt(n).ok_or_else(|| Error::dim(format!("{n} is not d²")))?;
    if u.rows() != n || u.cols() != n {
        return Err(Error::dim("unitary and joint state differ in dimension"));
    }
    let ub: Vec<Vec<CMatrix>> = (0..d).map(|i| (0..d).map(|j| u.block(d, i, j)).collect()).collect();
    let gb: Vec<Vec<CMatrix>> = (0..d)
        .map(|i| (0..d).map(|j| gamma0.mat().block(d, i, j)).collect())
        .collect();
    let size = d * d * d;
    let idx = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
    let mut m = CMatrix::zeros(size, size);
    for r2 in 0..d {
        for r1 in 0..d {
            for r in 0..d {
                for s2 in 0..d {
                    for s1 in 0..d {
                        let left = &ub[r][r1] * &gb[r2][s2];
                        for s in 0..d {
                            m[(idx(r2, r1, r), idx(s2, s1, s))] = ub[s][s1].hs_inner(&left);
                        }
                    }
                }
            }
        }
    }
    Ok(BilinearProcessMatrix { mat: m, d })
}

/// Output of projective preparation onto the pure state `rho`, followed by
/// the evolution encoded in `m`.
pub fn bilinear_evolve(m: &BilinearProcessMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let d = m.d;
    if rho.dim() != d {
        return Err(Error::dim("state and bilinear matrix differ in dimension"));
    }
    if (rho.purity() - 1.0).abs() > 1e-9 || (rho.trace() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "bilinear evolution needs a pure input state".into(),
        ));
    }
    let p = rho.mat();
    let idx = |a: usize, b: usize, c: usize| (a * d + b) * d + c;
    let q = CMatrix::from_fn(d, d, |r, s| {
        let mut acc = C64::new(0.0, 0.0);
        for r2 in 0..d {
            for r1 in 0..d {
                let pl = p[(r2, r1)].conj();
                if pl.norm_sqr() == 0.0 {
                    continue;
                }
                for s2 in 0..d {
                    for s1 in 0..d {
                        acc += pl * m.mat[(idx(r2, r1, r), idx(s2, s1, s))] * p[(s2, s1)];
                    }
                }
            }
        }
        acc
    });
    let gamma = q.trace().re;
    if gamma <= Tolerances::DEFAULT.preparation_floor {
        return Err(Error::PreparationFailed {
            target: "bilinear input".into(),
            probability: gamma,
        });
    }
    DensityMatrix::new(q.scale_real(1.0 / gamma))
}

/// `ρ ↦ Σ_l Π_l ρ Π_l ⊗ τ_l`: an assignment whose outputs have zero
/// discord when the first factor is measured.
pub fn dephasing_assignment(
    projectors: &[CMatrix],
    taus: &[DensityMatrix],
    rho: &DensityMatrix,
) -> Result<DensityMatrix> {
    if projectors.len() != taus.len() {
        return Err(Error::dim("one environment state per projector"));
    }
    let n = rho.dim() * taus[0].dim();
    let acc = projectors.iter().zip(taus).fold(CMatrix::zeros(n, n), |acc, (p, t)| {
        &acc + &p.sandwich(rho.mat()).tensor(t.mat())
    });
    DensityMatrix::new(acc)
}

/// Kraus operators `K_nm = Σ_l (I⊗⟨n|) U (I⊗√τ_l|m⟩) Π_l`.
pub fn dephasing_kraus(projectors: &[CMatrix], taus: &[DensityMatrix], u: &CMatrix) -> Result<KrausSet> {
    let ds = projectors[0].rows();
    let de = taus[0].dim();
    let roots = taus.iter().map(|t| matrix_sqrt(t.mat())).collect::<Result<Vec<_>>>()?;
    let mut ops = Vec::with_capacity(de * de);
    for n in 0..de {
        for m in 0..de {
            let mut k = CMatrix::zeros(ds, ds);
            for (p, root) in projectors.iter().zip(&roots) {
                // (I⊗⟨n|) U (I⊗|v⟩) with |v⟩ = √τ|m⟩
                let v = root.column_vec(m);
                let block = CMatrix::from_fn(ds, ds, |a, b| (0..de).map(|e| u[(a * de + n, b * de + e)] * v[e]).sum());
                k += &(&block * p);
            }
            ops.push(k);
        }
    }
    KrausSet::new(ops)
}

/// Best counterexample candidate found by [`conjecture_search`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjectureCandidate {
    pub gamma: DensityMatrix,
    pub unitary: CMatrix,
    pub discord_ab: f64,
    pub discord_ba: f64,
    pub min_eigenvalue: f64,
}

/// Samples states `Σ_i p_i ρ_i ⊗ |e_i⟩⟨e_i|` (zero discord when the second
/// factor is measured) and random couplings, prepares SQPT inputs by
/// projection, and keeps the most negative reconstructed Choi eigenvalue
/// among states whose reverse discord is non-zero.
pub fn conjecture_search(trials: usize, seed: u64) -> Result<Option<ConjectureCandidate>> {
    let proc = PreparationProcedure::measure_only();
    let grid = Grid {
        theta_steps: 16,
        phi_steps: 32,
    };
    let mut best: Option<ConjectureCandidate> = None;
    let mut g = random::rng(seed);
    for _ in 0..trials {
        let basis = random::random_unitary(&mut g, 2);
        let w: f64 = rand::Rng::random_range(&mut g, 0.2..0.8);
        let parts: Vec<DensityMatrix> = (0..2)
            .map(|i| {
                let rho = random::random_pure_state(&mut g, 2);
                rho.tensor(&DensityMatrix::from_ket(&basis.column_vec(i)))
            })
            .collect();
        let gamma = DensityMatrix::mixture(&[(w, &parts[0]), (1.0 - w, &parts[1])])?;
        let u = random::random_unitary(&mut g, 4);
        let report = match run_sqpt_experiment(&gamma, &u, &proc) {
            Ok(r) => r,
            Err(Error::PreparationFailed { .. }) => continue,
            Err(e) => return Err(e),
        };
        let min = *report.eigenvalues.last().expect("non-empty");
        if best.as_ref().is_some_and(|b| b.min_eigenvalue <= min) {
            continue;
        }
        let discord_ba = discord(&gamma, Direction::BA, grid, true)?.value;
        if discord_ba < 1e-3 {
            continue;
        }
        let discord_ab = discord(&gamma, Direction::AB, grid, true)?.value;
        best = Some(ConjectureCandidate {
            gamma,
            unitary: u,
            discord_ab,
            discord_ba,
            min_eigenvalue: min,
        });
    }
    Ok(best)
}

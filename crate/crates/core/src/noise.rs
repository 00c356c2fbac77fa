//! Counting noise: Poisson sampling of tomography counts, Monte Carlo
//! distributions of linear-inversion estimates, and a constrained
//! maximum-likelihood re-estimate of the process.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::ProcessMatrix;
use crate::error::{Error, Result};
use crate::matrix::{herm_eig, herm_eigenvalues, pauli, CMatrix, Subsystem, C64};
use crate::optimize::{levenberg_marquardt, LevenbergMarquardt};
use crate::states::DensityMatrix;
use crate::tomography::{
    dual_basis, frequency_table, reconstruct_state, sqpt_from_frequencies, CountRecord, DualBasis, TomographicBasis,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Poisson,
    GaussianApprox,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(NoiseKind::Poisson),
            "gaussian_approx" | "gaussian" => Ok(NoiseKind::GaussianApprox),
            other => Err(Error::Parse(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Copies `𝒩` sent through each measurement setting.
    pub shots: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, shots: u64) -> Result<Self> {
        if shots == 0 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        Ok(NoiseModel { kind, shots })
    }

    pub fn poisson(shots: u64) -> Result<Self> {
        Self::new(NoiseKind::Poisson, shots)
    }
}

/// Generator for one record of one trial. Each `(trial, record)` pair gets
/// its own ChaCha stream, so trials can run in any order.
pub fn stream_rng(seed: u64, trial: usize, record: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((trial as u64) << 16) | record as u64);
    r
}

fn poisson_by_inversion<R: Rng + ?Sized>(r: &mut R, mean: f64) -> u64 {
    let u: f64 = r.random();
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf && p > 0.0 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

fn gaussian_round<R: Rng + ?Sized>(r: &mut R, mean: f64) -> u64 {
    let n = Normal::new(mean, mean.sqrt()).expect("finite mean");
    n.sample(r).round().max(0.0) as u64
}

/// One draw with the given mean. Poisson draws switch from exact inversion
/// to a rounded Gaussian once the mean reaches 30.
pub fn sample_count<R: Rng + ?Sized>(r: &mut R, mean: f64, kind: NoiseKind) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    match kind {
        NoiseKind::Poisson if mean < 30.0 => poisson_by_inversion(r, mean),
        _ => gaussian_round(r, mean),
    }
}

/// `n_jm = 𝒩 tr(M_m E(ρ_j))` for every input/measurement pair.
pub fn expected_counts(
    l: &ProcessMatrix,
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
    shots: u64,
) -> Result<Vec<CountRecord>> {
    if inputs.dim() != l.dim() || measurements.dim() != l.dim() {
        return Err(Error::dim("bases and process differ in dimension"));
    }
    let n = shots as f64;
    let mut out = Vec::with_capacity(inputs.len() * measurements.len());
    for (rho, iname) in inputs.elements().iter().zip(inputs.names()) {
        let e = l.apply_mat(rho.mat());
        for (m, mname) in measurements.elements().iter().zip(measurements.names()) {
            let value = n * m.mat().hs_inner(&e).re;
            if value < -1e-3 * n {
                return Err(Error::UnphysicalExpectation { value });
            }
            out.push(CountRecord {
                input: iname.clone(),
                measurement: mname.clone(),
                expected: value.max(0.0),
                sampled: 0,
                shots,
            });
        }
    }
    Ok(out)
}

fn sample_trial(records: &[CountRecord], kind: NoiseKind, seed: u64, trial: usize) -> Vec<CountRecord> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut g = stream_rng(seed, trial, i);
            CountRecord {
                sampled: sample_count(&mut g, r.expected, kind),
                ..r.clone()
            }
        })
        .collect()
}

/// Fills in `sampled` for each record. The same seed always gives the
/// same counts.
pub fn sample_counts(records: &[CountRecord], model: NoiseModel, seed: u64) -> Vec<CountRecord> {
    sample_trial(records, model.kind, seed, 0)
}

/// Non-identity Pauli strings on `n` qubits, labelled like `"XZ"`.
fn pauli_strings(d: usize, include_identity: bool) -> Result<Vec<(String, CMatrix)>> {
    if !d.is_power_of_two() || d < 2 {
        return Err(Error::InvalidParameter(format!(
            "Pauli coordinates need a power-of-two dimension, got {d}"
        )));
    }
    let mut out = vec![(String::new(), CMatrix::identity(1))];
    let mut dim = 1;
    while dim < d {
        out = out
            .into_iter()
            .flat_map(|(name, m)| {
                (0..4).map(move |k| (format!("{name}{}", ['I', 'X', 'Y', 'Z'][k]), m.tensor(&pauli(k))))
            })
            .collect();
        dim *= 2;
    }
    if !include_identity {
        out.retain(|(name, _)| name.chars().any(|ch| ch != 'I'));
    }
    Ok(out)
}

fn coordinates(paulis: &[(String, CMatrix)], m: &CMatrix) -> Vec<f64> {
    paulis.iter().map(|(_, p)| p.hs_inner(m).re).collect()
}

/// Summary of a Monte Carlo reconstruction experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub samples: usize,
    pub shots: u64,
    pub kind: NoiseKind,
    pub seed: u64,
    pub coordinates: Vec<String>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Variances predicted by linearized Poisson error propagation.
    pub predicted_variances: Vec<f64>,
    /// Fraction of trials whose estimate is positive semidefinite.
    pub cp_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSample {
    pub coordinates: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub report: MCReport,
    pub trials: Vec<TrialSample>,
}

fn summarize(
    trials: Vec<TrialSample>,
    names: Vec<String>,
    predicted_variances: Vec<f64>,
    model: NoiseModel,
    seed: u64,
) -> MonteCarlo {
    let n = trials.len();
    let k = names.len();
    let mut means = vec![0.0; k];
    for t in &trials {
        for (m, x) in means.iter_mut().zip(&t.coordinates) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut variances = vec![0.0; k];
    for t in &trials {
        for ((v, x), m) in variances.iter_mut().zip(&t.coordinates).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let denom = (n.max(2) - 1) as f64;
    variances.iter_mut().for_each(|v| *v /= denom);
    let positive = trials
        .iter()
        .filter(|t| t.eigenvalues.last().is_some_and(|&e| e >= 0.0))
        .count();
    MonteCarlo {
        report: MCReport {
            samples: n,
            shots: model.shots,
            kind: model.kind,
            seed,
            coordinates: names,
            means,
            variances,
            predicted_variances,
            cp_fraction: positive as f64 / n as f64,
        },
        trials,
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    Ok(())
}

/// Repeats state tomography of `rho_true` with sampled counts. Coordinates
/// are `tr(Pρ)` for the non-identity Pauli strings `P`.
pub fn mc_state_reconstruction(
    rho_true: &DensityMatrix,
    basis: &TomographicBasis,
    model: NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarlo> {
    check_trials(trials)?;
    if basis.dim() != rho_true.dim() {
        return Err(Error::dim("basis and state differ in dimension"));
    }
    let duals = dual_basis(basis)?;
    let paulis = pauli_strings(basis.dim(), false)?;
    let n = model.shots as f64;
    let probs: Vec<f64> = basis.probabilities(rho_true).into_iter().map(|p| p.max(0.0)).collect();
    let records: Vec<CountRecord> = probs
        .iter()
        .zip(basis.names())
        .map(|(&p, name)| CountRecord {
            input: String::new(),
            measurement: name.clone(),
            expected: n * p,
            sampled: 0,
            shots: model.shots,
        })
        .collect();
    let predicted = paulis
        .iter()
        .map(|(_, pm)| {
            probs
                .iter()
                .zip(duals.duals())
                .map(|(p, dm)| p * pm.hs_inner(dm).re.powi(2))
                .sum::<f64>()
                / n
        })
        .collect();
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let counts = sample_trial(&records, model.kind, seed, t);
            let freqs: Vec<f64> = counts.iter().map(CountRecord::frequency).collect();
            let rho = reconstruct_state(&freqs, &duals)?;
            Ok(TrialSample {
                coordinates: coordinates(&paulis, rho.mat()),
                eigenvalues: rho.eigenvalues()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names = paulis.into_iter().map(|(n, _)| n).collect();
    Ok(summarize(samples, names, predicted, model, seed))
}

/// Repeats SQPT of `l_true` with sampled counts. Coordinates are
/// `tr((X⊗Y)Λ)` for every pair of Pauli strings, labelled `"X:Y"`.
pub fn mc_process_reconstruction(
    l_true: &ProcessMatrix,
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
    model: NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarlo> {
    check_trials(trials)?;
    let records = expected_counts(l_true, inputs, measurements, model.shots)?;
    let in_duals = dual_basis(inputs)?;
    let meas_duals = dual_basis(measurements)?;
    let singles = pauli_strings(l_true.dim(), true)?;
    let pairs: Vec<(String, CMatrix)> = singles
        .iter()
        .flat_map(|(nx, x)| singles.iter().map(move |(ny, y)| (format!("{nx}:{ny}"), x.tensor(y))))
        .collect();
    let predicted = process_variances(&singles, &records, &in_duals, &meas_duals, model.shots);
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let counts = sample_trial(&records, model.kind, seed, t);
            let p = frequency_table(&counts, inputs, measurements)?;
            let l = sqpt_from_frequencies(&p, &in_duals, &meas_duals)?;
            Ok(TrialSample {
                coordinates: coordinates(&pairs, l.mat()),
                eigenvalues: l.eigenvalues()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let names = pairs.into_iter().map(|(n, _)| n).collect();
    Ok(summarize(samples, names, predicted, model, seed))
}

/// `σ²_XY = Σ_jm (p_jm/𝒩) [tr(X D̄_j*) tr(Y D_m)]²`, in the same order as
/// the `"X:Y"` coordinates.
fn process_variances(
    singles: &[(String, CMatrix)],
    records: &[CountRecord],
    in_duals: &DualBasis,
    meas_duals: &DualBasis,
    shots: u64,
) -> Vec<f64> {
    let n = shots as f64;
    let nm = meas_duals.duals().len();
    let probs: Vec<f64> = records.iter().map(|r| r.expected / n).collect();
    let mut out = Vec::with_capacity(singles.len() * singles.len());
    for (_, x) in singles {
        let cx: Vec<f64> = in_duals.duals().iter().map(|dj| x.hs_inner(&dj.conj()).re).collect();
        for (_, y) in singles {
            let cy: Vec<f64> = meas_duals.duals().iter().map(|dm| y.hs_inner(dm).re).collect();
            let mut v = 0.0;
            for (j, a) in cx.iter().enumerate() {
                for (m, b) in cy.iter().enumerate() {
                    v += probs[j * nm + m] / n * (a * b).powi(2);
                }
            }
            out.push(v);
        }
    }
    out
}

/// `trial,coord1,...` rows for external plotting.
pub fn write_coordinates_csv<W: Write>(w: W, names: &[String], trials: &[TrialSample]) -> Result<()> {
    write_rows(w, "trial", names.iter().cloned(), trials.iter().map(|t| &t.coordinates))
}

/// `trial,eig1..eigK` rows, eigenvalues in descending order.
pub fn write_eigenvalues_csv<W: Write>(w: W, trials: &[TrialSample]) -> Result<()> {
    let k = trials.first().map_or(0, |t| t.eigenvalues.len());
    write_rows(
        w,
        "trial",
        (1..=k).map(|i| format!("eig{i}")),
        trials.iter().map(|t| &t.eigenvalues),
    )
}

fn write_rows<'a, W: Write>(
    w: W,
    first: &str,
    header: impl Iterator<Item = String>,
    rows: impl Iterator<Item = &'a Vec<f64>>,
) -> Result<()> {
    let io = |e: csv::Error| Error::Parse(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let mut head = vec![first.to_string()];
    head.extend(header);
    wr.write_record(&head).map_err(io)?;
    for (i, row) in rows.enumerate() {
        let mut rec = vec![i.to_string()];
        rec.extend(row.iter().map(|x| format!("{x:.12e}")));
        wr.write_record(&rec).map_err(io)?;
    }
    wr.flush().map_err(|e| Error::Parse(e.to_string()))
}

/// Per-coordinate comparison of two Monte Carlo clouds, each coordinate
/// treated as an independent Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrimination {
    /// `|μ_a − μ_b| / √((σ_a² + σ_b²)/2)`.
    pub separations: Vec<f64>,
    /// Bhattacharyya coefficient of each coordinate pair.
    pub overlaps: Vec<f64>,
    /// Product of the per-coordinate coefficients.
    pub overlap: f64,
}

fn gaussian_overlap(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    let s = v1 + v2;
    if s <= 0.0 {
        return if m1 == m2 { 1.0 } else { 0.0 };
    }
    (2.0 * (v1 * v2).sqrt() / s).sqrt() * (-(m1 - m2).powi(2) / (4.0 * s)).exp()
}

pub fn discriminate(a: &MCReport, b: &MCReport) -> Result<Discrimination> {
    if a.coordinates != b.coordinates {
        return Err(Error::dim("reports use different coordinates"));
    }
    let mut separations = Vec::with_capacity(a.means.len());
    let mut overlaps = Vec::with_capacity(a.means.len());
    for k in 0..a.means.len() {
        let (m1, v1, m2, v2) = (a.means[k], a.variances[k], b.means[k], b.variances[k]);
        let pooled = ((v1 + v2) / 2.0).sqrt();
        separations.push(if pooled > 0.0 {
            (m1 - m2).abs() / pooled
        } else if m1 == m2 {
            0.0
        } else {
            f64::INFINITY
        });
        overlaps.push(gaussian_overlap(m1, v1, m2, v2));
    }
    Ok(Discrimination {
        overlap: overlaps.iter().product(),
        separations,
        overlaps,
    })
}

/// Observed counts and shot numbers in basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    pub counts: Vec<Vec<f64>>,
    pub shots: Vec<Vec<f64>>,
}

impl CountTable {
    /// Uses the sampled counts.
    pub fn observed(
        records: &[CountRecord],
        inputs: &TomographicBasis,
        measurements: &TomographicBasis,
    ) -> Result<Self> {
        Self::build(records, inputs, measurements, |r| r.sampled as f64)
    }

    /// Uses the expected counts, i.e. data without sampling noise.
    pub fn noiseless(
        records: &[CountRecord],
        inputs: &TomographicBasis,
        measurements: &TomographicBasis,
    ) -> Result<Self> {
        Self::build(records, inputs, measurements, |r| r.expected)
    }

    fn build(
        records: &[CountRecord],
        inputs: &TomographicBasis,
        measurements: &TomographicBasis,
        value: impl Fn(&CountRecord) -> f64,
    ) -> Result<Self> {
        let find = |i: &str, m: &str| {
            records
                .iter()
                .find(|r| r.input == i && r.measurement == m)
                .ok_or_else(|| Error::MissingCount {
                    input: i.to_string(),
                    measurement: m.to_string(),
                })
        };
        let mut counts = Vec::with_capacity(inputs.len());
        let mut shots = Vec::with_capacity(inputs.len());
        for i in inputs.names() {
            let row = measurements
                .names()
                .iter()
                .map(|m| find(i, m))
                .collect::<Result<Vec<_>>>()?;
            if row.iter().any(|r| r.shots == 0) {
                return Err(Error::InvalidParameter(format!("zero shots for input {i}")));
            }
            counts.push(row.iter().map(|r| value(r)).collect());
            shots.push(row.iter().map(|r| r.shots as f64).collect());
        }
        Ok(CountTable { counts, shots })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions {
            max_iterations: 2000,
            tolerance: 1e-13,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlEstimate {
    pub lambda: ProcessMatrix,
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
}

/// Precomputed `ρ_jᵀ ⊗ M_m`, so that `n_jm = 𝒩 tr(W_jm Λ)`.
struct Design {
    weights: Vec<CMatrix>,
    observed: Vec<f64>,
    shots: Vec<f64>,
    d: usize,
}

impl Design {
    fn new(table: &CountTable, inputs: &TomographicBasis, measurements: &TomographicBasis) -> Result<Self> {
        if inputs.dim() != measurements.dim() {
            return Err(Error::dim("input and measurement bases differ in dimension"));
        }
        if table.counts.len() != inputs.len() || table.counts.iter().any(|r| r.len() != measurements.len()) {
            return Err(Error::dim("count table does not match the bases"));
        }
        let mut weights = Vec::new();
        for rho in inputs.elements() {
            for m in measurements.elements() {
                weights.push(rho.mat().transpose().tensor(m.mat()));
            }
        }
        Ok(Design {
            weights,
            observed: table.counts.iter().flatten().copied().collect(),
            shots: table.shots.iter().flatten().copied().collect(),
            d: inputs.dim(),
        })
    }

    fn residuals(&self, l: &CMatrix) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.observed)
            .zip(&self.shots)
            .map(|((w, &obs), &n)| {
                let model = n * w.hs_inner(l).re;
                (obs - model) / model.max(1.0).sqrt()
            })
            .collect()
    }

    fn objective(&self, l: &CMatrix) -> f64 {
        self.residuals(l).iter().map(|r| r * r).sum()
    }
}

/// `Σ_jm (n^e_jm − n_jm(Λ))² / max(n_jm(Λ), 1)`.
pub fn ml_objective(
    table: &CountTable,
    l: &ProcessMatrix,
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
) -> Result<f64> {
    Ok(Design::new(table, inputs, measurements)?.objective(l.mat()))
}

/// `Λ = (Y^{-1/2}⊗I) A (Y^{-1/2}⊗I)` with `A = TT†` and `Y = tr_out A`.
/// Every `T` with invertible `Y` gives a CP, trace-preserving `Λ`.
fn lambda_from_factor(t: &CMatrix, d: usize) -> Option<CMatrix> {
    let a = t * &t.dagger();
    let y = a.partial_trace((d, d), Subsystem::First).ok()?;
    let eig = herm_eig(&y).ok()?;
    if eig.min() <= 1e-14 * eig.max().max(1e-300) {
        return None;
    }
    let k = eig.map(|v| 1.0 / v.sqrt()).tensor(&CMatrix::identity(d));
    Some(k.sandwich(&a).hermitian_part())
}

fn factor_from_params(x: &[f64], n: usize) -> CMatrix {
    let mut t = CMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        t[(i, i)] = C64::new(x[k], 0.0);
        k += 1;
        for j in 0..i {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn params_from_factor(t: &CMatrix) -> Vec<f64> {
    let n = t.rows();
    let mut x = Vec::with_capacity(n * n);
    for i in 0..n {
        x.push(t[(i, i)].re);
        for j in 0..i {
            x.push(t[(i, j)].re);
            x.push(t[(i, j)].im);
        }
    }
    x
}

/// Lower-triangular `L` with `LL† = A` for a positive definite `A`.
fn complex_cholesky(a: &CMatrix) -> Option<CMatrix> {
    let n = a.rows();
    let mut l = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: C64 = (0..j).map(|k| l[(i, k)] * l[(j, k)].conj()).sum();
            if i == j {
                let v = (a[(i, i)] - s).re;
                if v <= 0.0 {
                    return None;
                }
                l[(i, i)] = C64::new(v.sqrt(), 0.0);
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Nearest-looking CP-TP process: negative Choi eigenvalues are clipped and
/// the result is renormalized by the same congruence used in the ML fit.
pub fn project_to_cptp(l: &ProcessMatrix) -> Result<ProcessMatrix> {
    let d = l.dim();
    let eig = herm_eig(l.mat())?;
    let clipped = eig.map(|v| v.max(0.0));
    let y = clipped.partial_trace((d, d), Subsystem::First)?;
    let ye = herm_eig(&y)?;
    if ye.min() <= 1e-14 {
        return Err(Error::InvalidParameter(
            "clipped process has a singular input marginal".into(),
        ));
    }
    let k = ye.map(|v| 1.0 / v.sqrt()).tensor(&CMatrix::identity(d));
    ProcessMatrix::new(k.sandwich(&clipped).hermitian_part())
}

/// Maximum-likelihood process estimate constrained to CP and TP maps.
///
/// `init` must itself be CP and TP; by default the fit starts at the
/// completely depolarizing channel.
pub fn ml_estimate(
    table: &CountTable,
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
    init: Option<&ProcessMatrix>,
    opts: MlOptions,
) -> Result<MlEstimate> {
    let design = Design::new(table, inputs, measurements)?;
    let d = design.d;
    let n = d * d;
    let t0 = match init {
        None => CMatrix::identity(n).scale_real(1.0 / (d as f64).sqrt()),
        Some(l) => {
            let min = herm_eigenvalues(l.mat())?.last().copied().unwrap_or(0.0);
            if min < -1e-8 || l.tp_defect() > 1e-6 || l.dim() != d {
                return Err(Error::InvalidParameter(
                    "initial process must be CP and trace preserving".into(),
                ));
            }
            let shift = 1e-10 * l.mat().max_abs().max(1.0);
            let a = l.mat() + &CMatrix::identity(n).scale_real(shift);
            complex_cholesky(&a)
                .ok_or_else(|| Error::InvalidParameter("initial process is not positive definite".into()))?
        }
    };
    let x0 = params_from_factor(&t0);
    let start = lambda_from_factor(&t0, d)
        .ok_or_else(|| Error::InvalidParameter("initial process has a singular input marginal".into()))?;
    let initial_objective = design.objective(&start);
    let m = design.weights.len();
    let residuals = |x: &[f64]| match lambda_from_factor(&factor_from_params(x, n), d) {
        Some(l) => design.residuals(&l),
        None => vec![1e100; m],
    };
    let fit = levenberg_marquardt(
        residuals,
        &x0,
        LevenbergMarquardt {
            max_iterations: opts.max_iterations,
            tolerance: opts.tolerance,
            exact: 1e-24,
        },
    );
    let lambda = lambda_from_factor(&factor_from_params(&fit.x, n), d)
        .ok_or_else(|| Error::InvalidParameter("fit ended at a singular factor".into()))?;
    let estimate = MlEstimate {
        lambda: ProcessMatrix::new(lambda)?,
        objective: fit.value,
        initial_objective,
        iterations: fit.iterations,
    };
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
            best: Box::new(estimate),
        });
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::states::{from_bloch, BlochVector, Polarization};

    fn std_basis() -> TomographicBasis {
        TomographicBasis::standard(2).unwrap()
    }

    #[test]
    fn identity_counts() {
        let b = std_basis();
        let recs = expected_counts(&ProcessMatrix::identity(2), &b, &b, 1000).unwrap();
        assert_eq!(recs.len(), 16);
        let get = |i: &str, m: &str| {
            recs.iter()
                .find(|r| r.input == i && r.measurement == m)
                .unwrap()
                .expected
        };
        assert!((get("H", "H") - 1000.0).abs() < 1e-9);
        assert!(get("H", "V").abs() < 1e-9);
        assert!((get("H", "D") - 500.0).abs() < 1e-9);
    }

    #[test]
    fn unphysical_expectation_is_rejected() {
        let b = std_basis();
        let bad = ProcessMatrix::new(ProcessMatrix::identity(2).mat().scale_real(-1.0)).unwrap();
        assert!(matches!(
            expected_counts(&bad, &b, &b, 100),
            Err(Error::UnphysicalExpectation { .. })
        ));
    }

    #[test]
    fn zero_mean_gives_zero() {
        let mut g = random::rng(1);
        for kind in [NoiseKind::Poisson, NoiseKind::GaussianApprox] {
            for _ in 0..100 {
                assert_eq!(sample_count(&mut g, 0.0, kind), 0);
            }
        }
    }

    fn moments(mean: f64, kind: NoiseKind, draws: usize) -> (f64, f64) {
        let mut g = random::rng(11);
        let xs: Vec<f64> = (0..draws).map(|_| sample_count(&mut g, mean, kind) as f64).collect();
        let m = xs.iter().sum::<f64>() / draws as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (draws - 1) as f64;
        (m, v)
    }

    #[test]
    fn poisson_moments() {
        let (m, v) = moments(100.0, NoiseKind::Poisson, 100_000);
        assert!((m - 100.0).abs() < 1.0 && (v - 100.0).abs() < 5.0, "{m} {v}");
        let (m, v) = moments(4.0, NoiseKind::Poisson, 100_000);
        assert!((m - 4.0).abs() < 0.05 && (v - 4.0).abs() < 0.15, "{m} {v}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let b = std_basis();
        let recs = expected_counts(&ProcessMatrix::identity(2), &b, &b, 500).unwrap();
        let model = NoiseModel::poisson(500).unwrap();
        assert_eq!(sample_counts(&recs, model, 3), sample_counts(&recs, model, 3));
        assert_ne!(sample_counts(&recs, model, 3), sample_counts(&recs, model, 4));
    }

    #[test]
    fn state_cloud_centered_with_predicted_variance() {
        let b = std_basis();
        let model = NoiseModel::poisson(10_000).unwrap();
        let mc = mc_state_reconstruction(&Polarization::D.state(), &b, model, 4000, 5).unwrap();
        let r = &mc.report;
        let want = [1.0, 0.0, 0.0];
        for (k, w) in want.iter().enumerate() {
            let sigma = r.variances[k].sqrt();
            assert!((r.means[k] - w).abs() < 4.0 * sigma / (4000f64).sqrt() + 1e-12);
            assert!((r.variances[k] / r.predicted_variances[k] - 1.0).abs() < 0.1);
        }
        assert!((r.cp_fraction - 0.5).abs() < 0.1, "{}", r.cp_fraction);
    }

    #[test]
    fn mc_is_reproducible() {
        let b = std_basis();
        let model = NoiseModel::poisson(200).unwrap();
        let a = mc_state_reconstruction(&Polarization::H.state(), &b, model, 50, 9).unwrap();
        let c = mc_state_reconstruction(&Polarization::H.state(), &b, model, 50, 9).unwrap();
        assert_eq!(a.report, c.report);
    }

    #[test]
    fn process_cloud_variances() {
        let b = std_basis();
        let model = NoiseModel::poisson(1000).unwrap();
        let mc = mc_process_reconstruction(&ProcessMatrix::identity(2), &b, &b, model, 3000, 6).unwrap();
        assert_eq!(mc.report.coordinates.len(), 16);
        for (v, p) in mc.report.variances.iter().zip(&mc.report.predicted_variances) {
            if *p > 1e-12 {
                assert!((v / p - 1.0).abs() < 0.15, "{v} {p}");
            }
        }
        // Three zero Choi eigenvalues: noise almost never leaves all of
        // them non-negative.
        assert!(mc.report.cp_fraction < 0.01);

        let mut g = random::rng(3);
        let boundary = random::random_channel(&mut g, 2, 3).to_process();
        let mc = mc_process_reconstruction(&boundary, &b, &b, model, 2000, 6).unwrap();
        assert!(mc.report.cp_fraction > 0.1 && mc.report.cp_fraction < 0.9);
    }

    #[test]
    fn discrimination_sharpens_with_shots() {
        let b = std_basis();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let inside = from_bloch(BlochVector::from_array([s, 0.0, s]));
        let outside = from_bloch(BlochVector::from_array([1.2 * s, 0.0, 1.2 * s]));
        let overlap = |shots| {
            let m = NoiseModel::poisson(shots).unwrap();
            let a = mc_state_reconstruction(&inside, &b, m, 2000, 1).unwrap();
            let c = mc_state_reconstruction(&outside, &b, m, 2000, 2).unwrap();
            discriminate(&a.report, &c.report).unwrap().overlap
        };
        let o = [overlap(100), overlap(500), overlap(1000)];
        assert!(o[0] > o[1] && o[1] > o[2], "{o:?}");
        assert!(o[2] <= 0.1 * o[0]);
        let m = NoiseModel::poisson(100).unwrap();
        let a = mc_state_reconstruction(&inside, &b, m, 500, 1).unwrap();
        assert!((discriminate(&a.report, &a.report).unwrap().overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ml_recovers_identity() {
        let b = std_basis();
        let recs = expected_counts(&ProcessMatrix::identity(2), &b, &b, 10_000).unwrap();
        let table = CountTable::noiseless(&recs, &b, &b).unwrap();
        let est = ml_estimate(&table, &b, &b, None, MlOptions::default()).unwrap();
        assert!(est.objective <= 1e-10, "{}", est.objective);
        assert!(est.lambda.mat().approx_eq(ProcessMatrix::identity(2).mat(), 1e-5));
        assert!(est.objective <= est.initial_objective);
    }

    #[test]
    fn ml_recovers_random_channels() {
        let b = std_basis();
        let mut g = random::rng(12);
        for _ in 0..5 {
            let truth = random::random_channel(&mut g, 2, 4).to_process();
            let recs = expected_counts(&truth, &b, &b, 10_000).unwrap();
            let table = CountTable::noiseless(&recs, &b, &b).unwrap();
            let est = ml_estimate(&table, &b, &b, None, MlOptions::default()).unwrap();
            assert!(est.lambda.mat().max_diff(truth.mat()) < 1e-6);
        }
    }

    #[test]
    fn ml_output_is_cptp_on_non_cp_data() {
        let b = std_basis();
        let reference = CMatrix::from_rows(&[
            [
                C64::new(2.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(-1.0, -1.0),
                C64::new(1.0, 0.0),
            ],
            [
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 1.0),
            ],
            [
                C64::new(-1.0, 1.0),
                C64::new(1.0, 0.0),
                C64::new(2.0, 0.0),
                C64::new(0.0, 0.0),
            ],
            [
                C64::new(1.0, 0.0),
                C64::new(1.0, -1.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
            ],
        ])
        .scale_real(0.5);
        let lb = ProcessMatrix::new(reference).unwrap();
        let recs = expected_counts(&lb, &b, &b, 10_000).unwrap();
        let sampled = sample_counts(&recs, NoiseModel::poisson(10_000).unwrap(), 4);
        let table = CountTable::observed(&sampled, &b, &b).unwrap();
        let est = ml_estimate(&table, &b, &b, None, MlOptions::default()).unwrap();
        assert!(est.lambda.eigenvalues().unwrap()[3] >= -1e-8);
        assert!(est.lambda.tp_defect() <= 1e-6);
        assert!(est.objective > 1.0);
        let projected = project_to_cptp(&lb).unwrap();
        assert!(est.objective <= ml_objective(&table, &projected, &b, &b).unwrap());
    }

    #[test]
    fn ml_beats_projected_truth_on_noisy_data() {
        let b = std_basis();
        let mut g = random::rng(13);
        for trial in 0..10 {
            let truth = random::random_channel(&mut g, 2, 2).to_process();
            let recs = expected_counts(&truth, &b, &b, 1000).unwrap();
            let sampled = sample_counts(&recs, NoiseModel::poisson(1000).unwrap(), trial);
            let table = CountTable::observed(&sampled, &b, &b).unwrap();
            let est = ml_estimate(&table, &b, &b, None, MlOptions::default()).unwrap();
            let linear = crate::tomography::sqpt_from_counts(&sampled, &b, &b).unwrap();
            let reference = project_to_cptp(&linear).unwrap();
            let bound = ml_objective(&table, &reference, &b, &b).unwrap();
            assert!(est.objective <= bound + 1e-9, "{} > {bound}", est.objective);
        }
    }

    #[test]
    fn iteration_cap_reports_best() {
        let b = std_basis();
        let mut g = random::rng(14);
        let truth = random::random_channel(&mut g, 2, 3).to_process();
        let recs = expected_counts(&truth, &b, &b, 10_000).unwrap();
        let table = CountTable::noiseless(&recs, &b, &b).unwrap();
        let opts = MlOptions {
            max_iterations: 2,
            ..MlOptions::default()
        };
        match ml_estimate(&table, &b, &b, None, opts) {
            Err(Error::NotConverged { iterations, best }) => {
                assert_eq!(iterations, 2);
                assert!(best.objective <= best.initial_objective);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn coordinate_csv_layout() {
        let t = vec![TrialSample {
            coordinates: vec![0.5, -0.25],
            eigenvalues: vec![1.0, 0.0],
        }];
        let mut buf = Vec::new();
        write_eigenvalues_csv(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("trial,eig1,eig2\n0,"));
    }
}

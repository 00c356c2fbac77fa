//! Linear-inversion state and process tomography.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::channels::ProcessMatrix;
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::matrix::{herm_eig, pseudo_inverse, CMatrix, Subsystem};
use crate::states::{integer_sqrt, DensityMatrix, Polarization};

/// `d²` linearly independent states, used both as prepared inputs and as
/// projective measurement operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographicBasis {
    elements: Vec<DensityMatrix>,
    names: Vec<String>,
}

impl TomographicBasis {
    pub fn new(elements: Vec<DensityMatrix>, names: Vec<String>) -> Result<Self> {
        let d = elements.first().map(DensityMatrix::dim).unwrap_or(0);
        if d == 0 || elements.len() != d * d {
            return Err(Error::dim(format!(
                "a basis for dimension {d} needs {} elements, got {}",
                d * d,
                elements.len()
            )));
        }
        if names.len() != elements.len() {
            return Err(Error::dim("one name per basis element"));
        }
        if elements.iter().any(|e| e.dim() != d) {
            return Err(Error::dim("basis elements differ in dimension"));
        }
        let basis = TomographicBasis { elements, names };
        let rank = basis.frame_rank()?;
        if rank < d * d {
            return Err(Error::RankDeficient { rank, required: d * d });
        }
        Ok(basis)
    }

    /// `{H, V, D, R}` and its tensor powers (`d` = 2, 4, 8, ...).
    pub fn standard(d: usize) -> Result<Self> {
        let qubit = [Polarization::H, Polarization::V, Polarization::D, Polarization::R];
        let mut elements = vec![DensityMatrix::maximally_mixed(1)];
        let mut names = vec![String::new()];
        let mut dim = 1;
        while dim < d {
            let mut next_e = Vec::with_capacity(elements.len() * 4);
            let mut next_n = Vec::with_capacity(elements.len() * 4);
            for (e, n) in elements.iter().zip(&names) {
                for p in qubit {
                    next_e.push(e.tensor(&p.state()));
                    next_n.push(format!("{n}{p}"));
                }
            }
            elements = next_e;
            names = next_n;
            dim *= 2;
        }
        if dim != d || d < 2 {
            return Err(Error::InvalidParameter(format!(
                "standard basis needs d a power of two ≥ 2, got {d}"
            )));
        }
        TomographicBasis::new(elements, names)
    }

    pub fn elements(&self) -> &[DensityMatrix] {
        &self.elements
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Frame operator `ℳ = Σ_i |M_i⟩⟨M_i|`.
    pub fn frame_operator(&self) -> CMatrix {
        let n = self.len();
        let mut m = CMatrix::zeros(n, n);
        for e in &self.elements {
            let v = e.mat().vectorize();
            for r in 0..n {
                for s in 0..n {
                    m[(r, s)] += v[(r, 0)] * v[(s, 0)].conj();
                }
            }
        }
        m
    }

    fn frame_rank(&self) -> Result<usize> {
        let eig = herm_eig(&self.frame_operator())?;
        let tol = 1e-10 * eig.max().max(1.0);
        Ok(eig.values.iter().filter(|&&l| l > tol).count())
    }

    /// Probabilities `tr(ρ M_i)`.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements.iter().map(|m| m.mat().hs_inner(rho.mat()).re).collect()
    }
}

/// Matrices `D_i` with `tr(D_i† M_j) = δ_ij`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualBasis {
    duals: Vec<CMatrix>,
}

impl DualBasis {
    pub fn duals(&self) -> &[CMatrix] {
        &self.duals
    }

    pub fn dim(&self) -> usize {
        self.duals[0].rows()
    }
}

/// `|D_j⟩ = ℳ⁺|M_j⟩`.
pub fn dual_basis(b: &TomographicBasis) -> Result<DualBasis> {
    let frame = b.frame_operator();
    let inv = pseudo_inverse(&frame, 1e-10 * frame.max_abs().max(1.0))?;
    let d = b.dim();
    let duals = b
        .elements()
        .iter()
        .map(|m| CMatrix::materialize(&(&inv * &m.mat().vectorize()), d, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(DualBasis { duals })
}

/// `ρ = Σ_i p_i D_i`. No physicality repair is attempted.
pub fn reconstruct_state(probs: &[f64], duals: &DualBasis) -> Result<DensityMatrix> {
    if probs.len() != duals.duals.len() {
        return Err(Error::dim(format!(
            "{} probabilities for {} dual elements",
            probs.len(),
            duals.duals.len()
        )));
    }
    let d = duals.dim();
    let acc = probs
        .iter()
        .zip(&duals.duals)
        .fold(CMatrix::zeros(d, d), |acc, (&p, dm)| &acc + &dm.scale_real(p));
    DensityMatrix::new(acc)
}

/// `Λ = Σ_j D_j* ⊗ E(ρ_j)` from the outputs of each basis input.
pub fn sqpt(inputs: &TomographicBasis, outputs: &[DensityMatrix]) -> Result<ProcessMatrix> {
    if outputs.len() != inputs.len() {
        return Err(Error::dim(format!(
            "{} outputs for {} inputs",
            outputs.len(),
            inputs.len()
        )));
    }
    let d = inputs.dim();
    if let Some(bad) = outputs.iter().find(|o| o.dim() != d) {
        return Err(Error::dim(format!(
            "output of dimension {} for a dimension-{d} process",
            bad.dim()
        )));
    }
    let duals = dual_basis(inputs)?;
    let mut acc = CMatrix::zeros(d * d, d * d);
    for (dj, out) in duals.duals.iter().zip(outputs) {
        acc += &dj.conj().tensor(out.mat());
    }
    ProcessMatrix::new(acc)
}

/// One (input, measurement) cell of a counting experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub input: String,
    pub measurement: String,
    pub expected: f64,
    pub sampled: u64,
    pub shots: u64,
}

impl CountRecord {
    pub fn frequency(&self) -> f64 {
        self.sampled as f64 / self.shots as f64
    }
}

fn count_table(counts: &[CountRecord]) -> HashMap<(&str, &str), &CountRecord> {
    counts
        .iter()
        .map(|r| ((r.input.as_str(), r.measurement.as_str()), r))
        .collect()
}

/// Relative-frequency matrix `p[j][m] = n_jm / 𝒩` in basis order.
pub fn frequency_table(
    counts: &[CountRecord],
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
) -> Result<Vec<Vec<f64>>> {
    let table = count_table(counts);
    inputs
        .names()
        .iter()
        .map(|i| {
            measurements
                .names()
                .iter()
                .map(|m| {
                    let rec = table
                        .get(&(i.as_str(), m.as_str()))
                        .ok_or_else(|| Error::MissingCount {
                            input: i.clone(),
                            measurement: m.clone(),
                        })?;
                    if rec.shots == 0 {
                        return Err(Error::InvalidParameter(format!("zero shots for ({i}, {m})")));
                    }
                    Ok(rec.frequency())
                })
                .collect()
        })
        .collect()
}

/// `Λ = Σ_jm p_jm D̄_j* ⊗ D_m` with `D̄` dual to the inputs and `D` dual to
/// the measurements.
pub fn sqpt_from_counts(
    counts: &[CountRecord],
    inputs: &TomographicBasis,
    measurements: &TomographicBasis,
) -> Result<ProcessMatrix> {
    let p = frequency_table(counts, inputs, measurements)?;
    sqpt_from_frequencies(&p, &dual_basis(inputs)?, &dual_basis(measurements)?)
}

pub(crate) fn sqpt_from_frequencies(
    p: &[Vec<f64>],
    in_duals: &DualBasis,
    meas_duals: &DualBasis,
) -> Result<ProcessMatrix> {
    let d = in_duals.dim();
    if meas_duals.dim() != d {
        return Err(Error::dim("input and measurement bases differ in dimension"));
    }
    let mut acc = CMatrix::zeros(d * d, d * d);
    for (row, dj) in p.iter().zip(in_duals.duals()) {
        let out = row
            .iter()
            .zip(meas_duals.duals())
            .fold(CMatrix::zeros(d, d), |acc, (&pjm, dm)| &acc + &dm.scale_real(pjm));
        acc += &dj.conj().tensor(&out);
    }
    ProcessMatrix::new(acc)
}

/// Writes counts as CSV with header `input,measurement,shots,count`.
pub fn write_counts_csv<W: Write>(w: W, counts: &[CountRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["input", "measurement", "shots", "count"])
        .map_err(csv_err)?;
    for r in counts {
        wr.write_record([
            r.input.as_str(),
            r.measurement.as_str(),
            &r.shots.to_string(),
            &r.sampled.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Deserialize)]
struct CountRow {
    input: String,
    measurement: String,
    shots: u64,
    count: u64,
}

/// Reads the CSV written by [`write_counts_csv`]. Expected counts are not
/// stored in the file and come back as zero.
pub fn read_counts_csv<R: Read>(r: R) -> Result<Vec<CountRecord>> {
    csv::Reader::from_reader(r)
        .deserialize::<CountRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(CountRecord {
                input: row.input,
                measurement: row.measurement,
                expected: 0.0,
                sampled: row.count,
                shots: row.shots,
            })
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Ancilla-assisted process tomography.
///
/// `output_joint` is `(I⊗E)(input)` with the channel on the second factor.
/// Writing the input as `Σ_k (N_k⊗I)|φ⟩⟨φ|(N_k†⊗I)` with `|φ⟩ = Σ|ii⟩`, each
/// output block over the channel indices is `𝓜(X) = Σ_k N_k X N_k†` applied
/// to the matching block of `Λ`, so `Λ` is recovered by inverting `𝓜`.
pub fn aapt(output_joint: &DensityMatrix, input: &DensityMatrix) -> Result<ProcessMatrix> {
    let n = input.dim();
    let d = integer_sqrt(n).ok_or_else(|| Error::dim(format!("{n} is not d²")))?;
    if output_joint.dim() != n {
        return Err(Error::dim("input and output joint states differ in dimension"));
    }
    let eig = herm_eig(input.mat())?;
    let factors: Vec<CMatrix> = eig
        .values
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > Tolerances::DEFAULT.psd_clamp)
        .map(|(k, &l)| {
            let v = eig.vector(k);
            CMatrix::from_fn(d, d, |i, j| v[i * d + j] * l.sqrt())
        })
        .collect();

    let s = factors
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, f| &acc + &f.conj().tensor(f));
    let gram = &s.dagger() * &s;
    let geig = herm_eig(&gram)?;
    let tol = 1e-10 * geig.max().max(1e-300);
    let rank = geig.values.iter().filter(|&&l| l > tol).count();
    if rank < n {
        return Err(Error::NotFaithful(format!(
            "input must be entangled enough to span all {n} operator directions, rank {rank}"
        )));
    }
    let s_inv = &pseudo_inverse(&gram, tol)? * &s.dagger();

    let out = output_joint.mat();
    let mut lambda = CMatrix::zeros(n, n);
    for a in 0..d {
        for b in 0..d {
            let slice = CMatrix::from_fn(d, d, |i, j| out[(i * d + a, j * d + b)]);
            let x = CMatrix::materialize(&(&s_inv * &slice.vectorize()), d, d)?;
            for i in 0..d {
                for j in 0..d {
                    lambda[(i * d + a, j * d + b)] = x[(i, j)];
                }
            }
        }
    }
    ProcessMatrix::new(lambda)
}

/// `(I⊗E)(ρ)` for a joint state whose second factor enters the channel.
pub fn extend_on_second(l: &ProcessMatrix, joint: &DensityMatrix) -> Result<DensityMatrix> {
    let d = l.dim();
    let da = joint.dim() / d;
    if da * d != joint.dim() {
        return Err(Error::dim("joint dimension is not a multiple of the channel's"));
    }
    let m = joint.mat();
    let mut out = CMatrix::zeros(da * d, da * d);
    for i in 0..da {
        for j in 0..da {
            let block = l.apply_mat(&m.block(d, i, j));
            for a in 0..d {
                for b in 0..d {
                    out[(i * d + a, j * d + b)] = block[(a, b)];
                }
            }
        }
    }
    DensityMatrix::new(out)
}

/// `tr(ρ_A²)` of the first factor of a bipartite input.
pub fn faithfulness(rho_in: &DensityMatrix) -> Result<f64> {
    Ok(rho_in.reduce_square(Subsystem::First)?.purity())
}

/// Summary of a reconstructed process matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProcessReport {
    pub lambda: CMatrix,
    pub eigenvalues: Vec<f64>,
    pub cp: bool,
    pub tp_defect: f64,
}

impl ProcessReport {
    pub fn new(l: &ProcessMatrix) -> Result<Self> {
        let eigenvalues = l.eigenvalues()?;
        let cp = eigenvalues.last().is_none_or(|&m| m >= -Tolerances::DEFAULT.cp);
        Ok(ProcessReport {
            lambda: l.mat().clone(),
            eigenvalues,
            cp,
            tp_defect: l.tp_defect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::KrausSet;
    use crate::matrix::{c, pauli, ONE, ZERO};
    use crate::random;
    use crate::states::phi_plus;

    fn h(re: f64, im: f64) -> crate::matrix::C64 {
        c(re, im)
    }

    #[test]
    fn hvdr_frame_operator_and_inverse() {
        let b = TomographicBasis::standard(2).unwrap();
        let m = b.frame_operator();
        let expected = CMatrix::from_rows(&[
            [h(6.0, 0.0), h(1.0, -1.0), h(1.0, 1.0), h(2.0, 0.0)],
            [h(1.0, 1.0), h(2.0, 0.0), ZERO, h(1.0, 1.0)],
            [h(1.0, -1.0), ZERO, h(2.0, 0.0), h(1.0, -1.0)],
            [h(2.0, 0.0), h(1.0, -1.0), h(1.0, 1.0), h(6.0, 0.0)],
        ])
        .scale_real(0.25);
        assert!(m.approx_eq(&expected, 1e-12));
        let inv = pseudo_inverse(&m, 1e-12).unwrap();
        let oracle = CMatrix::from_rows(&[
            [h(1.0, 0.0), h(-0.5, 0.5), h(-0.5, -0.5), ZERO],
            [h(-0.5, -0.5), h(3.0, 0.0), h(0.0, 1.0), h(-0.5, -0.5)],
            [h(-0.5, 0.5), h(0.0, -1.0), h(3.0, 0.0), h(-0.5, 0.5)],
            [ZERO, h(-0.5, 0.5), h(-0.5, -0.5), h(1.0, 0.0)],
        ]);
        assert!(inv.approx_eq(&oracle, 1e-9));
        assert!((&m * &inv).approx_eq(&CMatrix::identity(4), 1e-9));
    }

    #[test]
    fn hvdr_duals() {
        let duals = dual_basis(&TomographicBasis::standard(2).unwrap()).unwrap();
        let dh = CMatrix::from_rows(&[[ONE, h(-0.5, 0.5)], [h(-0.5, -0.5), ZERO]]);
        let dv = CMatrix::from_rows(&[[ZERO, h(-0.5, 0.5)], [h(-0.5, -0.5), ONE]]);
        let want = [dh, dv, pauli(1), pauli(2)];
        for (got, w) in duals.duals().iter().zip(&want) {
            assert!(got.approx_eq(w, 1e-9), "{got:?} vs {w:?}");
        }
    }

    #[test]
    fn duality_relation() {
        for d in [2, 4] {
            let b = TomographicBasis::standard(d).unwrap();
            let duals = dual_basis(&b).unwrap();
            for (i, di) in duals.duals().iter().enumerate() {
                for (j, mj) in b.elements().iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((di.hs_inner(mj.mat()) - c(want, 0.0)).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn pauli_basis_is_self_dual() {
        // σ_μ/√2 are not states, but the frame algebra only needs matrices.
        let elements: Vec<DensityMatrix> = (0..4)
            .map(|k| DensityMatrix::new(pauli(k).scale_real(0.5f64.sqrt())).unwrap())
            .collect();
        let names = (0..4).map(|k| format!("s{k}")).collect();
        let b = TomographicBasis::new(elements, names).unwrap();
        let duals = dual_basis(&b).unwrap();
        for (dm, e) in duals.duals().iter().zip(b.elements()) {
            assert!(dm.approx_eq(e.mat(), 1e-12));
        }
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let p = [Polarization::H, Polarization::V, Polarization::D, Polarization::A];
        let els = p.iter().map(|x| x.state()).collect();
        let names = p.iter().map(|x| x.to_string()).collect();
        assert!(matches!(
            TomographicBasis::new(els, names),
            Err(Error::RankDeficient { rank: 3, required: 4 })
        ));
    }

    #[test]
    fn state_reconstruction_examples() {
        let b = TomographicBasis::standard(2).unwrap();
        let duals = dual_basis(&b).unwrap();
        let rho = Polarization::D.state();
        let back = reconstruct_state(&b.probabilities(&rho), &duals).unwrap();
        assert!(back.mat().approx_eq(rho.mat(), 1e-10));
        let hv = reconstruct_state(&[1.0, 0.0, 0.5, 0.5], &duals).unwrap();
        assert!(hv.mat().approx_eq(Polarization::H.state().mat(), 1e-12));
        let off = reconstruct_state(&[1.0, 0.0, 0.9, 0.5], &duals).unwrap();
        assert!(!off.validate(1e-9).valid);
        assert!(reconstruct_state(&[1.0, 0.0], &duals).is_err());
    }

    #[test]
    fn dual_of_dual_frame() {
        // Duals of the dual frame return the original elements.
        let b = TomographicBasis::standard(2).unwrap();
        let duals = dual_basis(&b).unwrap();
        let db = TomographicBasis::new(
            duals
                .duals()
                .iter()
                .map(|m| DensityMatrix::new(m.clone()).unwrap())
                .collect(),
            b.names().to_vec(),
        )
        .unwrap();
        let back = dual_basis(&db).unwrap();
        for (x, y) in back.duals().iter().zip(b.elements()) {
            assert!(x.approx_eq(y.mat(), 1e-8));
        }
    }

    #[test]
    fn sqpt_examples() {
        let b = TomographicBasis::standard(2).unwrap();
        let l = sqpt(&b, b.elements()).unwrap();
        assert!(l.mat().approx_eq(ProcessMatrix::identity(2).mat(), 1e-12));
        let e = l.eigenvalues().unwrap();
        assert!((e[0] - 2.0).abs() < 1e-12 && e[1].abs() < 1e-12);

        let flip = KrausSet::unitary(pauli(1)).unwrap();
        let outs: Vec<_> = b.elements().iter().map(|r| flip.apply(r).unwrap()).collect();
        let l = sqpt(&b, &outs).unwrap();
        assert!(l.mat().approx_eq(flip.to_process().mat(), 1e-12));
        assert!(l.is_cp(1e-9).unwrap().is_cp && l.is_tp(1e-9).is_tp);

        let mut g = random::rng(10);
        for _ in 0..20 {
            let k = random::random_channel(&mut g, 2, 3);
            let outs: Vec<_> = b.elements().iter().map(|r| k.apply(r).unwrap()).collect();
            let l = sqpt(&b, &outs).unwrap();
            assert!(l.mat().approx_eq(k.to_process().mat(), 1e-9));
            for (r, o) in b.elements().iter().zip(&outs) {
                assert!(l.apply(r).unwrap().mat().approx_eq(o.mat(), 1e-9));
            }
        }
        assert!(sqpt(&b, &b.elements()[..3]).is_err());
    }

    #[test]
    fn sqpt_two_qubit_unitary() {
        let b = TomographicBasis::standard(4).unwrap();
        let mut g = random::rng(11);
        let u = random::random_unitary(&mut g, 4);
        let k = KrausSet::unitary(u.clone()).unwrap();
        let outs: Vec<_> = b.elements().iter().map(|r| k.apply(r).unwrap()).collect();
        let l = sqpt(&b, &outs).unwrap();
        let rho = random::random_state(&mut g, 4);
        assert!(l.apply(&rho).unwrap().mat().approx_eq(&u.sandwich(rho.mat()), 1e-9));
    }

    fn exact_counts(l: &ProcessMatrix, b: &TomographicBasis, shots: u64) -> Vec<CountRecord> {
        let mut out = Vec::new();
        for (ri, ni) in b.elements().iter().zip(b.names()) {
            let o = l.apply(ri).unwrap();
            for (m, nm) in b.elements().iter().zip(b.names()) {
                let p = m.mat().hs_inner(o.mat()).re;
                out.push(CountRecord {
                    input: ni.clone(),
                    measurement: nm.clone(),
                    expected: p * shots as f64,
                    sampled: (p * shots as f64).round() as u64,
                    shots,
                });
            }
        }
        out
    }

    #[test]
    fn sqpt_from_exact_counts() {
        let b = TomographicBasis::standard(2).unwrap();
        let id = ProcessMatrix::identity(2);
        let l = sqpt_from_counts(&exact_counts(&id, &b, 1000), &b, &b).unwrap();
        assert!(l.mat().approx_eq(id.mat(), 1e-9));

        let tau = Polarization::D.state();
        let cnot = crate::optics::cnot_from_cz(crate::optics::Slot::First);
        let truth = ProcessMatrix::from_fixed_environment(&tau, &cnot).unwrap();
        // counts that are whole numbers exactly at 𝒩 = 4
        let l = sqpt_from_counts(&exact_counts(&truth, &b, 4), &b, &b).unwrap();
        assert!(l.mat().approx_eq(truth.mat(), 1e-9));
        assert!(l.is_cp(1e-9).unwrap().is_cp);

        let mut counts = exact_counts(&id, &b, 10);
        counts.retain(|r| !(r.input == "D" && r.measurement == "R"));
        match sqpt_from_counts(&counts, &b, &b) {
            Err(Error::MissingCount { input, measurement }) => {
                assert_eq!((input.as_str(), measurement.as_str()), ("D", "R"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn counts_csv_round_trip() {
        let b = TomographicBasis::standard(2).unwrap();
        let counts = exact_counts(&ProcessMatrix::identity(2), &b, 100);
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &counts).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("input,measurement,shots,count\nH,H,100,100\n"));
        let back = read_counts_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 16);
        assert_eq!(back[2].sampled, counts[2].sampled);
        assert!(read_counts_csv("input,measurement,shots,count\nH,H,x,1\n".as_bytes()).is_err());
    }

    #[test]
    fn aapt_examples() {
        let id = ProcessMatrix::identity(2);
        let out = extend_on_second(&id, &phi_plus()).unwrap();
        let l = aapt(&out, &phi_plus()).unwrap();
        assert!(l.mat().approx_eq(id.mat(), 1e-10));

        let prod = Polarization::H.state().tensor(&Polarization::D.state());
        let out = extend_on_second(&id, &prod).unwrap();
        assert!(matches!(aapt(&out, &prod), Err(Error::NotFaithful(_))));
    }

    #[test]
    fn aapt_general_inputs_match_sqpt() {
        let mut g = random::rng(12);
        let b = TomographicBasis::standard(2).unwrap();
        for _ in 0..20 {
            let k = random::random_channel(&mut g, 2, 2);
            let truth = k.to_process();
            // random pure entangled input
            let psi = random::random_ket(&mut g, 4);
            let input = DensityMatrix::from_ket(&psi);
            let l = aapt(&extend_on_second(&truth, &input).unwrap(), &input).unwrap();
            assert!(l.mat().approx_eq(truth.mat(), 1e-8));
            // mixed full-rank input
            let mixed = random::random_mixed_state(&mut g, 4, 4);
            let l = aapt(&extend_on_second(&truth, &mixed).unwrap(), &mixed).unwrap();
            assert!(l.mat().approx_eq(truth.mat(), 1e-8));
            // agreement with SQPT
            let outs: Vec<_> = b.elements().iter().map(|r| k.apply(r).unwrap()).collect();
            assert!(sqpt(&b, &outs).unwrap().mat().approx_eq(l.mat(), 1e-8));
        }
    }

    #[test]
    fn separable_mixed_input_can_be_faithful() {
        // Σ_k Π_k ⊗ ρ_k over the standard basis: separable, yet 𝓜 is invertible.
        let b = TomographicBasis::standard(2).unwrap();
        let input = b
            .elements()
            .iter()
            .zip(b.elements().iter().rev())
            .fold(CMatrix::zeros(4, 4), |acc, (x, y)| {
                &acc + &x.tensor(y).mat().scale_real(0.25)
            });
        let input = DensityMatrix::new(input).unwrap();
        let k = random::random_channel(&mut random::rng(13), 2, 2);
        let l = aapt(&extend_on_second(&k.to_process(), &input).unwrap(), &input).unwrap();
        assert!(l.mat().approx_eq(k.to_process().mat(), 1e-8));
    }

    #[test]
    fn faithfulness_examples() {
        assert!((faithfulness(&phi_plus()).unwrap() - 0.5).abs() < 1e-12);
        let prod = Polarization::H.state().tensor(&Polarization::R.state());
        assert!((faithfulness(&prod).unwrap() - 1.0).abs() < 1e-12);
        let psi = random::random_ket(&mut random::rng(14), 4);
        let s = crate::states::schmidt(&psi, (2, 2)).unwrap();
        let direct: f64 = s.coeffs.iter().map(|l| l.powi(4)).sum();
        assert!((faithfulness(&DensityMatrix::from_ket(&psi)).unwrap() - direct).abs() < 1e-9);
    }
}

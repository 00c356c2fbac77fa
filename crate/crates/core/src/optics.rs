//! Polarization optics: wave plates, polarizers, the controlled-Z gate and
//! the two wave-plate preparation schemes used for tomography of a CNOT.

use serde::{Deserialize, Serialize};

use crate::channels::{system_env_evolve, ProcessMatrix};
use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::matrix::{c, inner, vec_norm, CMatrix, C64, I, ONE, ZERO};
use crate::states::{DensityMatrix, Polarization};
use crate::tomography::{sqpt, TomographicBasis};

/// Which qubit of a two-qubit register a gate targets.
pub use crate::matrix::Subsystem as Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlateKind {
    Half,
    Quarter,
}

/// A wave plate with its fast axis `theta` radians from horizontal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePlate {
    pub kind: PlateKind,
    pub theta: f64,
}

impl WavePlate {
    pub fn matrix(self) -> CMatrix {
        match self.kind {
            PlateKind::Half => hwp(self.theta),
            PlateKind::Quarter => qwp(self.theta),
        }
    }
}

/// Linear polarizer transmitting light polarized at `theta` radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Polarizer {
    pub theta: f64,
}

impl Polarizer {
    pub fn matrix(self) -> CMatrix {
        polarizer(self.theta)
    }

    /// The state the polarizer transmits unchanged.
    pub fn pass_state(self) -> Vec<C64> {
        vec![c(self.theta.cos(), 0.0), c(self.theta.sin(), 0.0)]
    }
}

/// Half-wave plate: `i [[cos 2θ, sin 2θ], [sin 2θ, −cos 2θ]]`.
pub fn hwp(theta: f64) -> CMatrix {
    let (s, co) = (2.0 * theta).sin_cos();
    CMatrix::from_real_rows(&[[co, s], [s, -co]]).scale(I)
}

/// Quarter-wave plate.
pub fn qwp(theta: f64) -> CMatrix {
    let (s, co) = (2.0 * theta).sin_cos();
    CMatrix::from_rows(&[[c(1.0, co), c(0.0, s)], [c(0.0, s), c(1.0, -co)]]).scale_real(std::f64::consts::FRAC_1_SQRT_2)
}

pub fn polarizer(theta: f64) -> CMatrix {
    let (s, co) = (2.0 * theta).sin_cos();
    CMatrix::from_real_rows(&[[1.0 + co, s], [s, 1.0 - co]]).scale_real(0.5)
}

pub fn hadamard() -> CMatrix {
    CMatrix::from_real_rows(&[[1.0, 1.0], [1.0, -1.0]]).scale_real(std::f64::consts::FRAC_1_SQRT_2)
}

pub fn cz() -> CMatrix {
    CMatrix::diag_real(&[1.0, 1.0, 1.0, -1.0])
}

/// CNOT built as `H_t · CZ · H_t` with Hadamards on the `target` qubit.
/// Entries are snapped to exact 0/±1, which they equal up to rounding.
pub fn cnot_from_cz(target: Slot) -> CMatrix {
    let h = hadamard();
    let id = CMatrix::identity(2);
    let ht = match target {
        Slot::First => h.tensor(&id),
        Slot::Second => id.tensor(&h),
    };
    let raw = &(&ht * &cz()) * &ht;
    CMatrix::from_fn(4, 4, |i, j| {
        let z = raw[(i, j)];
        c(z.re.round(), z.im.round())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Polarizer fixed at horizontal; wave plates rotate into each target.
    I,
    /// Polarizer set to each target where possible; R reached by rotation.
    II,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Method::I),
            "II" | "2" => Ok(Method::II),
            other => Err(Error::Parse(format!("unknown method `{other}`"))),
        }
    }
}

/// One row of the preparation table. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepSetting {
    pub target: Polarization,
    pub theta_p: f64,
    pub theta_h: f64,
    pub theta_q: f64,
    /// Tabulated relative phase, kept for reference only.
    pub z_shift: f64,
    pub method: Method,
}

const fn row(target: Polarization, p: f64, h: f64, q: f64, z: f64, method: Method) -> PrepSetting {
    PrepSetting {
        target,
        theta_p: p,
        theta_h: h,
        theta_q: q,
        z_shift: z,
        method,
    }
}

pub const METHOD_I: [PrepSetting; 4] = [
    row(Polarization::H, 0.0, 0.0, 0.0, 135.0, Method::I),
    row(Polarization::V, 0.0, 45.0, 0.0, 45.0, Method::I),
    row(Polarization::D, 0.0, 22.5, 45.0, 135.0, Method::I),
    row(Polarization::R, 0.0, 45.0, -45.0, 0.0, Method::I),
];

/// Method II settings. The D row uses plates at 45°, which leave `|D⟩`
/// unchanged; see [`METHOD_II_TABULATED_D`] for the 22.5° variant.
pub const METHOD_II: [PrepSetting; 4] = [
    row(Polarization::H, 0.0, 0.0, 0.0, 0.0, Method::II),
    row(Polarization::V, 90.0, 0.0, 0.0, 225.0, Method::II),
    row(Polarization::D, 45.0, 45.0, 45.0, 135.0, Method::II),
    row(Polarization::R, 0.0, 45.0, -45.0, 0.0, Method::II),
];

/// D row with both plates at 22.5°. It turns `|D⟩` into a state with
/// fidelity 3/4 to `|D⟩`, so it is not used by [`settings`].
pub const METHOD_II_TABULATED_D: PrepSetting = row(Polarization::D, 45.0, 22.5, 22.5, 135.0, Method::II);

pub fn settings(method: Method) -> [PrepSetting; 4] {
    match method {
        Method::I => METHOD_I,
        Method::II => METHOD_II,
    }
}

/// Result of sending light through polarizer, HWP and QWP in that order.
#[derive(Debug, Clone)]
pub struct OpticalPreparation {
    /// `qwp · hwp · polarizer`, a rank-one trace-decreasing operator.
    pub op: CMatrix,
    pub state: DensityMatrix,
    pub target_state: DensityMatrix,
    pub fidelity: f64,
    /// Phase of `⟨target|out⟩` in degrees within `[0, 360)`, where `out`
    /// is the polarizer's pass state sent through both plates.
    pub realized_phase: f64,
}

pub fn element_chain(s: &PrepSetting) -> CMatrix {
    let q = qwp(s.theta_q.to_radians());
    let h = hwp(s.theta_h.to_radians());
    let p = polarizer(s.theta_p.to_radians());
    &(&q * &h) * &p
}

pub fn prep_from_settings(s: &PrepSetting) -> Result<OpticalPreparation> {
    let op = element_chain(s);
    let pass = Polarizer {
        theta: s.theta_p.to_radians(),
    }
    .pass_state();
    let out = op.apply(&pass);
    let norm = vec_norm(&out);
    if norm * norm < Tolerances::DEFAULT.preparation_floor {
        return Err(Error::PreparationFailed {
            target: s.target.to_string(),
            probability: norm * norm,
        });
    }
    let out: Vec<C64> = out.iter().map(|z| z / norm).collect();
    let amp = inner(&s.target.ket(), &out);
    let phase = amp.arg().to_degrees().rem_euclid(360.0);
    Ok(OpticalPreparation {
        op,
        state: DensityMatrix::from_ket(&out),
        target_state: s.target.state(),
        fidelity: amp.norm_sqr(),
        realized_phase: if (phase - 360.0).abs() < 1e-9 { 0.0 } else { phase },
    })
}

/// Per-target details of an optics run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpticsInput {
    pub label: String,
    pub theta_p: f64,
    pub theta_h: f64,
    pub theta_q: f64,
    pub probability: f64,
    pub environment: CMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpticsReport {
    pub method: Method,
    pub lambda: ProcessMatrix,
    pub eigenvalues: Vec<f64>,
    pub cp: bool,
    pub tp_defect: f64,
    pub inputs: Vec<OpticsInput>,
}

/// Applies each setting's element chain to the first qubit of `gamma0`,
/// post-selects on transmission, runs the joint state through a CNOT
/// targeting that qubit, and reconstructs the process by SQPT.
pub fn run_optics_experiment(gamma0: &DensityMatrix, method: Method) -> Result<OpticsReport> {
    if gamma0.dim() != 4 {
        return Err(Error::dim("the optics experiment needs a two-qubit state"));
    }
    let table = settings(method);
    let cnot = cnot_from_cz(Slot::First);
    let id = CMatrix::identity(2);
    let mut outputs = Vec::with_capacity(4);
    let mut inputs = Vec::with_capacity(4);
    for s in &table {
        let k = element_chain(s).tensor(&id);
        let joint = k.sandwich(gamma0.mat());
        let prob = joint.trace().re;
        if prob < Tolerances::DEFAULT.preparation_floor {
            return Err(Error::PreparationFailed {
                target: s.target.to_string(),
                probability: prob,
            });
        }
        let joint = DensityMatrix::new(joint.scale_real(1.0 / prob))?;
        let env = joint.reduce((2, 2), Slot::Second)?;
        outputs.push(system_env_evolve(&joint, &cnot, (2, 2))?);
        inputs.push(OpticsInput {
            label: s.target.to_string(),
            theta_p: s.theta_p,
            theta_h: s.theta_h,
            theta_q: s.theta_q,
            probability: prob,
            environment: env.into_mat(),
        });
    }
    let basis = TomographicBasis::new(
        table.iter().map(|s| s.target.state()).collect(),
        table.iter().map(|s| s.target.to_string()).collect(),
    )?;
    let lambda = sqpt(&basis, &outputs)?;
    let eigenvalues = lambda.eigenvalues()?;
    let cp = eigenvalues.iter().all(|&e| e >= -Tolerances::DEFAULT.cp);
    Ok(OpticsReport {
        method,
        tp_defect: lambda.tp_defect(),
        lambda,
        eigenvalues,
        cp,
        inputs,
    })
}

/// The CNOT with the first qubit as target, written out entry by entry.
pub fn cnot_first_target() -> CMatrix {
    CMatrix::from_rows(&[
        [ONE, ZERO, ZERO, ZERO],
        [ZERO, ZERO, ZERO, ONE],
        [ZERO, ZERO, ONE, ZERO],
        [ZERO, ONE, ZERO, ZERO],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preparation::{run_sqpt_experiment, PreparationProcedure};
    use crate::random;
    use crate::states::phi_plus;
    use proptest::prelude::*;

    #[test]
    fn plate_formulas_at_zero() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let want = CMatrix::from_rows(&[[c(s, s), ZERO], [ZERO, c(s, -s)]]);
        assert!(qwp(0.0).approx_eq(&want, 1e-15));
        assert!(polarizer(0.0).approx_eq(&CMatrix::diag_real(&[1.0, 0.0]), 1e-15));
        assert!(polarizer(std::f64::consts::FRAC_PI_2).approx_eq(&CMatrix::diag_real(&[0.0, 1.0]), 1e-15));
    }

    #[test]
    fn hwp_at_22_5_is_hadamard_up_to_phase() {
        let h = hwp(22.5f64.to_radians());
        assert!(h.approx_eq(&hadamard().scale(I), 1e-12));
    }

    #[test]
    fn cz_and_cnot() {
        assert!((&cz() * &cz()).approx_eq(&CMatrix::identity(4), 0.0));
        let cn = cnot_from_cz(Slot::First);
        assert_eq!(cn, cnot_first_target());
        // |01⟩ → |11⟩ and |11⟩ → |01⟩ (column read-off)
        assert_eq!(cn[(3, 1)], ONE);
        assert_eq!(cn[(1, 3)], ONE);
        let other = cnot_from_cz(Slot::Second);
        assert_eq!(other[(3, 2)], ONE);
        assert_eq!(other[(2, 3)], ONE);
    }

    #[test]
    fn table_settings_reach_targets() {
        for s in METHOD_I.iter().chain(&METHOD_II) {
            let p = prep_from_settings(s).unwrap();
            assert!(p.fidelity > 1.0 - 1e-9, "{s:?} fidelity {}", p.fidelity);
            assert!(p.state.mat().approx_eq(p.target_state.mat(), 1e-9));
        }
    }

    #[test]
    fn tabulated_d_row_misses_target() {
        let p = prep_from_settings(&METHOD_II_TABULATED_D).unwrap();
        assert!((p.fidelity - 0.75).abs() < 1e-12);
    }

    #[test]
    fn realized_phases() {
        let phases: Vec<f64> = METHOD_I
            .iter()
            .chain(&METHOD_II)
            .map(|s| prep_from_settings(s).unwrap().realized_phase)
            .collect();
        let want = [135.0, 45.0, 135.0, 0.0, 135.0, 225.0];
        for (got, w) in phases.iter().zip(want) {
            assert!((got - w).abs() < 1e-9, "{phases:?}");
        }
    }

    #[test]
    fn method_i_on_bell_is_identity() {
        let r = run_optics_experiment(&phi_plus(), Method::I).unwrap();
        assert!(r.cp);
        let want = [2.0, 0.0, 0.0, 0.0];
        for (a, b) in r.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn method_ii_on_bell_is_not_cp() {
        let r = run_optics_experiment(&phi_plus(), Method::II).unwrap();
        let reference = CMatrix::from_rows(&[
            [c(2.0, 0.0), ZERO, c(-1.0, -1.0), c(2.0, 0.0)],
            [ZERO, ZERO, ZERO, c(1.0, 1.0)],
            [c(-1.0, 1.0), ZERO, c(2.0, 0.0), ZERO],
            [c(2.0, 0.0), c(1.0, -1.0), ZERO, ZERO],
        ])
        .scale_real(0.5);
        assert!(r.lambda.mat().approx_eq(&reference, 1e-9));
        let want = [2.039, 0.863, 0.137, -1.039];
        for (a, b) in r.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 5e-3, "{:?}", r.eigenvalues);
        }
        assert!(!r.cp);
    }

    #[test]
    fn product_inputs_stay_cp() {
        let mut g = random::rng(8);
        for _ in 0..10 {
            let gamma = random::random_state(&mut g, 2).tensor(&random::random_state(&mut g, 2));
            for m in [Method::I, Method::II] {
                assert!(run_optics_experiment(&gamma, m).unwrap().cp);
            }
        }
    }

    #[test]
    fn blocked_polarizer_fails() {
        let gamma = Polarization::H.state().tensor(&Polarization::H.state());
        match run_optics_experiment(&gamma, Method::II) {
            Err(Error::PreparationFailed { target, .. }) => assert_eq!(target, "V"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn method_i_matches_measure_rotate() {
        let mut g = random::rng(9);
        let cnot = cnot_from_cz(Slot::First);
        for _ in 0..50 {
            let gamma = random::random_state(&mut g, 4);
            let a = run_optics_experiment(&gamma, Method::I).unwrap();
            let b = run_sqpt_experiment(&gamma, &cnot, &PreparationProcedure::measure_rotate()).unwrap();
            assert!(a.lambda.mat().approx_eq(b.lambda.mat(), 1e-9));
        }
    }

    #[test]
    fn method_ii_matches_measure_only_environments() {
        let mut g = random::rng(10);
        for _ in 0..50 {
            let gamma = random::random_state(&mut g, 4);
            let a = run_optics_experiment(&gamma, Method::II).unwrap();
            let b = run_sqpt_experiment(
                &gamma,
                &cnot_from_cz(Slot::First),
                &PreparationProcedure::measure_only(),
            )
            .unwrap();
            for j in 0..3 {
                assert!(a.inputs[j].environment.approx_eq(&b.inputs[j].environment, 1e-10));
            }
            let hybrid =
                run_sqpt_experiment(&gamma, &cnot_from_cz(Slot::First), &PreparationProcedure::hybrid()).unwrap();
            assert!(a.lambda.mat().approx_eq(hybrid.lambda.mat(), 1e-9));
        }
    }

    proptest! {
        #[test]
        fn plates_unitary_polarizer_idempotent(deg in -180.0f64..180.0) {
            let t = deg.to_radians();
            prop_assert!(hwp(t).unitarity_error() <= 1e-12);
            prop_assert!(qwp(t).unitarity_error() <= 1e-12);
            let p = polarizer(t);
            prop_assert!((&p * &p).max_diff(&p) <= 1e-12);
            prop_assert!((p.trace().re - 1.0).abs() <= 1e-12);
        }
    }
}

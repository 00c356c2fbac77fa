//! Entropies, mutual information and quantum discord for two qubits.
//!
//! Discord is minimized over rank-one orthogonal projective measurements
//! `|ψ₀⟩ = cosθ|0⟩ + e^{iφ} sinθ|1⟩`, `|ψ₁⟩ = sinθ|0⟩ − e^{iφ} cosθ|1⟩`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::matrix::{c, herm_eigenvalues, CMatrix, Subsystem, C64};
use crate::optimize::{nelder_mead, NelderMead};
use crate::states::DensityMatrix;

/// `−Σ λ log₂ λ`, with eigenvalues in `[−1e-7, 0)` treated as zero.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_of(rho.mat())
}

fn entropy_of(m: &CMatrix) -> Result<f64> {
    let clamp = Tolerances::DEFAULT.entropy_clamp;
    herm_eigenvalues(m)?.into_iter().try_fold(0.0, |acc, l| {
        if l < -clamp {
            Err(Error::NegativeEigenvalue(l))
        } else if l <= 0.0 {
            Ok(acc)
        } else {
            Ok(acc - l * l.log2())
        }
    })
}

/// `I(A:B) = S(ρ_A) + S(ρ_B) − S(ρ_AB)` for a two-qubit state.
pub fn mutual_info(rho_ab: &DensityMatrix) -> Result<f64> {
    let a = rho_ab.reduce((2, 2), Subsystem::First)?;
    let b = rho_ab.reduce((2, 2), Subsystem::Second)?;
    Ok(von_neumann_entropy(&a)? + von_neumann_entropy(&b)? - von_neumann_entropy(rho_ab)?)
}

/// A pair of orthogonal qubit projectors, parameterized by two angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorAngles {
    pub theta: f64,
    pub phi: f64,
}

impl ProjectorAngles {
    pub fn new(theta: f64, phi: f64) -> Self {
        ProjectorAngles { theta, phi }.normalized()
    }

    /// Maps any angle pair to an equivalent one with `θ ∈ [0, π/2]` and
    /// `φ ∈ [0, 2π)`, describing the same projector set.
    pub fn normalized(self) -> Self {
        let (mut theta, mut phi) = (self.theta, self.phi);
        if theta < 0.0 {
            theta = -theta;
            phi += PI;
        }
        theta = theta.rem_euclid(PI);
        if theta > FRAC_PI_2 {
            // shifting θ by π/2 swaps the two outcomes up to phases
            theta -= FRAC_PI_2;
        }
        ProjectorAngles {
            theta,
            phi: phi.rem_euclid(TAU),
        }
    }

    pub fn kets(self) -> [[C64; 2]; 2] {
        let (s, co) = self.theta.sin_cos();
        let e = C64::from_polar(1.0, self.phi);
        [[c(co, 0.0), e * s], [c(s, 0.0), -e * co]]
    }

    pub fn projectors(self) -> [CMatrix; 2] {
        let [a, b] = self.kets();
        [CMatrix::outer(&a), CMatrix::outer(&b)]
    }
}

/// `A:B` measures subsystem B; `B:A` measures subsystem A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "A:B")]
    AB,
    #[serde(rename = "B:A")]
    BA,
}

impl Direction {
    pub fn measured(self) -> Subsystem {
        match self {
            Direction::AB => Subsystem::Second,
            Direction::BA => Subsystem::First,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AB => "A:B",
            Direction::BA => "B:A",
        })
    }
}

/// Unnormalized state of the unmeasured qubit after outcome `ψ` on the
/// measured one.
fn conditional(rho: &CMatrix, psi: &[C64; 2], measured: Subsystem) -> CMatrix {
    CMatrix::from_fn(2, 2, |m, n| {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..2 {
            for l in 0..2 {
                let (r, s) = match measured {
                    Subsystem::Second => (m * 2 + k, n * 2 + l),
                    Subsystem::First => (k * 2 + m, l * 2 + n),
                };
                acc += psi[k].conj() * rho[(r, s)] * psi[l];
            }
        }
        acc
    })
}

/// `Σ_i p_i S(ρ_{·|i})` for a projective measurement on `measured`.
pub fn conditional_entropy(rho_ab: &DensityMatrix, p: ProjectorAngles, measured: Subsystem) -> Result<f64> {
    check_two_qubit(rho_ab)?;
    conditional_entropy_mat(rho_ab.mat(), p, measured)
}

fn conditional_entropy_mat(rho: &CMatrix, p: ProjectorAngles, measured: Subsystem) -> Result<f64> {
    p.kets().iter().try_fold(0.0, |acc, psi| {
        let cond = conditional(rho, psi, measured);
        let prob = cond.trace().re;
        if prob < 1e-12 {
            return Ok(acc);
        }
        Ok(acc + prob * entropy_of(&cond.scale_real(1.0 / prob))?)
    })
}

fn check_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::dim(format!(
            "discord is defined here for two qubits, got dimension {}",
            rho.dim()
        )));
    }
    Ok(())
}

/// Angular resolution of the coarse discord search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub theta_steps: usize,
    pub phi_steps: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            theta_steps: 64,
            phi_steps: 128,
        }
    }
}

impl Grid {
    /// θ spans `[0, π/2]` inclusive; φ spans `[0, 2π)`.
    pub fn angles(self, index: usize) -> ProjectorAngles {
        let (i, j) = (index / self.phi_steps, index % self.phi_steps);
        let theta = if self.theta_steps > 1 {
            FRAC_PI_2 * i as f64 / (self.theta_steps - 1) as f64
        } else {
            0.0
        };
        ProjectorAngles {
            theta,
            phi: TAU * j as f64 / self.phi_steps as f64,
        }
    }

    pub fn len(self) -> usize {
        self.theta_steps * self.phi_steps
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    fn spacing(self) -> [f64; 2] {
        [
            FRAC_PI_2 / (self.theta_steps.max(2) - 1) as f64,
            TAU / self.phi_steps.max(1) as f64,
        ]
    }
}

/// Precomputed direction-specific parts of `I − J`.
struct DiscordObjective<'a> {
    rho: &'a CMatrix,
    measured: Subsystem,
    offset: f64,
}

impl<'a> DiscordObjective<'a> {
    fn new(rho: &'a DensityMatrix, direction: Direction) -> Result<Self> {
        check_two_qubit(rho)?;
        let measured = direction.measured();
        let side = rho.reduce((2, 2), measured)?;
        let offset = von_neumann_entropy(&side)? - von_neumann_entropy(rho)?;
        Ok(DiscordObjective {
            rho: rho.mat(),
            measured,
            offset,
        })
    }

    /// `S(ρ_measured) − S(ρ_AB) + Σ p_i S(ρ_{·|i})`.
    fn eval(&self, p: ProjectorAngles) -> Result<f64> {
        Ok(self.offset + conditional_entropy_mat(self.rho, p, self.measured)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscordResult {
    pub value: f64,
    pub argmin: ProjectorAngles,
    pub direction: Direction,
    pub grid: (usize, usize),
    pub refined: bool,
}

/// `I − J` evaluated for one measurement choice.
pub fn discord_at(rho_ab: &DensityMatrix, direction: Direction, p: ProjectorAngles) -> Result<f64> {
    DiscordObjective::new(rho_ab, direction)?.eval(p)
}

fn grid_values(obj: &DiscordObjective<'_>, grid: Grid) -> Result<Vec<f64>> {
    (0..grid.len())
        .into_par_iter()
        .map(|k| obj.eval(grid.angles(k)))
        .collect()
}

/// Discord in the given direction, by exhaustive grid search optionally
/// followed by Nelder–Mead from the best cell.
pub fn discord(rho_ab: &DensityMatrix, direction: Direction, grid: Grid, refine: bool) -> Result<DiscordResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty discord grid".into()));
    }
    let obj = DiscordObjective::new(rho_ab, direction)?;
    let values = grid_values(&obj, grid)?;
    // first minimal cell in row-major (θ, φ) order
    let (best, &value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let mut result = DiscordResult {
        value,
        argmin: grid.angles(best),
        direction,
        grid: (grid.theta_steps, grid.phi_steps),
        refined: false,
    };
    if refine {
        let start = result.argmin;
        let step = grid.spacing().map(|s| 0.5 * s);
        let m = nelder_mead(
            |x| obj.eval(ProjectorAngles::new(x[0], x[1])).unwrap_or(f64::INFINITY),
            &[start.theta, start.phi],
            &step,
            NelderMead::default(),
        );
        if m.value < result.value {
            result.value = m.value;
            result.argmin = ProjectorAngles::new(m.x[0], m.x[1]);
        }
        result.refined = true;
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub theta: f64,
    pub phi: f64,
    pub value: f64,
}

/// `I − J` over the whole grid, row-major in (θ, φ).
pub fn discord_landscape(rho_ab: &DensityMatrix, direction: Direction, grid: Grid) -> Result<Vec<LandscapePoint>> {
    let obj = DiscordObjective::new(rho_ab, direction)?;
    let values = grid_values(&obj, grid)?;
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(k, value)| {
            let a = grid.angles(k);
            LandscapePoint {
                theta: a.theta,
                phi: a.phi,
                value,
            }
        })
        .collect())
}

/// CSV with header `theta,phi,value`.
pub fn write_landscape_csv<W: Write>(w: W, points: &[LandscapePoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(p).map_err(|e| Error::Parse(e.to_string()))?;
    }
    wr.flush().map_err(|e| Error::Parse(e.to_string()))
}

fn dephasing_residual(rho: &CMatrix, p: ProjectorAngles, measured: Subsystem) -> f64 {
    let id = CMatrix::identity(2);
    let dephased = p.projectors().iter().fold(CMatrix::zeros(4, 4), |acc, pr| {
        let full = match measured {
            Subsystem::First => pr.tensor(&id),
            Subsystem::Second => id.tensor(pr),
        };
        &acc + &full.sandwich(rho)
    });
    dephased.max_diff(rho)
}

/// Looks for projectors on the measured side that leave the state invariant
/// under dephasing, `ρ = Σ_i Π_i ρ Π_i`.
pub fn zero_discord_structure(
    rho_ab: &DensityMatrix,
    direction: Direction,
    tol: f64,
) -> Result<Option<ProjectorAngles>> {
    check_two_qubit(rho_ab)?;
    let measured = direction.measured();
    let rho = rho_ab.mat();
    let grid = Grid {
        theta_steps: 33,
        phi_steps: 64,
    };
    let (best, value) = (0..grid.len())
        .into_par_iter()
        .map(|k| (k, dephasing_residual(rho, grid.angles(k), measured)))
        .collect::<Vec<_>>()
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    if value <= tol {
        return Ok(Some(grid.angles(best)));
    }
    let start = grid.angles(best);
    let m = nelder_mead(
        |x| dephasing_residual(rho, ProjectorAngles::new(x[0], x[1]), measured),
        &[start.theta, start.phi],
        &grid.spacing(),
        NelderMead {
            max_iterations: 2000,
            tolerance: 1e-14,
        },
    );
    Ok((m.value <= tol).then(|| ProjectorAngles::new(m.x[0], m.x[1])))
}

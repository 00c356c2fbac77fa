//! JSON shapes accepted in configuration files, and their conversion into
//! library objects.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;

use ncptomo::channels::{partial_swap, ChannelSpec};
use ncptomo::matrix::CMatrix;
use ncptomo::optics::{cnot_from_cz, cz, Slot};
use ncptomo::states::{from_bloch, phi_plus};
use ncptomo::{BlochVector, DensityMatrix, Polarization, ProcessMatrix};

/// A state given by name, Bloch vector, composition, or explicit matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Name(String),
    Bloch { bloch: [f64; 3] },
    Product { product: Vec<StateSpec> },
    Mixture { mixture: Vec<Weighted> },
    Matrix(CMatrix),
}

#[derive(Debug, Clone, Deserialize)]
pub struct Weighted {
    pub weight: f64,
    pub state: StateSpec,
}

impl StateSpec {
    pub fn build(&self) -> Result<DensityMatrix> {
        let rho = match self {
            StateSpec::Name(name) => named_state(name)?,
            StateSpec::Bloch { bloch } => from_bloch(BlochVector::from_array(*bloch)),
            StateSpec::Product { product } => {
                let mut parts = product.iter().map(StateSpec::build);
                let first = parts.next().ok_or_else(|| anyhow!("empty product"))??;
                parts.try_fold(first, |acc, p| p.map(|p| acc.tensor(&p)))?
            }
            StateSpec::Mixture { mixture } => {
                let states = mixture.iter().map(|w| w.state.build()).collect::<Result<Vec<_>>>()?;
                let parts: Vec<(f64, &DensityMatrix)> = mixture.iter().map(|w| w.weight).zip(&states).collect();
                DensityMatrix::mixture(&parts)?
            }
            StateSpec::Matrix(m) => DensityMatrix::new(m.clone())?,
        };
        Ok(rho)
    }

    /// Builds the state and insists that it is a valid density matrix.
    pub fn build_valid(&self) -> Result<DensityMatrix> {
        let rho = self.build()?;
        let v = rho.validate(1e-9);
        if !v.valid {
            bail!(
                "state is not a valid density matrix (min eigenvalue {:.3e}, trace error {:.3e}, hermiticity error {:.3e})",
                v.min_eigenvalue,
                v.trace_error,
                v.hermiticity_error
            );
        }
        Ok(rho)
    }
}

fn named_state(name: &str) -> Result<DensityMatrix> {
    match name {
        "phi_plus" | "bell" => Ok(phi_plus()),
        "maximally_mixed" => Ok(DensityMatrix::maximally_mixed(2)),
        _ => name
            .parse::<Polarization>()
            .map(Polarization::state)
            .map_err(|_| anyhow!("unknown state name `{name}`")),
    }
}

/// A two-qubit unitary by name or as an explicit matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum UnitarySpec {
    Name(String),
    PartialSwap { partial_swap: f64 },
    Matrix(CMatrix),
}

impl UnitarySpec {
    pub fn build(&self) -> Result<CMatrix> {
        let u = match self {
            UnitarySpec::Name(n) => match n.as_str() {
                // system (first qubit) as target
                "cnot" => cnot_from_cz(Slot::First),
                "cnot_system_control" => cnot_from_cz(Slot::Second),
                "cz" => cz(),
                "identity" => CMatrix::identity(4),
                other => bail!("unknown unitary `{other}`"),
            },
            UnitarySpec::PartialSwap { partial_swap: t } => partial_swap(*t),
            UnitarySpec::Matrix(m) => m.clone(),
        };
        let err = u.unitarity_error();
        if !u.is_square() || err > 1e-9 {
            bail!("coupling is not unitary (deviation {err:.3e})");
        }
        Ok(u)
    }
}

/// A channel by name or in one of the three matrix representations.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ProcessSpec {
    Name(String),
    Spec(ChannelSpec),
}

impl ProcessSpec {
    pub fn build(&self) -> Result<ProcessMatrix> {
        match self {
            ProcessSpec::Name(n) => match n.as_str() {
                "identity" => Ok(ProcessMatrix::identity(2)),
                other => bail!("unknown channel `{other}`"),
            },
            ProcessSpec::Spec(s) => s.to_process().context("invalid channel"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(json: &str) -> Result<DensityMatrix> {
        serde_json::from_str::<StateSpec>(json)?.build_valid()
    }

    #[test]
    fn named_and_composed_states() {
        assert_eq!(state("\"H\"").unwrap(), Polarization::H.state());
        assert_eq!(state("\"phi_plus\"").unwrap(), phi_plus());
        let mix = state(
            r#"{"mixture": [
                {"weight": 0.5, "state": {"product": ["H", "A"]}},
                {"weight": 0.5, "state": {"product": ["D", "V"]}}
            ]}"#,
        )
        .unwrap();
        assert_eq!(mix.dim(), 4);
        assert!((mix.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unphysical_states_are_rejected() {
        assert!(state(r#"{"bloch": [1.2, 0, 0]}"#).is_err());
        assert!(state("\"Q\"").is_err());
        assert!(state(r#"{"rows": 2, "cols": 2, "data": [[1,0],[0,0],[0,0]]}"#).is_err());
    }

    #[test]
    fn unitaries() {
        let u: UnitarySpec = serde_json::from_str("\"cnot\"").unwrap();
        assert_eq!(u.build().unwrap(), cnot_from_cz(Slot::First));
        let bad: UnitarySpec = serde_json::from_str(r#"{"rows": 1, "cols": 1, "data": [[2, 0]]}"#).unwrap();
        assert!(bad.build().is_err());
    }
}

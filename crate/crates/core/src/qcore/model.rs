use serde::{Deserialize, Serialize};

use super::matrix::{ComplexMatrix, C64};
use crate::error::{argument, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let rows: [[C64; 2]; 2] = match self {
            Pauli::X => [[z, one], [one, z]],
            Pauli::Y => [[z, -i], [i, z]],
            Pauli::Z => [[one, z], [z, -one]],
        };
        ComplexMatrix::from_rows(&[&rows[0], &rows[1]]).expect("2x2 literal")
    }
}

/// Embeds a Pauli operator at `site` (1-based) of an `n_qubits` register,
/// with site 1 the leftmost tensor factor.
pub fn pauli_embed(axis: Pauli, site: usize, n_qubits: usize) -> Result<ComplexMatrix> {
    if !(1..=2).contains(&n_qubits) {
        return Err(argument(format!("unsupported qubit count {n_qubits}")));
    }
    if site < 1 || site > n_qubits {
        return Err(argument(format!(
            "site {site} out of range 1..={n_qubits}"
        )));
    }
    let mut out = if site == 1 {
        axis.matrix()
    } else {
        ComplexMatrix::identity(2)
    };
    for s in 2..=n_qubits {
        let factor = if s == site {
            axis.matrix()
        } else {
            ComplexMatrix::identity(2)
        };
        out = out.kron(&factor)?;
    }
    Ok(out)
}

/// How disturbance realizations enter the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceChannels {
    /// One factor scales the whole Hamiltonian: `(1+μ)(H_d + Σ u_k H_k)`.
    Common,
    /// Separate factors for drift and controls: `(1+μ₀)H_d + (1+μᵤ)Σ u_k H_k`.
    DriftAndControl,
}

impl DisturbanceChannels {
    pub fn count(self) -> usize {
        match self {
            DisturbanceChannels::Common => 1,
            DisturbanceChannels::DriftAndControl => 2,
        }
    }
}

/// A family of Hamiltonians: drift, control operators and disturbance layout.
#[derive(Debug, Clone)]
pub struct SystemModel {
    n_qubits: usize,
    drift: ComplexMatrix,
    control_ops: Vec<ComplexMatrix>,
    channels: DisturbanceChannels,
}

impl SystemModel {
    /// The coupled-spin model: drift `Σ Z_j Z_{j+1}` (`σ_z` for one qubit)
    /// and controls ordered `X_1..X_n, Y_1..Y_n`.
    pub fn spin_chain(n_qubits: usize, channels: DisturbanceChannels) -> Result<Self> {
        let drift = match n_qubits {
            1 => pauli_embed(Pauli::Z, 1, 1)?,
            2 => pauli_embed(Pauli::Z, 1, 2)? * pauli_embed(Pauli::Z, 2, 2)?,
            n => return Err(argument(format!("unsupported qubit count {n}"))),
        };
        let mut control_ops = Vec::with_capacity(2 * n_qubits);
        for axis in [Pauli::X, Pauli::Y] {
            for site in 1..=n_qubits {
                control_ops.push(pauli_embed(axis, site, n_qubits)?);
            }
        }
        Self::new(n_qubits, drift, control_ops, channels)
    }

    pub fn new(
        n_qubits: usize,
        drift: ComplexMatrix,
        control_ops: Vec<ComplexMatrix>,
        channels: DisturbanceChannels,
    ) -> Result<Self> {
        if !(1..=2).contains(&n_qubits) {
            return Err(argument(format!("unsupported qubit count {n_qubits}")));
        }
        let dim = 1 << n_qubits;
        if control_ops.len() != 2 * n_qubits {
            return Err(argument(format!(
                "expected {} control operators, got {}",
                2 * n_qubits,
                control_ops.len()
            )));
        }
        for op in std::iter::once(&drift).chain(control_ops.iter()) {
            if op.dim() != dim {
                return Err(argument("operator dimension does not match qubit count"));
            }
            if !op.is_hermitian() {
                return Err(argument("model operators must be Hermitian"));
            }
        }
        Ok(Self {
            n_qubits,
            drift,
            control_ops,
            channels,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn n_controls(&self) -> usize {
        self.control_ops.len()
    }

    pub fn drift(&self) -> &ComplexMatrix {
        &self.drift
    }

    pub fn control_ops(&self) -> &[ComplexMatrix] {
        &self.control_ops
    }

    pub fn channels(&self) -> DisturbanceChannels {
        self.channels
    }

    /// Multiplicative factor `(1+μ)` applied to control operators.
    pub(crate) fn control_factor(&self, disturbances: &[f64]) -> f64 {
        match self.channels {
            DisturbanceChannels::Common => 1.0 + disturbances[0],
            DisturbanceChannels::DriftAndControl => 1.0 + disturbances[1],
        }
    }

    fn check_lengths(&self, controls: &[f64], disturbances: &[f64]) -> Result<()> {
        if controls.len() != self.n_controls() {
            return Err(argument(format!(
                "expected {} controls, got {}",
                self.n_controls(),
                controls.len()
            )));
        }
        if disturbances.len() != self.channels.count() {
            return Err(argument(format!(
                "expected {} disturbance realizations, got {}",
                self.channels.count(),
                disturbances.len()
            )));
        }
        Ok(())
    }

    /// Assembles the disturbed Hamiltonian for one control slice.
    pub fn hamiltonian(&self, controls: &[f64], disturbances: &[f64]) -> Result<ComplexMatrix> {
        self.check_lengths(controls, disturbances)?;
        let mut ctrl = ComplexMatrix::zeros(self.dim());
        for (u, op) in controls.iter().zip(&self.control_ops) {
            ctrl = ctrl + op.scale_real(*u);
        }
        Ok(match self.channels {
            DisturbanceChannels::Common => (self.drift + ctrl).scale_real(1.0 + disturbances[0]),
            DisturbanceChannels::DriftAndControl => {
                self.drift.scale_real(1.0 + disturbances[0])
                    + ctrl.scale_real(1.0 + disturbances[1])
            }
        })
    }
}

/// Free-function form of [`SystemModel::hamiltonian`].
pub fn build_hamiltonian(
    model: &SystemModel,
    controls: &[f64],
    disturbances: &[f64],
) -> Result<ComplexMatrix> {
    model.hamiltonian(controls, disturbances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_paulis() {
        let x = pauli_embed(Pauli::X, 1, 1).unwrap();
        assert_eq!(x, ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap());
        let z = pauli_embed(Pauli::Z, 1, 1).unwrap();
        assert_eq!(z, ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap());
    }

    #[test]
    fn zz_coupling_is_diagonal() {
        let zz = pauli_embed(Pauli::Z, 1, 2).unwrap() * pauli_embed(Pauli::Z, 2, 2).unwrap();
        let expect = ComplexMatrix::diag(&[1.0, -1.0, -1.0, 1.0].map(|x| C64::new(x, 0.0)));
        assert_eq!(zz, expect);
    }

    #[test]
    fn embeddings_are_hermitian_and_unitary() {
        for n in 1..=2 {
            for site in 1..=n {
                for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
                    let p = pauli_embed(axis, site, n).unwrap();
                    assert!(p.is_hermitian());
                    assert!(p.is_unitary());
                }
            }
        }
    }

    #[test]
    fn site_out_of_range() {
        assert!(pauli_embed(Pauli::X, 0, 1).is_err());
        assert!(pauli_embed(Pauli::X, 3, 2).is_err());
        assert!(pauli_embed(Pauli::X, 1, 3).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let sx = Pauli::X.matrix();
        let sz = Pauli::Z.matrix();
        let common = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        let h = common.hamiltonian(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(h, sz);
        let h = common.hamiltonian(&[1.0, 0.0], &[1.0]).unwrap();
        assert!(h.max_abs_diff(&(sz + sx).scale_real(2.0)) < 1e-15);

        let dual = SystemModel::spin_chain(1, DisturbanceChannels::DriftAndControl).unwrap();
        let h = dual.hamiltonian(&[2.0, 0.0], &[0.0, 0.5]).unwrap();
        assert!(h.max_abs_diff(&(sz + sx.scale_real(3.0))) < 1e-15);
    }

    #[test]
    fn hamiltonian_length_mismatch() {
        let m = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        assert!(m.hamiltonian(&[0.0], &[0.0]).is_err());
        assert!(m.hamiltonian(&[0.0, 0.0], &[0.0, 0.0]).is_err());
        let m = SystemModel::spin_chain(2, DisturbanceChannels::DriftAndControl).unwrap();
        assert!(m.hamiltonian(&[0.0; 4], &[0.0]).is_err());
        assert_eq!(m.control_ops().len(), 4);
    }
}

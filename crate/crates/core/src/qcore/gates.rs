//! Target gates.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use super::matrix::{ComplexMatrix, C64};
use crate::error::{argument, Result};

pub fn hadamard() -> ComplexMatrix {
    let s = FRAC_1_SQRT_2;
    ComplexMatrix::from_real_rows(&[&[s, s], &[s, -s]]).expect("2x2 literal")
}

/// `diag(1, e^{iπ/4})`.
pub fn pi8() -> ComplexMatrix {
    ComplexMatrix::diag(&[C64::new(1.0, 0.0), C64::from_polar(1.0, FRAC_PI_4)])
}

/// `diag(1, i)`.
pub fn phase() -> ComplexMatrix {
    ComplexMatrix::diag(&[C64::new(1.0, 0.0), C64::new(0.0, 1.0)])
}

pub fn cnot() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[
        &[1.0, 0.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 1.0],
        &[0.0, 0.0, 1.0, 0.0],
    ])
    .expect("4x4 literal")
}

/// Looks a gate up by name: `identity`, `hadamard`, `pi8`, `phase`, `cnot`.
pub fn target_gate(name: &str) -> Result<ComplexMatrix> {
    match name.to_ascii_lowercase().as_str() {
        "identity" | "id" => Ok(ComplexMatrix::identity(2)),
        "hadamard" | "h" => Ok(hadamard()),
        "pi8" | "t" => Ok(pi8()),
        "phase" | "s" => Ok(phase()),
        "cnot" | "cx" => Ok(cnot()),
        other => Err(argument(format!("unknown gate '{other}'"))),
    }
}

/// Qubit count a named gate acts on.
pub fn gate_qubits(name: &str) -> Result<usize> {
    Ok(target_gate(name)?.dim().trailing_zeros() as usize)
}

//! Dense complex linear algebra and the quantum primitives built on it.

mod disturbance;
mod eigen;
mod evolve;
pub mod gates;
mod matrix;
mod model;

pub use disturbance::{sample_disturbance, DisturbanceSpec, DisturbanceTrace, CLIP_BOUND};
pub use eigen::{hermitian_eigen, HermitianEigen};
pub use evolve::{
    evolve_sequence, evolve_trajectory, gate_fidelity, gate_overlap, propagator,
    ControlPulseSequence, SliceExponential,
};
pub use matrix::{ComplexMatrix, C64, HERMITIAN_TOL, MAX_DIM, UNITARY_TOL};
pub use model::{build_hamiltonian, pauli_embed, DisturbanceChannels, Pauli, SystemModel};

#[cfg(test)]
pub(crate) mod test_support {
    use rand::Rng;

    use super::{ComplexMatrix, C64};

    pub fn random_hermitian<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C64::new(rng.random_range(-scale..scale), 0.0);
            for j in (i + 1)..dim {
                let z = C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    /// Truncated power series of `exp(-i·H·dt)`.
    pub fn taylor_exp(h: &ComplexMatrix, dt: f64, terms: usize) -> ComplexMatrix {
        let a = h.scale(C64::new(0.0, -dt));
        let mut term = ComplexMatrix::identity(h.dim());
        let mut sum = term;
        for k in 1..terms {
            term = (term * a).scale_real(1.0 / k as f64);
            sum = sum + term;
        }
        sum
    }
}

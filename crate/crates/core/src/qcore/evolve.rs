use serde::{Deserialize, Serialize};

use super::disturbance::DisturbanceTrace;
use super::eigen::{hermitian_eigen, HermitianEigen};
use super::matrix::{ComplexMatrix, C64};
use super::model::SystemModel;
use crate::error::{argument, Result};

/// Piecewise-constant control amplitudes, `n_steps × n_controls`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPulseSequence {
    dt: f64,
    n_controls: usize,
    amplitudes: Vec<f64>,
}

impl ControlPulseSequence {
    pub fn zeros(n_steps: usize, n_controls: usize, dt: f64) -> Self {
        Self {
            dt,
            n_controls,
            amplitudes: vec![0.0; n_steps * n_controls],
        }
    }

    pub fn from_flat(amplitudes: Vec<f64>, n_controls: usize, dt: f64) -> Result<Self> {
        if n_controls == 0 || amplitudes.len() % n_controls != 0 {
            return Err(argument("pulse amplitudes do not tile into whole steps"));
        }
        if !(dt > 0.0) {
            return Err(argument(format!("time slice must be positive, got {dt}")));
        }
        Ok(Self {
            dt,
            n_controls,
            amplitudes,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.amplitudes.len() / self.n_controls
    }

    pub fn n_controls(&self) -> usize {
        self.n_controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, j: usize) -> &[f64] {
        &self.amplitudes[j * self.n_controls..(j + 1) * self.n_controls]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.amplitudes
    }

    pub fn clamp(&mut self, lo: f64, hi: f64) {
        for a in &mut self.amplitudes {
            *a = a.clamp(lo, hi);
        }
    }
}

/// Eigendecomposition of one slice Hamiltonian together with its propagator.
///
/// Keeping the spectrum around lets callers differentiate the propagator
/// exactly with [`SliceExponential::derivative`].
#[derive(Debug, Clone, Copy)]
pub struct SliceExponential {
    eigen: HermitianEigen,
    dt: f64,
    unitary: ComplexMatrix,
}

impl SliceExponential {
    pub fn new(h: &ComplexMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(argument(format!("time slice must be positive, got {dt}")));
        }
        let eigen = hermitian_eigen(h)?;
        let unitary = eigen.map_spectrum(|l| C64::from_polar(1.0, -l * dt));
        Ok(Self { eigen, dt, unitary })
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.unitary
    }

    /// Directional derivative `d/ds exp(-i·dt·(H + s·E))` at `s = 0`.
    ///
    /// In the eigenbasis of `H` the derivative is `Φ ∘ (V†(-i·dt·E)V)` with
    /// divided differences `Φ_ab = e^{-i(λa+λb)dt/2}·sinc((λa-λb)dt/2)`,
    /// which stays exact for degenerate eigenvalues.
    pub fn derivative(&self, direction: &ComplexMatrix) -> ComplexMatrix {
        let n = self.eigen.dim();
        let v = &self.eigen.vectors;
        let lam = &self.eigen.values;
        let rotated = v.adjoint() * *direction * *v;
        let mut inner = ComplexMatrix::zeros(n);
        let minus_i_dt = C64::new(0.0, -self.dt);
        for a in 0..n {
            for b in 0..n {
                let mid = C64::from_polar(1.0, -(lam[a] + lam[b]) * self.dt / 2.0);
                let phi = mid * sinc((lam[a] - lam[b]) * self.dt / 2.0);
                inner[(a, b)] = phi * minus_i_dt * rotated[(a, b)];
            }
        }
        *v * inner * v.adjoint()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `exp(-i·H·dt)` via Hermitian eigendecomposition.
pub fn propagator(h: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    Ok(*SliceExponential::new(h, dt)?.unitary())
}

/// `U(T) = U_N · … · U_1`: each later slice multiplies from the left.
pub fn evolve_sequence(
    model: &SystemModel,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<ComplexMatrix> {
    check_sequence(model, pulses, trace)?;
    let mut u = ComplexMatrix::identity(model.dim());
    for j in 0..pulses.n_steps() {
        let h = model.hamiltonian(pulses.step(j), trace.step(j))?;
        u = propagator(&h, pulses.dt())? * u;
    }
    Ok(u)
}

/// Like [`evolve_sequence`] but returns the gate after every slice.
pub fn evolve_trajectory(
    model: &SystemModel,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<Vec<ComplexMatrix>> {
    check_sequence(model, pulses, trace)?;
    let mut u = ComplexMatrix::identity(model.dim());
    let mut out = Vec::with_capacity(pulses.n_steps());
    for j in 0..pulses.n_steps() {
        let h = model.hamiltonian(pulses.step(j), trace.step(j))?;
        u = propagator(&h, pulses.dt())? * u;
        out.push(u);
    }
    Ok(out)
}

fn check_sequence(
    model: &SystemModel,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<()> {
    if pulses.n_controls() != model.n_controls() {
        return Err(argument(format!(
            "pulse sequence has {} controls, model expects {}",
            pulses.n_controls(),
            model.n_controls()
        )));
    }
    if trace.n_steps() != pulses.n_steps() {
        return Err(argument(format!(
            "disturbance trace has {} steps, pulses have {}",
            trace.n_steps(),
            pulses.n_steps()
        )));
    }
    Ok(())
}

/// Normalized overlap `Tr(U_f† U) / 2ⁿ`; fidelity is its squared modulus.
pub fn gate_overlap(u: &ComplexMatrix, target: &ComplexMatrix) -> C64 {
    target.adjoint().trace_of_product(u) / u.dim() as f64
}

/// `F = |Tr(U_f† U) / 2ⁿ|²`.
pub fn gate_fidelity(u: &ComplexMatrix, target: &ComplexMatrix, n_qubits: usize) -> Result<f64> {
    let dim = 1usize << n_qubits;
    if u.dim() != dim || target.dim() != dim {
        return Err(argument(format!(
            "fidelity expects {dim}x{dim} matrices, got {} and {}",
            u.dim(),
            target.dim()
        )));
    }
    Ok(gate_overlap(u, target).norm_sqr().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::gates;
    use crate::qcore::model::{DisturbanceChannels, Pauli};
    use crate::qcore::test_support::{random_hermitian, taylor_exp};
    use crate::seed::rng_from;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn diagonal_generator() {
        let t = 0.37;
        let u = propagator(&Pauli::Z.matrix(), t).unwrap();
        let expect = ComplexMatrix::diag(&[C64::from_polar(1.0, -t), C64::from_polar(1.0, t)]);
        assert!(u.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let u = propagator(&ComplexMatrix::zeros(4), 2.5).unwrap();
        assert_eq!(u, ComplexMatrix::identity(4));
    }

    #[test]
    fn sigma_x_quarter_period_matches_series() {
        let u = propagator(&Pauli::X.matrix(), FRAC_PI_2).unwrap();
        let expect = Pauli::X.matrix().scale(C64::new(0.0, -1.0));
        assert!(u.max_abs_diff(&expect) < 1e-15);
        let series = taylor_exp(&Pauli::X.matrix(), FRAC_PI_2, 20);
        assert!(u.max_abs_diff(&series) < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(propagator(&m, 0.1).is_err());
        assert!(propagator(&Pauli::Z.matrix(), 0.0).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let cnot = gates::cnot();
        assert!((gate_fidelity(&cnot, &cnot, 2).unwrap() - 1.0).abs() < 1e-15);
        let h = gates::hadamard();
        assert!(gate_fidelity(&ComplexMatrix::identity(2), &h, 1).unwrap().abs() < 1e-15);
        // Tr(H·σx) = √2, so F = (√2/2)² = 1/2.
        assert!((gate_fidelity(&Pauli::X.matrix(), &h, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(gate_fidelity(&cnot, &h, 1).is_err());
    }

    #[test]
    fn single_step_sequence_equals_propagator() {
        // Drift-free model so that u_x = 1 yields H = σx exactly.
        let model = SystemModel::new(
            1,
            ComplexMatrix::zeros(2),
            vec![Pauli::X.matrix(), Pauli::Y.matrix()],
            DisturbanceChannels::Common,
        )
        .unwrap();
        let pulses = ControlPulseSequence::from_flat(vec![1.0, 0.0], 2, FRAC_PI_2).unwrap();
        let u = evolve_sequence(&model, &pulses, &DisturbanceTrace::zeros(1, 1)).unwrap();
        let expect = taylor_exp(&Pauli::X.matrix(), FRAC_PI_2, 20);
        assert!(u.max_abs_diff(&expect) < 1e-9);
        assert!(u.max_abs_diff(&Pauli::X.matrix().scale(C64::new(0.0, -1.0))) < 1e-15);
    }

    #[test]
    fn drift_only_sequence() {
        let model = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        let n = 40;
        let t = 1.6;
        let pulses = ControlPulseSequence::zeros(n, 2, t / n as f64);
        let u = evolve_sequence(&model, &pulses, &DisturbanceTrace::zeros(n, 1)).unwrap();
        let expect = ComplexMatrix::diag(&[C64::from_polar(1.0, -t), C64::from_polar(1.0, t)]);
        assert!(u.max_abs_diff(&expect) < 1e-13);
        // T = π closes the drift orbit up to a global phase.
        let pulses = ControlPulseSequence::zeros(n, 2, PI / n as f64);
        let u = evolve_sequence(&model, &pulses, &DisturbanceTrace::zeros(n, 1)).unwrap();
        assert!((gate_fidelity(&u, &ComplexMatrix::identity(2), 1).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut rng = rng_from(5, &[]);
        for dim in [2usize, 4] {
            for _ in 0..20 {
                let h = random_hermitian(dim, 2.0, &mut rng);
                let e = random_hermitian(dim, 1.0, &mut rng);
                let dt = 0.3;
                let exact = SliceExponential::new(&h, dt).unwrap().derivative(&e);
                let step = 1e-6;
                let plus = propagator(&(h + e.scale_real(step)), dt).unwrap();
                let minus = propagator(&(h - e.scale_real(step)), dt).unwrap();
                let fd = (plus - minus).scale_real(0.5 / step);
                assert!(exact.max_abs_diff(&fd) < 1e-8);
            }
        }
    }
}

//! Model-based pulse optimization: GRAPE (exact gradients) and plain
//! gradient ascent with finite-difference gradients.
//!
//! Both optimize the nominal (`μ ≡ 0`) model and share one ascent loop.
//! Each iteration takes a step along the gradient, projects amplitudes into
//! the actuator bounds, and accepts the step only if fidelity did not drop;
//! rejected steps halve the rate and accepted ones grow it slightly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{argument, numeric, Result};
use crate::qcore::{
    gate_overlap, ComplexMatrix, ControlPulseSequence, DisturbanceTrace, SliceExponential,
    SystemModel, C64,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrapeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Stop early once fidelity reaches this value.
    pub target_fidelity: f64,
    pub n_steps: usize,
    pub horizon: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Forward-difference step used by gradient ascent.
    pub fd_step: f64,
    /// Random initial amplitudes are drawn from `[-init_scale, init_scale]`;
    /// the presets cover the whole actuator range.
    pub init_scale: f64,
}

impl GrapeConfig {
    pub fn single_qubit() -> Self {
        Self {
            iterations: 500,
            learning_rate: 5.0,
            target_fidelity: 1.0 - 1e-9,
            n_steps: 40,
            horizon: 1.6,
            u_min: -5.0,
            u_max: 5.0,
            fd_step: 1e-4,
            init_scale: 5.0,
        }
    }

    pub fn two_qubit() -> Self {
        Self {
            iterations: 2000,
            n_steps: 50,
            horizon: 2.0,
            ..Self::single_qubit()
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(argument("learning rate must be positive"));
        }
        if self.n_steps == 0 || !(self.horizon > 0.0) {
            return Err(argument("pulse grid must be non-empty"));
        }
        if !(self.u_min < self.u_max) {
            return Err(argument("empty amplitude interval"));
        }
        if !(self.fd_step > 0.0) {
            return Err(argument("finite-difference step must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub pulses: ControlPulseSequence,
    /// Best fidelity so far, one entry per iteration starting at the initial pulses.
    pub trace: Vec<f64>,
    pub fidelity: f64,
}

/// Gate fidelity of the pulses on the nominal model.
pub fn nominal_fidelity(model: &SystemModel, target: &ComplexMatrix, pulses: &ControlPulseSequence) -> Result<f64> {
    let trace = DisturbanceTrace::zeros(pulses.n_steps(), model.channels().count());
    fidelity_with(model, target, pulses, &trace)
}

fn fidelity_with(
    model: &SystemModel,
    target: &ComplexMatrix,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<f64> {
    let u = crate::qcore::evolve_sequence(model, pulses, trace)?;
    Ok(gate_overlap(&u, target).norm_sqr())
}

/// Fidelity and its exact gradient with respect to every amplitude.
///
/// With `P_j = U_j⋯U_1`, `B_j = U_f†U_N⋯U_{j+1}` and `g = Tr(U_f†U)/d`,
/// `∂F/∂u_jk = 2·Re(conj(g)·Tr(P_{j-1}B_j·∂U_j/∂u_jk)/d)`, and `∂U_j/∂u_jk`
/// is the exact Fréchet derivative of the slice exponential.
pub fn fidelity_gradient(
    model: &SystemModel,
    target: &ComplexMatrix,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<(f64, Vec<f64>)> {
    let n = pulses.n_steps();
    let dim = model.dim();
    if target.dim() != dim {
        return Err(argument("target dimension does not match the model"));
    }
    if trace.n_steps() != n || pulses.n_controls() != model.n_controls() {
        return Err(argument("pulse grid, disturbance trace and model disagree"));
    }
    let dt = pulses.dt();
    let mut slices = Vec::with_capacity(n);
    for j in 0..n {
        let h = model.hamiltonian(pulses.step(j), trace.step(j))?;
        slices.push(SliceExponential::new(&h, dt)?);
    }
    // prefix[j] = U_j⋯U_1 (prefix[0] = I)
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(ComplexMatrix::identity(dim));
    for s in &slices {
        let next = *s.unitary() * *prefix.last().expect("non-empty");
        prefix.push(next);
    }
    let g = gate_overlap(&prefix[n], target);
    let fidelity = g.norm_sqr();

    let mut grad = vec![0.0; n * model.n_controls()];
    let mut back = target.adjoint();
    for j in (0..n).rev() {
        let m = prefix[j] * back;
        let factor = model.control_factor(trace.step(j));
        for (k, op) in model.control_ops().iter().enumerate() {
            let du = slices[j].derivative(&op.scale_real(factor));
            let dg: C64 = m.trace_of_product(&du) / dim as f64;
            grad[j * model.n_controls() + k] = 2.0 * (g.conj() * dg).re;
        }
        back = back * *slices[j].unitary();
    }
    if let Some(i) = grad.iter().position(|x| !x.is_finite()) {
        return Err(numeric(format!(
            "non-finite fidelity gradient at step {}, control {}",
            i / model.n_controls(),
            i % model.n_controls()
        )));
    }
    Ok((fidelity, grad))
}

/// Forward-difference gradient: one extra fidelity evaluation per amplitude.
pub fn finite_difference_gradient(
    model: &SystemModel,
    target: &ComplexMatrix,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
    h: f64,
) -> Result<(f64, Vec<f64>)> {
    let f0 = fidelity_with(model, target, pulses, trace)?;
    let mut probe = pulses.clone();
    let mut grad = vec![0.0; pulses.as_flat().len()];
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = probe.as_flat()[i];
        probe.as_flat_mut()[i] = orig + h;
        *g = (fidelity_with(model, target, &probe, trace)? - f0) / h;
        probe.as_flat_mut()[i] = orig;
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(numeric("non-finite finite-difference gradient"));
    }
    Ok((f0, grad))
}

/// Uniform random amplitudes in `±init_scale` (clipped to the bounds), or zeros.
pub fn random_pulses<R: Rng + ?Sized>(model: &SystemModel, cfg: &GrapeConfig, rng: &mut R) -> ControlPulseSequence {
    let amps = (0..cfg.n_steps * model.n_controls())
        .map(|_| {
            if cfg.init_scale > 0.0 {
                rng.random_range(-cfg.init_scale..=cfg.init_scale)
            } else {
                0.0
            }
        })
        .collect();
    let mut p = ControlPulseSequence::from_flat(amps, model.n_controls(), cfg.dt()).expect("valid grid");
    p.clamp(cfg.u_min, cfg.u_max);
    p
}

#[derive(Clone, Copy)]
enum GradientKind {
    Exact,
    ForwardDifference(f64),
}

fn ascend<R: Rng + ?Sized>(
    model: &SystemModel,
    target: &ComplexMatrix,
    cfg: &GrapeConfig,
    init: Option<ControlPulseSequence>,
    kind: GradientKind,
    rng: &mut R,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut pulses = match init {
        Some(p) => {
            if p.n_controls() != model.n_controls() {
                return Err(argument("initial pulses do not match the model"));
            }
            p
        }
        None => random_pulses(model, cfg, rng),
    };
    pulses.clamp(cfg.u_min, cfg.u_max);
    let trace = DisturbanceTrace::zeros(pulses.n_steps(), model.channels().count());
    let gradient = |p: &ControlPulseSequence| match kind {
        GradientKind::Exact => fidelity_gradient(model, target, p, &trace),
        GradientKind::ForwardDifference(h) => finite_difference_gradient(model, target, p, &trace, h),
    };

    let (mut fidelity, mut grad) = gradient(&pulses)?;
    let mut history = vec![fidelity];
    let mut lr = cfg.learning_rate;
    for _ in 0..cfg.iterations {
        if fidelity >= cfg.target_fidelity {
            break;
        }
        let mut candidate = pulses.clone();
        for (a, g) in candidate.as_flat_mut().iter_mut().zip(&grad) {
            *a += lr * g;
        }
        candidate.clamp(cfg.u_min, cfg.u_max);
        let (f_new, g_new) = gradient(&candidate)?;
        if f_new >= fidelity {
            pulses = candidate;
            fidelity = f_new;
            grad = g_new;
            lr *= 1.2;
        } else {
            lr *= 0.5;
        }
        history.push(fidelity);
        if lr < 1e-12 {
            break;
        }
    }
    Ok(OptimizationResult {
        pulses,
        trace: history,
        fidelity,
    })
}

/// GRAPE: exact-gradient ascent of nominal gate fidelity. Random initial
/// pulses are drawn from `rng` when `init` is `None`.
pub fn grape_optimize<R: Rng + ?Sized>(
    model: &SystemModel,
    target: &ComplexMatrix,
    cfg: &GrapeConfig,
    init: Option<ControlPulseSequence>,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ascend(model, target, cfg, init, GradientKind::Exact, rng)
}

/// Gradient ascent with forward-difference gradients (step `cfg.fd_step`).
pub fn ga_optimize<R: Rng + ?Sized>(
    model: &SystemModel,
    target: &ComplexMatrix,
    cfg: &GrapeConfig,
    init: Option<ControlPulseSequence>,
    rng: &mut R,
) -> Result<OptimizationResult> {
    ascend(model, target, cfg, init, GradientKind::ForwardDifference(cfg.fd_step), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{gates, DisturbanceChannels};
    use crate::seed::rng_from;
    use std::f64::consts::PI;

    fn drift_matched_identity() -> (SystemModel, GrapeConfig) {
        let model = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        let cfg = GrapeConfig {
            horizon: PI,
            init_scale: 0.0,
            ..GrapeConfig::single_qubit()
        };
        (model, cfg)
    }

    #[test]
    fn already_optimal_identity() {
        let (model, cfg) = drift_matched_identity();
        let mut rng = rng_from(0, &[]);
        let init = ControlPulseSequence::zeros(cfg.n_steps, 2, cfg.dt());
        let r = grape_optimize(&model, &ComplexMatrix::identity(2), &cfg, Some(init.clone()), &mut rng).unwrap();
        assert!((r.trace[0] - 1.0).abs() < 1e-12);
        let r = ga_optimize(&model, &ComplexMatrix::identity(2), &cfg, Some(init), &mut rng).unwrap();
        assert!((r.trace[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_gradient_matches_central_differences() {
        let mut rng = rng_from(21, &[]);
        for (n_qubits, target) in [(1, gates::hadamard()), (2, gates::cnot())] {
            let model = SystemModel::spin_chain(n_qubits, DisturbanceChannels::Common).unwrap();
            let cfg = GrapeConfig { n_steps: 6, ..GrapeConfig::single_qubit() };
            let pulses = random_pulses(&model, &GrapeConfig { init_scale: 3.0, ..cfg.clone() }, &mut rng);
            let trace = DisturbanceTrace::zeros(6, 1);
            let (_, exact) = fidelity_gradient(&model, &target, &pulses, &trace).unwrap();
            let h = 1e-6;
            for i in 0..exact.len() {
                let mut p = pulses.clone();
                p.as_flat_mut()[i] += h;
                let up = fidelity_with(&model, &target, &p, &trace).unwrap();
                p.as_flat_mut()[i] -= 2.0 * h;
                let down = fidelity_with(&model, &target, &p, &trace).unwrap();
                assert!(((up - down) / (2.0 * h) - exact[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_under_dual_channel_disturbance() {
        let model = SystemModel::spin_chain(1, DisturbanceChannels::DriftAndControl).unwrap();
        let mut rng = rng_from(8, &[]);
        let cfg = GrapeConfig { n_steps: 5, init_scale: 2.0, ..GrapeConfig::single_qubit() };
        let pulses = random_pulses(&model, &cfg, &mut rng);
        let trace = DisturbanceTrace::from_steps(&vec![vec![0.3, -0.4]; 5]).unwrap();
        let target = gates::phase();
        let (_, exact) = fidelity_gradient(&model, &target, &pulses, &trace).unwrap();
        let h = 1e-6;
        let mut p = pulses.clone();
        p.as_flat_mut()[3] += h;
        let up = fidelity_with(&model, &target, &p, &trace).unwrap();
        p.as_flat_mut()[3] -= 2.0 * h;
        let down = fidelity_with(&model, &target, &p, &trace).unwrap();
        assert!(((up - down) / (2.0 * h) - exact[3]).abs() < 1e-8);
    }

    #[test]
    fn best_so_far_trace_is_monotone_and_bounded() {
        let model = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        let cfg = GrapeConfig { iterations: 60, ..GrapeConfig::single_qubit() };
        let r = grape_optimize(&model, &gates::pi8(), &cfg, None, &mut rng_from(2, &[])).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.pulses.as_flat().iter().all(|a| (-5.0..=5.0).contains(a)));
    }

    #[test]
    fn invalid_config() {
        let model = SystemModel::spin_chain(1, DisturbanceChannels::Common).unwrap();
        let cfg = GrapeConfig { learning_rate: 0.0, ..GrapeConfig::single_qubit() };
        assert!(grape_optimize(&model, &gates::hadamard(), &cfg, None, &mut rng_from(0, &[])).is_err());
    }
}

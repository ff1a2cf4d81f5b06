//! Open-loop execution of fixed pulse schedules under sampled disturbances.

use rayon::prelude::*;

use crate::env::TaskSpec;
use crate::error::{argument, Result};
use crate::qcore::{evolve_trajectory, gate_fidelity, ComplexMatrix, ControlPulseSequence, DisturbanceTrace, SystemModel};
use crate::seed::rng_from;

use super::rollout::{outcome_from_fidelities, EvalSummary, TrialOutcome};

/// Fidelity after every slice of one disturbed run.
pub fn trajectory_fidelities(
    model: &SystemModel,
    target: &ComplexMatrix,
    pulses: &ControlPulseSequence,
    trace: &DisturbanceTrace,
) -> Result<Vec<f64>> {
    evolve_trajectory(model, pulses, trace)?
        .iter()
        .map(|u| gate_fidelity(u, target, model.n_qubits()))
        .collect()
}

/// Runs `pulses` `n_trials` times with fresh disturbance draws. Trial `i`
/// uses the stream derived from `(seed, path, i)`; `epsilon` only decides
/// the per-trial success flag.
pub fn evaluate_open_loop(
    pulses: &ControlPulseSequence,
    model: &SystemModel,
    target: &ComplexMatrix,
    task: TaskSpec,
    n_trials: usize,
    epsilon: f64,
    seed: u64,
    path: &[u64],
) -> Result<EvalSummary> {
    if n_trials == 0 {
        return Err(argument("evaluation needs at least one trial"));
    }
    task.validate()?;
    if task.channels() != model.channels() {
        return Err(argument("task channel layout does not match the model"));
    }
    let outcomes: Vec<TrialOutcome> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut p = path.to_vec();
            p.push(i as u64);
            let mut rng = rng_from(seed, &p);
            let trace = DisturbanceTrace::sample(&task, pulses.n_steps(), &mut rng)?;
            let f = trajectory_fidelities(model, target, pulses, &trace)?;
            Ok(outcome_from_fidelities(&f, epsilon))
        })
        .collect::<Result<_>>()?;
    Ok(EvalSummary::from_outcomes(outcomes))
}

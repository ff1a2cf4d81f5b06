//! Episodic gate-control environment.
//!
//! The state is the accumulated gate `U(t)`, actions are bounded control
//! amplitudes held for one slice, and disturbance realizations are redrawn
//! every slice. The agent only ever sees `U(t)`, never `μ`.

use rand::Rng;

use crate::error::{argument, Error, Result};
use crate::qcore::{
    gate_fidelity, propagator, ComplexMatrix, DisturbanceChannels, DisturbanceSpec, SystemModel,
    C64,
};

/// One control task: the disturbance strengths an environment instance runs with.
pub type TaskSpec = DisturbanceSpec;

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub model: SystemModel,
    pub target: ComplexMatrix,
    /// Control horizon `T`.
    pub horizon: f64,
    /// Maximum number of control slices `N`.
    pub max_steps: usize,
    pub u_min: f64,
    pub u_max: f64,
    /// Success threshold: an episode succeeds once `F > 1 - epsilon`.
    pub epsilon: f64,
}

impl EnvConfig {
    /// Single-qubit preset: `T = 1.6`, `N = 40`, amplitudes in `[-5, 5]`, `ε = 1e-4`.
    pub fn single_qubit(target: ComplexMatrix, channels: DisturbanceChannels) -> Result<Self> {
        let cfg = Self {
            model: SystemModel::spin_chain(1, channels)?,
            target,
            horizon: 1.6,
            max_steps: 40,
            u_min: -5.0,
            u_max: 5.0,
            epsilon: 1e-4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Two-qubit preset: `T = 2.0`, `N = 50`, amplitudes in `[-5, 5]`, `ε = 1e-3`.
    pub fn two_qubit(target: ComplexMatrix, channels: DisturbanceChannels) -> Result<Self> {
        let cfg = Self {
            model: SystemModel::spin_chain(2, channels)?,
            target,
            horizon: 2.0,
            max_steps: 50,
            u_min: -5.0,
            u_max: 5.0,
            epsilon: 1e-3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Preset chosen from the target's dimension.
    pub fn for_target(target: ComplexMatrix, channels: DisturbanceChannels) -> Result<Self> {
        match target.dim() {
            2 => Self::single_qubit(target, channels),
            4 => Self::two_qubit(target, channels),
            d => Err(argument(format!("no preset for {d}x{d} targets"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || !(self.horizon > 0.0) {
            return Err(argument("horizon and step count must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.02) {
            return Err(argument(format!(
                "convergence epsilon {} outside (0, 0.02)",
                self.epsilon
            )));
        }
        if !(self.u_min < self.u_max) {
            return Err(argument("empty action interval"));
        }
        if self.target.dim() != self.model.dim() {
            return Err(argument("target gate dimension does not match the model"));
        }
        if !self.target.is_unitary() {
            return Err(argument("target gate is not unitary"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.max_steps as f64
    }

    pub fn n_qubits(&self) -> usize {
        self.model.n_qubits()
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.model.dim() * self.model.dim()
    }

    pub fn action_dim(&self) -> usize {
        self.model.n_controls()
    }
}

/// Row-major real parts of `U`, then row-major imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn encode_observation(u: &ComplexMatrix) -> Observation {
    let n = u.dim() * u.dim();
    let mut v = vec![0.0; 2 * n];
    for (k, z) in u.entries().enumerate() {
        v[k] = z.re;
        v[n + k] = z.im;
    }
    Observation(v)
}

/// Inverse of [`encode_observation`].
pub fn decode_observation(obs: &[f64]) -> Result<ComplexMatrix> {
    let n = obs.len() / 2;
    let dim = (n as f64).sqrt().round() as usize;
    if obs.len() % 2 != 0 || dim * dim != n {
        return Err(argument(format!("observation length {} is not 2·d²", obs.len())));
    }
    let mut u = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let k = i * dim + j;
            u[(i, j)] = C64::new(obs[k], obs[n + k]);
        }
    }
    Ok(u)
}

/// Piecewise reward on fidelity with linear decay in elapsed time.
pub fn reward_fn(fidelity: f64, t: f64, horizon: f64, epsilon: f64) -> f64 {
    let remaining = 1.0 - t / horizon;
    if fidelity > 1.0 - epsilon {
        500.0 * remaining
    } else if fidelity > 0.98 {
        10.0 * remaining
    } else if fidelity > 0.9 {
        remaining
    } else {
        -(1.0 - fidelity)
    }
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub fidelity: f64,
    /// Success: `F > 1 - ε`.
    pub terminated: bool,
    /// Step budget exhausted without success.
    pub truncated: bool,
    /// 1-based index of the slice just applied.
    pub step_index: usize,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// A single-owner environment instance.
#[derive(Debug, Clone)]
pub struct GateEnv {
    config: EnvConfig,
    task: TaskSpec,
    u: ComplexMatrix,
    step_index: usize,
    finished: bool,
    realization: [f64; 2],
}

impl GateEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let dim = config.model.dim();
        let task = DisturbanceSpec::none(config.model.channels());
        Ok(Self {
            config,
            task,
            u: ComplexMatrix::identity(dim),
            step_index: 0,
            finished: true,
            realization: [0.0; 2],
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn unitary(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Starts an episode at `U(0) = I` under `task`.
    ///
    /// The stream is accepted for interface symmetry with [`GateEnv::step`];
    /// the initial state is deterministic.
    pub fn reset<R: Rng + ?Sized>(&mut self, task: TaskSpec, _rng: &mut R) -> Result<Observation> {
        task.validate()?;
        if task.channels() != self.config.model.channels() {
            return Err(argument("task channel layout does not match the model"));
        }
        self.task = task;
        self.u = ComplexMatrix::identity(self.config.model.dim());
        self.step_index = 0;
        self.finished = false;
        Ok(encode_observation(&self.u))
    }

    /// Applies one control slice. Actions are clamped into the amplitude bounds.
    pub fn step<R: Rng + ?Sized>(&mut self, action: &[f64], rng: &mut R) -> Result<StepResult> {
        if self.finished {
            return Err(Error::State("step called on a finished episode".into()));
        }
        let cfg = &self.config;
        if action.len() != cfg.action_dim() {
            return Err(argument(format!(
                "expected action of length {}, got {}",
                cfg.action_dim(),
                action.len()
            )));
        }
        let mut controls = [0.0; 4];
        for (c, &a) in controls.iter_mut().zip(action) {
            *c = if a.is_nan() { 0.0 } else { a.clamp(cfg.u_min, cfg.u_max) };
        }
        let channels = self.task.channels().count();
        self.task.sample_into(rng, &mut self.realization[..channels])?;
        let h = cfg
            .model
            .hamiltonian(&controls[..action.len()], &self.realization[..channels])?;
        self.u = propagator(&h, cfg.dt())? * self.u;
        self.step_index += 1;

        let fidelity = gate_fidelity(&self.u, &cfg.target, cfg.n_qubits())?;
        let t = self.step_index as f64 * cfg.dt();
        let reward = reward_fn(fidelity, t, cfg.horizon, cfg.epsilon);
        let terminated = fidelity > 1.0 - cfg.epsilon;
        let truncated = !terminated && self.step_index >= cfg.max_steps;
        self.finished = terminated || truncated;
        Ok(StepResult {
            observation: encode_observation(&self.u),
            reward,
            fidelity,
            terminated,
            truncated,
            step_index: self.step_index,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::gates;
    use crate::seed::rng_from;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn hadamard_env() -> GateEnv {
        GateEnv::new(EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::Common).unwrap())
            .unwrap()
    }

    #[test]
    fn reset_encodes_identity() {
        let mut env = hadamard_env();
        let mut rng = rng_from(0, &[]);
        let obs = env.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        assert_eq!(obs.0, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);

        let cfg = EnvConfig::two_qubit(gates::cnot(), DisturbanceChannels::Common).unwrap();
        let mut env = GateEnv::new(cfg).unwrap();
        let obs = env.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        assert_eq!(obs.0.len(), 32);
        for (k, &v) in obs.0.iter().enumerate() {
            let expect = if [0, 5, 10, 15].contains(&k) { 1.0 } else { 0.0 };
            assert_eq!(v, expect);
        }
    }

    #[test]
    fn encode_examples() {
        let s = FRAC_1_SQRT_2;
        assert_eq!(
            encode_observation(&ComplexMatrix::identity(2).scale(C64::new(0.0, 1.0))).0,
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            encode_observation(&gates::hadamard()).0,
            vec![s, s, s, -s, 0.0, 0.0, 0.0, 0.0]
        );
        let u = gates::pi8();
        assert_eq!(decode_observation(&encode_observation(&u).0).unwrap(), u);
        assert!(decode_observation(&[0.0; 6]).is_err());
    }

    #[test]
    fn reward_branches() {
        let eps = 1e-4;
        assert_eq!(reward_fn(0.5, 0.8, 1.6, eps), -0.5);
        assert_eq!(reward_fn(0.95, 0.8, 1.6, eps), 0.5);
        assert_eq!(reward_fn(0.999, 0.8, 1.6, eps), 5.0);
        assert_eq!(reward_fn(0.99995, 0.4, 1.6, eps), 375.0);
        assert_eq!(reward_fn(1.0, 1.6, 1.6, eps), 0.0);
    }

    #[test]
    fn zero_action_first_step() {
        // One drift-only slice: U = diag(e^{-iδ}, e^{iδ}), Tr(H†U)/2 = -i·sin(δ)/√2, so F = sin²(δ)/2.
        let mut env = hadamard_env();
        let mut rng = rng_from(0, &[]);
        env.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        let r = env.step(&[0.0, 0.0], &mut rng).unwrap();
        let delta: f64 = 0.04;
        let expect_f = delta.sin().powi(2) / 2.0;
        assert!((r.fidelity - expect_f).abs() < 1e-15);
        assert_eq!(r.reward, -(1.0 - r.fidelity));
        assert!(!r.terminated && !r.truncated);
        assert_eq!(r.step_index, 1);
    }

    #[test]
    fn truncates_at_step_budget_and_then_refuses() {
        let mut env = hadamard_env();
        let mut rng = rng_from(0, &[]);
        env.reset(TaskSpec::Common { eta: 0.5 }, &mut rng).unwrap();
        let mut last = None;
        for _ in 0..40 {
            let r = env.step(&[0.0, 0.0], &mut rng).unwrap();
            assert!(!r.terminated);
            last = Some(r);
        }
        assert!(last.unwrap().truncated);
        assert!(matches!(env.step(&[0.0, 0.0], &mut rng), Err(Error::State(_))));
    }

    #[test]
    fn terminates_on_success() {
        // Target the drift-only evolution after 3 slices; zero actions reach it exactly.
        let dt: f64 = 0.04;
        let target = ComplexMatrix::diag(&[C64::from_polar(1.0, -3.0 * dt), C64::from_polar(1.0, 3.0 * dt)]);
        let cfg = EnvConfig::single_qubit(target, DisturbanceChannels::Common).unwrap();
        let mut env = GateEnv::new(cfg).unwrap();
        let mut rng = rng_from(0, &[]);
        env.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        env.step(&[0.0, 0.0], &mut rng).unwrap();
        env.step(&[0.0, 0.0], &mut rng).unwrap();
        let r = env.step(&[0.0, 0.0], &mut rng).unwrap();
        assert!(r.terminated && !r.truncated);
        assert!(r.fidelity > 1.0 - 1e-4);
        assert!((r.reward - 500.0 * (1.0 - 3.0 * dt / 1.6)).abs() < 1e-12);
        assert!(env.step(&[0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn actions_are_clamped() {
        let mut a = hadamard_env();
        let mut b = hadamard_env();
        let mut rng = rng_from(0, &[]);
        a.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        b.reset(TaskSpec::Common { eta: 0.0 }, &mut rng).unwrap();
        let ra = a.step(&[50.0, -7.0], &mut rng).unwrap();
        let rb = b.step(&[5.0, -5.0], &mut rng).unwrap();
        assert_eq!(ra.observation, rb.observation);
        assert!(a.step(&[0.0], &mut rng).is_err());
    }

    #[test]
    fn task_must_match_channels() {
        let mut env = hadamard_env();
        let mut rng = rng_from(0, &[]);
        assert!(env
            .reset(TaskSpec::DriftAndControl { eta0: 0.1, etau: 0.1 }, &mut rng)
            .is_err());
        assert!(env.reset(TaskSpec::Common { eta: 1.5 }, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::Common).unwrap();
        cfg.epsilon = 0.05;
        assert!(cfg.validate().is_err());
        let cfg = EnvConfig::single_qubit(gates::cnot(), DisturbanceChannels::Common);
        assert!(cfg.is_err());
    }
}

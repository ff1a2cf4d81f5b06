//! Proximal policy optimization on a single fixed task.

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, TaskSpec};
use crate::error::{argument, Result};
use crate::nnet::{Adam, PolicyParams, PolicySpec};
use crate::seed::{label, rng_from};

use super::rollout::{collect_rollout, evaluate_policy, evaluate_with_return, EvalSummary, RolloutBatch, RolloutSize};
use super::update::{clipped_update, UpdateConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub update: UpdateConfig,
    pub rollout: RolloutSize,
    /// Training stops after the iteration that crosses this many env steps.
    pub total_steps: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// The fixed training task.
    pub task: TaskSpec,
    /// Evaluate every this many iterations; `0` disables evaluation.
    pub eval_every: usize,
    pub eval_trials: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            update: UpdateConfig::default(),
            rollout: RolloutSize::Steps(2048),
            total_steps: 300_000,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            task: TaskSpec::Common { eta: 0.3 },
            eval_every: 10,
            eval_trials: 10,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        self.update.validate()?;
        self.task.validate()?;
        match self.rollout {
            RolloutSize::Steps(0) | RolloutSize::Episodes(0) => {
                return Err(argument("rollout size must be positive"))
            }
            _ => {}
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(argument("hidden layer widths must be positive"));
        }
        if !self.init_log_std.is_finite() {
            return Err(argument("initial log std must be finite"));
        }
        if self.eval_every > 0 && self.eval_trials == 0 {
            return Err(argument("evaluation needs at least one trial"));
        }
        Ok(())
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoCurveRow {
    pub iter: usize,
    pub env_steps: usize,
    pub mean_return: f64,
    pub mean_max_fidelity: f64,
    /// Training episodes in this iteration that reached `F > 1 - ε`.
    pub success_episodes: usize,
    /// Deterministic evaluation fidelity, `NaN` on iterations without evaluation.
    pub eval_fidelity: f64,
}

/// Fresh network parameters drawn from the `INIT` stream of `seed`.
pub fn init_policy(env: &EnvConfig, hidden: &[usize], init_log_std: f64, seed: u64) -> PolicyParams {
    let spec = PolicySpec::new(env.obs_dim(), env.action_dim(), hidden);
    PolicyParams::init(spec, init_log_std, &mut rng_from(seed, &[label::INIT]))
}

#[derive(Debug, Clone)]
pub struct PpoTrainer {
    pub config: PpoConfig,
    pub env: EnvConfig,
    pub seed: u64,
    pub params: PolicyParams,
    pub adam: Adam,
    pub iteration: usize,
    pub env_steps: usize,
    pub curve: Vec<PpoCurveRow>,
    best: Option<(f64, PolicyParams)>,
}

impl PpoTrainer {
    pub fn new(env: EnvConfig, config: PpoConfig, seed: u64) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        let params = init_policy(&env, &config.hidden, config.init_log_std, seed);
        let adam = Adam::new(params.values.len());
        Ok(Self {
            config,
            env,
            seed,
            params,
            adam,
            iteration: 0,
            env_steps: 0,
            curve: Vec::new(),
            best: None,
        })
    }

    pub fn finished(&self) -> bool {
        self.env_steps >= self.config.total_steps
    }

    /// Rollout, advantage estimation, clipped update and optional evaluation.
    pub fn iterate(&mut self) -> Result<&PpoCurveRow> {
        let j = self.iteration as u64;
        let cfg = &self.config;
        let episodes = collect_rollout(&self.params, &self.env, cfg.task, cfg.rollout, self.seed, &[label::ROLLOUT, j, 0])?;
        let u = &cfg.update;
        let batch = RolloutBatch::from_groups(&[&episodes], u.gamma, u.lambda, u.reward_scale, u.normalize_advantages);
        clipped_update(&mut self.params, &mut self.adam, &batch, u, &mut rng_from(self.seed, &[label::UPDATE, j]))?;

        let eval_fidelity = if cfg.eval_every > 0 && (self.iteration + 1) % cfg.eval_every == 0 {
            let (s, ret) = evaluate_with_return(&self.params, &self.env, cfg.task, cfg.eval_trials, self.seed, &[label::EVAL, j])?;
            self.consider_best(ret);
            s.mean_max_fidelity
        } else {
            f64::NAN
        };

        let n = episodes.len() as f64;
        self.env_steps += batch.len();
        self.curve.push(PpoCurveRow {
            iter: self.iteration,
            env_steps: self.env_steps,
            mean_return: episodes.iter().map(|e| e.total_reward()).sum::<f64>() / n,
            mean_max_fidelity: episodes.iter().map(|e| e.max_fidelity()).sum::<f64>() / n,
            success_episodes: episodes.iter().filter(|e| e.terminated).count(),
            eval_fidelity,
        });
        self.iteration += 1;
        Ok(self.curve.last().expect("just pushed"))
    }

    fn consider_best(&mut self, score: f64) {
        if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
            self.best = Some((score, self.params.clone()));
        }
    }

    /// Iterates until the step budget is spent.
    pub fn train(&mut self) -> Result<()> {
        while !self.finished() {
            self.iterate()?;
        }
        Ok(())
    }

    /// Parameters with the best mean evaluation return so far, or the
    /// current ones if no evaluation has run.
    pub fn best_params(&self) -> &PolicyParams {
        self.best.as_ref().map_or(&self.params, |(_, p)| p)
    }
}

/// Trains PPO on a fixed task and returns the best parameters with the curve.
pub fn ppo_train(env: EnvConfig, config: PpoConfig, seed: u64) -> Result<(PolicyParams, Vec<PpoCurveRow>)> {
    let mut trainer = PpoTrainer::new(env, config, seed)?;
    trainer.train()?;
    Ok((trainer.best_params().clone(), trainer.curve))
}

/// Deterministic closed-loop Monte Carlo evaluation.
pub fn ppo_evaluate(params: &PolicyParams, env: &EnvConfig, task: TaskSpec, n_trials: usize, seed: u64) -> Result<EvalSummary> {
    if n_trials == 0 {
        return Err(argument("evaluation needs at least one trial"));
    }
    evaluate_policy(params, env, task, n_trials, seed, &[label::EVAL])
}

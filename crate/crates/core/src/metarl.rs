//! Meta-reinforcement learning over a distribution of disturbance tasks.
//!
//! Each meta-iteration samples `K` tasks. For every task the global policy
//! `θ*` collects `n` episodes and takes one plain policy-gradient step of
//! size `α` to obtain `θ_k`; `θ_k` then collects `n` fresh episodes. The
//! meta-update runs clipped-surrogate epochs on `θ*` over all post-adaptation
//! episodes, with the ratio taken against the log-probabilities recorded
//! under `θ_k`.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    clipped_update, collect_episodes, evaluate_with_return, init_policy, ActionMode, EpisodeRecord,
    EvalSummary, PolicyGradientObjective, RolloutBatch, UpdateConfig,
};
use crate::env::{EnvConfig, TaskSpec};
use crate::error::{argument, numeric, Result};
use crate::nnet::{ActorCritic, Adam, PolicyParams, Workspace};
use crate::qcore::DisturbanceChannels;
use crate::seed::{label, rng_from, Rng};

/// Distribution `P` over tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskDistribution {
    /// Every draw returns the same task.
    Fixed { task: TaskSpec },
    /// `η ~ U(lo, hi)` on a single common channel.
    UniformCommon { lo: f64, hi: f64 },
    /// `η₀, ηᵤ ~ U(lo, hi)` independently.
    UniformDual { lo: f64, hi: f64 },
}

impl TaskDistribution {
    /// `U(0, 1)` over the given channel layout.
    pub fn unit(channels: DisturbanceChannels) -> Self {
        match channels {
            DisturbanceChannels::Common => Self::UniformCommon { lo: 0.0, hi: 1.0 },
            DisturbanceChannels::DriftAndControl => Self::UniformDual { lo: 0.0, hi: 1.0 },
        }
    }

    pub fn channels(&self) -> DisturbanceChannels {
        match self {
            Self::Fixed { task } => task.channels(),
            Self::UniformCommon { .. } => DisturbanceChannels::Common,
            Self::UniformDual { .. } => DisturbanceChannels::DriftAndControl,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed { task } => task.validate(),
            Self::UniformCommon { lo, hi } | Self::UniformDual { lo, hi } => {
                if lo >= 0.0 && hi >= lo && hi.is_finite() {
                    Ok(())
                } else {
                    Err(argument(format!("invalid task range [{lo}, {hi}]")))
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> TaskSpec {
        let mut draw = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        match *self {
            Self::Fixed { task } => task,
            Self::UniformCommon { lo, hi } => TaskSpec::Common { eta: draw(lo, hi) },
            Self::UniformDual { lo, hi } => {
                let eta0 = draw(lo, hi);
                let etau = draw(lo, hi);
                TaskSpec::DriftAndControl { eta0, etau }
            }
        }
    }
}

/// `K` independent task draws.
pub fn sample_tasks(dist: &TaskDistribution, k: usize, rng: &mut Rng) -> Vec<TaskSpec> {
    (0..k).map(|_| dist.sample(rng)).collect()
}

/// The task with every channel at strength `eta`.
pub fn task_at(channels: DisturbanceChannels, eta: f64) -> TaskSpec {
    match channels {
        DisturbanceChannels::Common => TaskSpec::Common { eta },
        DisturbanceChannels::DriftAndControl => TaskSpec::DriftAndControl { eta0: eta, etau: eta },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub distribution: TaskDistribution,
    /// Tasks per meta-iteration `K`.
    pub tasks_per_iter: usize,
    /// Episodes per inner and per post-adaptation rollout `n`.
    pub episodes: usize,
    /// Inner policy-gradient rate `α`.
    pub inner_lr: f64,
    /// Meta-update settings; `update.learning_rate` is the meta rate `β` and
    /// `update.epochs` the number of meta epochs.
    pub update: UpdateConfig,
    /// Meta-iterations `J`.
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    /// Inner steps taken at deployment before evaluation.
    pub adapt_steps: usize,
    /// Evaluate every this many iterations; `0` disables evaluation.
    pub eval_every: usize,
    pub eval_trials: usize,
    pub eval_etas: Vec<f64>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            distribution: TaskDistribution::UniformCommon { lo: 0.0, hi: 1.0 },
            tasks_per_iter: 8,
            episodes: 10,
            inner_lr: 0.01,
            update: UpdateConfig::default(),
            iterations: 300,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            adapt_steps: 1,
            eval_every: 10,
            eval_trials: 10,
            eval_etas: vec![0.1, 0.5, 0.9],
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        self.update.validate()?;
        if self.tasks_per_iter == 0 || self.episodes == 0 {
            return Err(argument("tasks per iteration and episodes must be at least 1"));
        }
        if !(self.inner_lr >= 0.0 && self.inner_lr.is_finite()) {
            return Err(argument(format!("inner rate {} must be finite and non-negative", self.inner_lr)));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(argument("hidden layer widths must be positive"));
        }
        if self.eval_every > 0 && (self.eval_trials == 0 || self.eval_etas.is_empty()) {
            return Err(argument("evaluation needs trials and at least one eta"));
        }
        if self.eval_etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(argument("evaluation etas must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Global meta-policy with its optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub params: PolicyParams,
    pub adam: Adam,
    pub iteration: usize,
}

impl MetaState {
    pub fn init(env: &EnvConfig, cfg: &MetaConfig, seed: u64) -> Self {
        let params = init_policy(env, &cfg.hidden, cfg.init_log_std, seed);
        let adam = Adam::new(params.values.len());
        Self { params, adam, iteration: 0 }
    }
}

/// One task's data within a meta-iteration.
#[derive(Debug, Clone)]
pub struct TaskTrial {
    pub task: TaskSpec,
    pub pre: Vec<EpisodeRecord>,
    pub adapted: PolicyParams,
    pub post: Vec<EpisodeRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct TrialBuffer {
    pub trials: Vec<TaskTrial>,
}

/// `θ + α·∇J(θ)` with `J` the advantage-weighted mean log-likelihood of
/// `episodes` (advantages from GAE on the value head).
pub fn policy_gradient_step(
    theta: &PolicyParams,
    episodes: &[EpisodeRecord],
    alpha: f64,
    update: &UpdateConfig,
) -> Result<PolicyParams> {
    if alpha == 0.0 {
        return Ok(theta.clone());
    }
    let batch = RolloutBatch::from_groups(&[episodes], update.gamma, update.lambda, update.reward_scale, update.normalize_advantages);
    if !batch.advantages_finite() {
        return Err(numeric("non-finite advantages in inner rollout"));
    }
    let (_, grad) = ActorCritic::new(theta).loss_and_gradient(&PolicyGradientObjective { batch: &batch }, &mut Workspace::new(&theta.spec))?;
    let mut out = theta.clone();
    for (p, g) in out.values.iter_mut().zip(&grad) {
        *p += alpha * g;
    }
    if !out.is_finite() {
        return Err(numeric("inner update produced non-finite parameters"));
    }
    Ok(out)
}

/// Collects `n` episodes under `θ*` and takes one inner step.
pub fn inner_adapt(
    theta_star: &PolicyParams,
    env: &EnvConfig,
    task: TaskSpec,
    n: usize,
    alpha: f64,
    update: &UpdateConfig,
    seed: u64,
    path: &[u64],
) -> Result<(PolicyParams, Vec<EpisodeRecord>)> {
    let pre = collect_episodes(theta_star, env, task, n, ActionMode::Stochastic, seed, path)?;
    let adapted = policy_gradient_step(theta_star, &pre, alpha, update)?;
    Ok((adapted, pre))
}

/// `n` episodes under the adapted policy; their stored log-probabilities
/// are the reference for the meta ratio.
pub fn post_adapt_rollout(
    theta_k: &PolicyParams,
    env: &EnvConfig,
    task: TaskSpec,
    n: usize,
    seed: u64,
    path: &[u64],
) -> Result<Vec<EpisodeRecord>> {
    collect_episodes(theta_k, env, task, n, ActionMode::Stochastic, seed, path)
}

/// Clipped-surrogate epochs on `θ*` over every task's post-adaptation data.
/// Advantages are normalized per task. On error the state is unchanged.
pub fn meta_update(state: &mut MetaState, buffer: &TrialBuffer, update: &UpdateConfig, rng: &mut Rng) -> Result<()> {
    let groups: Vec<&[EpisodeRecord]> = buffer.trials.iter().map(|t| t.post.as_slice()).collect();
    let batch = RolloutBatch::from_groups(&groups, update.gamma, update.lambda, update.reward_scale, update.normalize_advantages);
    let mut params = state.params.clone();
    let mut adam = state.adam.clone();
    clipped_update(&mut params, &mut adam, &batch, update, rng)?;
    state.params = params;
    state.adam = adam;
    Ok(())
}

/// Online adaptation: `steps` inner updates, each on fresh episodes.
pub fn deploy_adapt(
    params: &PolicyParams,
    env: &EnvConfig,
    task: TaskSpec,
    steps: usize,
    cfg: &MetaConfig,
    seed: u64,
    path: &[u64],
) -> Result<PolicyParams> {
    let mut theta = params.clone();
    for s in 0..steps {
        let mut p = path.to_vec();
        p.extend([label::ADAPT, s as u64]);
        theta = inner_adapt(&theta, env, task, cfg.episodes, cfg.inner_lr, &cfg.update, seed, &p)?.0;
    }
    Ok(theta)
}

/// Adapts to `task`, then evaluates the adapted policy deterministically.
pub fn adapt_and_evaluate(
    params: &PolicyParams,
    env: &EnvConfig,
    task: TaskSpec,
    cfg: &MetaConfig,
    n_trials: usize,
    seed: u64,
    path: &[u64],
) -> Result<EvalSummary> {
    adapt_and_score(params, env, task, cfg, n_trials, seed, path).map(|(s, _)| s)
}

/// [`adapt_and_evaluate`] plus the mean evaluation return.
fn adapt_and_score(
    params: &PolicyParams,
    env: &EnvConfig,
    task: TaskSpec,
    cfg: &MetaConfig,
    n_trials: usize,
    seed: u64,
    path: &[u64],
) -> Result<(EvalSummary, f64)> {
    let adapted = deploy_adapt(params, env, task, cfg.adapt_steps, cfg, seed, path)?;
    let mut p = path.to_vec();
    p.push(label::TRIAL);
    evaluate_with_return(&adapted, env, task, n_trials, seed, &p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaCurveRow {
    pub meta_iter: usize,
    pub mean_pre_adapt_return: f64,
    pub mean_post_adapt_return: f64,
    /// Adapted evaluation fidelity per configured eta, `NaN` when not evaluated.
    pub eval_fidelity: Vec<f64>,
}

fn mean_return(eps: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = eps.fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
    s / n.max(1) as f64
}

#[derive(Debug, Clone)]
pub struct MetaTrainer {
    pub config: MetaConfig,
    pub env: EnvConfig,
    pub seed: u64,
    pub state: MetaState,
    pub curve: Vec<MetaCurveRow>,
    best: Option<(f64, MetaState)>,
}

impl MetaTrainer {
    pub fn new(env: EnvConfig, config: MetaConfig, seed: u64) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        if config.distribution.channels() != env.model.channels() {
            return Err(argument("task distribution does not match the model's disturbance channels"));
        }
        let state = MetaState::init(&env, &config, seed);
        Ok(Self { config, env, seed, state, curve: Vec::new(), best: None })
    }

    pub fn finished(&self) -> bool {
        self.state.iteration >= self.config.iterations
    }

    /// Task sampling, per-task adaptation and post-adaptation rollouts, then
    /// the meta-update.
    pub fn collect(&self) -> Result<TrialBuffer> {
        let j = self.state.iteration as u64;
        let cfg = &self.config;
        let tasks = sample_tasks(&cfg.distribution, cfg.tasks_per_iter, &mut rng_from(self.seed, &[label::TASKS, j]));
        let theta = &self.state.params;
        let trials = tasks
            .into_par_iter()
            .enumerate()
            .map(|(k, task)| {
                let k = k as u64;
                let (adapted, pre) = inner_adapt(theta, &self.env, task, cfg.episodes, cfg.inner_lr, &cfg.update, self.seed, &[label::INNER, j, k])?;
                let post = post_adapt_rollout(&adapted, &self.env, task, cfg.episodes, self.seed, &[label::ROLLOUT, j, k])?;
                Ok(TaskTrial { task, pre, adapted, post })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialBuffer { trials })
    }

    pub fn iterate(&mut self) -> Result<&MetaCurveRow> {
        let j = self.state.iteration as u64;
        let buffer = self.collect()?;
        meta_update(&mut self.state, &buffer, &self.config.update, &mut rng_from(self.seed, &[label::UPDATE, j]))?;
        if !self.state.params.is_finite() {
            return Err(numeric(format!("meta parameters non-finite after iteration {j}")));
        }
        self.state.iteration += 1;

        let cfg = &self.config;
        let eval_fidelity = if cfg.eval_every > 0 && self.state.iteration % cfg.eval_every == 0 {
            let scored = self.evaluate_scored(cfg.eval_trials, &[label::EVAL, j])?;
            let score = scored.iter().map(|s| s.1).sum::<f64>() / scored.len() as f64;
            let f = scored.iter().map(|s| s.0.mean_max_fidelity).collect();
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, self.state.clone()));
            }
            f
        } else {
            vec![f64::NAN; cfg.eval_etas.len()]
        };
        self.curve.push(MetaCurveRow {
            meta_iter: j as usize,
            mean_pre_adapt_return: mean_return(buffer.trials.iter().flat_map(|t| t.pre.iter().map(|e| e.total_reward()))),
            mean_post_adapt_return: mean_return(buffer.trials.iter().flat_map(|t| t.post.iter().map(|e| e.total_reward()))),
            eval_fidelity,
        });
        Ok(self.curve.last().expect("just pushed"))
    }

    /// Mean adapted evaluation fidelity at each configured eta.
    pub fn evaluate(&self, n_trials: usize, path: &[u64]) -> Result<Vec<f64>> {
        Ok(self.evaluate_scored(n_trials, path)?.into_iter().map(|(s, _)| s.mean_max_fidelity).collect())
    }

    fn evaluate_scored(&self, n_trials: usize, path: &[u64]) -> Result<Vec<(EvalSummary, f64)>> {
        let channels = self.env.model.channels();
        self.config
            .eval_etas
            .iter()
            .enumerate()
            .map(|(i, &eta)| {
                let mut p = path.to_vec();
                p.push(i as u64);
                adapt_and_score(&self.state.params, &self.env, task_at(channels, eta), &self.config, n_trials, self.seed, &p)
            })
            .collect()
    }

    pub fn train(&mut self) -> Result<()> {
        while !self.finished() {
            self.iterate()?;
        }
        Ok(())
    }

    /// State with the best mean adapted evaluation return, or the current
    /// one if no evaluation has run.
    pub fn best_state(&self) -> &MetaState {
        self.best.as_ref().map_or(&self.state, |(_, s)| s)
    }
}

/// Runs `J` meta-iterations and returns the best state with the curve.
pub fn meta_train(env: EnvConfig, config: MetaConfig, seed: u64) -> Result<(MetaState, Vec<MetaCurveRow>)> {
    let mut trainer = MetaTrainer::new(env, config, seed)?;
    trainer.train()?;
    Ok((trainer.best_state().clone(), trainer.curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{PpoConfig, PpoTrainer, RolloutSize};
    use crate::qcore::gates;

    fn env() -> EnvConfig {
        EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::Common).unwrap()
    }

    fn small() -> MetaConfig {
        MetaConfig {
            tasks_per_iter: 2,
            episodes: 2,
            iterations: 2,
            hidden: vec![8, 8],
            eval_every: 1,
            eval_trials: 2,
            ..Default::default()
        }
    }

    #[test]
    fn uniform_draws() {
        let mut rng = rng_from(1, &[]);
        let d = TaskDistribution::UniformCommon { lo: 0.0, hi: 1.0 };
        let n = 100_000;
        let mean = sample_tasks(&d, n, &mut rng)
            .iter()
            .map(|t| match t {
                TaskSpec::Common { eta } => *eta,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01);
        for t in sample_tasks(&TaskDistribution::unit(DisturbanceChannels::DriftAndControl), 1000, &mut rng) {
            let s = t.stddevs();
            assert!(s.iter().all(|e| (0.0..=1.0).contains(e)));
        }
        let fixed = TaskDistribution::Fixed { task: TaskSpec::Common { eta: 0.3 } };
        assert!(sample_tasks(&fixed, 5, &mut rng).iter().all(|t| *t == TaskSpec::Common { eta: 0.3 }));
    }

    #[test]
    fn zero_rate_or_zero_advantage_is_identity() {
        let env = env();
        let cfg = small();
        let theta = init_policy(&env, &cfg.hidden, 0.0, 3);
        let (a, _) = inner_adapt(&theta, &env, TaskSpec::Common { eta: 0.2 }, 2, 0.0, &cfg.update, 1, &[]).unwrap();
        assert_eq!(a, theta);
        let (_, eps) = inner_adapt(&theta, &env, TaskSpec::Common { eta: 0.2 }, 2, 0.1, &cfg.update, 1, &[]).unwrap();
        // Rewards equal to the value predictions on every step give zero advantages.
        let mut flat = eps.clone();
        let update = UpdateConfig { normalize_advantages: false, gamma: 1.0, lambda: 1.0, reward_scale: 1.0, ..cfg.update.clone() };
        for e in flat.iter_mut() {
            for t in 0..e.len() {
                let next = if t + 1 < e.len() { e.values[t + 1] } else { 0.0 };
                e.rewards[t] = e.values[t] - next;
            }
        }
        let b = policy_gradient_step(&theta, &flat, 0.5, &update).unwrap();
        for (x, y) in b.values.iter().zip(&theta.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_step_matches_hand_rolled_reinforce() {
        let env = env();
        let cfg = small();
        let theta = init_policy(&env, &[4], -0.3, 8);
        let update = cfg.update.clone();
        let (adapted, eps) = inner_adapt(&theta, &env, TaskSpec::Common { eta: 0.4 }, 2, 0.1, &update, 5, &[]).unwrap();
        let batch = RolloutBatch::from_groups(&[&eps], update.gamma, update.lambda, update.reward_scale, true);
        // Per-step central differences of log π, accumulated by hand.
        let h = 1e-6;
        let m = batch.len() as f64;
        for i in 0..theta.values.len() {
            let mut g = 0.0;
            for t in 0..batch.len() {
                let mut p = theta.clone();
                p.values[i] += h;
                let up = ActorCritic::new(&p).log_prob(batch.observation(t), batch.action(t)).unwrap();
                p.values[i] -= 2.0 * h;
                let down = ActorCritic::new(&p).log_prob(batch.observation(t), batch.action(t)).unwrap();
                g += (up - down) / (2.0 * h) * batch.advantages[t];
            }
            let expect = theta.values[i] + 0.1 * g / m;
            assert!((adapted.values[i] - expect).abs() < 1e-7, "param {i}");
        }
    }

    #[test]
    fn post_adapt_log_probs_recompute() {
        let env = env();
        let theta = init_policy(&env, &[8], -0.5, 2);
        let eps = post_adapt_rollout(&theta, &env, TaskSpec::Common { eta: 0.7 }, 2, 9, &[1]).unwrap();
        for e in &eps {
            for t in 0..e.len() {
                let lp = ActorCritic::new(&theta).log_prob(e.observation(t), e.action(t)).unwrap();
                assert!((lp - e.log_probs[t]).abs() < 1e-10);
            }
        }
        assert_eq!(eps, post_adapt_rollout(&theta, &env, TaskSpec::Common { eta: 0.7 }, 2, 9, &[1]).unwrap());
    }

    #[test]
    fn zero_iterations_leave_state_unchanged() {
        let env = env();
        let cfg = MetaConfig { iterations: 0, ..small() };
        let (state, curve) = meta_train(env.clone(), cfg.clone(), 4).unwrap();
        assert_eq!(state, MetaState::init(&env, &cfg, 4));
        assert!(curve.is_empty());
    }

    #[test]
    fn training_is_reproducible() {
        let (a, ca) = meta_train(env(), small(), 4).unwrap();
        let (b, cb) = meta_train(env(), small(), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(format!("{ca:?}"), format!("{cb:?}"));
        assert_eq!(ca.len(), 2);
    }

    #[test]
    fn reduces_to_ppo() {
        let env = env();
        let task = TaskSpec::Common { eta: 0.3 };
        let meta = MetaConfig {
            distribution: TaskDistribution::Fixed { task },
            tasks_per_iter: 1,
            episodes: 3,
            inner_lr: 0.0,
            iterations: 3,
            hidden: vec![8, 8],
            eval_every: 0,
            ..Default::default()
        };
        let ppo = PpoConfig {
            update: meta.update.clone(),
            rollout: RolloutSize::Episodes(3),
            total_steps: usize::MAX,
            hidden: meta.hidden.clone(),
            init_log_std: meta.init_log_std,
            task,
            eval_every: 0,
            eval_trials: 1,
        };
        let mut m = MetaTrainer::new(env.clone(), meta, 11).unwrap();
        let mut p = PpoTrainer::new(env, ppo, 11).unwrap();
        assert_eq!(m.state.params, p.params);
        for _ in 0..3 {
            m.iterate().unwrap();
            p.iterate().unwrap();
            assert_eq!(m.state.params.values, p.params.values);
        }
    }

    #[test]
    fn deploy_budget_zero_is_identity() {
        let env = env();
        let cfg = small();
        let theta = init_policy(&env, &cfg.hidden, 0.0, 1);
        let out = deploy_adapt(&theta, &env, TaskSpec::Common { eta: 0.5 }, 0, &cfg, 2, &[]).unwrap();
        assert_eq!(out, theta);
        let a = deploy_adapt(&theta, &env, TaskSpec::Common { eta: 0.5 }, 1, &cfg, 2, &[]).unwrap();
        let b = deploy_adapt(&theta, &env, TaskSpec::Common { eta: 0.5 }, 1, &cfg, 2, &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, theta);
    }

    #[test]
    fn rejects_mismatched_distribution() {
        let cfg = MetaConfig { distribution: TaskDistribution::unit(DisturbanceChannels::DriftAndControl), ..small() };
        assert!(MetaTrainer::new(env(), cfg, 0).is_err());
        let cfg = MetaConfig { tasks_per_iter: 0, ..small() };
        assert!(MetaTrainer::new(env(), cfg, 0).is_err());
    }
}

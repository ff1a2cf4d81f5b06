//! Episode collection, advantage estimation and closed-loop evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, GateEnv, TaskSpec};
use crate::error::Result;
use crate::nnet::{ActorCritic, PolicyParams, Workspace};
use crate::seed::{derive_seed, rng_from, Rng};

/// One environment rollout. Per-step arrays are aligned; observations and
/// actions are flattened with strides `obs_dim` and `action_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    /// Pre-clamp sampled actions (the log-probabilities refer to these).
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub fidelities: Vec<f64>,
    /// The final step reached `F > 1 - ε`.
    pub terminated: bool,
    pub truncated: bool,
}

impl EpisodeRecord {
    fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            rewards: Vec::new(),
            values: Vec::new(),
            fidelities: Vec::new(),
            terminated: false,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    /// Step `t` ends the episode.
    pub fn done(&self, t: usize) -> bool {
        t + 1 == self.len() && (self.terminated || self.truncated)
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn max_fidelity(&self) -> f64 {
        self.fidelities.iter().copied().fold(0.0, f64::max)
    }
}

/// How actions are chosen during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    /// Sample from the Gaussian policy.
    Stochastic,
    /// Use the policy mean.
    Deterministic,
}

/// Runs one episode to success or truncation. The same stream drives both
/// action sampling and the disturbance draws.
pub fn run_episode(
    params: &PolicyParams,
    env: &mut GateEnv,
    task: TaskSpec,
    mode: ActionMode,
    rng: &mut Rng,
) -> Result<EpisodeRecord> {
    let net = ActorCritic::new(params);
    let mut ws = Workspace::new(&params.spec);
    let cfg = env.config();
    let mut ep = EpisodeRecord::new(cfg.obs_dim(), cfg.action_dim());
    let mut obs = env.reset(task, rng)?;
    loop {
        let (action, log_prob, value) = match mode {
            ActionMode::Stochastic => net.sample(obs.as_slice(), &mut ws, rng)?,
            ActionMode::Deterministic => {
                let out = net.heads(obs.as_slice(), &mut ws)?;
                let lp = crate::nnet::gaussian_log_prob(&out.mean, &out.log_std, &out.mean);
                (out.mean, lp, out.value)
            }
        };
        let step = env.step(&action, rng)?;
        ep.observations.extend_from_slice(obs.as_slice());
        ep.actions.extend_from_slice(&action);
        ep.log_probs.push(log_prob);
        ep.values.push(value);
        ep.rewards.push(step.reward);
        ep.fidelities.push(step.fidelity);
        if step.done() {
            ep.terminated = step.terminated;
            ep.truncated = step.truncated;
            return Ok(ep);
        }
        obs = step.observation;
    }
}

/// Stream for episode `index` under a collection seed.
pub fn episode_seed(base: u64, path: &[u64], index: usize) -> u64 {
    let mut p = path.to_vec();
    p.push(index as u64);
    derive_seed(base, &p)
}

/// Collects `count` episodes in parallel. Episode `e` uses its own stream
/// derived from `(base, path, e)`, so results do not depend on the number of
/// worker threads.
pub fn collect_episodes(
    params: &PolicyParams,
    env_config: &EnvConfig,
    task: TaskSpec,
    count: usize,
    mode: ActionMode,
    base: u64,
    path: &[u64],
) -> Result<Vec<EpisodeRecord>> {
    collect_range(params, env_config, task, 0..count, mode, base, path)
}

fn collect_range(
    params: &PolicyParams,
    env_config: &EnvConfig,
    task: TaskSpec,
    range: std::ops::Range<usize>,
    mode: ActionMode,
    base: u64,
    path: &[u64],
) -> Result<Vec<EpisodeRecord>> {
    range
        .into_par_iter()
        .map(|e| {
            let mut env = GateEnv::new(env_config.clone())?;
            let mut rng = rng_from(episode_seed(base, path, e), &[]);
            run_episode(params, &mut env, task, mode, &mut rng)
        })
        .collect()
}

/// Rollout budget for one policy-improvement iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutSize {
    /// Whole episodes until at least this many environment steps.
    Steps(usize),
    Episodes(usize),
}

/// Collects episodes according to `size`. Step budgets are met with
/// whole episodes: collection stops at the first episode whose cumulative
/// length reaches the budget.
pub fn collect_rollout(
    params: &PolicyParams,
    env_config: &EnvConfig,
    task: TaskSpec,
    size: RolloutSize,
    base: u64,
    path: &[u64],
) -> Result<Vec<EpisodeRecord>> {
    match size {
        RolloutSize::Episodes(n) => {
            collect_episodes(params, env_config, task, n, ActionMode::Stochastic, base, path)
        }
        RolloutSize::Steps(budget) => {
            let mut out: Vec<EpisodeRecord> = Vec::new();
            let mut steps = 0;
            while steps < budget {
                let wave = (budget - steps).div_ceil(env_config.max_steps).max(1);
                let start = out.len();
                let batch = collect_range(
                    params,
                    env_config,
                    task,
                    start..start + wave,
                    ActionMode::Stochastic,
                    base,
                    path,
                )?;
                for ep in batch {
                    if steps >= budget {
                        break;
                    }
                    steps += ep.len();
                    out.push(ep);
                }
            }
            Ok(out)
        }
    }
}

/// Generalized advantage estimates and bootstrapped return targets.
/// The step that ends an episode (success or time limit) bootstraps zero.
pub fn gae(ep: &EpisodeRecord, gamma: f64, lambda: f64, reward_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let n = ep.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let terminal = ep.done(t);
        let next_value = if terminal || t + 1 >= n { 0.0 } else { ep.values[t + 1] };
        let cont = if terminal { 0.0 } else { 1.0 };
        let delta = reward_scale * ep.rewards[t] + gamma * next_value * cont - ep.values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        adv[t] = next_adv;
    }
    let returns = adv.iter().zip(&ep.values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// In-place zero-mean, unit-variance standardization.
pub fn normalize(xs: &mut [f64]) {
    if xs.len() < 2 {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

/// Flattened training data with advantages and value targets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    /// Concatenates groups of episodes (one group per task). Advantages are
    /// standardized within each group when `normalize_advantages` is set.
    pub fn from_groups(
        groups: &[&[EpisodeRecord]],
        gamma: f64,
        lambda: f64,
        reward_scale: f64,
        normalize_advantages: bool,
    ) -> Self {
        let mut b = RolloutBatch::default();
        for group in groups {
            let mut group_adv = Vec::new();
            for ep in group.iter() {
                b.obs_dim = ep.obs_dim;
                b.action_dim = ep.action_dim;
                let (adv, ret) = gae(ep, gamma, lambda, reward_scale);
                b.observations.extend_from_slice(&ep.observations);
                b.actions.extend_from_slice(&ep.actions);
                b.old_log_probs.extend_from_slice(&ep.log_probs);
                b.returns.extend(ret);
                group_adv.extend(adv);
            }
            if normalize_advantages {
                normalize(&mut group_adv);
            }
            b.advantages.extend(group_adv);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn advantages_finite(&self) -> bool {
        self.advantages.iter().all(|a| a.is_finite())
    }
}

/// Per-trial outcome of a closed- or open-loop evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub max_fidelity: f64,
    /// 1-based step at which the maximum was first reached.
    pub steps_to_max: usize,
    pub success: bool,
}

/// Aggregate over Monte Carlo trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub trials: usize,
    pub mean_max_fidelity: f64,
    pub std_max_fidelity: f64,
    pub mean_steps_to_max: f64,
    pub success_rate: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl EvalSummary {
    pub fn from_outcomes(outcomes: Vec<TrialOutcome>) -> Self {
        let n = outcomes.len().max(1) as f64;
        let mean = outcomes.iter().map(|o| o.max_fidelity).sum::<f64>() / n;
        let var = outcomes.iter().map(|o| (o.max_fidelity - mean).powi(2)).sum::<f64>() / n;
        Self {
            trials: outcomes.len(),
            mean_max_fidelity: mean,
            std_max_fidelity: var.sqrt(),
            mean_steps_to_max: outcomes.iter().map(|o| o.steps_to_max as f64).sum::<f64>() / n,
            success_rate: outcomes.iter().filter(|o| o.success).count() as f64 / n,
            outcomes,
        }
    }
}

pub(crate) fn outcome_from_fidelities(fidelities: &[f64], epsilon: f64) -> TrialOutcome {
    let mut best = 0.0;
    let mut at = 0;
    for (t, &f) in fidelities.iter().enumerate() {
        if f > best || t == 0 {
            best = f;
            at = t + 1;
        }
    }
    TrialOutcome {
        max_fidelity: best.clamp(0.0, 1.0),
        steps_to_max: at,
        success: best > 1.0 - epsilon,
    }
}

/// Closed-loop evaluation with the deterministic policy mean. Trial `i`
/// draws its disturbances from a stream derived from `(base, path, i)`.
pub fn evaluate_policy(
    params: &PolicyParams,
    env_config: &EnvConfig,
    task: TaskSpec,
    n_trials: usize,
    base: u64,
    path: &[u64],
) -> Result<EvalSummary> {
    evaluate_with_return(params, env_config, task, n_trials, base, path).map(|(s, _)| s)
}

/// [`evaluate_policy`] plus the mean undiscounted episode return, which is
/// what checkpoint selection ranks by.
pub(crate) fn evaluate_with_return(
    params: &PolicyParams,
    env_config: &EnvConfig,
    task: TaskSpec,
    n_trials: usize,
    base: u64,
    path: &[u64],
) -> Result<(EvalSummary, f64)> {
    let eps = collect_episodes(params, env_config, task, n_trials, ActionMode::Deterministic, base, path)?;
    let mean_return = eps.iter().map(EpisodeRecord::total_reward).sum::<f64>() / eps.len().max(1) as f64;
    let summary = EvalSummary::from_outcomes(
        eps.iter()
            .map(|e| outcome_from_fidelities(&e.fidelities, env_config.epsilon))
            .collect(),
    );
    Ok((summary, mean_return))
}

//! Surrogate losses and the shared clipped policy update.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{argument, numeric, Result};
use crate::nnet::{
    add_log_prob_grad, clip_grad_norm, gaussian_entropy, gaussian_log_prob, ActorCritic, Adam,
    HeadGrads, HeadOutputs, PolicyParams, SampleLoss, Workspace,
};
use crate::seed::Rng;

use super::rollout::RolloutBatch;

/// `min(c·Â, clip(c, 1-ε, 1+ε)·Â)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Whether the unclipped branch is the active one, i.e. the surrogate term
/// still depends on the ratio.
fn unclipped_active(ratio: f64, advantage: f64, clip_eps: f64) -> bool {
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
    ratio * advantage <= clipped * advantage
}

/// Negated clipped surrogate plus value regression and entropy bonus,
/// averaged over the selected indices. Minimizing it maximizes the surrogate.
pub struct ClippedSurrogateLoss<'a> {
    pub batch: &'a RolloutBatch,
    pub indices: &'a [usize],
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl SampleLoss for ClippedSurrogateLoss<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn observation(&self, i: usize) -> &[f64] {
        self.batch.observation(self.indices[i])
    }

    fn term(&self, i: usize, out: &HeadOutputs, grads: &mut HeadGrads) -> f64 {
        let j = self.indices[i];
        let m = self.indices.len() as f64;
        let action = self.batch.action(j);
        let adv = self.batch.advantages[j];
        let logp = gaussian_log_prob(&out.mean, &out.log_std, action);
        let ratio = (logp - self.batch.old_log_probs[j]).exp();
        let surrogate = clipped_term(ratio, adv, self.clip_eps);
        if unclipped_active(ratio, adv, self.clip_eps) {
            add_log_prob_grad(out, action, -ratio * adv / m, grads);
        }
        let diff = out.value - self.batch.returns[j];
        grads.d_value = self.value_coef * diff / m;
        for d in grads.d_log_std.iter_mut() {
            *d -= self.entropy_coef / m;
        }
        (-surrogate + 0.5 * self.value_coef * diff * diff - self.entropy_coef * gaussian_entropy(&out.log_std)) / m
    }
}

/// Vanilla policy-gradient objective `(1/m) Σ log π(a|s)·Â`. Its gradient is
/// the ascent direction used for inner adaptation.
pub struct PolicyGradientObjective<'a> {
    pub batch: &'a RolloutBatch,
}

impl SampleLoss for PolicyGradientObjective<'_> {
    fn len(&self) -> usize {
        self.batch.len()
    }

    fn observation(&self, i: usize) -> &[f64] {
        self.batch.observation(i)
    }

    fn term(&self, i: usize, out: &HeadOutputs, grads: &mut HeadGrads) -> f64 {
        let m = self.batch.len() as f64;
        let action = self.batch.action(i);
        let adv = self.batch.advantages[i];
        add_log_prob_grad(out, action, adv / m, grads);
        gaussian_log_prob(&out.mean, &out.log_std, action) * adv / m
    }

    fn uses_value(&self) -> bool {
        false
    }
}

/// Hyperparameters of one clipped-surrogate optimization phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub max_grad_norm: f64,
    /// Multiplier applied to rewards before advantage estimation.
    pub reward_scale: f64,
    pub normalize_advantages: bool,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 4,
            minibatch: 64,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            normalize_advantages: true,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(argument(format!("clip epsilon {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(argument("discount and GAE lambda must lie in (0, 1]"));
        }
        if self.epochs == 0 || self.minibatch == 0 {
            return Err(argument("epochs and minibatch size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return Err(argument("learning rate and reward scale must be positive"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 || self.max_grad_norm < 0.0 {
            return Err(argument("loss coefficients must be non-negative"));
        }
        Ok(())
    }
}

/// Diagnostics from one update phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub mean_loss: f64,
    pub minibatches: usize,
}

/// Several epochs of shuffled minibatch descent on [`ClippedSurrogateLoss`].
/// On a numeric failure `params` is left at the last good value.
pub fn clipped_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &RolloutBatch,
    cfg: &UpdateConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if !batch.advantages_finite() {
        return Err(numeric("non-finite advantages in rollout batch"));
    }
    let mut ws = Workspace::new(&params.spec);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let loss = ClippedSurrogateLoss {
                batch,
                indices: chunk,
                clip_eps: cfg.clip_eps,
                value_coef: cfg.value_coef,
                entropy_coef: cfg.entropy_coef,
            };
            let (value, mut grad) = ActorCritic::new(params).loss_and_gradient(&loss, &mut ws)?;
            if cfg.max_grad_norm > 0.0 {
                clip_grad_norm(&mut grad, cfg.max_grad_norm);
            }
            let mut next = params.values.clone();
            adam.step(&mut next, &grad, cfg.learning_rate)?;
            if !next.iter().all(|v| v.is_finite()) {
                return Err(numeric("parameters became non-finite"));
            }
            params.values = next;
            stats.mean_loss += value;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        stats.mean_loss /= stats.minibatches as f64;
    }
    Ok(stats)
}

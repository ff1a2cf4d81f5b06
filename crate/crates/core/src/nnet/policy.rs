//! Actor-critic network with a diagonal Gaussian policy head.
//!
//! All parameters live in one flat vector laid out as
//! `[actor MLP | log-std | critic MLP]`, which keeps optimizer and
//! meta-update arithmetic plain vector arithmetic.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{backward, forward, MlpCache, MlpSpec};
use crate::error::{argument, numeric, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub actor: MlpSpec,
    pub critic: MlpSpec,
}

impl PolicySpec {
    /// Separate actor and critic trunks sharing the same hidden widths.
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize]) -> Self {
        let mut a = vec![obs_dim];
        a.extend_from_slice(hidden);
        let mut c = a.clone();
        a.push(action_dim);
        c.push(1);
        Self {
            actor: MlpSpec::new(a),
            critic: MlpSpec::new(c),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.actor.param_count() + self.action_dim() + self.critic.param_count()
    }

    pub fn actor_range(&self) -> std::ops::Range<usize> {
        0..self.actor.param_count()
    }

    pub fn log_std_range(&self) -> std::ops::Range<usize> {
        let a = self.actor.param_count();
        a..a + self.action_dim()
    }

    pub fn critic_range(&self) -> std::ops::Range<usize> {
        let s = self.log_std_range().end;
        s..s + self.critic.param_count()
    }

    /// Names the parameter block containing flat index `i`.
    pub fn locate(&self, i: usize) -> String {
        if self.actor_range().contains(&i) {
            format!("actor[{i}]")
        } else if self.log_std_range().contains(&i) {
            format!("log_std[{}]", i - self.log_std_range().start)
        } else {
            format!("critic[{}]", i - self.critic_range().start)
        }
    }
}

/// Parameters of the actor-critic network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub spec: PolicySpec,
    pub values: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(spec: PolicySpec) -> Self {
        let n = spec.param_count();
        Self { spec, values: vec![0.0; n] }
    }

    /// Orthogonal hidden layers with gain √2, policy output gain 0.01,
    /// value output gain 1, and a constant initial log-std.
    pub fn init<R: Rng + ?Sized>(spec: PolicySpec, init_log_std: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        let s = &p.spec;
        let (ar, lr, cr) = (s.actor_range(), s.log_std_range(), s.critic_range());
        let (actor, critic) = (s.actor.clone(), s.critic.clone());
        actor.init(&mut p.values[ar], 2f64.sqrt(), 0.01, rng);
        p.values[lr].fill(init_log_std);
        critic.init(&mut p.values[cr], 2f64.sqrt(), 1.0, rng);
        p
    }

    pub fn from_values(spec: PolicySpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(argument(format!(
                "parameter vector has {} entries, spec requires {}",
                values.len(),
                spec.param_count()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn log_std(&self) -> &[f64] {
        &self.values[self.spec.log_std_range()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Outputs of both heads for one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
}

/// Per-sample loss gradients with respect to the head outputs.
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub d_mean: Vec<f64>,
    pub d_log_std: Vec<f64>,
    pub d_value: f64,
}

impl HeadGrads {
    fn new(action_dim: usize) -> Self {
        Self {
            d_mean: vec![0.0; action_dim],
            d_log_std: vec![0.0; action_dim],
            d_value: 0.0,
        }
    }

    fn clear(&mut self) {
        self.d_mean.fill(0.0);
        self.d_log_std.fill(0.0);
        self.d_value = 0.0;
    }
}

/// A scalar loss that decomposes into per-sample terms of the head outputs.
pub trait SampleLoss {
    fn len(&self) -> usize;

    fn observation(&self, i: usize) -> &[f64];

    /// Loss contribution of sample `i`; writes its gradient into `grads`
    /// (which arrives zeroed).
    fn term(&self, i: usize, out: &HeadOutputs, grads: &mut HeadGrads) -> f64;

    /// Whether the loss reads the value head; skipping it halves the cost
    /// of pure policy-gradient losses.
    fn uses_value(&self) -> bool {
        true
    }
}

/// Diagonal Gaussian log-density.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Entropy of a diagonal Gaussian.
pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

/// Adds `coef · ∂ log π(a) / ∂(mean, log_std)` into `grads`.
pub fn add_log_prob_grad(out: &HeadOutputs, action: &[f64], coef: f64, grads: &mut HeadGrads) {
    for k in 0..action.len() {
        let inv_var = (-2.0 * out.log_std[k]).exp();
        let diff = action[k] - out.mean[k];
        grads.d_mean[k] += coef * diff * inv_var;
        grads.d_log_std[k] += coef * (diff * diff * inv_var - 1.0);
    }
}

/// Scratch buffers for evaluating an [`ActorCritic`].
#[derive(Debug, Clone)]
pub struct Workspace {
    actor: MlpCache,
    critic: MlpCache,
    out: HeadOutputs,
    grads: HeadGrads,
}

impl Workspace {
    pub fn new(spec: &PolicySpec) -> Self {
        Self {
            actor: MlpCache::new(&spec.actor),
            critic: MlpCache::new(&spec.critic),
            out: HeadOutputs {
                mean: vec![0.0; spec.action_dim()],
                log_std: vec![0.0; spec.action_dim()],
                value: 0.0,
            },
            grads: HeadGrads::new(spec.action_dim()),
        }
    }
}

/// Read-only view of parameters as a network.
#[derive(Debug, Clone, Copy)]
pub struct ActorCritic<'a> {
    pub params: &'a PolicyParams,
}

impl<'a> ActorCritic<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self { params }
    }

    fn spec(&self) -> &PolicySpec {
        &self.params.spec
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.spec().obs_dim() {
            return Err(argument(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.spec().obs_dim()
            )));
        }
        Ok(())
    }

    fn eval_into(&self, obs: &[f64], ws: &mut Workspace, with_value: bool) {
        let spec = self.spec();
        let v = &self.params.values;
        let mean = forward(&spec.actor, &v[spec.actor_range()], obs, &mut ws.actor);
        ws.out.mean.copy_from_slice(mean);
        ws.out.log_std.copy_from_slice(&v[spec.log_std_range()]);
        ws.out.value = if with_value {
            forward(&spec.critic, &v[spec.critic_range()], obs, &mut ws.critic)[0]
        } else {
            0.0
        };
    }

    /// Action mean and state value.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_obs(obs)?;
        let mut ws = Workspace::new(self.spec());
        self.eval_into(obs, &mut ws, true);
        Ok((ws.out.mean.clone(), ws.out.value))
    }

    pub fn heads(&self, obs: &[f64], ws: &mut Workspace) -> Result<HeadOutputs> {
        self.check_obs(obs)?;
        self.eval_into(obs, ws, true);
        Ok(ws.out.clone())
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        self.check_obs(obs)?;
        let mut ws = Workspace::new(self.spec());
        self.eval_into(obs, &mut ws, false);
        Ok(gaussian_log_prob(&ws.out.mean, &ws.out.log_std, action))
    }

    /// Draws `mean + std ⊙ z` (pre-clamp) and returns it with its
    /// log-density and the state value.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        ws: &mut Workspace,
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64, f64)> {
        self.check_obs(obs)?;
        self.eval_into(obs, ws, true);
        let out = &ws.out;
        let action: Vec<f64> = out
            .mean
            .iter()
            .zip(&out.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        let lp = gaussian_log_prob(&out.mean, &out.log_std, &action);
        if !action.iter().all(|a| a.is_finite()) || !lp.is_finite() {
            return Err(numeric("non-finite action sample"));
        }
        Ok((action, lp, out.value))
    }

    /// Loss value and its exact gradient with respect to every parameter.
    pub fn loss_and_gradient<L: SampleLoss + ?Sized>(&self, loss: &L, ws: &mut Workspace) -> Result<(f64, Vec<f64>)> {
        let spec = self.spec().clone();
        let v = &self.params.values;
        let mut grad = vec![0.0; spec.param_count()];
        let mut total = 0.0;
        let with_value = loss.uses_value();
        for i in 0..loss.len() {
            let obs = loss.observation(i);
            self.check_obs(obs)?;
            self.eval_into(obs, ws, with_value);
            ws.grads.clear();
            total += loss.term(i, &ws.out, &mut ws.grads);
            let g = &ws.grads;
            if g.d_mean.iter().any(|d| *d != 0.0) {
                backward(&spec.actor, &v[spec.actor_range()], &mut ws.actor, &g.d_mean, &mut grad[spec.actor_range()]);
            }
            for (dst, d) in grad[spec.log_std_range()].iter_mut().zip(&g.d_log_std) {
                *dst += d;
            }
            if with_value && g.d_value != 0.0 {
                backward(
                    &spec.critic,
                    &v[spec.critic_range()],
                    &mut ws.critic,
                    &[g.d_value],
                    &mut grad[spec.critic_range()],
                );
            }
        }
        if !total.is_finite() {
            return Err(numeric("non-finite loss value"));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(numeric(format!("non-finite gradient at {}", spec.locate(i))));
        }
        Ok((total, grad))
    }
}

/// Standard normal density integrates to one; exposed for quadrature checks.
pub fn gaussian_density_1d(mean: f64, log_std: f64, x: f64) -> f64 {
    let s = log_std.exp();
    (-(x - mean).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn spec() -> PolicySpec {
        PolicySpec::new(8, 2, &[16, 16])
    }

    #[test]
    fn zero_weights_give_zero_heads() {
        let p = PolicyParams::zeros(spec());
        let (mean, value) = ActorCritic::new(&p).forward(&[0.3; 8]).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert_eq!(value, 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = PolicyParams::zeros(spec());
        assert!(ActorCritic::new(&p).forward(&[0.0; 7]).is_err());
        assert!(PolicyParams::from_values(spec(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn log_prob_at_mode() {
        let mut rng = rng_from(1, &[]);
        let mut p = PolicyParams::init(spec(), -0.3, &mut rng);
        let ac = ActorCritic::new(&p);
        let obs = [0.1; 8];
        let (mean, _) = ac.forward(&obs).unwrap();
        let lp = ac.log_prob(&obs, &mean).unwrap();
        let expect = -(2.0 * -0.3) - (2.0 / 2.0) * (2.0 * PI).ln();
        assert!((lp - expect).abs() < 1e-12);
        // Doubling std at the mode lowers the density by Σ log 2.
        let r = p.spec.log_std_range();
        for v in &mut p.values[r] {
            *v += 2f64.ln();
        }
        let lp2 = ActorCritic::new(&p).log_prob(&obs, &mean).unwrap();
        assert!((lp - lp2 - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        let (m, ls) = (0.4, -0.2);
        let (lo, hi, n) = (-10.0, 10.0, 200_000);
        let h = (hi - lo) / n as f64;
        let mut sum = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            let lp = gaussian_log_prob(&[m], &[ls], &[x]);
            assert!((lp.exp() - gaussian_density_1d(m, ls, x)).abs() < 1e-12);
            sum += w * lp.exp();
        }
        assert!((sum * h - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_is_lipschitz_in_observation() {
        let mut rng = rng_from(2, &[]);
        let p = PolicyParams::init(spec(), 0.0, &mut rng);
        let ac = ActorCritic::new(&p);
        let obs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (m0, v0) = ac.forward(&obs).unwrap();
        assert_eq!(ac.forward(&obs).unwrap(), (m0.clone(), v0));
        let mut moved = obs.clone();
        moved[3] += 1e-7;
        let (m1, v1) = ac.forward(&moved).unwrap();
        let dm = m0.iter().zip(&m1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dm < 1e-6 && (v0 - v1).abs() < 1e-6);
    }

    #[test]
    fn locate_names_blocks() {
        let s = spec();
        assert_eq!(s.locate(0), "actor[0]");
        assert_eq!(s.locate(s.log_std_range().start + 1), "log_std[1]");
        assert_eq!(s.locate(s.critic_range().start), "critic[0]");
    }
}

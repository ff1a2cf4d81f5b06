//! Feed-forward actor-critic networks with exact reverse-mode gradients.

mod adam;
mod checkpoint;
mod mlp;
mod policy;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{backward as mlp_backward, forward as mlp_forward, MlpCache, MlpSpec};
pub use policy::{
    add_log_prob_grad, gaussian_density_1d, gaussian_entropy, gaussian_log_prob, ActorCritic,
    HeadGrads, HeadOutputs, PolicyParams, PolicySpec, SampleLoss, Workspace,
};

//! Comparison controllers: GRAPE, finite-difference gradient ascent, and PPO.

mod grape;
mod openloop;
mod ppo;
mod rollout;
mod update;

pub use grape::{
    fidelity_gradient, finite_difference_gradient, ga_optimize, grape_optimize, nominal_fidelity,
    random_pulses, GrapeConfig, OptimizationResult,
};
pub use openloop::{evaluate_open_loop, trajectory_fidelities};
pub use ppo::{init_policy, ppo_evaluate, ppo_train, PpoConfig, PpoCurveRow, PpoTrainer};
pub(crate) use rollout::evaluate_with_return;
pub use rollout::{
    collect_episodes, collect_rollout, episode_seed, evaluate_policy, gae, normalize, run_episode,
    ActionMode, EpisodeRecord, EvalSummary, RolloutBatch, RolloutSize, TrialOutcome,
};
pub use update::{
    clipped_term, clipped_update, ClippedSurrogateLoss, PolicyGradientObjective, UpdateConfig,
    UpdateStats,
};

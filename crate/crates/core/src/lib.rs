//! Robust quantum gate synthesis under multiplicative Hamiltonian
//! disturbances.
//!
//! The crate provides the physics layer ([`qcore`]), an episodic control
//! environment ([`env`]), a small actor-critic network stack ([`nnet`]),
//! the GRAPE / gradient-ascent / PPO baselines ([`baselines`]), the
//! meta-reinforcement-learning controller ([`metarl`]) and the sweep
//! harness that compares them ([`harness`]).

pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod metarl;
pub mod nnet;
pub mod qcore;
pub mod seed;

pub use error::{Error, Result};
pub use qcore::{ComplexMatrix, ControlPulseSequence, DisturbanceChannels, DisturbanceSpec, SystemModel};

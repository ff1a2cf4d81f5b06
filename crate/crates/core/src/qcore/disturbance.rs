use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::DisturbanceChannels;
use crate::error::{argument, Result};

/// Realizations are clipped to this interval.
pub const CLIP_BOUND: f64 = 1.0;

/// Draws `clip[N(0, η²), -1, 1]`. Clipping is literal: mass beyond the
/// bounds lands exactly on ±1.
pub fn sample_disturbance<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> Result<f64> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(argument(format!("disturbance stddev must be non-negative, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok((eta * z).clamp(-CLIP_BOUND, CLIP_BOUND))
}

/// Disturbance strengths for one task: one stddev per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    Common { eta: f64 },
    DriftAndControl { eta0: f64, etau: f64 },
}

impl DisturbanceSpec {
    pub fn none(channels: DisturbanceChannels) -> Self {
        match channels {
            DisturbanceChannels::Common => DisturbanceSpec::Common { eta: 0.0 },
            DisturbanceChannels::DriftAndControl => {
                DisturbanceSpec::DriftAndControl { eta0: 0.0, etau: 0.0 }
            }
        }
    }

    pub fn channels(&self) -> DisturbanceChannels {
        match self {
            DisturbanceSpec::Common { .. } => DisturbanceChannels::Common,
            DisturbanceSpec::DriftAndControl { .. } => DisturbanceChannels::DriftAndControl,
        }
    }

    pub fn stddevs(&self) -> Vec<f64> {
        match *self {
            DisturbanceSpec::Common { eta } => vec![eta],
            DisturbanceSpec::DriftAndControl { eta0, etau } => vec![eta0, etau],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for s in self.stddevs() {
            if !(0.0..=1.0).contains(&s) {
                return Err(argument(format!("disturbance stddev {s} outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn is_nominal(&self) -> bool {
        self.stddevs().iter().all(|&s| s == 0.0)
    }

    /// Fills `out` with one realization per channel.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match *self {
            DisturbanceSpec::Common { eta } => out[0] = sample_disturbance(eta, rng)?,
            DisturbanceSpec::DriftAndControl { eta0, etau } => {
                out[0] = sample_disturbance(eta0, rng)?;
                out[1] = sample_disturbance(etau, rng)?;
            }
        }
        Ok(())
    }
}

/// Piecewise-constant disturbance realizations, one vector per control step.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceTrace {
    channels: usize,
    values: Vec<f64>,
}

impl DisturbanceTrace {
    pub fn zeros(n_steps: usize, channels: usize) -> Self {
        Self {
            channels,
            values: vec![0.0; n_steps * channels],
        }
    }

    pub fn sample<R: Rng + ?Sized>(spec: &DisturbanceSpec, n_steps: usize, rng: &mut R) -> Result<Self> {
        let channels = spec.channels().count();
        let mut trace = Self::zeros(n_steps, channels);
        for j in 0..n_steps {
            spec.sample_into(rng, &mut trace.values[j * channels..(j + 1) * channels])?;
        }
        Ok(trace)
    }

    pub fn from_steps(steps: &[Vec<f64>]) -> Result<Self> {
        let channels = steps.first().map_or(1, |s| s.len());
        if steps.iter().any(|s| s.len() != channels) {
            return Err(argument("ragged disturbance trace"));
        }
        Ok(Self {
            channels,
            values: steps.concat(),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() / self.channels.max(1)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn step(&self, j: usize) -> &[f64] {
        &self.values[j * self.channels..(j + 1) * self.channels]
    }
}

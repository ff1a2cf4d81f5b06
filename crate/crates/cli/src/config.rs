//! Flat `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use qgate_core::baselines::{GrapeConfig, PpoConfig, RolloutSize, UpdateConfig};
use qgate_core::env::{EnvConfig, TaskSpec};
use qgate_core::harness::{linspace, target_gate, Algorithm};
use qgate_core::metarl::{MetaConfig, TaskDistribution};
use qgate_core::qcore::{gates, DisturbanceChannels};
use qgate_core::{Error, Result};
use sha2::{Digest, Sha256};

/// Every recognized key with its default. `auto` defers to the gate preset.
const DEFAULTS: &[(&str, &str)] = &[
    ("experiment.gate", "hadamard"),
    ("experiment.algorithm", "grape"),
    ("experiment.channels", "common"),
    ("env.T", "auto"),
    ("env.N", "auto"),
    ("env.u_min", "-5"),
    ("env.u_max", "5"),
    ("env.epsilon", "auto"),
    ("grape.iterations", "auto"),
    ("grape.learning_rate", "5"),
    ("grape.target_fidelity", "0.999999999"),
    ("grape.fd_step", "0.0001"),
    ("grape.init_scale", "5"),
    ("ppo.eta", "0.3"),
    ("ppo.eta0", "0.3"),
    ("ppo.etau", "0.3"),
    ("ppo.total_steps", "300000"),
    ("ppo.rollout_steps", "2048"),
    ("ppo.rollout_episodes", "0"),
    ("ppo.clip", "0.2"),
    ("ppo.gamma", "0.99"),
    ("ppo.lambda", "0.95"),
    ("ppo.epochs", "4"),
    ("ppo.minibatch", "64"),
    ("ppo.lr", "0.0003"),
    ("ppo.entropy_coef", "0.01"),
    ("ppo.value_coef", "0.5"),
    ("ppo.max_grad_norm", "0.5"),
    ("ppo.reward_scale", "0.01"),
    ("ppo.normalize_advantages", "true"),
    ("ppo.hidden", "64,64"),
    ("ppo.init_log_std", "-0.5"),
    ("ppo.eval_every", "10"),
    ("ppo.eval_trials", "10"),
    ("meta.distribution", "uniform"),
    ("meta.eta", "0.3"),
    ("meta.eta_lo", "0"),
    ("meta.eta_hi", "1"),
    ("meta.K", "8"),
    ("meta.n", "10"),
    ("meta.alpha", "0.01"),
    ("meta.beta", "0.0003"),
    ("meta.J", "300"),
    ("meta.epochs", "4"),
    ("meta.clip", "0.2"),
    ("meta.gamma", "0.99"),
    ("meta.lambda", "0.95"),
    ("meta.minibatch", "64"),
    ("meta.entropy_coef", "0.01"),
    ("meta.value_coef", "0.5"),
    ("meta.max_grad_norm", "0.5"),
    ("meta.reward_scale", "0.01"),
    ("meta.normalize_advantages", "true"),
    ("meta.hidden", "64,64"),
    ("meta.init_log_std", "-0.5"),
    ("meta.adapt_steps", "1"),
    ("meta.eval_every", "10"),
    ("meta.eval_trials", "10"),
    ("meta.eval_etas", "0.1,0.5,0.9"),
    ("sweep.grid", "0:1:21"),
    ("sweep.trials", "100"),
    ("sweep.artifact", ""),
    ("heatmap.resolution", "21"),
    ("heatmap.trials", "100"),
    ("heatmap.artifact", ""),
    ("eval.eta", "0.3"),
    ("eval.eta0", "0.3"),
    ("eval.etau", "0.3"),
    ("eval.trials", "100"),
    ("eval.artifact", ""),
];

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Resolved configuration: defaults, then the file, then `--set` overrides.
#[derive(Debug, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut values: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| config_err(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
                set(&mut values, k, v)?;
            }
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| config_err(format!("override '{o}' is not key=value")))?;
            set(&mut values, k, v)?;
        }
        let s = Self { values };
        s.resolve_presets()
    }

    fn resolve_presets(mut self) -> Result<Self> {
        let two = self.target_qubits()? == 2;
        let auto = [
            ("env.T", if two { "2" } else { "1.6" }),
            ("env.N", if two { "50" } else { "40" }),
            ("env.epsilon", if two { "0.001" } else { "0.0001" }),
            ("grape.iterations", if two { "2000" } else { "500" }),
        ];
        for (k, v) in auto {
            if self.raw(k) == "auto" {
                self.values.insert(k.to_string(), v.to_string());
            }
        }
        Ok(self)
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.raw(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| config_err(format!("{key}: '{v}' is not a finite number")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key);
        v.parse().map_err(|_| config_err(format!("{key}: '{v}' is not a non-negative integer")))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            v => Err(config_err(format!("{key}: '{v}' is not a boolean"))),
        }
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| config_err(format!("{key}: bad number '{p}'"))))
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.raw(key)
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| config_err(format!("{key}: bad integer '{p}'"))))
            .collect()
    }

    /// Optional path value; empty means unset.
    pub fn path(&self, key: &str) -> Option<&Path> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| Path::new(v))
    }

    /// The effective configuration, one `key = value` per line, sorted.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Short SHA-256 digest of [`Settings::render`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.render().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn gate(&self) -> Result<String> {
        let g = self.str("experiment.gate").to_ascii_lowercase();
        target_gate(&g).map_err(|e| config_err(e.to_string()))?;
        Ok(g)
    }

    fn target_qubits(&self) -> Result<usize> {
        let g = self.str("experiment.gate").to_ascii_lowercase();
        gates::gate_qubits(&g).map_err(|e| config_err(e.to_string()))
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        self.str("experiment.algorithm").parse().map_err(|e: Error| config_err(e.to_string()))
    }

    pub fn channels(&self) -> Result<DisturbanceChannels> {
        match self.str("experiment.channels") {
            "common" => Ok(DisturbanceChannels::Common),
            "drift_and_control" | "dual" => Ok(DisturbanceChannels::DriftAndControl),
            v => Err(config_err(format!("experiment.channels: unknown layout '{v}'"))),
        }
    }

    pub fn env(&self, channels: DisturbanceChannels) -> Result<EnvConfig> {
        let gate = self.gate()?;
        let mut env = EnvConfig::for_target(target_gate(&gate)?, channels)?;
        env.horizon = self.f64("env.T")?;
        env.max_steps = self.usize("env.N")?;
        env.u_min = self.f64("env.u_min")?;
        env.u_max = self.f64("env.u_max")?;
        env.epsilon = self.f64("env.epsilon")?;
        env.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(env)
    }

    pub fn grape(&self, env: &EnvConfig) -> Result<GrapeConfig> {
        let cfg = GrapeConfig {
            iterations: self.usize("grape.iterations")?,
            learning_rate: self.f64("grape.learning_rate")?,
            target_fidelity: self.f64("grape.target_fidelity")?,
            n_steps: env.max_steps,
            horizon: env.horizon,
            u_min: env.u_min,
            u_max: env.u_max,
            fd_step: self.f64("grape.fd_step")?,
            init_scale: self.f64("grape.init_scale")?,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    fn update(&self, s: &str, lr_key: &str) -> Result<UpdateConfig> {
        let k = |name: &str| format!("{s}.{name}");
        Ok(UpdateConfig {
            clip_eps: self.f64(&k("clip"))?,
            gamma: self.f64(&k("gamma"))?,
            lambda: self.f64(&k("lambda"))?,
            epochs: self.usize(&k("epochs"))?,
            minibatch: self.usize(&k("minibatch"))?,
            learning_rate: self.f64(&k(lr_key))?,
            entropy_coef: self.f64(&k("entropy_coef"))?,
            value_coef: self.f64(&k("value_coef"))?,
            max_grad_norm: self.f64(&k("max_grad_norm"))?,
            reward_scale: self.f64(&k("reward_scale"))?,
            normalize_advantages: self.bool(&k("normalize_advantages"))?,
        })
    }

    fn task(&self, section: &str, channels: DisturbanceChannels) -> Result<TaskSpec> {
        Ok(match channels {
            DisturbanceChannels::Common => TaskSpec::Common { eta: self.f64(&format!("{section}.eta"))? },
            DisturbanceChannels::DriftAndControl => TaskSpec::DriftAndControl {
                eta0: self.f64(&format!("{section}.eta0"))?,
                etau: self.f64(&format!("{section}.etau"))?,
            },
        })
    }

    pub fn eval_task(&self, channels: DisturbanceChannels) -> Result<TaskSpec> {
        self.task("eval", channels)
    }

    pub fn ppo(&self, channels: DisturbanceChannels) -> Result<PpoConfig> {
        let episodes = self.usize("ppo.rollout_episodes")?;
        let cfg = PpoConfig {
            update: self.update("ppo", "lr")?,
            rollout: if episodes > 0 {
                RolloutSize::Episodes(episodes)
            } else {
                RolloutSize::Steps(self.usize("ppo.rollout_steps")?)
            },
            total_steps: self.usize("ppo.total_steps")?,
            hidden: self.usize_list("ppo.hidden")?,
            init_log_std: self.f64("ppo.init_log_std")?,
            task: self.task("ppo", channels)?,
            eval_every: self.usize("ppo.eval_every")?,
            eval_trials: self.usize("ppo.eval_trials")?,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn meta(&self, channels: DisturbanceChannels) -> Result<MetaConfig> {
        let distribution = match self.str("meta.distribution") {
            "uniform" => {
                let (lo, hi) = (self.f64("meta.eta_lo")?, self.f64("meta.eta_hi")?);
                match channels {
                    DisturbanceChannels::Common => TaskDistribution::UniformCommon { lo, hi },
                    DisturbanceChannels::DriftAndControl => TaskDistribution::UniformDual { lo, hi },
                }
            }
            "fixed" => TaskDistribution::Fixed {
                task: match channels {
                    DisturbanceChannels::Common => TaskSpec::Common { eta: self.f64("meta.eta")? },
                    DisturbanceChannels::DriftAndControl => {
                        let eta = self.f64("meta.eta")?;
                        TaskSpec::DriftAndControl { eta0: eta, etau: eta }
                    }
                },
            },
            v => return Err(config_err(format!("meta.distribution: unknown kind '{v}'"))),
        };
        let cfg = MetaConfig {
            distribution,
            tasks_per_iter: self.usize("meta.K")?,
            episodes: self.usize("meta.n")?,
            inner_lr: self.f64("meta.alpha")?,
            update: self.update("meta", "beta")?,
            iterations: self.usize("meta.J")?,
            hidden: self.usize_list("meta.hidden")?,
            init_log_std: self.f64("meta.init_log_std")?,
            adapt_steps: self.usize("meta.adapt_steps")?,
            eval_every: self.usize("meta.eval_every")?,
            eval_trials: self.usize("meta.eval_trials")?,
            eval_etas: self.f64_list("meta.eval_etas")?,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    /// `lo:hi:count` for an evenly spaced grid, or a comma-separated list.
    pub fn grid(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.raw(key);
        let parts: Vec<&str> = v.split(':').collect();
        let grid = if parts.len() == 3 {
            let lo = parts[0].trim().parse::<f64>();
            let hi = parts[1].trim().parse::<f64>();
            let n = parts[2].trim().parse::<usize>();
            match (lo, hi, n) {
                (Ok(lo), Ok(hi), Ok(n)) if n > 0 => linspace(lo, hi, n),
                _ => return Err(config_err(format!("{key}: bad range '{v}', expected lo:hi:count"))),
            }
        } else {
            self.f64_list(key)?
        };
        if grid.is_empty() || grid.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return Err(config_err(format!("{key}: grid values must be finite and non-negative")));
        }
        Ok(grid)
    }
}

fn set(values: &mut BTreeMap<String, String>, key: &str, value: &str) -> Result<()> {
    let key = key.trim();
    if !values.contains_key(key) {
        return Err(config_err(format!("unknown config key '{key}'")));
    }
    values.insert(key.to_string(), value.trim().to_string());
    Ok(())
}

//! Subcommand implementations.

use std::path::{Path, PathBuf};

use qgate_core::baselines::{ga_optimize, grape_optimize, PpoTrainer};
use qgate_core::env::EnvConfig;
use qgate_core::harness::{
    csv_string, heatmap_dat, run_heatmap, run_sweep, sweep_dat, write_text, Algorithm, AreaRatios, ArtifactHeader, Controller,
};
use qgate_core::metarl::{MetaConfig, MetaTrainer};
use qgate_core::nnet::{Checkpoint, PolicyParams};
use qgate_core::qcore::DisturbanceChannels;
use qgate_core::seed::{label, rng_from};
use qgate_core::{Error, Result};
use serde::Serialize;

use crate::artifacts::{header, load_checkpoint, pulses_csv, read_pulses};
use crate::config::Settings;

pub struct Run {
    pub command: &'static str,
    pub settings: Settings,
    pub seed: u64,
    pub out: PathBuf,
}

impl Run {
    fn header(&self) -> ArtifactHeader {
        header(self.command, &self.settings.hash(), self.seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        write_text(&self.path(name), text)
    }

    fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        self.write(name, &csv_string(&self.header(), rows)?)
    }

    /// Echoes the effective configuration next to the outputs.
    pub fn echo_config(&self) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.header().entries {
            text.push_str(&format!("# {k}={v}\n"));
        }
        text.push_str(&self.settings.render());
        self.write("config.txt", &text)
    }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    fidelity: f64,
}

pub fn optimize(run: &Run, algorithm: Algorithm) -> Result<()> {
    let s = &run.settings;
    let env = s.env(s.channels()?)?;
    let cfg = s.grape(&env)?;
    let mut rng = rng_from(run.seed, &[label::GRAPE]);
    let res = match algorithm {
        Algorithm::Ga => ga_optimize(&env.model, &env.target, &cfg, None, &mut rng)?,
        _ => grape_optimize(&env.model, &env.target, &cfg, None, &mut rng)?,
    };
    run.write("pulses.csv", &pulses_csv(&run.header(), &res.pulses)?)?;
    let trace: Vec<TraceRow> = res.trace.iter().enumerate().map(|(i, &f)| TraceRow { iteration: i, fidelity: f }).collect();
    run.write_rows("trace.csv", &trace)?;
    println!("{algorithm}: gate {} fidelity {:.12} after {} iterations", s.gate()?, res.fidelity, trace.len() - 1);
    Ok(())
}

fn ppo_metadata(run: &Run, env: &EnvConfig, cfg: &impl Serialize) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "gate": run.settings.gate()?,
        "horizon": env.horizon,
        "max_steps": env.max_steps,
        "epsilon": env.epsilon,
        "config_hash": run.settings.hash(),
        "seed": run.seed,
        "config": serde_json::to_value(cfg)?,
    }))
}

fn train_ppo_params(run: &Run, env: &EnvConfig) -> Result<(PpoTrainer, PolicyParams)> {
    let cfg = run.settings.ppo(env.model.channels())?;
    let mut trainer = PpoTrainer::new(env.clone(), cfg, run.seed)?;
    trainer.train()?;
    let best = trainer.best_params().clone();
    Ok((trainer, best))
}

pub fn train_ppo(run: &Run) -> Result<()> {
    let env = run.settings.env(run.settings.channels()?)?;
    let (trainer, best) = train_ppo_params(run, &env)?;
    let meta = ppo_metadata(run, &env, &trainer.config)?;
    Checkpoint::new("ppo", best, trainer.adam.clone(), meta).save(&run.path("checkpoint.json"))?;
    run.write_rows("curve.csv", &trainer.curve)?;
    let successes: usize = trainer.curve.iter().map(|r| r.success_episodes).sum();
    println!(
        "ppo: {} iterations, {} env steps, {successes} successful training episodes",
        trainer.curve.len(),
        trainer.env_steps
    );
    Ok(())
}

fn train_meta_state(run: &Run, env: &EnvConfig) -> Result<(MetaTrainer, MetaConfig)> {
    let cfg = run.settings.meta(env.model.channels())?;
    let mut trainer = MetaTrainer::new(env.clone(), cfg.clone(), run.seed)?;
    trainer.train()?;
    Ok((trainer, cfg))
}

fn eta_column(eta: f64) -> String {
    let tenths = (eta * 10.0).round();
    if (tenths - eta * 10.0).abs() < 1e-9 {
        format!("eval_fidelity_eta{:02}", tenths as i64)
    } else {
        format!("eval_fidelity_eta{}", eta.to_string().replace('.', "p"))
    }
}

pub fn train_meta(run: &Run) -> Result<()> {
    let env = run.settings.env(run.settings.channels()?)?;
    let (trainer, cfg) = train_meta_state(run, &env)?;
    let best = trainer.best_state();
    let meta = ppo_metadata(run, &env, &cfg)?;
    Checkpoint::new("metaqctrl", best.params.clone(), best.adam.clone(), meta).save(&run.path("checkpoint.json"))?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["meta_iter".to_string(), "mean_pre_adapt_return".into(), "mean_post_adapt_return".into()];
    head.extend(cfg.eval_etas.iter().map(|&e| eta_column(e)));
    w.write_record(&head)?;
    for r in &trainer.curve {
        let mut rec = vec![r.meta_iter.to_string(), r.mean_pre_adapt_return.to_string(), r.mean_post_adapt_return.to_string()];
        rec.extend(r.eval_fidelity.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut text = String::new();
    for (k, v) in &run.header().entries {
        text.push_str(&format!("# {k}={v}\n"));
    }
    run.write("curve.csv", &(text + &String::from_utf8_lossy(&body)))?;
    println!("metaqctrl: {} meta-iterations", trainer.curve.len());
    Ok(())
}

/// Loads the controller named by `artifact_key`, or trains / optimizes one
/// in-line when the key is empty.
fn controller(run: &Run, env: &EnvConfig, artifact_key: &str) -> Result<Controller> {
    let s = &run.settings;
    let algorithm = s.algorithm()?;
    let artifact = s.path(artifact_key).map(Path::to_path_buf);
    let check_policy = |p: &PolicyParams| {
        if p.spec.obs_dim() != env.obs_dim() || p.spec.action_dim() != env.action_dim() {
            Err(Error::Config("checkpoint network does not fit this gate's environment".into()))
        } else {
            Ok(())
        }
    };
    match algorithm {
        Algorithm::Grape | Algorithm::Ga => {
            let pulses = match artifact {
                Some(p) => read_pulses(&p)?,
                None => {
                    let cfg = s.grape(env)?;
                    let mut rng = rng_from(run.seed, &[label::GRAPE]);
                    if algorithm == Algorithm::Ga {
                        ga_optimize(&env.model, &env.target, &cfg, None, &mut rng)?.pulses
                    } else {
                        grape_optimize(&env.model, &env.target, &cfg, None, &mut rng)?.pulses
                    }
                }
            };
            if pulses.n_controls() != env.model.n_controls() || pulses.n_steps() != env.max_steps {
                return Err(Error::Config("pulse file does not match the environment's controls or step count".into()));
            }
            Ok(Controller::OpenLoop { algorithm, pulses })
        }
        Algorithm::Ppo => {
            let params = match artifact {
                Some(p) => load_checkpoint(&p, "ppo")?.params,
                None => train_ppo_params(run, env)?.1,
            };
            check_policy(&params)?;
            Ok(Controller::Policy { params })
        }
        Algorithm::Metaqctrl => {
            let (params, config) = match artifact {
                Some(p) => {
                    let ck = load_checkpoint(&p, "metaqctrl")?;
                    let cfg: MetaConfig = serde_json::from_value(ck.metadata["config"].clone())
                        .map_err(|e| Error::Config(format!("checkpoint lacks a meta config: {e}")))?;
                    (ck.params, cfg)
                }
                None => {
                    let (trainer, cfg) = train_meta_state(run, env)?;
                    (trainer.best_state().params.clone(), cfg)
                }
            };
            check_policy(&params)?;
            Ok(Controller::Meta { params, config })
        }
    }
}

pub fn sweep(run: &Run) -> Result<()> {
    let s = &run.settings;
    let env = s.env(DisturbanceChannels::Common)?;
    let c = controller(run, &env, "sweep.artifact")?;
    let rows = run_sweep(&s.gate()?, &c, &env, &s.grid("sweep.grid")?, s.usize("sweep.trials")?, run.seed)?;
    run.write_rows("sweep.csv", &rows)?;
    run.write("sweep.dat", &sweep_dat(&run.header(), &rows))?;
    println!("sweep: {} rows for {}", rows.len(), c.algorithm());
    Ok(())
}

#[derive(Serialize)]
struct AreaRow {
    gate: String,
    algorithm: Algorithm,
    cells: usize,
    within_1e4: f64,
    within_1e5: f64,
}

pub fn heatmap(run: &Run) -> Result<()> {
    let s = &run.settings;
    let env = s.env(DisturbanceChannels::DriftAndControl)?;
    let c = controller(run, &env, "heatmap.artifact")?;
    let gate = s.gate()?;
    let rows = run_heatmap(&gate, &c, &env, s.usize("heatmap.resolution")?, s.usize("heatmap.trials")?, run.seed)?;
    let ratios = AreaRatios::from_rows(&rows)?;
    run.write_rows("heatmap.csv", &rows)?;
    run.write("heatmap.dat", &heatmap_dat(&run.header(), &rows))?;
    run.write_rows(
        "area_ratios.csv",
        &[AreaRow { gate, algorithm: c.algorithm(), cells: rows.len(), within_1e4: ratios.within_1e4, within_1e5: ratios.within_1e5 }],
    )?;
    println!(
        "heatmap: {} cells, area(infidelity<=1e-4)={:.4}, area(infidelity<=1e-5)={:.4}",
        rows.len(),
        ratios.within_1e4,
        ratios.within_1e5
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    trial: usize,
    max_fidelity: f64,
    steps_to_max: usize,
    success: bool,
}

pub fn eval(run: &Run) -> Result<()> {
    let s = &run.settings;
    let channels = s.channels()?;
    let env = s.env(channels)?;
    let c = controller(run, &env, "eval.artifact")?;
    let summary = c.evaluate(&env, s.eval_task(channels)?, s.usize("eval.trials")?, run.seed, &[label::TRIAL])?;
    let rows: Vec<EvalRow> = summary
        .outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| EvalRow { trial: i, max_fidelity: o.max_fidelity, steps_to_max: o.steps_to_max, success: o.success })
        .collect();
    run.write_rows("eval.csv", &rows)?;
    println!(
        "eval: {} trials, mean max fidelity {:.6} (std {:.6}), mean steps {:.2}, success rate {:.3}",
        summary.trials, summary.mean_max_fidelity, summary.std_max_fidelity, summary.mean_steps_to_max, summary.success_rate
    );
    Ok(())
}

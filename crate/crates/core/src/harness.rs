//! Evaluation protocol: η sweeps, dual-disturbance heatmaps, area ratios,
//! algorithm comparisons, and the CSV / plot-data files they produce.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baselines::{evaluate_open_loop, evaluate_policy, EvalSummary};
use crate::env::{EnvConfig, TaskSpec};
use crate::error::{argument, Error, Result};
use crate::metarl::{adapt_and_evaluate, MetaConfig};
use crate::nnet::PolicyParams;
use crate::qcore::{ControlPulseSequence, DisturbanceChannels};
use crate::seed::label;

pub use crate::qcore::gates::target_gate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Grape,
    Ga,
    Ppo,
    Metaqctrl,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Self::Grape, Self::Ga, Self::Ppo, Self::Metaqctrl];

    pub fn name(self) -> &'static str {
        match self {
            Self::Grape => "grape",
            Self::Ga => "ga",
            Self::Ppo => "ppo",
            Self::Metaqctrl => "metaqctrl",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grape" => Ok(Self::Grape),
            "ga" => Ok(Self::Ga),
            "ppo" => Ok(Self::Ppo),
            "metaqctrl" | "meta" => Ok(Self::Metaqctrl),
            other => Err(argument(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// A trained or optimized controller ready for evaluation.
#[derive(Debug, Clone)]
pub enum Controller {
    /// A fixed schedule (GRAPE or GA) executed open-loop.
    OpenLoop { algorithm: Algorithm, pulses: ControlPulseSequence },
    /// A closed-loop policy evaluated with its mean action.
    Policy { params: PolicyParams },
    /// A meta-policy adapted online to each task before evaluation.
    Meta { params: PolicyParams, config: MetaConfig },
}

impl Controller {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::OpenLoop { algorithm, .. } => *algorithm,
            Self::Policy { .. } => Algorithm::Ppo,
            Self::Meta { .. } => Algorithm::Metaqctrl,
        }
    }

    /// Monte Carlo evaluation on one task. Open-loop schedules always use
    /// all `N` steps, so their step count is reported as `N`.
    pub fn evaluate(&self, env: &EnvConfig, task: TaskSpec, trials: usize, seed: u64, path: &[u64]) -> Result<EvalSummary> {
        match self {
            Self::OpenLoop { pulses, .. } => {
                let mut s = evaluate_open_loop(pulses, &env.model, &env.target, task, trials, env.epsilon, seed, path)?;
                s.mean_steps_to_max = pulses.n_steps() as f64;
                Ok(s)
            }
            Self::Policy { params } => evaluate_policy(params, env, task, trials, seed, path),
            Self::Meta { params, config } => adapt_and_evaluate(params, env, task, config, trials, seed, path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gate: String,
    pub algorithm: Algorithm,
    pub eta: f64,
    pub trial_count: usize,
    pub mean_max_fidelity: f64,
    pub std_max_fidelity: f64,
    pub mean_steps: f64,
    pub seed: u64,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// The η grid `0, 0.05, …, 1.0`.
pub fn default_eta_grid() -> Vec<f64> {
    linspace(0.0, 1.0, 21)
}

/// Evaluates `controller` at every η of `grid` on the single-channel model.
/// Grid point `i` draws from streams derived from `(seed, TRIAL, i)`.
pub fn run_sweep(
    gate: &str,
    controller: &Controller,
    env: &EnvConfig,
    grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if env.model.channels() != DisturbanceChannels::Common {
        return Err(argument("sweeps run on the common-channel model"));
    }
    if trials == 0 {
        return Err(argument("sweep needs at least one trial per point"));
    }
    grid.par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let s = controller.evaluate(env, TaskSpec::Common { eta }, trials, seed, &[label::TRIAL, i as u64])?;
            Ok(SweepRow {
                gate: gate.to_string(),
                algorithm: controller.algorithm(),
                eta,
                trial_count: s.trials,
                mean_max_fidelity: s.mean_max_fidelity,
                std_max_fidelity: s.std_max_fidelity,
                mean_steps: s.mean_steps_to_max,
                seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub gate: String,
    pub algorithm: Algorithm,
    pub eta0: f64,
    pub etau: f64,
    pub mean_max_fidelity: f64,
    pub mean_infidelity: f64,
}

/// Evaluates every `(η₀, ηᵤ)` cell of a `resolution × resolution` grid over
/// `[0, 1]²` on the two-channel model. Rows are ordered by `η₀`, then `ηᵤ`.
pub fn run_heatmap(
    gate: &str,
    controller: &Controller,
    env: &EnvConfig,
    resolution: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<HeatmapRow>> {
    if env.model.channels() != DisturbanceChannels::DriftAndControl {
        return Err(argument("heatmaps need the drift-and-control disturbance model"));
    }
    if resolution == 0 || trials == 0 {
        return Err(argument("heatmap needs a positive resolution and trial count"));
    }
    let axis = linspace(0.0, 1.0, resolution);
    let cells: Vec<(usize, usize)> = (0..resolution).flat_map(|a| (0..resolution).map(move |b| (a, b))).collect();
    cells
        .par_iter()
        .map(|&(a, b)| {
            let task = TaskSpec::DriftAndControl { eta0: axis[a], etau: axis[b] };
            let s = controller.evaluate(env, task, trials, seed, &[label::TRIAL, a as u64, b as u64])?;
            Ok(HeatmapRow {
                gate: gate.to_string(),
                algorithm: controller.algorithm(),
                eta0: axis[a],
                etau: axis[b],
                mean_max_fidelity: s.mean_max_fidelity,
                mean_infidelity: 1.0 - s.mean_max_fidelity,
            })
        })
        .collect()
}

/// Fractions of heatmap cells whose infidelity is at most `1e-4` and `1e-5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaRatios {
    pub within_1e4: f64,
    pub within_1e5: f64,
}

impl AreaRatios {
    pub fn from_infidelities(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(argument("area ratios need at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(argument("non-finite infidelity in heatmap"));
        }
        let n = values.len() as f64;
        let count = |thr: f64| values.iter().filter(|&&v| v <= thr).count() as f64 / n;
        Ok(Self {
            within_1e4: count(1e-4),
            within_1e5: count(1e-5),
        })
    }

    pub fn from_rows(rows: &[HeatmapRow]) -> Result<Self> {
        Self::from_infidelities(&rows.iter().map(|r| r.mean_infidelity).collect::<Vec<_>>())
    }
}

/// Per-η differences `a − b` in mean max fidelity between two algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: Algorithm,
    pub b: Algorithm,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub mean_gap: f64,
    /// The delta of largest magnitude.
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: Vec<PairComparison>,
    /// metaQctrl minus GRAPE at `η = 1.0`, when both are present on that point.
    pub meta_minus_grape_at_eta1: Option<f64>,
}

/// Pairwise comparison of sweeps over the same grid, in input order.
pub fn compare_report(results: &[Vec<SweepRow>]) -> Result<ComparisonReport> {
    let grids: Vec<Vec<f64>> = results.iter().map(|r| r.iter().map(|row| row.eta).collect()).collect();
    if let Some(first) = grids.first() {
        if grids.iter().any(|g| g != first) {
            return Err(argument("sweeps must share the same eta grid"));
        }
    }
    let mut pairs = Vec::new();
    for i in 0..results.len() {
        for j in (i + 1)..results.len() {
            let (ra, rb) = (&results[i], &results[j]);
            let deltas: Vec<f64> = ra.iter().zip(rb).map(|(x, y)| x.mean_max_fidelity - y.mean_max_fidelity).collect();
            let n = deltas.len().max(1) as f64;
            pairs.push(PairComparison {
                a: ra.first().map_or(Algorithm::Grape, |r| r.algorithm),
                b: rb.first().map_or(Algorithm::Grape, |r| r.algorithm),
                etas: grids[i].clone(),
                mean_gap: deltas.iter().sum::<f64>() / n,
                max_gap: deltas.iter().copied().fold(0.0, |m, d| if d.abs() > m.abs() { d } else { m }),
                deltas,
            });
        }
    }
    let at_eta1 = |alg: Algorithm| {
        results
            .iter()
            .flatten()
            .find(|r| r.algorithm == alg && (r.eta - 1.0).abs() < 1e-12)
            .map(|r| r.mean_max_fidelity)
    };
    let meta_minus_grape_at_eta1 = match (at_eta1(Algorithm::Metaqctrl), at_eta1(Algorithm::Grape)) {
        (Some(m), Some(g)) => Some(m - g),
        _ => None,
    };
    Ok(ComparisonReport { pairs, meta_minus_grape_at_eta1 })
}

/// `# key=value` lines written above every artifact's payload.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArtifactHeader {
    pub entries: Vec<(String, String)>,
}

impl ArtifactHeader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl fmt::Display) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    fn parse_line(&mut self, line: &str) {
        if let Some((k, v)) = line.trim_start_matches('#').trim().split_once('=') {
            self.entries.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
}

/// Serializes `rows` as CSV text with the header comment on top.
pub fn csv_string<T: Serialize>(header: &ArtifactHeader, rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(header.render() + &String::from_utf8_lossy(&body))
}

/// Parses text written by [`csv_string`].
pub fn parse_csv<T: DeserializeOwned>(text: &str) -> Result<(ArtifactHeader, Vec<T>)> {
    let mut header = ArtifactHeader::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        header.parse_line(line);
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((header, rows))
}

pub fn write_csv<T: Serialize>(path: &Path, header: &ArtifactHeader, rows: &[T]) -> Result<()> {
    fs::write(path, csv_string(header, rows)?)?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<(ArtifactHeader, Vec<T>)> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })?;
    parse_csv(&text)
}

/// Whitespace-separated table for gnuplot. `block_by` inserts a blank line
/// whenever that column's value changes, which gnuplot reads as scan lines.
pub fn gnuplot_table(header: &ArtifactHeader, columns: &[&str], rows: &[Vec<String>], block_by: Option<usize>) -> String {
    let mut out = header.render();
    out.push_str(&format!("# {}\n", columns.join(" ")));
    let mut prev: Option<&str> = None;
    for r in rows {
        if let (Some(c), Some(p)) = (block_by, prev) {
            if r[c] != p {
                out.push('\n');
            }
        }
        prev = block_by.map(|c| r[c].as_str());
        out.push_str(&r.join(" "));
        out.push('\n');
    }
    out
}

pub fn sweep_dat(header: &ArtifactHeader, rows: &[SweepRow]) -> String {
    let data: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.eta.to_string(), r.mean_max_fidelity.to_string(), r.std_max_fidelity.to_string(), r.mean_steps.to_string(), r.trial_count.to_string()])
        .collect();
    gnuplot_table(header, &["eta", "mean_max_fidelity", "std_max_fidelity", "mean_steps", "trials"], &data, None)
}

pub fn heatmap_dat(header: &ArtifactHeader, rows: &[HeatmapRow]) -> String {
    let data: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.eta0.to_string(), r.etau.to_string(), r.mean_max_fidelity.to_string(), r.mean_infidelity.to_string()])
        .collect();
    gnuplot_table(header, &["eta0", "etau", "mean_max_fidelity", "mean_infidelity"], &data, Some(0))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{grape_optimize, GrapeConfig};
    use crate::qcore::gates;
    use crate::seed::rng_from;

    fn grape_controller() -> (EnvConfig, Controller) {
        let env = EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::Common).unwrap();
        let res = grape_optimize(&env.model, &env.target, &GrapeConfig::single_qubit(), None, &mut rng_from(0, &[])).unwrap();
        (env, Controller::OpenLoop { algorithm: Algorithm::Grape, pulses: res.pulses })
    }

    fn row(alg: Algorithm, eta: f64, f: f64) -> SweepRow {
        SweepRow {
            gate: "hadamard".into(),
            algorithm: alg,
            eta,
            trial_count: 1,
            mean_max_fidelity: f,
            std_max_fidelity: 0.0,
            mean_steps: 40.0,
            seed: 0,
        }
    }

    #[test]
    fn noise_free_grape_point() {
        let (env, c) = grape_controller();
        let rows = run_sweep("hadamard", &c, &env, &[0.0], 1, 5).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].mean_max_fidelity >= 0.999);
        assert_eq!(rows[0].mean_steps, 40.0);
    }

    #[test]
    fn sweep_rows_and_determinism() {
        let (env, c) = grape_controller();
        let grid = [0.0, 0.5, 1.0];
        let a = run_sweep("hadamard", &c, &env, &grid, 10, 5).unwrap();
        let b = run_sweep("hadamard", &c, &env, &grid, 10, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.trial_count == 10 && (0.0..=1.0).contains(&r.mean_max_fidelity)));
        let c2 = run_sweep("hadamard", &c, &env, &grid, 10, 6).unwrap();
        assert_eq!(a.iter().map(|r| r.eta).collect::<Vec<_>>(), c2.iter().map(|r| r.eta).collect::<Vec<_>>());
        assert_ne!(a[2].mean_max_fidelity, c2[2].mean_max_fidelity);
    }

    #[test]
    fn area_ratio_cases() {
        let ones = AreaRatios::from_infidelities(&[0.0; 9]).unwrap();
        assert_eq!((ones.within_1e4, ones.within_1e5), (1.0, 1.0));
        let half = AreaRatios::from_infidelities(&[0.5; 9]).unwrap();
        assert_eq!((half.within_1e4, half.within_1e5), (0.0, 0.0));
        let mixed = AreaRatios::from_infidelities(&[1e-6, 1e-5, 5e-5, 1e-4, 2e-4, 0.3, 0.0, 1e-3]).unwrap();
        assert_eq!(mixed.within_1e4, 5.0 / 8.0);
        assert_eq!(mixed.within_1e5, 3.0 / 8.0);
        assert!(AreaRatios::from_infidelities(&[]).is_err());
    }

    #[test]
    fn comparison_deltas() {
        let g: Vec<SweepRow> = [0.0, 0.5, 1.0].iter().map(|&e| row(Algorithm::Grape, e, 0.9)).collect();
        let same = compare_report(&[g.clone(), g.clone()]).unwrap();
        assert!(same.pairs[0].deltas.iter().all(|d| *d == 0.0));
        let mut m: Vec<SweepRow> = [0.0, 0.5, 1.0].iter().map(|&e| row(Algorithm::Metaqctrl, e, 0.9)).collect();
        m[2].mean_max_fidelity = 1.0;
        let r = compare_report(&[m, g.clone()]).unwrap();
        assert!((r.pairs[0].deltas[2] - 0.1).abs() < 1e-12);
        assert!((r.pairs[0].max_gap - 0.1).abs() < 1e-12);
        assert!((r.meta_minus_grape_at_eta1.unwrap() - 0.1).abs() < 1e-12);
        let short = vec![row(Algorithm::Ppo, 0.0, 1.0)];
        assert!(compare_report(&[g, short]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(Algorithm::Ppo, 0.05, 0.123456789012345), row(Algorithm::Ga, 1.0, 1.0 / 3.0)];
        let h = ArtifactHeader::new().with("seed", 7).with("config_hash", "abc");
        let text = csv_string(&h, &rows).unwrap();
        assert!(text.starts_with("# seed=7\n# config_hash=abc\ngate,algorithm,eta,trial_count"));
        let (h2, back): (_, Vec<SweepRow>) = parse_csv(&text).unwrap();
        assert_eq!(back, rows);
        assert_eq!(h2, h);
    }

    #[test]
    fn heatmap_on_small_grid() {
        let env = EnvConfig::single_qubit(gates::hadamard(), DisturbanceChannels::DriftAndControl).unwrap();
        let res = grape_optimize(&env.model, &env.target, &GrapeConfig::single_qubit(), None, &mut rng_from(0, &[])).unwrap();
        let c = Controller::OpenLoop { algorithm: Algorithm::Grape, pulses: res.pulses };
        let rows = run_heatmap("hadamard", &c, &env, 3, 2, 1).unwrap();
        assert_eq!(rows.len(), 9);
        assert_eq!((rows[0].eta0, rows[0].etau), (0.0, 0.0));
        assert!(rows[0].mean_infidelity < 1e-6);
        let ratios = AreaRatios::from_rows(&rows).unwrap();
        assert!(ratios.within_1e5 <= ratios.within_1e4);
        let dat = heatmap_dat(&ArtifactHeader::new(), &rows);
        assert_eq!(dat.lines().filter(|l| l.is_empty()).count(), 2);
        let (env1, c1) = grape_controller();
        assert!(run_heatmap("hadamard", &c1, &env1, 3, 2, 1).is_err());
    }
}

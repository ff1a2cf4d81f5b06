//! Artifact files: pulse schedules, traces, checkpoints and their headers.

use std::fs;
use std::path::Path;

use qgate_core::harness::ArtifactHeader;
use qgate_core::nnet::Checkpoint;
use qgate_core::{ControlPulseSequence, Error, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn header(command: &str, config_hash: &str, seed: u64) -> ArtifactHeader {
    ArtifactHeader::new()
        .with("qgate_version", ARTIFACT_VERSION)
        .with("command", command)
        .with("config_hash", config_hash)
        .with("seed", seed)
}

fn control_names(n_controls: usize) -> Vec<String> {
    let n_qubits = n_controls / 2;
    let mut names = Vec::with_capacity(n_controls);
    for q in 1..=n_qubits {
        names.push(format!("u_x{q}"));
        names.push(format!("u_y{q}"));
    }
    names
}

/// Columns are interleaved per qubit (`u_x1,u_y1,u_x2,u_y2`) while the
/// model orders its controls as all `X` then all `Y`.
fn column_to_control(col: usize, n_controls: usize) -> usize {
    let n_qubits = n_controls / 2;
    let q = col / 2;
    if col % 2 == 0 {
        q
    } else {
        n_qubits + q
    }
}

pub fn pulses_csv(header: &ArtifactHeader, pulses: &ControlPulseSequence) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let nc = pulses.n_controls();
    let mut head = vec!["step".to_string()];
    head.extend(control_names(nc));
    w.write_record(&head)?;
    for j in 0..pulses.n_steps() {
        let amps = pulses.step(j);
        let mut rec = vec![(j + 1).to_string()];
        rec.extend((0..nc).map(|c| amps[column_to_control(c, nc)].to_string()));
        w.write_record(&rec)?;
    }
    let body = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    let mut text = String::new();
    for (k, v) in &header.entries {
        text.push_str(&format!("# {k}={v}\n"));
    }
    text.push_str(&format!("# dt={}\n", pulses.dt()));
    Ok(text + &String::from_utf8_lossy(&body))
}

/// Reads a pulse file. The slice length comes from the `dt` header line.
pub fn read_pulses(path: &Path) -> Result<ControlPulseSequence> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let text = fs::read_to_string(path)?;
    let dt = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.trim_start_matches('#').trim().strip_prefix("dt=").map(str::to_string))
        .and_then(|v| v.parse::<f64>().ok())
        .ok_or_else(|| Error::Config(format!("{}: missing dt header", path.display())))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let nc = r.headers()?.len().saturating_sub(1);
    if nc == 0 || nc % 2 != 0 {
        return Err(Error::Config(format!("{}: unexpected pulse columns", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut amps = vec![0.0; nc];
        for c in 0..nc {
            amps[column_to_control(c, nc)] = rec[c + 1]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad amplitude '{}'", path.display(), &rec[c + 1])))?;
        }
        rows.extend(amps);
    }
    ControlPulseSequence::from_flat(rows, nc, dt)
}

pub fn load_checkpoint(path: &Path, expect: &str) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    if ck.algorithm != expect {
        return Err(Error::Config(format!(
            "{} holds a '{}' checkpoint, expected '{expect}'",
            path.display(),
            ck.algorithm
        )));
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_file_round_trip() {
        let p = ControlPulseSequence::from_flat((0..20).map(|i| i as f64 * 0.37 - 3.0).collect(), 4, 0.04).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let text = pulses_csv(&header("grape", "abc", 1), &p).unwrap();
        assert!(text.contains("step,u_x1,u_y1,u_x2,u_y2\n"));
        fs::write(&path, text).unwrap();
        let back = read_pulses(&path).unwrap();
        assert_eq!(back, p);
        assert!(matches!(read_pulses(&dir.path().join("none.csv")), Err(Error::MissingArtifact(_))));
    }
}

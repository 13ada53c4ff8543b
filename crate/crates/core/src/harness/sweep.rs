//! Parameter sweeps: one scenario run per value of a single config key.

use std::path::PathBuf;

use rayon::prelude::*;

use super::config::{RawConfig, ScenarioConfig, KNOWN_KEYS, LIST_KEYS};
use super::output::{fmt_f64, write_text};
use super::scenario::{run_scenario, RunSummary};
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug)]
pub struct SweepSummary {
    pub key: String,
    pub values: Vec<String>,
    pub runs: Vec<RunSummary>,
    pub combined: PathBuf,
}

/// Runs `base` once per value of `key`, every run with the same seed, each in
/// `<output_dir>/<key>=<value>`. Writes `<output_dir>/sweep.csv` with columns
/// `t,<value_1>,...,<value_n>` holding the total Lyapunov series.
pub fn sweep(base: &RawConfig, key: &str, values: &[String]) -> Result<SweepSummary> {
    if values.is_empty() {
        return Err(Error::config("sweep", "empty value list"));
    }
    if !KNOWN_KEYS.contains(&key) {
        return Err(Error::config(format!("key `{key}`"), "unknown key"));
    }
    if LIST_KEYS.contains(&key) || key == "sim.output_dir" {
        return Err(Error::config(format!("key `{key}`"), "cannot be swept"));
    }
    let root = ScenarioConfig::from_raw(base)?.output_dir;

    let configs = values
        .iter()
        .map(|v| {
            let mut raw = base.clone();
            raw.set(key, v);
            raw.set("sim.output_dir", &root.join(format!("{key}={v}")).display().to_string());
            ScenarioConfig::from_raw(&raw)
        })
        .collect::<Result<Vec<_>>>()?;

    let runs = configs
        .par_iter()
        .map(run_scenario)
        .collect::<Result<Vec<_>>>()?;

    let times = &runs[0].lyapunov.times;
    for (run, v) in runs.iter().zip(values) {
        if run.lyapunov.times != *times {
            return Err(Error::config(
                format!("key `{key}`"),
                format!("value `{v}` changes the recorded time grid; series cannot be combined"),
            ));
        }
    }

    let mut text = String::from("t");
    for v in values {
        text.push(',');
        text.push_str(v);
    }
    text.push('\n');
    for (i, t) in times.iter().enumerate() {
        text.push_str(&fmt_f64(*t));
        for run in &runs {
            text.push(',');
            text.push_str(&fmt_f64(run.lyapunov.values[i]));
        }
        text.push('\n');
    }
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let combined = root.join(SWEEP_FILE);
    write_text(&combined, &text)?;

    Ok(SweepSummary {
        key: key.to_string(),
        values: values.to_vec(),
        runs,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(dir: &std::path::Path) -> RawConfig {
        let mut raw = RawConfig::parse("scenario = full_control\nsim.horizon = 0.5\nmicro.n_agents = 4", "t").unwrap();
        raw.set("sim.output_dir", &dir.display().to_string());
        raw
    }

    #[test]
    fn rejects_empty_and_unknown() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(sweep(&base(tmp.path()), "control.k", &[]).is_err());
        let err = sweep(&base(tmp.path()), "control.q", &["1".into()]).unwrap_err();
        assert!(err.to_string().contains("control.q"));
    }

    #[test]
    fn single_value_matches_plain_run() {
        let tmp = tempfile::tempdir().unwrap();
        let s = sweep(&base(tmp.path()), "control.k", &["-0.2".into()]).unwrap();
        let mut raw = base(&tmp.path().join("plain"));
        raw.set("control.k", "-0.2");
        let plain = run_scenario(&ScenarioConfig::from_raw(&raw).unwrap()).unwrap();
        assert_eq!(s.runs[0].lyapunov, plain.lyapunov);
        let a = std::fs::read(tmp.path().join("control.k=-0.2/trajectory.csv")).unwrap();
        let b = std::fs::read(tmp.path().join("plain/trajectory.csv")).unwrap();
        assert_eq!(a, b);
        let combined = std::fs::read_to_string(&s.combined).unwrap();
        assert!(combined.starts_with("t,-0.2\n"));
    }

    #[test]
    fn mismatched_grid_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        let err = sweep(&base(tmp.path()), "sim.horizon", &["0.5".into(), "1".into()]).unwrap_err();
        assert!(err.to_string().contains("time grid"), "{err}");
    }
}

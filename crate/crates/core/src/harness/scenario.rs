//! Runs one configured scenario and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde_json::json;

use super::config::{Model, Scenario, ScenarioConfig};
use super::output::{fmt_f64, indexed_header, named_header, write_json, write_rows, write_text};
use crate::error::{Error, Result};
use crate::leader_follower::{run_hybrid, run_micro_lf, HybridState, LfState};
use crate::lyapunov::{
    certify, decay_rate_hybrid, decay_rate_micro, envelope, lyap_ensemble, lyap_leaders, lyap_micro,
    DecayCertificate, LyapunovKind, LyapunovSeries, DEFAULT_SLACK,
};
use crate::meanfield::{first_moment, histogram, run_mfmc, MfmcConfig, ParticleEnsemble};
use crate::micro::{self, feedback, AgentState, ControlConfig};
use crate::observe::Recorder;
use crate::seeding::{sample_initial, stream_rng, Stream};
use crate::spectral::{analytic_spectrum, SpectralReport};

pub const LYAPUNOV_FILE: &str = "lyapunov.csv";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";

/// What a finished run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    /// Decay rate used for the envelope; 0 outside the leader-follower scenarios.
    pub beta: f64,
    /// Total Lyapunov series at the recorded times.
    pub lyapunov: LyapunovSeries,
    /// Follower and leader parts of the total, for leader-follower runs.
    pub components: Option<(LyapunovSeries, LyapunovSeries)>,
    pub certificate: DecayCertificate,
    pub sparse_agent: Option<usize>,
    /// Agents, particles or followers at `t = 0`.
    pub initial_positions: Vec<f64>,
    pub final_positions: Vec<f64>,
    pub final_leaders: Vec<f64>,
    pub files: Vec<PathBuf>,
}

struct Outcome {
    beta: f64,
    lyapunov: LyapunovSeries,
    components: Option<(LyapunovSeries, LyapunovSeries)>,
    sparse_agent: Option<usize>,
    initial_positions: Vec<f64>,
    final_positions: Vec<f64>,
    final_leaders: Vec<f64>,
    steps: usize,
}

/// Runs the configured scenario into `cfg.output_dir`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunSummary> {
    let started = Instant::now();
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::new();

    let outcome = match cfg.scenario {
        Scenario::LeaderFollowerMicro => run_lf_micro(cfg, &dir, &mut files)?,
        Scenario::LeaderFollowerHybrid => run_lf_hybrid(cfg, &dir, &mut files)?,
        _ => match cfg.model {
            Model::Micro => run_micro(cfg, &dir, &mut files)?,
            Model::MeanField => run_mean_field(cfg, &dir, &mut files)?,
        },
    };

    let series = &outcome.lyapunov;
    let path = dir.join(LYAPUNOV_FILE);
    if outcome.beta < 0.0 {
        let env = envelope(series.values[0], outcome.beta, &series.times);
        let rows: Vec<[f64; 2]> = series.values.iter().zip(&env).map(|(v, e)| [*v, *e]).collect();
        write_rows(
            &path,
            &named_header(&["value", "envelope"]),
            series.times.iter().zip(&rows).map(|(t, r)| (*t, r.as_slice())),
        )?;
    } else {
        write_rows(
            &path,
            &named_header(&["value"]),
            series.times.iter().zip(&series.values).map(|(t, v)| (*t, std::slice::from_ref(v))),
        )?;
    }
    files.push(path);

    let certificate = certify(series, outcome.beta, DEFAULT_SLACK)?;
    let path = dir.join(CERTIFICATE_FILE);
    write_json(&path, &certificate)?;
    files.push(path);

    let path = dir.join(RESOLVED_CONFIG_FILE);
    write_text(&path, &cfg.to_config_text())?;
    files.push(path);

    let path = dir.join(MANIFEST_FILE);
    files.push(path.clone());
    let file_names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": cfg.scenario.name(),
        "seed": cfg.seed,
        "sparse_agent": outcome.sparse_agent,
        "steps": outcome.steps,
        "beta": outcome.beta,
        "final_lyapunov": series.values.last().map(|v| fmt_f64(*v)),
        "warnings": cfg.warnings,
        "outputs": file_names,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "config": cfg.resolved_entries(),
    });
    write_json(&path, &manifest)?;

    log::info!(
        "{} finished: {} steps, final Lyapunov {:e}, {:.2}s",
        cfg.scenario.name(),
        outcome.steps,
        series.values.last().copied().unwrap_or(f64::NAN),
        started.elapsed().as_secs_f64()
    );

    Ok(RunSummary {
        output_dir: dir,
        beta: outcome.beta,
        lyapunov: outcome.lyapunov,
        components: outcome.components,
        certificate,
        sparse_agent: outcome.sparse_agent,
        initial_positions: outcome.initial_positions,
        final_positions: outcome.final_positions,
        final_leaders: outcome.final_leaders,
        files,
    })
}

fn sparse_agent(cfg: &ScenarioConfig, population: usize) -> Option<usize> {
    if cfg.scenario != Scenario::SparseSingleAgent {
        return None;
    }
    Some(
        cfg.agent
            .unwrap_or_else(|| stream_rng(cfg.seed, Stream::AgentSelect).random_range(0..population)),
    )
}

fn control_for(cfg: &ScenarioConfig, n: usize, agent: Option<usize>) -> Result<Option<ControlConfig>> {
    Ok(match cfg.scenario {
        Scenario::FullControl => Some(ControlConfig::full(cfg.k, cfg.c, n)?),
        Scenario::SparseSingleAgent => Some(ControlConfig::single(cfg.k, cfg.c, n, agent.unwrap_or(0))?),
        _ => None,
    })
}

fn mfmc_config(cfg: &ScenarioConfig) -> MfmcConfig {
    MfmcConfig {
        n_sample: cfg.mfmc.n_sample,
        seed: cfg.mfmc.seed.unwrap_or(cfg.seed),
    }
}

fn steps_of(cfg: &ScenarioConfig) -> usize {
    (cfg.horizon / cfg.dt).round() as usize
}

fn run_micro(cfg: &ScenarioConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let n = cfg.n_agents;
    let x0 = sample_initial(n, cfg.init_lo, cfg.init_hi, &mut stream_rng(cfg.seed, Stream::Init))?;
    let agent = sparse_agent(cfg, n);
    let control = control_for(cfg, n, agent)?;
    let initial = AgentState::new(x0.clone())?;

    let c = cfg.c;
    let ctrl = control.clone();
    let mut rec = Recorder::new(cfg.record_stride, move |s: &AgentState| {
        let u = ctrl.as_ref().map_or(0.0, |ctrl| feedback(s, ctrl));
        (s.positions.clone(), [lyap_micro(s, c), s.mean(), u])
    });
    let last = micro::run(&initial, cfg.horizon, cfg.dt, &cfg.kernel, control.as_ref(), &mut rec)?;
    let (times, records) = rec.into_parts();

    let path = dir.join("trajectory.csv");
    write_rows(
        &path,
        &indexed_header("x_", n),
        times.iter().zip(&records).map(|(t, r)| (*t, r.0.as_slice())),
    )?;
    files.push(path);
    let path = dir.join("diagnostics.csv");
    write_rows(
        &path,
        &named_header(&["lyapunov", "mean", "control_u"]),
        times.iter().zip(&records).map(|(t, r)| (*t, r.1.as_slice())),
    )?;
    files.push(path);

    let values = records.iter().map(|r| r.1[0]).collect();
    Ok(Outcome {
        beta: 0.0,
        lyapunov: LyapunovSeries::from_parts(LyapunovKind::Micro, times, values)?,
        components: None,
        sparse_agent: agent,
        initial_positions: x0,
        final_positions: last.positions,
        final_leaders: Vec::new(),
        steps: steps_of(cfg),
    })
}

fn run_mean_field(cfg: &ScenarioConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let n = cfg.mfmc.n_particles;
    let y0 = sample_initial(n, cfg.init_lo, cfg.init_hi, &mut stream_rng(cfg.seed, Stream::Init))?;
    let agent = sparse_agent(cfg, n);
    let control = control_for(cfg, n, agent)?;
    let initial = ParticleEnsemble::probability(y0.clone())?;
    let mf = mfmc_config(cfg);
    let mut rng = stream_rng(mf.seed, Stream::Subsample);

    let (c, s) = (cfg.c, &cfg.mfmc);
    let (lo, hi, bins) = (s.range_lo, s.range_hi, s.bins);
    let mut rec = Recorder::new(cfg.record_stride, |e: &ParticleEnsemble| {
        (density_row(e, lo, hi, bins), [first_moment(e), lyap_ensemble(e, c)])
    });
    let last = run_mfmc(&initial, cfg.horizon, cfg.dt, &cfg.kernel, control.as_ref(), &mf, &mut rng, &mut rec)?;
    let (times, records) = rec.into_parts();

    let (density, moments): (Vec<_>, Vec<_>) = records.into_iter().unzip();
    let density = density.into_iter().collect::<Result<Vec<_>>>()?;
    write_density(dir, files, bins, &times, &density)?;
    let path = dir.join("moments.csv");
    write_rows(
        &path,
        &named_header(&["m1", "lyapunov"]),
        times.iter().zip(&moments).map(|(t, r)| (*t, r.as_slice())),
    )?;
    files.push(path);

    let values = moments.iter().map(|r| r[1]).collect();
    Ok(Outcome {
        beta: 0.0,
        lyapunov: LyapunovSeries::from_parts(LyapunovKind::MeanField, times, values)?,
        components: None,
        sparse_agent: agent,
        initial_positions: y0,
        final_positions: last.particles,
        final_leaders: Vec::new(),
        steps: steps_of(cfg),
    })
}

/// Histogram bins followed by the overflow mass.
fn density_row(e: &ParticleEnsemble, lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    let h = histogram(e, lo, hi, bins)?;
    let mut row = h.bins;
    row.push(h.overflow);
    Ok(row)
}

fn write_density(dir: &Path, files: &mut Vec<PathBuf>, bins: usize, times: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let mut header = indexed_header("bin_", bins);
    header.push("overflow".to_string());
    let path = dir.join("density.csv");
    write_rows(&path, &header, times.iter().zip(rows).map(|(t, r)| (*t, r.as_slice())))?;
    files.push(path);
    Ok(())
}

/// Followers first, then leaders, from the init stream; pinned leader
/// positions skip the second draw.
fn lf_initial(cfg: &ScenarioConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let lf = cfg.lf.as_ref().expect("leader-follower settings");
    let mut rng = stream_rng(cfg.seed, Stream::Init);
    let followers = sample_initial(lf.split.n_followers(), cfg.init_lo, cfg.init_hi, &mut rng)?;
    let leaders = match &lf.leader_positions {
        Some(xs) => xs.clone(),
        None => sample_initial(lf.split.n_leaders(), cfg.init_lo, cfg.init_hi, &mut rng)?,
    };
    Ok((followers, leaders))
}

fn write_lf_series(
    dir: &Path,
    files: &mut Vec<PathBuf>,
    times: &[f64],
    leaders: &[Vec<f64>],
    parts: &[[f64; 3]],
) -> Result<()> {
    let n_leaders = leaders.first().map_or(0, Vec::len);
    let path = dir.join("leaders.csv");
    write_rows(&path, &indexed_header("xl_", n_leaders), times.iter().zip(leaders).map(|(t, r)| (*t, r.as_slice())))?;
    files.push(path);
    let path = dir.join("lyapunov_components.csv");
    write_rows(
        &path,
        &named_header(&["followers", "leaders", "total"]),
        times.iter().zip(parts).map(|(t, r)| (*t, r.as_slice())),
    )?;
    files.push(path);
    Ok(())
}

fn lf_series(
    times: Vec<f64>,
    parts: &[[f64; 3]],
    follower_kind: LyapunovKind,
    leader_kind: LyapunovKind,
) -> Result<(LyapunovSeries, (LyapunovSeries, LyapunovSeries))> {
    let col = |i: usize| parts.iter().map(|p| p[i]).collect::<Vec<_>>();
    let total = LyapunovSeries::from_parts(LyapunovKind::TotalLf, times.clone(), col(2))?;
    let f = LyapunovSeries::from_parts(follower_kind, times.clone(), col(0))?;
    let l = LyapunovSeries::from_parts(leader_kind, times, col(1))?;
    Ok((total, (f, l)))
}

fn run_lf_micro(cfg: &ScenarioConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let split = *cfg.split().expect("leader-follower settings");
    let (followers, leaders) = lf_initial(cfg)?;
    let initial = LfState {
        followers: followers.clone(),
        leaders,
        time: 0.0,
    };
    let (c, wf, wl) = (cfg.c, split.omega_f(), split.omega_l());
    let mut rec = Recorder::new(cfg.record_stride, |s: &LfState| {
        let lf = lyap_leaders(&s.followers, wf, c);
        let ll = lyap_leaders(&s.leaders, wl, c);
        (s.followers.clone(), s.leaders.clone(), [lf, ll, lf + ll])
    });
    let last = run_micro_lf(&initial, cfg.horizon, cfg.dt, &split, &cfg.kernel, cfg.k, cfg.c, &mut rec)?;
    let (times, records) = rec.into_parts();

    let path = dir.join("trajectory.csv");
    write_rows(
        &path,
        &indexed_header("x_", split.n_followers()),
        times.iter().zip(&records).map(|(t, r)| (*t, r.0.as_slice())),
    )?;
    files.push(path);
    let leader_rows: Vec<Vec<f64>> = records.iter().map(|r| r.1.clone()).collect();
    let parts: Vec<[f64; 3]> = records.iter().map(|r| r.2).collect();
    write_lf_series(dir, files, &times, &leader_rows, &parts)?;

    let (total, components) = lf_series(times, &parts, LyapunovKind::FollowerMicro, LyapunovKind::LeaderMicro)?;
    Ok(Outcome {
        beta: decay_rate_micro(cfg.kernel.p_bar(), cfg.k, wf, wl),
        lyapunov: total,
        components: Some(components),
        sparse_agent: None,
        initial_positions: followers,
        final_positions: last.followers,
        final_leaders: last.leaders,
        steps: steps_of(cfg),
    })
}

fn run_lf_hybrid(cfg: &ScenarioConfig, dir: &Path, files: &mut Vec<PathBuf>) -> Result<Outcome> {
    let split = *cfg.split().expect("leader-follower settings");
    let (followers, leaders) = lf_initial(cfg)?;
    let initial = HybridState::new(followers.clone(), leaders, &split)?;
    let mf = mfmc_config(cfg);
    let mut rng = stream_rng(mf.seed, Stream::Subsample);

    let (c, wl) = (cfg.c, split.omega_l());
    let s = &cfg.mfmc;
    let (lo, hi, bins) = (s.range_lo, s.range_hi, s.bins);
    let mut rec = Recorder::new(cfg.record_stride, |st: &HybridState| {
        let lf = lyap_ensemble(&st.followers, c);
        let ll = lyap_leaders(&st.leaders, wl, c);
        let m1 = first_moment(&st.followers) + wl * st.leaders.iter().sum::<f64>();
        (density_row(&st.followers, lo, hi, bins), st.leaders.clone(), [lf, ll, lf + ll], m1)
    });
    let last = run_hybrid(
        &initial, cfg.horizon, cfg.dt, &split, &cfg.kernel, cfg.k, cfg.c, &mf, &mut rng, &mut rec,
    )?;
    let (times, records) = rec.into_parts();

    let moments: Vec<[f64; 2]> = records.iter().map(|r| [r.3, r.2[2]]).collect();
    let parts: Vec<[f64; 3]> = records.iter().map(|r| r.2).collect();
    let mut density = Vec::with_capacity(records.len());
    let mut leader_rows = Vec::with_capacity(records.len());
    for (d, l, _, _) in records {
        density.push(d?);
        leader_rows.push(l);
    }
    write_density(dir, files, bins, &times, &density)?;
    let path = dir.join("moments.csv");
    write_rows(
        &path,
        &named_header(&["m1", "lyapunov"]),
        times.iter().zip(&moments).map(|(t, r)| (*t, r.as_slice())),
    )?;
    files.push(path);
    write_lf_series(dir, files, &times, &leader_rows, &parts)?;

    let (total, components) = lf_series(times, &parts, LyapunovKind::FollowerMf, LyapunovKind::LeaderHybrid)?;
    Ok(Outcome {
        beta: decay_rate_hybrid(cfg.kernel.p_bar(), cfg.k),
        lyapunov: total,
        components: Some(components),
        sparse_agent: None,
        initial_positions: followers,
        final_positions: last.followers.particles,
        final_leaders: last.leaders,
        steps: steps_of(cfg),
    })
}

/// Spectrum of the linearization at consensus for the configured actuation:
/// `𝟙` under full control, `e_j` for the sparse agent, the leader indicator
/// for leader-follower runs and `b = 0, k = 0` without control.
pub fn analyze(cfg: &ScenarioConfig) -> Result<SpectralReport> {
    let (n, b, k) = match cfg.scenario {
        Scenario::Uncontrolled => {
            let n = population(cfg);
            (n, vec![0.0; n], 0.0)
        }
        Scenario::FullControl => {
            let n = population(cfg);
            (n, vec![1.0; n], cfg.k)
        }
        Scenario::SparseSingleAgent => {
            let n = population(cfg);
            let agent = sparse_agent(cfg, n).unwrap_or(0);
            let mut b = vec![0.0; n];
            b[agent] = 1.0;
            (n, b, cfg.k)
        }
        Scenario::LeaderFollowerMicro | Scenario::LeaderFollowerHybrid => {
            let split = cfg.split().expect("leader-follower settings");
            let (nf, nl) = (split.n_followers(), split.n_leaders());
            let mut b = vec![0.0; nf + nl];
            b[nf..].fill(1.0);
            (nf + nl, b, cfg.k)
        }
    };
    analytic_spectrum(n, cfg.kernel.p_bar(), &b, k)
}

fn population(cfg: &ScenarioConfig) -> usize {
    match cfg.model {
        Model::Micro => cfg.n_agents,
        Model::MeanField => cfg.mfmc.n_particles,
    }
}

#[cfg(test)]
mod tests {
    use super::super::config::RawConfig;
    use super::*;

    fn config(text: &str, dir: &Path) -> ScenarioConfig {
        let mut raw = RawConfig::parse(text, "test").unwrap();
        raw.set("sim.output_dir", &dir.display().to_string());
        ScenarioConfig::from_raw(&raw).unwrap()
    }

    #[test]
    fn micro_run_writes_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config("scenario = full_control\nsim.horizon = 1\nmicro.n_agents = 5", tmp.path());
        let summary = run_scenario(&cfg).unwrap();
        for f in ["trajectory.csv", "diagnostics.csv", LYAPUNOV_FILE, CERTIFICATE_FILE, MANIFEST_FILE, RESOLVED_CONFIG_FILE] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        // Steps 0, 10, ..., 100.
        assert_eq!(summary.lyapunov.len(), 11);
        assert!(summary.certificate.monotone_ok);
        let header = std::fs::read_to_string(tmp.path().join(LYAPUNOV_FILE)).unwrap();
        assert!(header.starts_with("t,value\n"));
    }

    #[test]
    fn lf_run_has_envelope_column() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(
            "scenario = leader_follower\nkernel.family = constant\nsim.horizon = 1\nlf.n_followers = 4",
            tmp.path(),
        );
        let summary = run_scenario(&cfg).unwrap();
        assert!(summary.beta < 0.0);
        let text = std::fs::read_to_string(tmp.path().join(LYAPUNOV_FILE)).unwrap();
        assert!(text.starts_with("t,value,envelope\n"));
        let (f, l) = summary.components.unwrap();
        for i in 0..summary.lyapunov.len() {
            assert_eq!(summary.lyapunov.values[i], f.values[i] + l.values[i]);
        }
    }

    #[test]
    fn sparse_agent_is_seeded_and_recorded() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config("scenario = sparse_single_agent\nsim.horizon = 0.1\nseed = 7", tmp.path());
        let a = run_scenario(&cfg).unwrap().sparse_agent.unwrap();
        let b = run_scenario(&cfg).unwrap().sparse_agent.unwrap();
        assert_eq!(a, b);
        assert!(a < 50);
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["sparse_agent"], a);
    }

    #[test]
    fn analyze_sparse_gives_k_over_n() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config("scenario = sparse_single_agent\ncontrol.agent = 3", tmp.path());
        let r = analyze(&cfg).unwrap();
        assert_eq!(r.lambda1_closed, -0.1 / 50.0);
        assert!(r.asymptotically_stable);
        let un = analyze(&config("scenario = uncontrolled", tmp.path())).unwrap();
        assert_eq!(un.lambda1_closed, 0.0);
        assert!(!un.stabilizable);
    }
}

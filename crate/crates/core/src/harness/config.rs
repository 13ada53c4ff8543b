//! Scenario configuration: flat `key = value` text with dotted section keys.
//!
//! ```text
//! # full control, microscopic
//! scenario = full_control
//! kernel.family = rational_decay
//! control.k = -0.1
//! ```
//!
//! `#` starts a comment. Unknown keys, duplicate keys and malformed values are
//! rejected with the offending line or key in the message. Every key has a
//! default; the resolved configuration can be written back in the same format
//! (see [`ScenarioConfig::resolved_entries`]) and replays bit-identically.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::leader_follower::PopulationSplit;
use crate::observe::{check_stability, step_count, DEFAULT_STRIDE};

/// Every key the harness understands.
pub const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "model",
    "seed",
    "kernel.family",
    "kernel.p_bar",
    "control.k",
    "control.c",
    "control.agent",
    "sim.dt",
    "sim.horizon",
    "sim.record_stride",
    "sim.output_dir",
    "init.lo",
    "init.hi",
    "micro.n_agents",
    "mfmc.n_particles",
    "mfmc.n_sample",
    "mfmc.seed",
    "mfmc.bins",
    "mfmc.range_lo",
    "mfmc.range_hi",
    "lf.mode",
    "lf.n_followers",
    "lf.n_leaders",
    "lf.rho_f",
    "lf.rho_l",
    "lf.leader_positions",
];

/// Keys holding lists rather than scalars.
pub const LIST_KEYS: &[&str] = &["lf.leader_positions"];

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    value: String,
    origin: String,
}

/// Unresolved key-value pairs, with where each value came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

impl RawConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let location = format!("{source}:{}", lineno + 1);
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::config(&location, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::config(&location, "empty key"));
            }
            if raw.entries.contains_key(key) {
                return Err(Error::config(&location, format!("duplicate key `{key}`")));
            }
            raw.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    origin: location,
                },
            );
        }
        Ok(raw)
    }

    /// Reads a config file. A run manifest (`manifest.json`) is accepted too:
    /// its `config` object holds the resolved key-value pairs.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let source = path.display().to_string();
        if text.trim_start().starts_with('{') {
            let json: serde_json::Value = serde_json::from_str(&text)?;
            let map = json
                .get("config")
                .and_then(|c| c.as_object())
                .ok_or_else(|| Error::config(&source, "JSON input needs a `config` object"))?;
            let mut raw = RawConfig::default();
            for (key, value) in map {
                let value = value
                    .as_str()
                    .ok_or_else(|| Error::config(&source, format!("`{key}` must be a string")))?;
                raw.insert(key, value, &source);
            }
            return Ok(raw);
        }
        Self::parse(&text, &source)
    }

    fn insert(&mut self, key: &str, value: &str, origin: &str) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                origin: origin.to_string(),
            },
        );
    }

    /// Applies an override. Setting one of `lf.rho_f` / `lf.rho_l` drops the
    /// other from lower layers, so sweeping one fraction keeps them consistent.
    pub fn set(&mut self, key: &str, value: &str) {
        let partner = match key {
            "lf.rho_f" => Some("lf.rho_l"),
            "lf.rho_l" => Some("lf.rho_f"),
            _ => None,
        };
        if let Some(p) = partner {
            if self.entries.get(p).is_some_and(|e| e.origin != "override") {
                self.entries.remove(p);
            }
        }
        self.insert(key, value, "override");
    }

    /// Parses and applies `key=value`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::config("--set", format!("expected `key=value`, got `{assignment}`"))
        })?;
        self.set(key.trim(), value.trim());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                Error::config(
                    format!("key `{key}` ({})", e.origin),
                    format!("cannot parse `{}`: {err}", e.value),
                )
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Uncontrolled,
    FullControl,
    SparseSingleAgent,
    LeaderFollowerMicro,
    LeaderFollowerHybrid,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Uncontrolled => "uncontrolled",
            Scenario::FullControl => "full_control",
            Scenario::SparseSingleAgent => "sparse_single_agent",
            Scenario::LeaderFollowerMicro | Scenario::LeaderFollowerHybrid => "leader_follower",
        }
    }

    pub fn is_leader_follower(self) -> bool {
        matches!(self, Scenario::LeaderFollowerMicro | Scenario::LeaderFollowerHybrid)
    }
}

/// Representation used by the non-leader-follower scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Micro,
    MeanField,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Micro => "micro",
            Model::MeanField => "mean_field",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MfmcSettings {
    pub n_particles: usize,
    pub n_sample: usize,
    /// Seed of the subsample stream; the master seed when absent.
    pub seed: Option<u64>,
    pub bins: usize,
    pub range_lo: f64,
    pub range_hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LfSettings {
    pub split: PopulationSplit,
    pub leader_positions: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub model: Model,
    pub kernel: KernelSpec,
    pub k: f64,
    pub c: f64,
    /// Pinned controlled agent for the sparse scenario.
    pub agent: Option<usize>,
    pub dt: f64,
    pub horizon: f64,
    pub record_stride: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub init_lo: f64,
    pub init_hi: f64,
    pub n_agents: usize,
    pub mfmc: MfmcSettings,
    /// Present for the leader-follower scenarios.
    pub lf: Option<LfSettings>,
    pub warnings: Vec<String>,
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::config(format!("key `{key}`"), message)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(bad(key, format!("must be a positive number, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(bad(key, "must be at least 1"))
    }
}

impl ScenarioConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(unknown) = raw.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(bad(unknown, "unknown key"));
        }

        let scenario_name = raw.get("scenario").unwrap_or("full_control");
        let lf_mode = raw.get("lf.mode").unwrap_or("micro");
        let scenario = match scenario_name {
            "uncontrolled" => Scenario::Uncontrolled,
            "full_control" => Scenario::FullControl,
            "sparse_single_agent" => Scenario::SparseSingleAgent,
            "leader_follower" => match lf_mode {
                "micro" => Scenario::LeaderFollowerMicro,
                "hybrid" => Scenario::LeaderFollowerHybrid,
                other => return Err(bad("lf.mode", format!("expected `micro` or `hybrid`, got `{other}`"))),
            },
            other => {
                return Err(bad(
                    "scenario",
                    format!(
                        "expected one of uncontrolled, full_control, sparse_single_agent, leader_follower; got `{other}`"
                    ),
                ))
            }
        };
        let model = match (raw.get("model"), scenario.is_leader_follower()) {
            (None, _) | (Some("micro"), false) => Model::Micro,
            (Some("mean_field"), false) => Model::MeanField,
            (Some(_), true) => return Err(bad("model", "leader_follower scenarios select their model with `lf.mode`")),
            (Some(other), false) => return Err(bad("model", format!("expected `micro` or `mean_field`, got `{other}`"))),
        };

        let family: KernelFamily = raw
            .get("kernel.family")
            .unwrap_or("rational_decay")
            .parse()
            .map_err(|e: Error| bad("kernel.family", e.to_string()))?;
        let p_bar = positive("kernel.p_bar", raw.parsed("kernel.p_bar")?.unwrap_or(0.04))?;
        let kernel = KernelSpec::new(family, p_bar).map_err(|e| bad("kernel.p_bar", e.to_string()))?;

        let k: f64 = raw.parsed("control.k")?.unwrap_or(-0.1);
        let c: f64 = raw.parsed("control.c")?.unwrap_or(1.0);
        if !k.is_finite() {
            return Err(bad("control.k", "must be finite"));
        }
        if !c.is_finite() {
            return Err(bad("control.c", "must be finite"));
        }
        let agent: Option<usize> = raw.parsed("control.agent")?;

        let dt = positive("sim.dt", raw.parsed("sim.dt")?.unwrap_or(0.01))?;
        let horizon = positive("sim.horizon", raw.parsed("sim.horizon")?.unwrap_or(400.0))?;
        step_count(horizon, dt).map_err(|e| bad("sim.horizon", e.to_string()))?;
        let uses_control = !matches!(scenario, Scenario::Uncontrolled);
        check_stability(dt, p_bar, if uses_control { k } else { 0.0 })
            .map_err(|e| bad("sim.dt", e.to_string()))?;
        let record_stride = at_least_one(
            "sim.record_stride",
            raw.parsed("sim.record_stride")?.unwrap_or(DEFAULT_STRIDE),
        )?;
        let output_dir = PathBuf::from(raw.get("sim.output_dir").unwrap_or("out"));
        let seed: u64 = raw.parsed("seed")?.unwrap_or(0);

        let init_lo: f64 = raw.parsed("init.lo")?.unwrap_or(2.0);
        let init_hi: f64 = raw.parsed("init.hi")?.unwrap_or(5.0);
        if !(init_lo.is_finite() && init_hi.is_finite() && init_lo < init_hi) {
            return Err(bad("init.lo", format!("need init.lo < init.hi, got [{init_lo}, {init_hi})")));
        }

        let n_agents = at_least_one("micro.n_agents", raw.parsed("micro.n_agents")?.unwrap_or(50))?;

        let hybrid = scenario == Scenario::LeaderFollowerHybrid;
        let n_followers = at_least_one(
            "lf.n_followers",
            raw.parsed("lf.n_followers")?.unwrap_or(if hybrid { 9999 } else { 49 }),
        )?;
        let n_particles = at_least_one("mfmc.n_particles", raw.parsed("mfmc.n_particles")?.unwrap_or(10_000))?;
        let sampled_population = if hybrid { n_followers } else { n_particles };
        let n_sample: usize = raw
            .parsed("mfmc.n_sample")?
            .unwrap_or_else(|| sampled_population.min(1000));
        if n_sample == 0 || n_sample > sampled_population {
            return Err(bad(
                "mfmc.n_sample",
                format!("must lie in 1..={sampled_population}, got {n_sample}"),
            ));
        }
        let bins = at_least_one("mfmc.bins", raw.parsed("mfmc.bins")?.unwrap_or(100))?;
        let range_lo: f64 = raw.parsed("mfmc.range_lo")?.unwrap_or(0.0);
        let range_hi: f64 = raw.parsed("mfmc.range_hi")?.unwrap_or(6.0);
        if !(range_lo.is_finite() && range_hi.is_finite() && range_lo < range_hi) {
            return Err(bad("mfmc.range_lo", format!("need range_lo < range_hi, got [{range_lo}, {range_hi}]")));
        }
        let mfmc = MfmcSettings {
            n_particles,
            n_sample,
            seed: raw.parsed("mfmc.seed")?,
            bins,
            range_lo,
            range_hi,
        };

        let lf = if scenario.is_leader_follower() {
            let n_leaders = at_least_one("lf.n_leaders", raw.parsed("lf.n_leaders")?.unwrap_or(1))?;
            let rho_f: Option<f64> = raw.parsed("lf.rho_f")?;
            let rho_l: Option<f64> = raw.parsed("lf.rho_l")?;
            let (rho_f, rho_l) = match (rho_f, rho_l) {
                (Some(f), Some(l)) => (f, l),
                (Some(f), None) => (f, 1.0 - f),
                (None, Some(l)) => (1.0 - l, l),
                (None, None) => (0.9, 1.0 - 0.9),
            };
            let split = PopulationSplit::new(n_followers, n_leaders, rho_f, rho_l)
                .map_err(|e| bad("lf.rho_f", e.to_string()))?;
            let leader_positions = match raw.get("lf.leader_positions") {
                None => None,
                Some(list) => {
                    let xs = list
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| bad("lf.leader_positions", e.to_string()))?;
                    if xs.len() != n_leaders || xs.iter().any(|x| !x.is_finite()) {
                        return Err(bad(
                            "lf.leader_positions",
                            format!("need {n_leaders} finite comma-separated values"),
                        ));
                    }
                    Some(xs)
                }
            };
            Some(LfSettings {
                split,
                leader_positions,
            })
        } else {
            None
        };

        let population = match (scenario, model) {
            (Scenario::LeaderFollowerMicro | Scenario::LeaderFollowerHybrid, _) => n_followers,
            (_, Model::Micro) => n_agents,
            (_, Model::MeanField) => n_particles,
        };
        if let Some(a) = agent {
            if a >= population {
                return Err(bad("control.agent", format!("index {a} out of range for {population} agents")));
            }
        }

        let mut warnings = Vec::new();
        match scenario {
            Scenario::Uncontrolled => {}
            Scenario::FullControl | Scenario::SparseSingleAgent => {
                if k > 0.0 {
                    warnings.push(format!(
                        "control.k = {k} > 0 with positive actuation sum: closed-loop λ₁ > 0, stabilization not guaranteed"
                    ));
                } else if k == 0.0 {
                    warnings.push("control.k = 0: closed-loop λ₁ = 0, not asymptotically stable".to_string());
                }
            }
            Scenario::LeaderFollowerMicro | Scenario::LeaderFollowerHybrid => {
                if k >= 0.0 {
                    warnings.push(format!("control.k = {k} is not negative: leaders do not stabilize the target"));
                } else if k.abs() <= 2.0 * p_bar {
                    warnings.push(format!(
                        "|control.k| = {} ≤ 2·p_bar = {}: no exponential decay guarantee",
                        k.abs(),
                        2.0 * p_bar
                    ));
                }
                if family != KernelFamily::Constant {
                    warnings.push("decay rate β is derived for the constant kernel only".to_string());
                }
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }

        Ok(Self {
            scenario,
            model,
            kernel,
            k,
            c,
            agent,
            dt,
            horizon,
            record_stride,
            output_dir,
            seed,
            init_lo,
            init_hi,
            n_agents,
            mfmc,
            lf,
            warnings,
        })
    }

    pub fn split(&self) -> Option<&PopulationSplit> {
        self.lf.as_ref().map(|lf| &lf.split)
    }

    /// Every resolved key with its value, in the config text format.
    pub fn resolved_entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("scenario", self.scenario.name().to_string());
        if !self.scenario.is_leader_follower() {
            put("model", self.model.name().to_string());
        }
        put("seed", self.seed.to_string());
        put("kernel.family", self.kernel.family().to_string());
        put("kernel.p_bar", self.kernel.p_bar().to_string());
        put("control.k", self.k.to_string());
        put("control.c", self.c.to_string());
        if let Some(a) = self.agent {
            put("control.agent", a.to_string());
        }
        put("sim.dt", self.dt.to_string());
        put("sim.horizon", self.horizon.to_string());
        put("sim.record_stride", self.record_stride.to_string());
        put("sim.output_dir", self.output_dir.display().to_string());
        put("init.lo", self.init_lo.to_string());
        put("init.hi", self.init_hi.to_string());
        put("micro.n_agents", self.n_agents.to_string());
        put("mfmc.n_particles", self.mfmc.n_particles.to_string());
        put("mfmc.n_sample", self.mfmc.n_sample.to_string());
        if let Some(s) = self.mfmc.seed {
            put("mfmc.seed", s.to_string());
        }
        put("mfmc.bins", self.mfmc.bins.to_string());
        put("mfmc.range_lo", self.mfmc.range_lo.to_string());
        put("mfmc.range_hi", self.mfmc.range_hi.to_string());
        if let Some(lf) = &self.lf {
            let mode = if self.scenario == Scenario::LeaderFollowerHybrid { "hybrid" } else { "micro" };
            put("lf.mode", mode.to_string());
            put("lf.n_followers", lf.split.n_followers().to_string());
            put("lf.n_leaders", lf.split.n_leaders().to_string());
            put("lf.rho_f", lf.split.rho_f().to_string());
            put("lf.rho_l", lf.split.rho_l().to_string());
            if let Some(xs) = &lf.leader_positions {
                let list: Vec<String> = xs.iter().map(f64::to_string).collect();
                put("lf.leader_positions", list.join(","));
            }
        }
        m
    }

    /// The resolved configuration as config-file text.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved_entries() {
            out.push_str(&k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Loads and validates a config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with(path, &[])
}

/// Loads a config file and applies `key=value` overrides on top.
pub fn load_config_with(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut raw = RawConfig::load(path)?;
    for o in overrides {
        raw.set_assignment(o)?;
    }
    ScenarioConfig::from_raw(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<ScenarioConfig> {
        ScenarioConfig::from_raw(&RawConfig::parse(text, "test")?)
    }

    #[test]
    fn defaults() {
        let c = cfg("").unwrap();
        assert_eq!(c.scenario, Scenario::FullControl);
        assert_eq!(c.dt, 0.01);
        assert_eq!(c.horizon, 400.0);
        assert_eq!(c.c, 1.0);
        assert_eq!(c.k, -0.1);
        assert_eq!(c.kernel.p_bar(), 0.04);
        assert_eq!(c.kernel.family(), KernelFamily::RationalDecay);
        assert_eq!((c.init_lo, c.init_hi), (2.0, 5.0));
        assert_eq!(c.n_agents, 50);
        assert_eq!(c.mfmc.n_particles, 10_000);
        assert_eq!(c.mfmc.n_sample, 1000);
        assert_eq!(c.record_stride, 10);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn hybrid_defaults() {
        let c = cfg("scenario = leader_follower\nlf.mode = hybrid\nkernel.family = constant").unwrap();
        let split = c.split().unwrap();
        assert_eq!(split.n_followers(), 9999);
        assert_eq!(split.n_leaders(), 1);
        assert_eq!(split.rho_f(), 0.9);
        assert_eq!(c.mfmc.n_sample, 1000);
        let m = cfg("scenario = leader_follower").unwrap();
        assert_eq!(m.split().unwrap().n_followers(), 49);
    }

    #[test]
    fn comments_and_whitespace() {
        let c = cfg("# header\n  scenario = uncontrolled   # trailing\n\nsim.dt=0.02\n").unwrap();
        assert_eq!(c.scenario, Scenario::Uncontrolled);
        assert_eq!(c.dt, 0.02);
    }

    #[test]
    fn positive_gain_warns() {
        let c = cfg("control.k = 0.1").unwrap();
        assert_eq!(c.warnings.len(), 1);
        assert!(c.warnings[0].contains("λ₁ > 0"));
    }

    #[test]
    fn inconsistent_mass_fractions() {
        let err = cfg("scenario = leader_follower\nlf.rho_f = 0.5\nlf.rho_l = 0.6").unwrap_err();
        assert!(err.to_string().contains("lf.rho_f"), "{err}");
    }

    #[test]
    fn errors_name_the_key() {
        for (text, key) in [
            ("sim.dt = 0", "sim.dt"),
            ("sim.dt = abc", "sim.dt"),
            ("bogus.key = 1", "bogus.key"),
            ("kernel.family = gaussian", "kernel.family"),
            ("kernel.p_bar = -1", "kernel.p_bar"),
            ("mfmc.n_sample = 20000\nmodel = mean_field", "mfmc.n_sample"),
            ("control.k = -100", "sim.dt"),
            ("scenario = sparse_single_agent\ncontrol.agent = 50", "control.agent"),
            ("scenario = leader_follower\nlf.n_leaders = 0", "lf.n_leaders"),
            ("scenario = leader_follower\nmodel = micro", "model"),
        ] {
            let err = cfg(text).unwrap_err();
            assert_eq!(err.exit_code(), 1);
            assert!(err.to_string().contains(key), "{text}: {err}");
        }
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let err = RawConfig::parse("scenario = uncontrolled\nno equals sign", "f.cfg").unwrap_err();
        assert!(err.to_string().contains("f.cfg:2"), "{err}");
        let dup = RawConfig::parse("seed = 1\nseed = 2", "f.cfg").unwrap_err();
        assert!(dup.to_string().contains("duplicate"), "{dup}");
    }

    #[test]
    fn rho_override_replaces_partner() {
        let mut raw = RawConfig::parse("scenario = leader_follower\nlf.rho_f = 0.9", "t").unwrap();
        raw.set("lf.rho_l", "0.4");
        let c = ScenarioConfig::from_raw(&raw).unwrap();
        let split = c.split().unwrap();
        assert_eq!(split.rho_l(), 0.4);
        assert!((split.rho_f() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = cfg("scenario = leader_follower\nlf.mode = hybrid\nlf.n_followers = 99\nmfmc.n_sample = 10\nlf.leader_positions = 4.5\nkernel.family = constant").unwrap();
        let again = cfg(&c.to_config_text()).unwrap();
        assert_eq!(c, again);
    }
}

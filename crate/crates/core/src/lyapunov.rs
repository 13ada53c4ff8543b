//! Lyapunov functionals (mean squared deviation from the target `c`), the
//! theoretical decay rates for sparse leader-follower control, exponential
//! reference envelopes and decay verdicts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::ParticleEnsemble;
use crate::micro::AgentState;

/// Default relative slack for [`certify`].
pub const DEFAULT_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovKind {
    Micro,
    MeanField,
    FollowerMicro,
    LeaderMicro,
    FollowerMf,
    LeaderHybrid,
    TotalLf,
}

/// `(1/N) Σ (x_i − c)²`
pub fn lyap_micro(state: &AgentState, c: f64) -> f64 {
    let inv_n = 1.0 / state.len() as f64;
    inv_n * sum_sq_dev(&state.positions, c)
}

/// `weight · Σ (y_j − c)²`; particle quadrature of `∫ |x − c|² dμ` for a
/// density of mass `N̂ · weight`.
pub fn lyap_ensemble(ensemble: &ParticleEnsemble, c: f64) -> f64 {
    ensemble.weight * sum_sq_dev(&ensemble.particles, c)
}

/// `ω^L Σ_{i∈J^L} (x_i − c)²`. Also the follower functional `𝓛^F` when
/// called with follower positions and `ω^F`.
pub fn lyap_leaders(leaders: &[f64], omega_l: f64, c: f64) -> f64 {
    omega_l * sum_sq_dev(leaders, c)
}

fn sum_sq_dev(xs: &[f64], c: f64) -> f64 {
    xs.iter().map(|x| (x - c) * (x - c)).sum()
}

/// `β = (4p̄ − 2|k|) √(ω^F ω^L) / 2` for the microscopic leader-follower system.
pub fn decay_rate_micro(p_bar: f64, k: f64, omega_f: f64, omega_l: f64) -> f64 {
    (4.0 * p_bar - 2.0 * k.abs()) * (omega_f * omega_l).sqrt() / 2.0
}

/// `β = (4p̄ − 2|k|) / 2` for mean-field followers with microscopic leaders.
pub fn decay_rate_hybrid(p_bar: f64, k: f64) -> f64 {
    (4.0 * p_bar - 2.0 * k.abs()) / 2.0
}

/// `l0 · exp(−|β| t)` at each time. Logs a warning when `β ≥ 0`, since there
/// is then no decay guarantee behind the curve.
pub fn envelope(l0: f64, beta: f64, times: &[f64]) -> Vec<f64> {
    if beta > 0.0 {
        log::warn!("decay rate beta = {beta} is positive; envelope carries no guarantee");
    }
    times.iter().map(|t| l0 * (-beta.abs() * t).exp()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovSeries {
    pub kind: LyapunovKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LyapunovSeries {
    pub fn new(kind: LyapunovKind) -> Self {
        Self {
            kind,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_parts(kind: LyapunovKind, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(kind);
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                what: "lyapunov values",
                expected: times.len(),
                actual: values.len(),
            });
        }
        for (t, v) in times.into_iter().zip(values) {
            s.push(t, v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::invalid(
                    "times",
                    format!("must be strictly increasing, got {t} after {last}"),
                ));
            }
        }
        if value.is_nan() || value < 0.0 {
            return Err(Error::invalid(
                "value",
                format!("Lyapunov values are nonnegative, got {value}"),
            ));
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at the recorded time closest to `t`.
    pub fn value_near(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .zip(&self.values)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub beta: f64,
    pub monotone_ok: bool,
    pub envelope_ok: bool,
    /// Largest relative excess over the envelope, `max(v_i / env_i − 1)`, floored at 0.
    pub max_violation: f64,
}

/// Checks, with relative `slack`,
/// * monotonicity: `v[i+1] ≤ v[i](1 + slack)`;
/// * envelope: `v[i] ≤ v[0] exp(−|β|(t_i − t_0))(1 + slack)`.
pub fn certify(series: &LyapunovSeries, beta: f64, slack: f64) -> Result<DecayCertificate> {
    if series.is_empty() {
        return Err(Error::invalid("series", "cannot certify an empty series"));
    }
    let v = &series.values;
    let monotone_ok = v.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack));

    let t0 = series.times[0];
    let l0 = v[0];
    let mut envelope_ok = true;
    let mut max_violation = 0.0f64;
    for (t, value) in series.times.iter().zip(v) {
        let env = l0 * (-beta.abs() * (t - t0)).exp();
        if *value > env * (1.0 + slack) {
            envelope_ok = false;
        }
        if env > 0.0 {
            max_violation = max_violation.max(value / env - 1.0);
        } else if *value > 0.0 {
            max_violation = f64::INFINITY;
        }
    }
    Ok(DecayCertificate {
        beta,
        monotone_ok,
        envelope_ok,
        max_violation,
    })
}

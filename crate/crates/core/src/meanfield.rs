//! Mean-field Monte Carlo (MFMC) particle approximation of the controlled
//! transport equation
//!
//! ```text
//! ∂_t μ = −∂_x [ μ (𝒫[μ](x) + k(m₁[μ] − c)) ],   𝒫[μ](x) = ∫ P(x, y)(y − x) μ(dy)
//! ```
//!
//! The density is a cloud of equally weighted particles. Each step draws one
//! subsample of `n_sample` particles, shared by every particle, and estimates
//! `𝒫[μ]` by a rescaled sum over it; the cost is `O(n_sample · n)`. The control
//! drift uses the exact full-ensemble moment.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::micro::{blow_up, ControlConfig, PAR_THRESHOLD};
use crate::observe::{check_stability, step_count, Observer, Timed};
use crate::seeding::draw_subsample;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<f64>,
    pub weight: f64,
    pub time: f64,
}

impl ParticleEnsemble {
    pub fn new(particles: Vec<f64>, weight: f64) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::invalid("particles", "at least one particle is required"));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::invalid("weight", format!("must be positive, got {weight}")));
        }
        if particles.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("particles", "positions must be finite"));
        }
        Ok(Self {
            particles,
            weight,
            time: 0.0,
        })
    }

    /// Probability ensemble: weight `1/N̂`, total mass one.
    pub fn probability(particles: Vec<f64>) -> Result<Self> {
        let w = 1.0 / particles.len().max(1) as f64;
        Self::new(particles, w)
    }

    /// Ensemble carrying total mass `mass`, weight `mass/N̂`.
    pub fn with_mass(particles: Vec<f64>, mass: f64) -> Result<Self> {
        let w = mass / particles.len().max(1) as f64;
        Self::new(particles, w)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.len() as f64 * self.weight
    }
}

impl Timed for ParticleEnsemble {
    fn time(&self) -> f64 {
        self.time
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MfmcConfig {
    pub n_sample: usize,
    pub seed: u64,
}

impl MfmcConfig {
    pub fn validate(&self, n_particles: usize) -> Result<()> {
        if self.n_sample == 0 || self.n_sample > n_particles {
            return Err(Error::invalid(
                "mfmc.n_sample",
                format!("must lie in 1..={n_particles}, got {}", self.n_sample),
            ));
        }
        Ok(())
    }
}

/// Factor turning a subsample sum into an estimate of the weighted integral,
/// `weight · n / m`. Equals `weight` exactly when the subsample is complete.
#[inline]
pub(crate) fn subsample_scale(weight: f64, n: usize, m: usize) -> f64 {
    weight * (n as f64 / m as f64)
}

/// Estimator of `𝒫[μ](at)`: `(mass / |S|) Σ_{j∈S} P(at, y_j)(y_j − at)`.
pub fn interaction_field(
    ensemble: &ParticleEnsemble,
    kernel: &KernelSpec,
    subsample: &[usize],
    at: f64,
) -> Result<f64> {
    if subsample.is_empty() {
        return Err(Error::invalid("subsample", "must not be empty"));
    }
    let n = ensemble.len();
    if let Some(&bad) = subsample.iter().find(|&&j| j >= n) {
        return Err(Error::invalid(
            "subsample",
            format!("index {bad} out of range for {n} particles"),
        ));
    }
    let ys = &ensemble.particles;
    let scale = subsample_scale(ensemble.weight, n, subsample.len());
    Ok(scale * kernel.pull_sum(at, subsample.iter().map(|&j| ys[j])))
}

/// `m₁ = weight · Σ_j y_j`; the plain mean for a probability ensemble.
pub fn first_moment(ensemble: &ParticleEnsemble) -> f64 {
    ensemble.weight * ensemble.particles.iter().sum::<f64>()
}

/// `weight · Σ_j (y_j − c)`, i.e. `m₁ − mass · c`, accumulated without cancellation.
pub fn centered_moment(ensemble: &ParticleEnsemble, c: f64) -> f64 {
    ensemble.weight * ensemble.particles.iter().map(|y| y - c).sum::<f64>()
}

/// Velocities of every particle for a fixed subsample.
pub(crate) fn mfmc_velocities(
    ensemble: &ParticleEnsemble,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
    subsample: &[usize],
) -> Vec<f64> {
    let ys = &ensemble.particles;
    let n = ys.len();
    let scale = subsample_scale(ensemble.weight, n, subsample.len());
    let u = control.map(|ctrl| ctrl.k * (first_moment(ensemble) - ctrl.c));

    let particle = |i: usize| {
        let y = ys[i];
        let field = scale * kernel.pull_sum(y, subsample.iter().map(|&j| ys[j]));
        match (control, u) {
            (Some(ctrl), Some(u)) => field + ctrl.actuation[i] * u,
            _ => field,
        }
    };
    if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(particle).collect()
    } else {
        (0..n).map(particle).collect()
    }
}

/// One MFMC step: one shared subsample, then `y_i ← y_i + dt·(field_i + b_i u)`.
///
/// `control.actuation` has one entry per particle; `ControlConfig::full` gives
/// the mean-field full-control drift `k(m₁ − c)` on every particle.
pub fn mfmc_step<R: Rng + ?Sized>(
    ensemble: &ParticleEnsemble,
    dt: f64,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
    cfg: &MfmcConfig,
    rng: &mut R,
) -> Result<ParticleEnsemble> {
    let mut scratch = Vec::new();
    step_with_scratch(ensemble, dt, kernel, control, cfg, rng, &mut scratch)
}

fn step_with_scratch<R: Rng + ?Sized>(
    ensemble: &ParticleEnsemble,
    dt: f64,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
    cfg: &MfmcConfig,
    rng: &mut R,
    scratch: &mut Vec<usize>,
) -> Result<ParticleEnsemble> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    cfg.validate(ensemble.len())?;
    if let Some(ctrl) = control {
        ctrl.check_len(ensemble.len())?;
    }
    let subsample = draw_subsample(ensemble.len(), cfg.n_sample, rng, scratch)?;
    let velocity = mfmc_velocities(ensemble, kernel, control, &subsample);
    let time = ensemble.time + dt;
    let particles: Vec<f64> = ensemble
        .particles
        .iter()
        .zip(&velocity)
        .map(|(y, v)| y + dt * v)
        .collect();
    if particles.iter().any(|y| !y.is_finite()) {
        return Err(Error::NonFinite { time });
    }
    Ok(ParticleEnsemble {
        particles,
        weight: ensemble.weight,
        time,
    })
}

/// MFMC counterpart of [`crate::micro::run`].
#[allow(clippy::too_many_arguments)]
pub fn run_mfmc<R, O>(
    initial: &ParticleEnsemble,
    horizon: f64,
    dt: f64,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
    cfg: &MfmcConfig,
    rng: &mut R,
    observer: &mut O,
) -> Result<ParticleEnsemble>
where
    R: Rng + ?Sized,
    O: Observer<ParticleEnsemble> + ?Sized,
{
    let steps = step_count(horizon, dt)?;
    check_stability(dt, kernel.p_bar(), control.map_or(0.0, |c| c.k))?;
    cfg.validate(initial.len())?;

    let t0 = initial.time;
    let mut scratch = Vec::with_capacity(initial.len());
    let mut state = initial.clone();
    observer.observe(0, false, &state);
    for step in 1..=steps {
        state = match step_with_scratch(&state, dt, kernel, control, cfg, rng, &mut scratch) {
            Ok(next) => next,
            Err(Error::NonFinite { time }) => return Err(blow_up(step, time, &state.particles)),
            Err(e) => return Err(e),
        };
        state.time = t0 + step as f64 * dt;
        observer.observe(step, step == steps, &state);
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub bins: Vec<f64>,
    /// Mass of particles outside `[lo, hi]`.
    pub overflow: f64,
}

impl Histogram {
    pub fn total(&self) -> f64 {
        self.bins.iter().sum::<f64>() + self.overflow
    }
}

/// Bins particle mass on `[lo, hi]` with `bins` equal cells; the right edge
/// belongs to the last cell.
pub fn histogram(ensemble: &ParticleEnsemble, lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(
            "histogram range",
            format!("need finite lo < hi, got [{lo}, {hi}]"),
        ));
    }
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0usize;
    for &y in &ensemble.particles {
        if y < lo || y > hi {
            outside += 1;
            continue;
        }
        let b = (((y - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let w = ensemble.weight;
    Ok(Histogram {
        lo,
        hi,
        bins: counts.into_iter().map(|c| c as f64 * w).collect(),
        overflow: outside as f64 * w,
    })
}

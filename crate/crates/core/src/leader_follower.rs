//! Weighted leader-follower dynamics.
//!
//! Followers feel only interactions; leaders additionally carry the feedback
//! `k(ω^F Σ_F (x_j − c) + ω^L Σ_L (x_j − c))`. Two representations share the
//! same arithmetic:
//!
//! * [`micro_lf_rhs`]: every follower is a microscopic agent with weight `ω^F`.
//! * [`hybrid_rhs`]: followers form a particle ensemble of mass `ρ^F` whose
//!   self-interaction is estimated on a shared subsample; leaders stay
//!   microscopic and are always summed exactly.
//!
//! Both populations advance from a single rhs evaluation per step.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::meanfield::{centered_moment, subsample_scale, MfmcConfig, ParticleEnsemble};
use crate::micro::{blow_up, PAR_THRESHOLD};
use crate::observe::{check_stability, step_count, Observer, Timed};
use crate::seeding::draw_subsample;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationSplit {
    n_followers: usize,
    n_leaders: usize,
    rho_f: f64,
    rho_l: f64,
}

impl PopulationSplit {
    pub fn new(n_followers: usize, n_leaders: usize, rho_f: f64, rho_l: f64) -> Result<Self> {
        if n_followers == 0 {
            return Err(Error::invalid("lf.n_followers", "at least one follower is required"));
        }
        if n_leaders == 0 {
            return Err(Error::invalid("lf.n_leaders", "at least one leader is required"));
        }
        for (name, rho) in [("lf.rho_f", rho_f), ("lf.rho_l", rho_l)] {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {rho}")));
            }
        }
        if (rho_f + rho_l - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "lf.rho_f + lf.rho_l",
                format!("mass fractions must sum to 1, got {rho_f} + {rho_l} = {}", rho_f + rho_l),
            ));
        }
        Ok(Self {
            n_followers,
            n_leaders,
            rho_f,
            rho_l,
        })
    }

    /// Split with `ρ^L = 1 − ρ^F`.
    pub fn from_rho_f(n_followers: usize, n_leaders: usize, rho_f: f64) -> Result<Self> {
        Self::new(n_followers, n_leaders, rho_f, 1.0 - rho_f)
    }

    pub fn n_followers(&self) -> usize {
        self.n_followers
    }

    pub fn n_leaders(&self) -> usize {
        self.n_leaders
    }

    pub fn rho_f(&self) -> f64 {
        self.rho_f
    }

    pub fn rho_l(&self) -> f64 {
        self.rho_l
    }

    /// `ω^F = ρ^F / N^F`
    pub fn omega_f(&self) -> f64 {
        self.rho_f / self.n_followers as f64
    }

    /// `ω^L = ρ^L / N^L`
    pub fn omega_l(&self) -> f64 {
        self.rho_l / self.n_leaders as f64
    }

    /// Follower indices `0..N^F` and leader indices `N^F..N^F+N^L` in the
    /// concatenated agent vector; disjoint by construction.
    pub fn follower_indices(&self) -> std::ops::Range<usize> {
        0..self.n_followers
    }

    pub fn leader_indices(&self) -> std::ops::Range<usize> {
        self.n_followers..self.n_followers + self.n_leaders
    }
}

/// Microscopic leader-follower state.
#[derive(Clone, Debug, PartialEq)]
pub struct LfState {
    pub followers: Vec<f64>,
    pub leaders: Vec<f64>,
    pub time: f64,
}

impl Timed for LfState {
    fn time(&self) -> f64 {
        self.time
    }
}

/// Mean-field followers, microscopic leaders.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    pub followers: ParticleEnsemble,
    pub leaders: Vec<f64>,
    pub time: f64,
}

impl HybridState {
    /// Builds a state whose follower ensemble carries mass `ρ^F`.
    pub fn new(follower_particles: Vec<f64>, leaders: Vec<f64>, split: &PopulationSplit) -> Result<Self> {
        if follower_particles.len() != split.n_followers() {
            return Err(Error::DimensionMismatch {
                what: "follower particles",
                expected: split.n_followers(),
                actual: follower_particles.len(),
            });
        }
        let followers = ParticleEnsemble::new(follower_particles, split.omega_f())?;
        let state = Self {
            followers,
            leaders,
            time: 0.0,
        };
        state.check(split)?;
        Ok(state)
    }

    fn check(&self, split: &PopulationSplit) -> Result<()> {
        check_counts(self.followers.len(), self.leaders.len(), split)?;
        let mass = self.followers.total_mass();
        if (mass - split.rho_f()).abs() > 1e-12 {
            return Err(Error::invalid(
                "followers",
                format!("ensemble mass {mass} differs from rho_f {}", split.rho_f()),
            ));
        }
        if self.leaders.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("leaders", "positions must be finite"));
        }
        Ok(())
    }
}

impl Timed for HybridState {
    fn time(&self) -> f64 {
        self.time
    }
}

fn check_counts(n_f: usize, n_l: usize, split: &PopulationSplit) -> Result<()> {
    if n_f != split.n_followers() {
        return Err(Error::DimensionMismatch {
            what: "followers",
            expected: split.n_followers(),
            actual: n_f,
        });
    }
    if n_l != split.n_leaders() {
        return Err(Error::DimensionMismatch {
            what: "leaders",
            expected: split.n_leaders(),
            actual: n_l,
        });
    }
    Ok(())
}

/// Leader feedback `k · (follower term + ω^L Σ_L (x_j − c))`.
fn leader_control(follower_term: f64, leaders: &[f64], omega_l: f64, k: f64, c: f64) -> f64 {
    let leader_term = omega_l * leaders.iter().map(|x| x - c).sum::<f64>();
    k * (follower_term + leader_term)
}

fn map_indices<F: Fn(usize) -> f64 + Sync + Send>(n: usize, f: F) -> Vec<f64> {
    if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Velocities of the fully microscopic leader-follower system.
pub fn micro_lf_rhs(
    followers: &[f64],
    leaders: &[f64],
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_counts(followers.len(), leaders.len(), split)?;
    let (wf, wl) = (split.omega_f(), split.omega_l());
    let field = |x: f64| {
        wf * kernel.pull_sum(x, followers.iter().copied()) + wl * kernel.pull_sum(x, leaders.iter().copied())
    };
    let follower_term = wf * followers.iter().map(|x| x - c).sum::<f64>();
    let u = leader_control(follower_term, leaders, wl, k, c);

    let vf = map_indices(followers.len(), |i| field(followers[i]));
    let vl = leaders.iter().map(|&x| field(x) + u).collect();
    Ok((vf, vl))
}

/// Velocities of the hybrid system for one pre-drawn follower subsample.
pub fn hybrid_rhs_with_subsample(
    state: &HybridState,
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
    subsample: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_counts(state.followers.len(), state.leaders.len(), split)?;
    if subsample.is_empty() {
        return Err(Error::invalid("subsample", "must not be empty"));
    }
    let ys = &state.followers.particles;
    let leaders = &state.leaders;
    let scale = subsample_scale(state.followers.weight, ys.len(), subsample.len());
    let wl = split.omega_l();
    let field = |x: f64| {
        scale * kernel.pull_sum(x, subsample.iter().map(|&j| ys[j]))
            + wl * kernel.pull_sum(x, leaders.iter().copied())
    };
    // m₁[ν] − ρ^F c, summed as Σ w (y − c).
    let follower_term = centered_moment(&state.followers, c);
    let u = leader_control(follower_term, leaders, wl, k, c);

    let vf = map_indices(ys.len(), |i| field(ys[i]));
    let vl = leaders.iter().map(|&x| field(x) + u).collect();
    Ok((vf, vl))
}

/// Draws one follower subsample and evaluates [`hybrid_rhs_with_subsample`].
pub fn hybrid_rhs<R: Rng + ?Sized>(
    state: &HybridState,
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
    cfg: &MfmcConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate(state.followers.len())?;
    let subsample = draw_subsample(state.followers.len(), cfg.n_sample, rng, &mut Vec::new())?;
    hybrid_rhs_with_subsample(state, split, kernel, k, c, &subsample)
}

fn advance(xs: &[f64], vs: &[f64], dt: f64) -> Vec<f64> {
    xs.iter().zip(vs).map(|(x, v)| x + dt * v).collect()
}

fn all_finite(a: &[f64], b: &[f64]) -> bool {
    a.iter().chain(b).all(|x| x.is_finite())
}

pub fn micro_lf_step(
    state: &LfState,
    dt: f64,
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
) -> Result<LfState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let (vf, vl) = micro_lf_rhs(&state.followers, &state.leaders, split, kernel, k, c)?;
    let next = LfState {
        followers: advance(&state.followers, &vf, dt),
        leaders: advance(&state.leaders, &vl, dt),
        time: state.time + dt,
    };
    if !all_finite(&next.followers, &next.leaders) {
        return Err(Error::NonFinite { time: next.time });
    }
    Ok(next)
}

#[allow(clippy::too_many_arguments)]
pub fn run_micro_lf<O>(
    initial: &LfState,
    horizon: f64,
    dt: f64,
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
    observer: &mut O,
) -> Result<LfState>
where
    O: Observer<LfState> + ?Sized,
{
    let steps = step_count(horizon, dt)?;
    check_stability(dt, kernel.p_bar(), k)?;
    check_counts(initial.followers.len(), initial.leaders.len(), split)?;

    let t0 = initial.time;
    let mut state = initial.clone();
    observer.observe(0, false, &state);
    for step in 1..=steps {
        state = match micro_lf_step(&state, dt, split, kernel, k, c) {
            Ok(next) => next,
            Err(Error::NonFinite { time }) => {
                let all: Vec<f64> = state.followers.iter().chain(&state.leaders).copied().collect();
                return Err(blow_up(step, time, &all));
            }
            Err(e) => return Err(e),
        };
        state.time = t0 + step as f64 * dt;
        observer.observe(step, step == steps, &state);
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
pub fn run_hybrid<R, O>(
    initial: &HybridState,
    horizon: f64,
    dt: f64,
    split: &PopulationSplit,
    kernel: &KernelSpec,
    k: f64,
    c: f64,
    cfg: &MfmcConfig,
    rng: &mut R,
    observer: &mut O,
) -> Result<HybridState>
where
    R: Rng + ?Sized,
    O: Observer<HybridState> + ?Sized,
{
    let steps = step_count(horizon, dt)?;
    check_stability(dt, kernel.p_bar(), k)?;
    initial.check(split)?;
    cfg.validate(initial.followers.len())?;

    let t0 = initial.time;
    let n = initial.followers.len();
    let mut scratch = Vec::with_capacity(n);
    let mut state = initial.clone();
    observer.observe(0, false, &state);
    for step in 1..=steps {
        let subsample = draw_subsample(n, cfg.n_sample, rng, &mut scratch)?;
        let (vf, vl) = hybrid_rhs_with_subsample(&state, split, kernel, k, c, &subsample)?;
        let followers = advance(&state.followers.particles, &vf, dt);
        let leaders = advance(&state.leaders, &vl, dt);
        let time = t0 + step as f64 * dt;
        if !all_finite(&followers, &leaders) {
            let all: Vec<f64> = state
                .followers
                .particles
                .iter()
                .chain(&state.leaders)
                .copied()
                .collect();
            return Err(blow_up(step, time, &all));
        }
        state = HybridState {
            followers: ParticleEnsemble {
                particles: followers,
                weight: state.followers.weight,
                time,
            },
            leaders,
            time,
        };
        observer.observe(step, step == steps, &state);
    }
    Ok(state)
}

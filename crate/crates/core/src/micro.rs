//! Microscopic N-agent consensus dynamics with optional mean-state feedback,
//! integrated with fixed-step forward Euler.
//!
//! ```text
//! ẋ_i = (1/N) Σ_j P(x_i, x_j)(x_j − x_i) + b_i u,   u = k((1/N) Σ_j x_j − c)
//! ```
//!
//! Interaction sums run over `j` in ascending order with a single sequential
//! accumulator, so results are bit-reproducible. The per-agent loop is spread
//! across rayon workers; each agent's sum is still evaluated sequentially.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::observe::{check_stability, step_count, Observer, Timed};

/// Below this many agents the rayon fan-out costs more than it saves.
pub(crate) const PAR_THRESHOLD: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub positions: Vec<f64>,
    pub time: f64,
}

impl AgentState {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        Self::at_time(positions, 0.0)
    }

    pub fn at_time(positions: Vec<f64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "at least one agent is required"));
        }
        if let Some(i) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::invalid(
                "positions",
                format!("agent {i} has non-finite position {}", positions[i]),
            ));
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::invalid("time", format!("must be nonnegative, got {time}")));
        }
        Ok(Self { positions, time })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mean(&self) -> f64 {
        let inv_n = 1.0 / self.len() as f64;
        inv_n * self.positions.iter().sum::<f64>()
    }
}

impl Timed for AgentState {
    fn time(&self) -> f64 {
        self.time
    }
}

/// Mean-state feedback `u = k((1/N)Σx − c)` acting through the channel `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlConfig {
    pub k: f64,
    pub c: f64,
    pub actuation: Vec<f64>,
}

impl ControlConfig {
    pub fn new(k: f64, c: f64, actuation: Vec<f64>) -> Result<Self> {
        if !k.is_finite() || !c.is_finite() {
            return Err(Error::invalid("control", "k and c must be finite"));
        }
        if actuation.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("control.actuation", "entries must be finite"));
        }
        Ok(Self { k, c, actuation })
    }

    /// `b = 𝟙`: every agent receives the control.
    pub fn full(k: f64, c: f64, n: usize) -> Result<Self> {
        Self::new(k, c, vec![1.0; n])
    }

    /// `b = e_j`: only agent `agent` receives the control.
    pub fn single(k: f64, c: f64, n: usize, agent: usize) -> Result<Self> {
        if agent >= n {
            return Err(Error::invalid(
                "control.agent",
                format!("index {agent} out of range for {n} agents"),
            ));
        }
        let mut b = vec![0.0; n];
        b[agent] = 1.0;
        Self::new(k, c, b)
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.actuation.len() != n {
            return Err(Error::DimensionMismatch {
                what: "actuation vector",
                expected: n,
                actual: self.actuation.len(),
            });
        }
        Ok(())
    }
}

/// `u = k((1/N)Σ_j x_j − c)`.
pub fn feedback(state: &AgentState, control: &ControlConfig) -> f64 {
    control.k * (state.mean() - control.c)
}

pub fn rhs(
    state: &AgentState,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
) -> Result<Vec<f64>> {
    let n = state.len();
    if let Some(ctrl) = control {
        ctrl.check_len(n)?;
    }
    let inv_n = 1.0 / n as f64;
    let xs = &state.positions;
    let u = control.map(|ctrl| feedback(state, ctrl));

    let agent = |i: usize| {
        let x = xs[i];
        let field = inv_n * kernel.pull_sum(x, xs.iter().copied());
        match (control, u) {
            (Some(ctrl), Some(u)) => field + ctrl.actuation[i] * u,
            _ => field,
        }
    };

    Ok(if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(agent).collect()
    } else {
        (0..n).map(agent).collect()
    })
}

/// One forward Euler step. Fails on `dt ≤ 0` or a non-finite result.
pub fn euler_step(
    state: &AgentState,
    dt: f64,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
) -> Result<AgentState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    let velocity = rhs(state, kernel, control)?;
    let time = state.time + dt;
    let positions: Vec<f64> = state
        .positions
        .iter()
        .zip(&velocity)
        .map(|(x, v)| x + dt * v)
        .collect();
    if positions.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { time });
    }
    Ok(AgentState { positions, time })
}

pub(crate) fn blow_up(step: usize, time: f64, values: &[f64]) -> Error {
    let bad = values.iter().filter(|x| !x.is_finite()).count();
    let max_abs = values
        .iter()
        .filter(|x| x.is_finite())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    Error::BlowUp {
        step,
        time,
        summary: format!(
            "{bad} of {} entries non-finite before the step, max |x| among finite = {max_abs:e}",
            values.len()
        ),
    }
}

/// Integrates `round(horizon / dt)` Euler steps, notifying `observer` at step 0
/// and after every step. Returns the final state.
pub fn run<O>(
    initial: &AgentState,
    horizon: f64,
    dt: f64,
    kernel: &KernelSpec,
    control: Option<&ControlConfig>,
    observer: &mut O,
) -> Result<AgentState>
where
    O: Observer<AgentState> + ?Sized,
{
    let steps = step_count(horizon, dt)?;
    check_stability(dt, kernel.p_bar(), control.map_or(0.0, |c| c.k))?;
    if let Some(ctrl) = control {
        ctrl.check_len(initial.len())?;
    }

    let t0 = initial.time;
    let mut state = initial.clone();
    observer.observe(0, false, &state);
    for step in 1..=steps {
        state = match euler_step(&state, dt, kernel, control) {
            Ok(next) => next,
            Err(Error::NonFinite { time }) => return Err(blow_up(step, time, &state.positions)),
            Err(e) => return Err(e),
        };
        // Recompute from the step index so the clock does not drift over 10⁴ steps.
        state.time = t0 + step as f64 * dt;
        observer.observe(step, step == steps, &state);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observe::{NoObserver, Recorder};
    use proptest::prelude::*;

    fn lin() -> KernelSpec {
        KernelSpec::constant(0.04).unwrap()
    }

    #[test]
    fn rhs_uncontrolled_two_agents() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let v = rhs(&s, &lin(), None).unwrap();
        assert!((v[0] - 0.04).abs() < 1e-15);
        assert!((v[1] + 0.04).abs() < 1e-15);
    }

    #[test]
    fn rhs_controlled_two_agents() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let ctrl = ControlConfig::full(-0.1, 1.0, 2).unwrap();
        let v = rhs(&s, &lin(), Some(&ctrl)).unwrap();
        assert!((v[0] + 0.16).abs() < 1e-15);
        assert!((v[1] + 0.24).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_at_target_is_exact() {
        let s = AgentState::new(vec![1.0; 7]).unwrap();
        let ctrl = ControlConfig::full(-0.1, 1.0, 7).unwrap();
        for kernel in [lin(), KernelSpec::rational_decay(0.04).unwrap()] {
            let v = rhs(&s, &kernel, Some(&ctrl)).unwrap();
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn feedback_values() {
        let ctrl = ControlConfig::full(-0.1, 1.0, 2).unwrap();
        let f = |xs: Vec<f64>| feedback(&AgentState::new(xs).unwrap(), &ctrl);
        assert!((f(vec![2.0, 4.0]) + 0.2).abs() < 1e-15);
        assert_eq!(f(vec![1.0, 1.0]), 0.0);
        assert!((f(vec![1.0, 3.0]) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn euler_step_by_hand() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let next = euler_step(&s, 0.01, &lin(), None).unwrap();
        assert!((next.positions[0] - 2.0004).abs() < 1e-15);
        assert!((next.positions[1] - 3.9996).abs() < 1e-15);
        assert_eq!(next.time, 0.01);
    }

    #[test]
    fn euler_step_at_equilibrium_only_advances_time() {
        let s = AgentState::new(vec![3.0; 4]).unwrap();
        let next = euler_step(&s, 0.5, &lin(), None).unwrap();
        assert_eq!(next.positions, s.positions);
        assert_eq!(next.time, 0.5);
    }

    #[test]
    fn euler_step_rejects_bad_dt() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        assert!(euler_step(&s, 0.0, &lin(), None).is_err());
        assert!(euler_step(&s, -0.1, &lin(), None).is_err());
    }

    #[test]
    fn euler_step_detects_overflow() {
        let s = AgentState::new(vec![1e308, -1e308]).unwrap();
        let ctrl = ControlConfig::full(1e10, 0.0, 2).unwrap();
        assert!(matches!(
            euler_step(&s, 1.0, &lin(), Some(&ctrl)),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn state_validation() {
        assert!(AgentState::new(vec![]).is_err());
        assert!(AgentState::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn actuation_length_is_checked() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let ctrl = ControlConfig::full(-0.1, 1.0, 3).unwrap();
        assert!(matches!(
            rhs(&s, &lin(), Some(&ctrl)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn run_step_counts() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let mut count = 0usize;
        let mut obs = |step: usize, _: bool, _: &AgentState| count = count.max(step);
        run(&s, 0.01, 0.01, &lin(), None, &mut obs).unwrap();
        assert_eq!(count, 1);

        let mut steps = 0usize;
        let mut obs = |step: usize, _: bool, _: &AgentState| steps = step;
        let end = run(&s, 400.0, 0.01, &lin(), None, &mut obs).unwrap();
        assert_eq!(steps, 40_000);
        assert!((end.time - 400.0).abs() < 1e-9);
    }

    #[test]
    fn run_rejects_unstable_configuration() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let ctrl = ControlConfig::full(-60.0, 1.0, 2).unwrap();
        assert!(matches!(
            run(&s, 1.0, 0.01, &lin(), Some(&ctrl), &mut NoObserver),
            Err(Error::StabilityGuard { .. })
        ));
    }

    #[test]
    fn run_blow_up_carries_step_index() {
        let s = AgentState::new(vec![1e200, 2e200]).unwrap();
        let ctrl = ControlConfig::full(40.0, 0.0, 2).unwrap();
        let err = run(&s, 10.0, 0.01, &lin(), Some(&ctrl), &mut NoObserver).unwrap_err();
        match err {
            Error::BlowUp { step, .. } => assert!(step > 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn linear_closed_form_at_t1() {
        // x_i(t) − mean = e^{−p̄ t}(x_i(0) − mean) for the uncontrolled linear system.
        let x0 = vec![2.0, 2.7, 3.1, 4.4, 5.0];
        let s = AgentState::new(x0.clone()).unwrap();
        let mean = s.mean();
        let end = run(&s, 1.0, 0.01, &lin(), None, &mut NoObserver).unwrap();
        let decay = (-0.04f64).exp();
        for (x_end, x_start) in end.positions.iter().zip(&x0) {
            let exact = mean + decay * (x_start - mean);
            assert!((x_end - exact).abs() < 5e-4);
        }
    }

    #[test]
    fn uncontrolled_constant_kernel_conserves_mean() {
        let s = AgentState::new(vec![2.0, 2.5, 4.75, 3.3, 4.9, 2.2]).unwrap();
        let end = run(&s, 100.0, 0.01, &lin(), None, &mut NoObserver).unwrap();
        assert!((end.mean() - s.mean()).abs() <= 1e-12);
    }

    #[test]
    fn recorder_stride_over_run() {
        let s = AgentState::new(vec![2.0, 4.0]).unwrap();
        let mut rec = Recorder::new(10, |st: &AgentState| st.positions.clone());
        run(&s, 1.0, 0.01, &lin(), None, &mut rec).unwrap();
        assert_eq!(rec.len(), 11);
        assert!((rec.times[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_and_serial_rhs_agree() {
        let xs: Vec<f64> = (0..600).map(|i| 2.0 + 3.0 * ((i * 37 % 600) as f64) / 600.0).collect();
        let s = AgentState::new(xs).unwrap();
        let kernel = KernelSpec::rational_decay(0.04).unwrap();
        let par = rhs(&s, &kernel, None).unwrap();
        let inv_n = 1.0 / s.len() as f64;
        for (i, v) in par.iter().enumerate() {
            let serial = inv_n * kernel.pull_sum(s.positions[i], s.positions.iter().copied());
            assert_eq!(*v, serial);
        }
    }

    proptest! {
        #[test]
        fn uncontrolled_rhs_has_zero_mean(xs in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let s = AgentState::new(xs).unwrap();
            let v = rhs(&s, &KernelSpec::rational_decay(0.04).unwrap(), None).unwrap();
            let m: f64 = v.iter().sum::<f64>() / v.len() as f64;
            prop_assert!(m.abs() < 1e-15);
        }

        #[test]
        fn translation_covariance(xs in prop::collection::vec(2.0f64..5.0, 2..12), shift in -3.0f64..3.0) {
            let a = AgentState::new(xs.clone()).unwrap();
            let b = AgentState::new(xs.iter().map(|x| x + shift).collect()).unwrap();
            let ea = run(&a, 5.0, 0.01, &lin(), None, &mut NoObserver).unwrap();
            let eb = run(&b, 5.0, 0.01, &lin(), None, &mut NoObserver).unwrap();
            for (pa, pb) in ea.positions.iter().zip(&eb.positions) {
                prop_assert!((pa + shift - pb).abs() < 1e-12);
            }
        }
    }
}

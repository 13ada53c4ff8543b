//! Observers decouple diagnostics from time integration.
//!
//! Every `run_*` driver calls [`Observer::observe`] once for the initial state
//! (step 0) and once after each Euler step. A [`Recorder`] keeps a strided
//! subset of mapped snapshots, so long runs never have to store the full
//! `steps × N` trajectory.

/// Default recording stride, in Euler steps.
pub const DEFAULT_STRIDE: usize = 10;

/// States that carry their own simulation time.
pub trait Timed {
    fn time(&self) -> f64;
}

pub trait Observer<S: ?Sized> {
    /// `step` is 0 for the initial state; `is_final` marks the last step of the run.
    fn observe(&mut self, step: usize, is_final: bool, state: &S);
}

impl<S: ?Sized, F> Observer<S> for F
where
    F: FnMut(usize, bool, &S),
{
    fn observe(&mut self, step: usize, is_final: bool, state: &S) {
        self(step, is_final, state)
    }
}

/// Observer that ignores everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoObserver;

impl<S: ?Sized> Observer<S> for NoObserver {
    fn observe(&mut self, _: usize, _: bool, _: &S) {}
}

/// Records `map(state)` every `stride` steps, plus the final step.
pub struct Recorder<T, F> {
    stride: usize,
    map: F,
    pub times: Vec<f64>,
    pub records: Vec<T>,
}

impl<T, F> Recorder<T, F> {
    pub fn new(stride: usize, map: F) -> Self {
        Self {
            stride: stride.max(1),
            map,
            times: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<T>) {
        (self.times, self.records)
    }
}

impl<S, T, F> Observer<S> for Recorder<T, F>
where
    S: Timed + ?Sized,
    F: FnMut(&S) -> T,
{
    fn observe(&mut self, step: usize, is_final: bool, state: &S) {
        if step.is_multiple_of(self.stride) || is_final {
            self.times.push(state.time());
            self.records.push((self.map)(state));
        }
    }
}

/// Fans one observation out to two observers.
pub struct Both<A, B>(pub A, pub B);

impl<S: ?Sized, A: Observer<S>, B: Observer<S>> Observer<S> for Both<A, B> {
    fn observe(&mut self, step: usize, is_final: bool, state: &S) {
        self.0.observe(step, is_final, state);
        self.1.observe(step, is_final, state);
    }
}

/// Number of Euler steps for a horizon, `round(horizon / dt)`.
pub(crate) fn step_count(horizon: f64, dt: f64) -> crate::Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(crate::Error::invalid("dt", format!("must be positive, got {dt}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(crate::Error::invalid(
            "horizon",
            format!("must be positive, got {horizon}"),
        ));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 {
        return Err(crate::Error::invalid(
            "horizon",
            format!("horizon {horizon} is shorter than half a time step {dt}"),
        ));
    }
    Ok(steps as usize)
}

/// Guard against silent forward-Euler instability.
pub(crate) fn check_stability(dt: f64, p_bar: f64, k: f64) -> crate::Result<()> {
    let product = dt * (p_bar + k.abs());
    if product > 0.5 {
        return Err(crate::Error::StabilityGuard { product });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct T(f64);
    impl Timed for T {
        fn time(&self) -> f64 {
            self.0
        }
    }

    #[test]
    fn recorder_keeps_stride_and_final() {
        let mut rec = Recorder::new(3, |s: &T| s.0 * 2.0);
        for step in 0..=7 {
            rec.observe(step, step == 7, &T(step as f64));
        }
        assert_eq!(rec.times, vec![0.0, 3.0, 6.0, 7.0]);
        assert_eq!(rec.records, vec![0.0, 6.0, 12.0, 14.0]);
    }

    #[test]
    fn step_count_rounds() {
        assert_eq!(step_count(400.0, 0.01).unwrap(), 40_000);
        assert_eq!(step_count(0.01, 0.01).unwrap(), 1);
        assert!(step_count(1.0, 0.0).is_err());
        assert!(step_count(0.001, 0.01).is_err());
    }

    #[test]
    fn stability_guard() {
        assert!(check_stability(0.01, 0.04, -0.1).is_ok());
        assert!(matches!(
            check_stability(1.0, 0.04, -1.0),
            Err(crate::Error::StabilityGuard { .. })
        ));
    }
}

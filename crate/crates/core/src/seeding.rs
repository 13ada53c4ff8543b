//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 generators seeded with `seed_from_u64`.
//! Each purpose gets its own ChaCha stream id, so e.g. changing the subsample
//! size never changes the initial positions drawn for the same seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Initial positions of agents, particles and leaders.
    Init = 0,
    /// Per-step interaction subsamples.
    Subsample = 1,
    /// Choice of the controlled agent in sparse scenarios.
    AgentSelect = 2,
}

pub fn stream_rng(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// `n` iid draws from the uniform law on `[lo, hi)`.
pub fn sample_initial<R: Rng + ?Sized>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::invalid(
            "init",
            format!("need finite lo < hi, got [{lo}, {hi})"),
        ));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Uniform subsample of `m` distinct indices out of `0..n`, sorted ascending.
///
/// Uses a partial Fisher–Yates shuffle of `scratch` (reset to the identity
/// first), which consumes exactly `m` bounded draws `random_range(i..n)`.
/// When `m == n` the full index set is returned and no draws are consumed.
pub fn draw_subsample<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
    scratch: &mut Vec<usize>,
) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::invalid(
            "n_sample",
            format!("subsample size {m} must lie in 1..={n}"),
        ));
    }
    if m == n {
        return Ok((0..n).collect());
    }
    scratch.clear();
    scratch.extend(0..n);
    for i in 0..m {
        let j = rng.random_range(i..n);
        scratch.swap(i, j);
    }
    let mut picked = scratch[..m].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = sample_initial(5, 2.0, 5.0, &mut stream_rng(3, Stream::Init)).unwrap();
        let b = sample_initial(5, 2.0, 5.0, &mut stream_rng(3, Stream::Init)).unwrap();
        let c = sample_initial(5, 2.0, 5.0, &mut stream_rng(3, Stream::Subsample)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn initial_samples_in_range() {
        let xs = sample_initial(50, 2.0, 5.0, &mut stream_rng(0, Stream::Init)).unwrap();
        assert!(xs.iter().all(|&x| (2.0..5.0).contains(&x)));
        let mean = xs.iter().sum::<f64>() / 50.0;
        assert!((mean - 3.5).abs() < 0.37);
        assert_eq!(sample_initial(1, 2.0, 5.0, &mut stream_rng(0, Stream::Init)).unwrap().len(), 1);
    }

    #[test]
    fn invalid_interval() {
        assert!(sample_initial(3, 5.0, 2.0, &mut stream_rng(0, Stream::Init)).is_err());
        assert!(sample_initial(3, 1.0, 1.0, &mut stream_rng(0, Stream::Init)).is_err());
    }

    #[test]
    fn subsample_is_sorted_distinct() {
        let mut rng = stream_rng(1, Stream::Subsample);
        let mut scratch = Vec::new();
        for _ in 0..100 {
            let s = draw_subsample(100, 10, &mut rng, &mut scratch).unwrap();
            assert_eq!(s.len(), 10);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(*s.last().unwrap() < 100);
        }
    }

    #[test]
    fn full_subsample_is_identity_without_draws() {
        let mut rng = stream_rng(1, Stream::Subsample);
        let before = rng.clone();
        let s = draw_subsample(7, 7, &mut rng, &mut Vec::new()).unwrap();
        assert_eq!(s, (0..7).collect::<Vec<_>>());
        assert_eq!(rng, before);
    }

    #[test]
    fn subsample_bounds() {
        let mut rng = stream_rng(1, Stream::Subsample);
        assert!(draw_subsample(5, 0, &mut rng, &mut Vec::new()).is_err());
        assert!(draw_subsample(5, 6, &mut rng, &mut Vec::new()).is_err());
    }

    #[test]
    fn subsample_is_roughly_uniform() {
        let mut rng = stream_rng(11, Stream::Subsample);
        let mut scratch = Vec::new();
        let mut hits = [0usize; 20];
        for _ in 0..20_000 {
            for i in draw_subsample(20, 5, &mut rng, &mut scratch).unwrap() {
                hits[i] += 1;
            }
        }
        // Expected 5000 per index; binomial sd ≈ 61.
        assert!(hits.iter().all(|&h| (4700..5300).contains(&h)), "{hits:?}");
    }
}

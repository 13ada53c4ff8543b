//! Symmetric interaction kernels `P(x, y)`.
//!
//! Only two families exist: a constant kernel, which makes the dynamics
//! linear, and a rational decay `p̄ / (1 + |x − y|²)²`. Both are symmetric,
//! strictly positive and bounded by `p̄ = P(c, c)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Constant,
    RationalDecay,
}

impl KernelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelFamily::Constant => "constant",
            KernelFamily::RationalDecay => "rational_decay",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(KernelFamily::Constant),
            "rational_decay" => Ok(KernelFamily::RationalDecay),
            other => Err(Error::invalid(
                "kernel.family",
                format!("expected `constant` or `rational_decay`, got `{other}`"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    p_bar: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, p_bar: f64) -> Result<Self> {
        if !(p_bar.is_finite() && p_bar > 0.0) {
            return Err(Error::invalid(
                "kernel.p_bar",
                format!("must be a positive finite number, got {p_bar}"),
            ));
        }
        Ok(Self { family, p_bar })
    }

    pub fn constant(p_bar: f64) -> Result<Self> {
        Self::new(KernelFamily::Constant, p_bar)
    }

    pub fn rational_decay(p_bar: f64) -> Result<Self> {
        Self::new(KernelFamily::RationalDecay, p_bar)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Maximum interaction strength, `P(c, c)`.
    pub fn p_bar(&self) -> f64 {
        self.p_bar
    }

    /// Evaluates `P(x, y)`. Bit-exactly symmetric: `(x − y)²` and `(y − x)²`
    /// round identically.
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Constant => self.p_bar,
            KernelFamily::RationalDecay => {
                let d = x - y;
                let s = 1.0 + d * d;
                self.p_bar / (s * s)
            }
        }
    }

    /// `Σ_j P(x, y_j)(y_j − x)`, accumulated sequentially in iteration order.
    #[inline]
    pub fn pull_sum<I>(&self, x: f64, ys: I) -> f64
    where
        I: IntoIterator<Item = f64>,
    {
        let mut acc = 0.0;
        for y in ys {
            acc += self.eval(x, y) * (y - x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_ignores_arguments() {
        let k = KernelSpec::constant(0.04).unwrap();
        assert_eq!(k.eval(2.0, 5.0), 0.04);
    }

    #[test]
    fn rational_decay_values() {
        let k = KernelSpec::rational_decay(0.04).unwrap();
        assert_eq!(k.eval(1.0, 1.0), 0.04);
        assert!((k.eval(1.0, 2.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rejects_nonpositive_p_bar() {
        assert!(KernelSpec::constant(0.0).is_err());
        assert!(KernelSpec::rational_decay(-1.0).is_err());
        assert!(KernelSpec::rational_decay(f64::NAN).is_err());
    }

    #[test]
    fn family_parsing() {
        assert_eq!("constant".parse::<KernelFamily>().unwrap(), KernelFamily::Constant);
        assert_eq!(
            "rational_decay".parse::<KernelFamily>().unwrap(),
            KernelFamily::RationalDecay
        );
        assert!("gaussian".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn pull_sum_matches_hand_value() {
        let k = KernelSpec::constant(0.04).unwrap();
        assert!((k.pull_sum(2.0, [2.0, 4.0]) - 0.08).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            for k in [KernelSpec::constant(0.04).unwrap(), KernelSpec::rational_decay(0.04).unwrap()] {
                let pxy = k.eval(x, y);
                prop_assert_eq!(pxy, k.eval(y, x));
                prop_assert!(pxy > 0.0 && pxy <= 0.04);
                prop_assert_eq!(k.eval(x, x), 0.04);
            }
        }

        #[test]
        fn rational_decay_strictly_below_p_bar_off_diagonal(x in -10.0f64..10.0, d in 1e-3f64..10.0) {
            let k = KernelSpec::rational_decay(0.04).unwrap();
            prop_assert!(k.eval(x, x + d) < 0.04);
        }

        #[test]
        fn rational_decay_monotone_in_distance(d1 in 0.0f64..10.0, gap in 1e-3f64..10.0) {
            let k = KernelSpec::rational_decay(0.04).unwrap();
            prop_assert!(k.eval(0.0, d1 + gap) < k.eval(0.0, d1));
        }
    }

    #[test]
    fn symmetry_on_ten_thousand_pairs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let k = KernelSpec::rational_decay(0.04).unwrap();
        for _ in 0..10_000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let y: f64 = rng.random_range(-10.0..10.0);
            assert_eq!(k.eval(x, y) - k.eval(y, x), 0.0);
            assert!(k.eval(x, y) <= k.p_bar());
        }
    }
}

//! Reference laws for the distributional-equation checks.
//!
//! Each law carries closed-form Laplace transforms of itself, of its
//! size-biased transform `Ẏ` (density `y·f(y)/E[Y]`), and of its
//! square-biased transform `Ÿ` (density `y²·f(y)/E[Y²]`), together with
//! exact samplers for all three. The exponential law is the fixed point of
//! all three characterization equations; uniform and constant laws are the
//! discriminating counterexamples.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::analysis::stats::gamma_p;
use crate::error::{Error, Result};

/// Laplace-transform pair of a non-negative variable and its size-biased
/// transform, the inputs of the transform-distance bound.
pub trait LaplacePair {
    fn mean(&self) -> f64;
    /// `E[e^(-λX)]`.
    fn laplace(&self, lambda: f64) -> f64;
    /// `E[e^(-λẊ)]` where `Ẋ` is the `X`-transform of `X`.
    fn biased_laplace(&self, lambda: f64) -> f64;
    /// The ratio `F(λ)` defined by `E[e^(-λẊ)] = E[e^(-λX)]·F(λ)`.
    fn ratio(&self, lambda: f64) -> f64 {
        self.biased_laplace(lambda) / self.laplace(lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestLaw {
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl TestLaw {
    /// Strictly positive support (up to null sets) with positive mean; the
    /// precondition of every characterization check.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TestLaw::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            TestLaw::Uniform { lo, hi } => lo >= 0.0 && hi > lo && hi.is_finite(),
            TestLaw::Constant { value } => value > 0.0 && value.is_finite(),
            TestLaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "law {self:?} is not strictly positive with finite moments"
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            TestLaw::Exponential { mean } => mean,
            TestLaw::Uniform { lo, hi } => (lo + hi) / 2.0,
            TestLaw::Constant { value } => value,
            TestLaw::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            TestLaw::Exponential { mean } => 2.0 * mean * mean,
            TestLaw::Uniform { lo, hi } => (hi * hi * hi - lo * lo * lo) / (3.0 * (hi - lo)),
            TestLaw::Constant { value } => value * value,
            TestLaw::Gamma { shape, scale } => shape * (shape + 1.0) * scale * scale,
        }
    }

    /// `E[e^(-λY)]`.
    pub fn laplace(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match *self {
            TestLaw::Exponential { mean } => 1.0 / (1.0 + mean * lambda),
            TestLaw::Uniform { lo, hi } => {
                // (e^(-λ·lo) - e^(-λ·hi)) / (λ(hi - lo)), in expm1 form.
                let width = hi - lo;
                (-lambda * lo).exp() * em1(lambda * width)
            }
            TestLaw::Constant { value } => (-lambda * value).exp(),
            TestLaw::Gamma { shape, scale } => (1.0 + scale * lambda).powf(-shape),
        }
    }

    /// `E[e^(-λẎ)]` for the size-biased transform `Ẏ`.
    pub fn biased_laplace(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match *self {
            TestLaw::Exponential { mean } => (1.0 + mean * lambda).powi(-2),
            TestLaw::Uniform { lo, hi } => {
                // ∫ y e^(-λy) dy / ((hi-lo)·mean) over [lo, hi], written as
                // e^(-λ·lo)·[(λ·lo + 1)·(1 - e^(-u)) - u·e^(-u)] / λ² with
                // u = λ(hi - lo); the bracket keeps one cancellation order
                // out of the subtraction.
                let m = self.mean();
                let w = hi - lo;
                let u = lambda * w;
                if u < 1e-3 {
                    // Moment series: 1 - λ·m2/m + λ²·m3/(2m) - λ³·m4/(6m).
                    let raw = |k: i32| (hi.powi(k + 1) - lo.powi(k + 1)) / ((k + 1) as f64 * w);
                    1.0 - lambda * raw(2) / m + lambda * lambda * raw(3) / (2.0 * m)
                        - lambda.powi(3) * raw(4) / (6.0 * m)
                } else {
                    let bracket = (lambda * lo + 1.0) * -(-u).exp_m1() - u * (-u).exp();
                    (-lambda * lo).exp() * bracket / (lambda * lambda * w * m)
                }
            }
            TestLaw::Constant { value } => (-lambda * value).exp(),
            TestLaw::Gamma { shape, scale } => (1.0 + scale * lambda).powf(-(shape + 1.0)),
        }
    }

    /// `E[e^(-λŸ)]` for the square-biased transform `Ÿ`.
    pub fn square_biased_laplace(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match *self {
            TestLaw::Exponential { mean } => (1.0 + mean * lambda).powi(-3),
            TestLaw::Uniform { lo, hi } => {
                // Same rearrangement one derivative up: bracket =
                // (λ²lo² + 2λlo + 2)(1 - e^(-u)) - e^(-u)·u·((lo+hi)λ + 2).
                let m2 = self.second_moment();
                let w = hi - lo;
                let u = lambda * w;
                if u < 1e-2 {
                    let raw = |k: i32| (hi.powi(k + 1) - lo.powi(k + 1)) / ((k + 1) as f64 * w);
                    1.0 - lambda * raw(3) / m2 + lambda * lambda * raw(4) / (2.0 * m2)
                        - lambda.powi(3) * raw(5) / (6.0 * m2)
                        + lambda.powi(4) * raw(6) / (24.0 * m2)
                } else {
                    let a = lambda * lo;
                    let bracket = (a * a + 2.0 * a + 2.0) * -(-u).exp_m1()
                        - (-u).exp() * u * ((lo + hi) * lambda + 2.0);
                    (-lambda * lo).exp() * bracket / (lambda.powi(3) * w * m2)
                }
            }
            TestLaw::Constant { value } => (-lambda * value).exp(),
            TestLaw::Gamma { shape, scale } => (1.0 + scale * lambda).powf(-(shape + 2.0)),
        }
    }

    /// Cumulative distribution function, for one-sample KS tests.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return match *self {
                TestLaw::Uniform { lo, .. } if x >= lo => 0.0,
                _ => 0.0,
            };
        }
        match *self {
            TestLaw::Exponential { mean } => -(-x / mean).exp_m1(),
            TestLaw::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            TestLaw::Constant { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
            TestLaw::Gamma { shape, scale } => gamma_p(shape, x / scale),
        }
    }

    /// One draw of `Y`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TestLaw::Exponential { mean } => mean * exp1(rng),
            TestLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            TestLaw::Constant { value } => value,
            TestLaw::Gamma { shape, scale } => rand_distr::Gamma::new(shape, scale)
                .expect("validated parameters")
                .sample(rng),
        }
    }

    /// One draw of the size-biased transform `Ẏ`.
    pub fn sample_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            // Ẏ of an exponential is Gamma(2): the sum of two copies.
            TestLaw::Exponential { mean } => mean * (exp1(rng) + exp1(rng)),
            // Density ∝ y on [lo, hi]: invert the cdf (y²-lo²)/(hi²-lo²).
            TestLaw::Uniform { lo, hi } => {
                (lo * lo + (hi * hi - lo * lo) * rng.random::<f64>()).sqrt()
            }
            TestLaw::Constant { value } => value,
            TestLaw::Gamma { shape, scale } => rand_distr::Gamma::new(shape + 1.0, scale)
                .expect("validated parameters")
                .sample(rng),
        }
    }

    /// One draw of the square-biased transform `Ÿ`.
    pub fn sample_square_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TestLaw::Exponential { mean } => mean * (exp1(rng) + exp1(rng) + exp1(rng)),
            // Density ∝ y²: invert (y³-lo³)/(hi³-lo³).
            TestLaw::Uniform { lo, hi } => {
                (lo.powi(3) + (hi.powi(3) - lo.powi(3)) * rng.random::<f64>()).cbrt()
            }
            TestLaw::Constant { value } => value,
            TestLaw::Gamma { shape, scale } => rand_distr::Gamma::new(shape + 2.0, scale)
                .expect("validated parameters")
                .sample(rng),
        }
    }
}

impl LaplacePair for TestLaw {
    fn mean(&self) -> f64 {
        TestLaw::mean(self)
    }
    fn laplace(&self, lambda: f64) -> f64 {
        TestLaw::laplace(self, lambda)
    }
    fn biased_laplace(&self, lambda: f64) -> f64 {
        TestLaw::biased_laplace(self, lambda)
    }
}

/// Standard exponential draw.
fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// `(1 - e^(-u))/u`, continuous through `u = 0`.
fn em1(u: f64) -> f64 {
    if u.abs() < 1e-12 {
        1.0 - u / 2.0
    } else {
        -(-u).exp_m1() / u
    }
}

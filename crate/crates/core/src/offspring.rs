//! Offspring laws and their size-biased transforms.
//!
//! An [`OffspringDistribution`] is a finitely supported law `μ` on the
//! non-negative integers. The two biased laws that drive the spine
//! constructions are
//!
//! - first order: `P(L̇ = k) = k·μ(k)` (valid when the mean is 1), and
//! - second factorial: `P(L̈ = k) = k(k-1)·μ(k)/σ²` where
//!   `σ² = Σ k(k-1)·μ(k)`.
//!
//! Infinite-support families (geometric, Poisson) are represented by
//! truncation at a configurable cutoff followed by renormalization; the
//! default cutoffs keep the discarded mass and the induced mean shift below
//! the criticality tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|mean - 1|` below which a law counts as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Selects the plain law `L`, the `k`-biased law `L̇`, or the
/// `k(k-1)`-biased law `L̈`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasedKind {
    Plain,
    FirstOrder,
    SecondFactorial,
}

/// A finitely supported offspring law with cached moments and prebuilt
/// sampling machinery: an alias table for single draws and a peel plan for
/// whole-generation draws.
#[derive(Debug, Clone, PartialEq)]
pub struct OffspringDistribution {
    pmf: Vec<f64>,
    alias: AliasTable,
    peel: Vec<PeelStep>,
    mean: f64,
    variance: f64,
}

/// One step of the sequential conditional-binomial decomposition of a
/// multinomial generation draw: among the individuals not yet assigned a
/// child count below `count`, each has exactly `count` children with the
/// stored conditional probability. The branchy classification happens once
/// here instead of per draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PeelStep {
    /// Conditional probability exactly 1/2.
    Half { count: u64 },
    /// Conditional probability `1/2 + delta` with `|delta|` tiny.
    NearHalf { count: u64, delta: f64 },
    /// General conditional probability.
    Plain { count: u64, ratio: f64 },
    /// Final positive support point: absorbs everyone left.
    TakeAll { count: u64 },
}

fn build_peel_plan(pmf: &[f64]) -> Vec<PeelStep> {
    const NEAR_HALF: f64 = 1e-6;
    let positive: Vec<usize> = (0..pmf.len()).filter(|&k| pmf[k] > 0.0).collect();
    let mut tail = 1.0f64;
    let mut steps = Vec::with_capacity(positive.len());
    for (i, &k) in positive.iter().enumerate() {
        let count = k as u64;
        if i + 1 == positive.len() || tail <= pmf[k] {
            steps.push(PeelStep::TakeAll { count });
            break;
        }
        let ratio = (pmf[k] / tail).clamp(0.0, 1.0);
        let delta = ratio - 0.5;
        steps.push(if delta == 0.0 {
            PeelStep::Half { count }
        } else if delta.abs() <= NEAR_HALF {
            PeelStep::NearHalf { count, delta }
        } else {
            PeelStep::Plain { count, ratio }
        });
        tail -= pmf[k];
    }
    steps
}

/// Walker-Vose alias table: one uniform draw yields one sample.
#[derive(Debug, Clone, PartialEq)]
struct AliasTable {
    cut: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    fn new(pmf: &[f64]) -> Self {
        let n = pmf.len();
        let mut cut = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let mut scaled: Vec<f64> = pmf.iter().map(|&p| p * n as f64).collect();
        let mut small: Vec<usize> = (0..n).filter(|&i| scaled[i] < 1.0).collect();
        let mut large: Vec<usize> = (0..n).filter(|&i| scaled[i] >= 1.0).collect();
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            cut[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers in either list carry full columns (up to rounding).
        for &i in small.iter().chain(large.iter()) {
            cut[i] = 1.0;
        }
        Self { cut, alias }
    }

    #[inline]
    fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let scaled = rng.random::<f64>() * self.cut.len() as f64;
        let column = (scaled as usize).min(self.cut.len() - 1);
        if scaled - (column as f64) < self.cut[column] {
            column as u32
        } else {
            self.alias[column]
        }
    }
}

impl OffspringDistribution {
    /// Builds a distribution from non-negative weights, normalizing them.
    ///
    /// This is the validation front door: weights must be finite,
    /// non-negative, and not all zero.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight list".into()));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "weight for k={k} is not finite"
                )));
            }
            if w < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "negative weight {w} for k={k}"
                )));
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("all weights are zero".into()));
        }
        let pmf: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self::from_pmf_unnormalized(pmf))
    }

    /// Builds directly from an already-normalized pmf without rescaling.
    ///
    /// Used by [`biased`](Self::biased) so that the biased pmf entries are
    /// exactly `k·μ(k)` and `k(k-1)·μ(k)/σ²` with no normalization drift.
    fn from_pmf_exact(pmf: Vec<f64>) -> Result<Self> {
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDistribution(format!(
                "pmf sums to {total}, not 1"
            )));
        }
        Ok(Self::from_pmf_unnormalized(pmf))
    }

    fn from_pmf_unnormalized(mut pmf: Vec<f64>) -> Self {
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, &p)| k as f64 * p).sum();
        let variance: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p)
            .sum();
        let alias = AliasTable::new(&pmf);
        let peel = build_peel_plan(&pmf);
        Self {
            pmf,
            alias,
            peel,
            mean,
            variance,
        }
    }

    pub(crate) fn peel_plan(&self) -> &[PeelStep] {
        &self.peel
    }

    /// The critical binary law `μ(0) = μ(2) = 1/2` (σ² = 1), or the
    /// two-point law `μ(0) = 1-p, μ(2) = p` for a general `p`.
    pub fn binary(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDistribution(format!(
                "binary parameter p={p} outside [0, 1]"
            )));
        }
        Self::from_weights(&[1.0 - p, 0.0, p])
    }

    /// Geometric law `μ(k) = p(1-p)^k` truncated at `truncate` and
    /// renormalized. `p = 1/2` is the critical member with σ² = 2.
    pub fn geometric(p: f64, truncate: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "geometric parameter p={p} outside (0, 1)"
            )));
        }
        let mut weights = Vec::with_capacity(truncate + 1);
        let mut w = p;
        for _ in 0..=truncate {
            weights.push(w);
            w *= 1.0 - p;
        }
        Self::from_weights(&weights)
    }

    /// Poisson law with the given rate, truncated and renormalized.
    /// `rate = 1` is the critical member with σ² = 1.
    pub fn poisson(rate: f64, truncate: usize) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "poisson rate {rate} must be positive and finite"
            )));
        }
        let mut weights = Vec::with_capacity(truncate + 1);
        let mut w = (-rate).exp();
        for k in 0..=truncate {
            weights.push(w);
            w *= rate / (k + 1) as f64;
        }
        Self::from_weights(&weights)
    }

    /// `μ(k)`, zero beyond the stored support.
    pub fn pmf(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn pmf_slice(&self) -> &[f64] {
        &self.pmf
    }

    /// Largest `k` carried by the representation.
    pub fn max_support(&self) -> usize {
        self.pmf.len() - 1
    }

    /// Child counts with positive probability.
    pub fn support(&self) -> Vec<u32> {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, _)| k as u32)
            .collect()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Second factorial moment `Σ k(k-1)·μ(k)`, which equals the variance
    /// `σ²` exactly when the mean is 1.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Whether the mean is 1 within [`CRITICAL_TOL`].
    pub fn has_unit_mean(&self) -> bool {
        (self.mean - 1.0).abs() <= CRITICAL_TOL
    }

    /// Critical flag: unit mean and positive variance. Inputs that fail the
    /// mean tolerance are rejected by the biased constructions rather than
    /// silently renormalized.
    pub fn is_critical(&self) -> bool {
        self.has_unit_mean() && self.variance > 0.0
    }

    pub(crate) fn require_unit_mean(&self) -> Result<()> {
        if self.has_unit_mean() {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "offspring mean is {}, not 1 within {CRITICAL_TOL}",
                self.mean
            )))
        }
    }

    pub(crate) fn require_critical(&self) -> Result<()> {
        self.require_unit_mean()?;
        if self.variance > 0.0 {
            Ok(())
        } else {
            Err(Error::DegenerateVariance)
        }
    }

    /// The selected biased law.
    ///
    /// For a unit-mean law the first-order pmf is exactly `k·μ(k)` and the
    /// second-factorial pmf is exactly `k(k-1)·μ(k)/σ²`; neither is
    /// renormalized afterwards.
    pub fn biased(&self, kind: BiasedKind) -> Result<Self> {
        match kind {
            BiasedKind::Plain => Ok(self.clone()),
            BiasedKind::FirstOrder => {
                self.require_unit_mean()?;
                let pmf: Vec<f64> = self
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| k as f64 * p)
                    .collect();
                Self::from_pmf_exact(pmf)
            }
            BiasedKind::SecondFactorial => {
                self.require_unit_mean()?;
                if self.variance <= 0.0 {
                    return Err(Error::DegenerateVariance);
                }
                let pmf: Vec<f64> = self
                    .pmf
                    .iter()
                    .enumerate()
                    .map(|(k, &p)| (k * k.saturating_sub(1)) as f64 * p / self.variance)
                    .collect();
                Self::from_pmf_exact(pmf)
            }
        }
    }

    /// Generating function `f(s) = Σ μ(k)·s^k` for `s` in `[0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64> {
        check_unit_interval(s)?;
        Ok(self.pmf.iter().rev().fold(0.0, |acc, &p| acc * s + p))
    }

    /// First or second derivative of the generating function.
    ///
    /// `f'(s) = Σ k·μ(k)·s^(k-1)` equals `E[s^(L̇-1)]` for unit-mean laws,
    /// and `f''(s) = Σ k(k-1)·μ(k)·s^(k-2)` equals `σ²·E[s^(L̈-2)]`.
    pub fn pgf_derivative(&self, s: f64, order: u8) -> Result<f64> {
        check_unit_interval(s)?;
        // Horner on the exponent-shifted polynomial Σ_k a_k s^(k-order),
        // which stays well defined at s = 0.
        let horner = |coeff: &dyn Fn(usize) -> f64, shift: usize| -> f64 {
            let mut acc = 0.0;
            for k in (shift..self.pmf.len()).rev() {
                acc = acc * s + coeff(k) * self.pmf[k];
            }
            acc
        };
        match order {
            1 => Ok(horner(&|k| k as f64, 1)),
            2 => Ok(horner(&|k| (k * (k - 1)) as f64, 2)),
            other => Err(Error::Domain(format!(
                "unsupported derivative order {other}; only 1 and 2 are defined"
            ))),
        }
    }

    /// One draw from this law's pmf through the alias table.
    #[inline]
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.alias.sample(rng)
    }
}

fn check_unit_interval(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::Domain(format!("s={s} outside [0, 1]")))
    }
}

/// JSON-facing offspring specification: either an explicit weight list
/// `[w0, w1, ...]` or a named family object
/// `{"family": "geometric", "p": 0.5, "truncate": 50}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffspringSpec {
    Weights(Vec<f64>),
    Family(FamilySpec),
}

/// Named family with optional parameters; unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncate: Option<usize>,
}

/// Default truncation depths keep `|mean - 1|` under the criticality
/// tolerance for the critical members of each family.
pub const GEOMETRIC_DEFAULT_TRUNCATE: usize = 50;
pub const POISSON_DEFAULT_TRUNCATE: usize = 40;

impl OffspringSpec {
    pub fn build(&self) -> Result<OffspringDistribution> {
        match self {
            OffspringSpec::Weights(w) => OffspringDistribution::from_weights(w),
            OffspringSpec::Family(f) => match f.family.as_str() {
                "binary" => {
                    if f.rate.is_some() || f.truncate.is_some() {
                        return Err(Error::InvalidDistribution(
                            "binary takes only the optional parameter p".into(),
                        ));
                    }
                    OffspringDistribution::binary(f.p.unwrap_or(0.5))
                }
                "geometric" => OffspringDistribution::geometric(
                    f.p.unwrap_or(0.5),
                    f.truncate.unwrap_or(GEOMETRIC_DEFAULT_TRUNCATE),
                ),
                "poisson" => {
                    if f.p.is_some() {
                        return Err(Error::InvalidDistribution(
                            "poisson takes rate, not p".into(),
                        ));
                    }
                    OffspringDistribution::poisson(
                        f.rate.unwrap_or(1.0),
                        f.truncate.unwrap_or(POISSON_DEFAULT_TRUNCATE),
                    )
                }
                other => Err(Error::InvalidDistribution(format!(
                    "unknown offspring family {other:?}"
                ))),
            },
        }
    }
}

/// One draw from the selected biased version of `d`.
///
/// Convenience for one-shot use; repeated sampling should construct the
/// biased law once via [`OffspringDistribution::biased`] and reuse it.
pub fn sample_offspring<R: rand::Rng + ?Sized>(
    d: &OffspringDistribution,
    kind: BiasedKind,
    rng: &mut R,
) -> Result<u32> {
    Ok(d.biased(kind)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn binary() -> OffspringDistribution {
        OffspringDistribution::binary(0.5).unwrap()
    }

    #[test]
    fn binary_moments() {
        let d = binary();
        assert_eq!(d.pmf(0), 0.5);
        assert_eq!(d.pmf(1), 0.0);
        assert_eq!(d.pmf(2), 0.5);
        assert_eq!(d.mean(), 1.0);
        assert_eq!(d.variance(), 1.0);
        assert!(d.is_critical());
    }

    #[test]
    fn point_mass_at_zero_is_not_critical() {
        let d = OffspringDistribution::from_weights(&[1.0]).unwrap();
        assert_eq!(d.mean(), 0.0);
        assert!(!d.is_critical());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(matches!(
            OffspringDistribution::from_weights(&[0.0, 0.0]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            OffspringDistribution::from_weights(&[0.5, -0.1]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(matches!(
            OffspringDistribution::from_weights(&[]),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(OffspringDistribution::from_weights(&[f64::NAN]).is_err());
    }

    #[test]
    fn truncated_geometric_moments() {
        // Reference family cut at k = 40: mean within 1e-10 and second
        // factorial moment within 1e-9 of the untruncated values 1 and 2.
        let d = OffspringDistribution::geometric(0.5, 40).unwrap();
        assert!((d.mean() - 1.0).abs() < 1e-10);
        assert!((d.variance() - 2.0).abs() < 1e-9);

        // The default cutoff is deep enough to clear the criticality gate.
        let d = OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap();
        assert!((d.mean() - 1.0).abs() <= CRITICAL_TOL);
        assert!(d.is_critical());
    }

    #[test]
    fn poisson_default_is_critical() {
        let d = OffspringDistribution::poisson(1.0, POISSON_DEFAULT_TRUNCATE).unwrap();
        assert!(d.is_critical());
        assert!((d.variance() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn biased_binary_is_point_mass_at_two() {
        let d = binary();
        let first = d.biased(BiasedKind::FirstOrder).unwrap();
        assert_eq!(first.pmf(2), 1.0);
        assert_eq!(first.pmf(0), 0.0);
        let second = d.biased(BiasedKind::SecondFactorial).unwrap();
        assert_eq!(second.pmf(2), 1.0);
    }

    #[test]
    fn biased_geometric_matches_closed_form() {
        let d = OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap();
        let first = d.biased(BiasedKind::FirstOrder).unwrap();
        let total: f64 = (0..=first.max_support()).map(|k| first.pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for k in 0..20 {
            let reference = k as f64 * 0.5f64.powi(k as i32 + 1);
            assert!((first.pmf(k) - reference).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn biased_pmfs_are_exact_reweightings() {
        // No normalization drift: the biased entries equal k·μ(k) and
        // k(k-1)·μ(k)/σ² to within 1e-14.
        for d in [
            binary(),
            OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap(),
            OffspringDistribution::poisson(1.0, POISSON_DEFAULT_TRUNCATE).unwrap(),
        ] {
            let first = d.biased(BiasedKind::FirstOrder).unwrap();
            let second = d.biased(BiasedKind::SecondFactorial).unwrap();
            assert_eq!(first.pmf(0), 0.0);
            assert_eq!(second.pmf(0), 0.0);
            assert_eq!(second.pmf(1), 0.0);
            for k in 0..=d.max_support() {
                assert!((first.pmf(k) - k as f64 * d.pmf(k)).abs() <= 1e-14);
                let want = (k * k.saturating_sub(1)) as f64 * d.pmf(k) / d.variance();
                assert!((second.pmf(k) - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn biased_rejects_non_critical_input() {
        let d = OffspringDistribution::from_weights(&[0.2, 0.8]).unwrap();
        assert!(matches!(
            d.biased(BiasedKind::FirstOrder),
            Err(Error::Precondition(_))
        ));
        // Unit mean but zero variance: the k(k-1) bias is undefined.
        let line = OffspringDistribution::from_weights(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            line.biased(BiasedKind::SecondFactorial),
            Err(Error::DegenerateVariance)
        ));
        assert!(line.biased(BiasedKind::FirstOrder).is_ok());
    }

    #[test]
    fn pgf_values() {
        let d = binary();
        assert_eq!(d.pgf(0.0).unwrap(), 0.5);
        assert_eq!(d.pgf(1.0).unwrap(), 1.0);
        assert!((d.pgf(0.5).unwrap() - 0.625).abs() < 1e-15);

        let g = OffspringDistribution::geometric(0.5, 40).unwrap();
        assert!((g.pgf(0.5).unwrap() - 2.0 / 3.0).abs() < 1e-10);

        assert!(matches!(d.pgf(1.5), Err(Error::Domain(_))));
        assert!(matches!(d.pgf(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn pgf_derivative_values() {
        let d = binary();
        assert_eq!(d.pgf_derivative(1.0, 1).unwrap(), 1.0);
        assert_eq!(d.pgf_derivative(0.5, 1).unwrap(), 0.5);
        assert_eq!(d.pgf_derivative(1.0, 2).unwrap(), 1.0);
        assert_eq!(d.pgf_derivative(0.0, 2).unwrap(), 1.0);
        assert!(matches!(d.pgf_derivative(0.5, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_equals_biased_pgf_with_shifted_exponent() {
        // f'(s) = Σ P(L̇=k)·s^(k-1) on a 100-point grid.
        for d in [
            binary(),
            OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap(),
            OffspringDistribution::poisson(1.0, POISSON_DEFAULT_TRUNCATE).unwrap(),
        ] {
            let first = d.biased(BiasedKind::FirstOrder).unwrap();
            let second = d.biased(BiasedKind::SecondFactorial).unwrap();
            for i in 0..=99 {
                let s = i as f64 / 99.0;
                let shifted: f64 = (1..=first.max_support())
                    .map(|k| first.pmf(k) * s.powi(k as i32 - 1))
                    .sum();
                assert!((d.pgf_derivative(s, 1).unwrap() - shifted).abs() < 1e-12);
                let shifted2: f64 = (2..=second.max_support())
                    .map(|k| second.pmf(k) * s.powi(k as i32 - 2))
                    .sum();
                assert!(
                    (d.pgf_derivative(s, 2).unwrap() - d.variance() * shifted2).abs() < 1e-12
                );
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_point_masses() {
        let d = binary();
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            assert_eq!(sample_offspring(&d, BiasedKind::FirstOrder, &mut rng).unwrap(), 2);
        }
        let line = OffspringDistribution::from_weights(&[0.0, 1.0]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_offspring(&line, BiasedKind::Plain, &mut rng).unwrap(), 1);
        }

        let a: Vec<u32> = {
            let mut r = stream_rng(3, 5);
            (0..32).map(|_| d.sample(&mut r)).collect()
        };
        let b: Vec<u32> = {
            let mut r = stream_rng(3, 5);
            (0..32).map(|_| d.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn binary_sampling_frequency_within_3_sigma() {
        let d = binary();
        let mut rng = stream_rng(2024, 0);
        let n = 1_000_000u32;
        let zeros = (0..n).filter(|_| d.sample(&mut rng) == 0).count() as f64;
        let freq = zeros / n as f64;
        assert!((0.4985..=0.5015).contains(&freq), "freq={freq}");
    }

    #[test]
    fn sampling_law_chi_square_per_kind() {
        // 10^6 draws for each bias kind against the analytic pmf.
        let d = OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap();
        for (kind, seed) in [
            (BiasedKind::Plain, 101u64),
            (BiasedKind::FirstOrder, 102),
            (BiasedKind::SecondFactorial, 103),
        ] {
            let law = d.biased(kind).unwrap();
            let mut rng = stream_rng(seed, 0);
            let mut observed = vec![0u64; law.max_support() + 1];
            for _ in 0..1_000_000 {
                observed[law.sample(&mut rng) as usize] += 1;
            }
            let probs: Vec<f64> = (0..=law.max_support()).map(|k| law.pmf(k)).collect();
            let test =
                crate::analysis::stats::chi_square_gof_pooled(&observed, &probs, 10.0).unwrap();
            assert!(test.p_value > 0.001, "{kind:?}: p = {}", test.p_value);
        }
    }

    #[test]
    fn spec_parsing_round_trip() {
        let spec: OffspringSpec = serde_json::from_str("[0.5, 0, 0.5]").unwrap();
        let d = spec.build().unwrap();
        assert_eq!(d.pmf(2), 0.5);

        let spec: OffspringSpec =
            serde_json::from_str(r#"{"family": "geometric", "truncate": 40}"#).unwrap();
        let d = spec.build().unwrap();
        assert!((d.variance() - 2.0).abs() < 1e-9);

        let spec: OffspringSpec = serde_json::from_str(r#"{"family": "poisson"}"#).unwrap();
        assert!(spec.build().unwrap().is_critical());

        let bad: std::result::Result<OffspringSpec, _> =
            serde_json::from_str(r#"{"family": "geometric", "bogus": 1}"#);
        assert!(bad.is_err());

        let unknown: OffspringSpec =
            serde_json::from_str(r#"{"family": "zeta"}"#).unwrap();
        assert!(unknown.build().is_err());
    }
}

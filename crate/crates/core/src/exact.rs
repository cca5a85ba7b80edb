//! Deterministic generating-function engine.
//!
//! Everything here is a pure function of the offspring law: extinction and
//! survival probabilities, the Kolmogorov normalization `n·p_n·σ²/2`, the
//! conditional mean `E[Z_n | Z_n > 0]` by two routes, exact Laplace
//! transforms of `Z_n`, of the one-spine population `Ż_n`, and of the
//! two-spine population `Z̈_n`, and the bush-transform ratio with its
//! extinction-probability bracket.
//!
//! Two numerical rules hold throughout:
//!
//! - Derivatives of iterated generating functions are propagated by the
//!   exact chain rule through `(value, first, second)` triples, never by
//!   finite differences.
//! - Survival-type quantities `1 - f^(n)(s)` are iterated in survival form
//!   `r ↦ r·T(1-r)` with `T(t) = Σ_j tail_j·t^j`, `tail_j = Σ_{k>j} μ(k)`,
//!   which avoids the cancellation in `1 - f(1-r)` once `r` is small.

use serde::Serialize;

use crate::analysis::LaplacePair;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

/// Value and first two derivatives of an iterated generating function at a
/// fixed point `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgfDerivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Cached iterates of the offspring generating function at a point `s`:
/// `f^(0)(s) = s`, `f^(m+1)(s) = f(f^(m)(s))`, with chain-rule derivatives.
#[derive(Debug, Clone)]
pub struct PgfIterates {
    dist: OffspringDistribution,
    s: f64,
    cache: Vec<PgfDerivatives>,
}

impl PgfIterates {
    pub fn new(dist: &OffspringDistribution, s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("s={s} outside [0, 1]")));
        }
        Ok(Self {
            dist: dist.clone(),
            s,
            cache: vec![PgfDerivatives {
                value: s,
                first: 1.0,
                second: 0.0,
            }],
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `(f^(m)(s), (f^(m))'(s), (f^(m))''(s))`, extending the cache on demand.
    pub fn at(&mut self, m: usize) -> PgfDerivatives {
        while self.cache.len() <= m {
            let prev = *self.cache.last().unwrap();
            let value = self.dist.pgf(prev.value).expect("iterate stays in [0,1]");
            let d1 = self.dist.pgf_derivative(prev.value, 1).unwrap();
            let d2 = self.dist.pgf_derivative(prev.value, 2).unwrap();
            self.cache.push(PgfDerivatives {
                value,
                first: d1 * prev.first,
                second: d2 * prev.first * prev.first + d1 * prev.second,
            });
        }
        self.cache[m]
    }

    pub fn value(&mut self, m: usize) -> f64 {
        self.at(m).value
    }
}

/// Survival-form iteration kernel `T(t) = Σ_j tail_j·t^j` with
/// `tail_j = Σ_{k>j} μ(k)`, so that `1 - f(1-r) = r·T(1-r)` exactly.
#[derive(Debug, Clone)]
struct SurvivalKernel {
    tails: Vec<f64>,
}

impl SurvivalKernel {
    fn new(dist: &OffspringDistribution) -> Self {
        let pmf = dist.pmf_slice();
        let mut tails = vec![0.0; pmf.len()];
        let mut acc = 0.0;
        for j in (0..pmf.len()).rev() {
            tails[j] = acc; // Σ_{k > j} μ(k)
            acc += pmf[j];
        }
        while tails.last() == Some(&0.0) && tails.len() > 1 {
            tails.pop();
        }
        Self { tails }
    }

    fn step(&self, r: f64) -> f64 {
        let t = 1.0 - r;
        let kernel = self.tails.iter().rev().fold(0.0, |acc, &w| acc * t + w);
        r * kernel
    }

    /// `r_n` where `r_0 = r0` and `r_{m+1} = 1 - f(1 - r_m)`.
    fn iterate(&self, r0: f64, n: usize) -> f64 {
        let mut r = r0;
        for _ in 0..n {
            r = self.step(r);
        }
        r
    }

    fn sequence(&self, r0: f64, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut r = r0;
        out.push(r);
        for _ in 0..n {
            r = self.step(r);
            out.push(r);
        }
        out
    }
}

/// Survival probabilities `p_m = P(Z_m > 0)` for `m = 0..=n` (`p_0 = 1`).
pub fn survival_probs(dist: &OffspringDistribution, n: usize) -> Result<Vec<f64>> {
    dist.require_unit_mean()?;
    Ok(SurvivalKernel::new(dist).sequence(1.0, n))
}

/// Extinction probabilities `q_m = P(Z_m = 0) = f^(m)(0)` for `m = 0..=n`.
pub fn extinction_probs(dist: &OffspringDistribution, n: usize) -> Result<Vec<f64>> {
    Ok(survival_probs(dist, n)?
        .into_iter()
        .map(|p| 1.0 - p)
        .collect())
}

/// The normalized Kolmogorov sequence `m·p_m·σ²/2` for `m = 0..=n`; it
/// converges to 1 for critical laws.
pub fn kolmogorov_sequence(dist: &OffspringDistribution, n: usize) -> Result<Vec<f64>> {
    dist.require_critical()?;
    let half_var = dist.variance() / 2.0;
    Ok(survival_probs(dist, n)?
        .into_iter()
        .enumerate()
        .map(|(m, p)| m as f64 * p * half_var)
        .collect())
}

/// Route for [`conditional_mean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMethod {
    /// `E[Z_n | Z_n > 0] = 1/p_n`, using `E[Z_n] = 1`.
    Direct,
    /// First-generation decomposition over the left-most surviving child:
    /// `e_n = e_{n-1} + (p_{n-1}/p_n)·Σ_k Σ_{j=1..k} μ(k)·q_{n-1}^(j-1)·(k-j)`.
    Recursion,
}

/// `E[Z_n | Z_n > 0]` by either route; the two agree to high accuracy and
/// `value/n → σ²/2`.
pub fn conditional_mean(dist: &OffspringDistribution, n: usize, method: MeanMethod) -> Result<f64> {
    dist.require_unit_mean()?;
    let survival = survival_probs(dist, n)?;
    match method {
        MeanMethod::Direct => Ok(1.0 / survival[n]),
        MeanMethod::Recursion => {
            // c_j = Σ_{k ≥ j} μ(k)·(k - j), by downward recurrence
            // c_j = c_{j+1} + tail_j with tail_j = Σ_{k > j} μ(k).
            let pmf = dist.pmf_slice();
            let mut tails = vec![0.0; pmf.len() + 1];
            for j in (0..pmf.len()).rev() {
                tails[j] = tails[j + 1] + pmf.get(j + 1).copied().unwrap_or(0.0);
            }
            let mut c = vec![0.0; pmf.len() + 2];
            for j in (1..=pmf.len()).rev() {
                c[j] = c[j + 1] + tails[j];
            }
            let inner = |q: f64| -> f64 {
                // Σ_{j ≥ 1} c_j·q^(j-1), Horner from the top.
                (1..=pmf.len()).rev().fold(0.0, |acc, j| acc * q + c[j])
            };
            let mut e = 1.0;
            for m in 1..=n {
                let q_prev = 1.0 - survival[m - 1];
                e += survival[m - 1] / survival[m] * inner(q_prev);
            }
            Ok(e)
        }
    }
}

/// `E[e^(-λ·Z_n)] = f^(n)(e^(-λ))`.
pub fn laplace_population(dist: &OffspringDistribution, n: usize, lambda: f64) -> Result<f64> {
    let s = exp_neg(lambda)?;
    let mut it = PgfIterates::new(dist, s)?;
    Ok(it.value(n))
}

/// Route for [`laplace_size_biased`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeBiasedMethod {
    /// Bush product `e^(-λ)·Π_{m<n} f'(f^(m)(e^(-λ)))`: one factor per
    /// nearest-spine-ancestor bush plus the spine particle itself.
    Product,
    /// Chain rule: `e^(-λ)·(f^(n))'(e^(-λ))`.
    Derivative,
}

/// `E[e^(-λ·Ż_n)]` for the one-spine population, by either route.
pub fn laplace_size_biased(
    dist: &OffspringDistribution,
    n: usize,
    lambda: f64,
    method: SizeBiasedMethod,
) -> Result<f64> {
    dist.require_unit_mean()?;
    let s = exp_neg(lambda)?;
    match method {
        SizeBiasedMethod::Product => {
            let mut acc = s;
            let mut v = s;
            for _ in 0..n {
                acc *= dist.pgf_derivative(v, 1)?;
                v = dist.pgf(v)?;
            }
            Ok(acc)
        }
        SizeBiasedMethod::Derivative => {
            let mut it = PgfIterates::new(dist, s)?;
            Ok(s * it.at(n).first)
        }
    }
}

/// Route for [`laplace_two_spine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoSpineMethod {
    /// Spine decomposition:
    /// `E[e^(-λ·Z̈_n)] = E[e^(-λ·Ż_n)]·(1/n)·Σ_{m<n} g(λ,m)·E[e^(-λ·Ż_m)]`
    /// with `g(λ,m) = f''(f^(m)(e^(-λ))) / (σ²·f'(f^(m)(e^(-λ))))`.
    Decomposition,
    /// Factorial-moment transform:
    /// `E[Z_n(Z_n-1)·e^(-λ·Z_n)] / (nσ²) = s²·(f^(n))''(s) / (nσ²)`.
    FactorialMoment,
}

/// `E[e^(-λ·Z̈_n)]` for the two-spine population at its own height `n ≥ 1`.
pub fn laplace_two_spine(
    dist: &OffspringDistribution,
    n: usize,
    lambda: f64,
    method: TwoSpineMethod,
) -> Result<f64> {
    dist.require_critical()?;
    if n == 0 {
        return Err(Error::Domain(
            "two-spine population needs height n >= 1 (the split generation is uniform on 0..n)"
                .into(),
        ));
    }
    let s = exp_neg(lambda)?;
    let var = dist.variance();
    match method {
        TwoSpineMethod::Decomposition => {
            let mut v = s;
            let mut spine_product = 1.0; // Π_{j<m} f'(f^(j)(s))
            let mut split_sum = 0.0;
            for _ in 0..n {
                let d1 = dist.pgf_derivative(v, 1)?;
                let d2 = dist.pgf_derivative(v, 2)?;
                let g = d2 / (var * d1);
                split_sum += g * s * spine_product; // g(λ,m)·E[e^(-λ·Ż_m)]
                spine_product *= d1;
                v = dist.pgf(v)?;
            }
            let sb_n = s * spine_product;
            Ok(sb_n * split_sum / n as f64)
        }
        TwoSpineMethod::FactorialMoment => {
            let mut it = PgfIterates::new(dist, s)?;
            Ok(s * s * it.at(n).second / (n as f64 * var))
        }
    }
}

/// `E[Z_n(Z_n-1)] = (f^(n))''(1)`, which equals `nσ²` for critical laws.
pub fn second_factorial_moment(dist: &OffspringDistribution, n: usize) -> Result<f64> {
    dist.require_unit_mean()?;
    let mut it = PgfIterates::new(dist, 1.0)?;
    Ok(it.at(n).second)
}

/// `E[e^(-λ·Z_n/n) | Z_n > 0]`, evaluated in the stable survival form
/// `1 - (1 - f^(n)(e^(-λ/n)))/p_n`.
pub fn yaglom_conditional(dist: &OffspringDistribution, n: usize, lambda: f64) -> Result<f64> {
    dist.require_unit_mean()?;
    if n == 0 {
        return Err(Error::Domain("yaglom transform needs n >= 1".into()));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::Domain(format!("lambda={lambda} must be >= 0")));
    }
    let kernel = SurvivalKernel::new(dist);
    let r0 = -(-lambda / n as f64).exp_m1(); // 1 - e^(-λ/n), no cancellation
    let r_n = kernel.iterate(r0, n);
    let p_n = kernel.iterate(1.0, n);
    Ok(1.0 - r_n / p_n)
}

/// The Yaglom limit transform `1/(1 + σ²λ/2)` of the exponential law with
/// mean `σ²/2`.
pub fn yaglom_limit(dist: &OffspringDistribution, lambda: f64) -> f64 {
    1.0 / (1.0 + dist.variance() * lambda / 2.0)
}

/// `E[e^(-λ·Z_m^(L̇-1))] = f'(f^(m)(e^(-λ)))`: transform of a bush seeded by
/// the `L̇ - 1` unmarked children of a spine particle, run for `m` generations.
pub fn bush_laplace_first(dist: &OffspringDistribution, m: usize, lambda: f64) -> Result<f64> {
    dist.require_unit_mean()?;
    let s = exp_neg(lambda)?;
    let mut it = PgfIterates::new(dist, s)?;
    let v = it.value(m);
    dist.pgf_derivative(v, 1)
}

/// `E[e^(-λ·Z_m^(L̈-2))] = f''(f^(m)(e^(-λ)))/σ²`: transform of the bush
/// seeded by the `L̈ - 2` unmarked children of the split particle.
pub fn bush_laplace_second(dist: &OffspringDistribution, m: usize, lambda: f64) -> Result<f64> {
    dist.require_critical()?;
    let s = exp_neg(lambda)?;
    let mut it = PgfIterates::new(dist, s)?;
    let v = it.value(m);
    Ok(dist.pgf_derivative(v, 2)? / dist.variance())
}

/// The ratio `g(λ, m)` of the second bush transform to the first; it appears
/// in the two-spine decomposition and tends to 1 uniformly in λ.
pub fn bush_transform_ratio(dist: &OffspringDistribution, m: usize, lambda: f64) -> Result<f64> {
    Ok(bush_laplace_second(dist, m, lambda)? / bush_laplace_first(dist, m, lambda)?)
}

/// The bracket `P(Z_m^(L̈-2) = 0) ≤ g(λ, m) ≤ P(Z_m^(L̇-1) = 0)^(-1)`:
/// returns `(lower, upper)`, both of which tend to 1 by criticality.
pub fn bush_transform_ratio_bounds(dist: &OffspringDistribution, m: usize) -> Result<(f64, f64)> {
    dist.require_critical()?;
    let q_m = 1.0 - SurvivalKernel::new(dist).iterate(1.0, m);
    let lower = dist.pgf_derivative(q_m, 2)? / dist.variance();
    let upper = 1.0 / dist.pgf_derivative(q_m, 1)?;
    Ok((lower, upper))
}

/// Exact pmf of `Z_n` started from one particle, by repeated convolution
/// with the offspring law. Exponential in `n`; intended for small cases and
/// as an enumeration-free oracle.
pub fn population_pmf(dist: &OffspringDistribution, n: usize) -> Result<Vec<f64>> {
    population_pmf_from(dist, n, &[0.0, 1.0])
}

/// Exact pmf of `Z_n` started from an initial population with the given pmf.
pub fn population_pmf_from(
    dist: &OffspringDistribution,
    n: usize,
    initial: &[f64],
) -> Result<Vec<f64>> {
    let offspring = dist.pmf_slice();
    let mut law = initial.to_vec();
    for _ in 0..n {
        let max_z = law.len() - 1;
        let mut next = vec![0.0; max_z * offspring.len().saturating_sub(1) + 1];
        // conv holds μ^(*z), grown one convolution at a time.
        let mut conv = vec![1.0];
        for (z, &w) in law.iter().enumerate() {
            if w > 0.0 {
                for (j, &c) in conv.iter().enumerate() {
                    next[j] += w * c;
                }
            }
            if z < max_z {
                let mut grown = vec![0.0; conv.len() + offspring.len() - 1];
                for (a, &ca) in conv.iter().enumerate() {
                    if ca == 0.0 {
                        continue;
                    }
                    for (b, &pb) in offspring.iter().enumerate() {
                        grown[a + b] += ca * pb;
                    }
                }
                conv = grown;
            }
        }
        while next.last() == Some(&0.0) && next.len() > 1 {
            next.pop();
        }
        law = next;
    }
    Ok(law)
}

/// A λ-grid of transform values paired with a reference column.
#[derive(Debug, Clone, Serialize)]
pub struct TransformTable {
    pub transform: String,
    pub rows: Vec<TransformRow>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransformRow {
    pub lambda: f64,
    pub value: f64,
    pub reference: f64,
    pub abs_gap: f64,
}

impl TransformTable {
    /// Builds a table over an increasing, non-negative λ grid.
    pub fn build(
        transform: impl Into<String>,
        grid: &[f64],
        mut value: impl FnMut(f64) -> Result<f64>,
        mut reference: impl FnMut(f64) -> Result<f64>,
    ) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Domain("empty lambda grid".into()));
        }
        if grid.iter().any(|&l| l.is_nan() || l < 0.0) {
            return Err(Error::Domain("lambda grid must be non-negative".into()));
        }
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        let mut rows = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let v = value(lambda)?;
            let r = reference(lambda)?;
            rows.push(TransformRow {
                lambda,
                value: v,
                reference: r,
                abs_gap: (v - r).abs(),
            });
        }
        Ok(Self {
            transform: transform.into(),
            rows,
        })
    }

    pub fn max_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.abs_gap).fold(0.0, f64::max)
    }

    /// Transform values must be non-increasing in λ.
    pub fn is_monotone(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].value <= w[0].value + 1e-15)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "lambda,value,reference,abs_gap")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.lambda, r.value, r.reference, r.abs_gap)?;
        }
        Ok(())
    }
}

/// The renormalized pair `X = (Ż_n - 1)/n` and its size-biased partner
/// `(Z̈_n - 1)/n`, exposed as Laplace transforms with common mean `σ²`.
///
/// By the change of measure, `(Z̈_n - 1)/n` is an `X`-transform of `X`, so
/// this pair feeds the transform-distance bound directly and its biased
/// transform can be cross-checked against the two-spine decomposition.
#[derive(Debug, Clone)]
pub struct SpineIncrement {
    dist: OffspringDistribution,
    n: usize,
}

impl SpineIncrement {
    pub fn new(dist: &OffspringDistribution, n: usize) -> Result<Self> {
        dist.require_critical()?;
        if n == 0 {
            return Err(Error::Domain("spine increment needs n >= 1".into()));
        }
        Ok(Self {
            dist: dist.clone(),
            n,
        })
    }

    fn shift(&self, lambda: f64) -> f64 {
        (lambda / self.n as f64).exp()
    }
}

impl LaplacePair for SpineIncrement {
    fn mean(&self) -> f64 {
        // E[(Ż_n - 1)/n] = nσ²/n since E[Ż_n] = 1 + nσ².
        self.dist.variance()
    }

    fn laplace(&self, lambda: f64) -> f64 {
        let scaled = lambda / self.n as f64;
        self.shift(lambda)
            * laplace_size_biased(&self.dist, self.n, scaled, SizeBiasedMethod::Derivative)
                .expect("critical law validated at construction")
    }

    fn biased_laplace(&self, lambda: f64) -> f64 {
        let scaled = lambda / self.n as f64;
        self.shift(lambda)
            * laplace_two_spine(&self.dist, self.n, scaled, TwoSpineMethod::FactorialMoment)
                .expect("critical law validated at construction")
    }
}

/// Table checking the renormalized size-biased add-on identity: the
/// transform of `(Z̈_n - 1)/n` computed through the two-spine decomposition
/// against the factorial-moment route.
pub fn spine_increment_table(
    dist: &OffspringDistribution,
    n: usize,
    grid: &[f64],
) -> Result<TransformTable> {
    let pair = SpineIncrement::new(dist, n)?;
    TransformTable::build(
        format!("(two_spine_population_{n} - 1)/{n}"),
        grid,
        |lambda| {
            let scaled = lambda / n as f64;
            Ok((lambda / n as f64).exp()
                * laplace_two_spine(dist, n, scaled, TwoSpineMethod::Decomposition)?)
        },
        |lambda| Ok(pair.biased_laplace(lambda)),
    )
}

fn exp_neg(lambda: f64) -> Result<f64> {
    if lambda >= 0.0 {
        Ok((-lambda).exp())
    } else {
        Err(Error::Domain(format!("lambda={lambda} must be >= 0")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::GEOMETRIC_DEFAULT_TRUNCATE;

    fn binary() -> OffspringDistribution {
        OffspringDistribution::binary(0.5).unwrap()
    }

    fn geometric() -> OffspringDistribution {
        OffspringDistribution::geometric(0.5, GEOMETRIC_DEFAULT_TRUNCATE).unwrap()
    }

    #[test]
    fn binary_extinction_sequence() {
        // Iterating f(s) = (1 + s²)/2 from 0.
        let q = extinction_probs(&binary(), 3).unwrap();
        assert_eq!(q[0], 0.0);
        assert!((q[1] - 0.5).abs() < 1e-15);
        assert!((q[2] - 0.625).abs() < 1e-15);
        assert!((q[3] - 0.6953125).abs() < 1e-15);
    }

    #[test]
    fn geometric_extinction_closed_form() {
        // For f(s) = 1/(2-s): q_n = n/(n+1).
        let q = extinction_probs(&geometric(), 99).unwrap();
        for (n, &qn) in q.iter().enumerate() {
            let want = n as f64 / (n + 1) as f64;
            assert!((qn - want).abs() < 1e-12, "n={n}: {qn} vs {want}");
        }
        assert!((q[2] - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn extinction_is_monotone_toward_one() {
        for d in [binary(), geometric()] {
            let q = extinction_probs(&d, 500).unwrap();
            assert!(q.windows(2).all(|w| w[1] >= w[0]));
            assert!(q[500] > 0.99);
        }
    }

    #[test]
    fn kolmogorov_normalization() {
        // Geometric: m·p_m·σ²/2 = m/(m+1) exactly.
        let k = kolmogorov_sequence(&geometric(), 999).unwrap();
        assert!((k[9] - 0.9).abs() < 1e-10);
        assert!((k[99] - 0.99).abs() < 1e-10);
        assert!((k[999] - 0.999).abs() < 1e-10);
        // Binary at n = 1: 1·p_1·σ²/2 = 0.5·0.5.
        let k = kolmogorov_sequence(&binary(), 1).unwrap();
        assert!((k[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn conditional_mean_routes_agree() {
        let d = binary();
        assert_eq!(conditional_mean(&d, 0, MeanMethod::Direct).unwrap(), 1.0);
        assert_eq!(conditional_mean(&d, 0, MeanMethod::Recursion).unwrap(), 1.0);
        // n = 1 by hand: direct 1/p_1 = 2; recursion 1 + (1/0.5)·μ(2)·(2-1).
        assert!((conditional_mean(&d, 1, MeanMethod::Direct).unwrap() - 2.0).abs() < 1e-14);
        assert!((conditional_mean(&d, 1, MeanMethod::Recursion).unwrap() - 2.0).abs() < 1e-14);

        let g = geometric();
        assert!((conditional_mean(&g, 9, MeanMethod::Direct).unwrap() - 10.0).abs() < 1e-10);

        for d in [binary(), geometric()] {
            for n in [1usize, 5, 17, 100, 400] {
                let direct = conditional_mean(&d, n, MeanMethod::Direct).unwrap();
                let recursion = conditional_mean(&d, n, MeanMethod::Recursion).unwrap();
                assert!(
                    ((direct - recursion) / direct).abs() < 1e-9,
                    "n={n}: {direct} vs {recursion}"
                );
            }
            // value/n approaches σ²/2.
            let e = conditional_mean(&d, 4000, MeanMethod::Direct).unwrap();
            assert!((e / 4000.0 - d.variance() / 2.0).abs() < 0.01 * d.variance());
        }
    }

    #[test]
    fn laplace_population_values() {
        let d = binary();
        assert_eq!(laplace_population(&d, 7, 0.0).unwrap(), 1.0);
        let v = laplace_population(&d, 1, 2.0f64.ln()).unwrap();
        assert!((v - 0.625).abs() < 1e-15);
        // λ → ∞ recovers the extinction probability.
        let v = laplace_population(&d, 2, 700.0).unwrap();
        assert!((v - 0.625).abs() < 1e-14);
        assert!(laplace_population(&d, 2, -1.0).is_err());
    }

    #[test]
    fn size_biased_laplace_binary_closed_form() {
        // Ż_1 = 2 deterministically, so both routes give e^(-2λ).
        let d = binary();
        for lambda in [0.0f64, 0.3, 1.0, 4.0] {
            let want = (-2.0 * lambda).exp();
            for method in [SizeBiasedMethod::Product, SizeBiasedMethod::Derivative] {
                let v = laplace_size_biased(&d, 1, lambda, method).unwrap();
                assert!((v - want).abs() < 1e-15, "λ={lambda} {method:?}");
            }
        }
    }

    #[test]
    fn size_biased_routes_agree_on_grid() {
        for d in [binary(), geometric()] {
            for n in [0usize, 1, 2, 10, 50, 200] {
                for i in 1..=50 {
                    let lambda = 0.2 * i as f64;
                    let a = laplace_size_biased(&d, n, lambda, SizeBiasedMethod::Product).unwrap();
                    let b =
                        laplace_size_biased(&d, n, lambda, SizeBiasedMethod::Derivative).unwrap();
                    assert!((a - b).abs() <= 1e-12, "n={n} λ={lambda}: {a} vs {b}");
                }
                let at_zero =
                    laplace_size_biased(&d, n, 0.0, SizeBiasedMethod::Product).unwrap();
                assert!((at_zero - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn size_biased_matches_population_law() {
        // E[e^(-λŻ_n)] = Σ_z z·P(Z_n = z)·e^(-λz) since E[Z_n] = 1.
        let d = binary();
        for n in 0..=3 {
            let law = population_pmf(&d, n).unwrap();
            for lambda in [0.25, 1.0, 3.0] {
                let direct: f64 = law
                    .iter()
                    .enumerate()
                    .map(|(z, &p)| z as f64 * p * (-lambda * z as f64).exp())
                    .sum();
                let v =
                    laplace_size_biased(&d, n, lambda, SizeBiasedMethod::Derivative).unwrap();
                assert!((v - direct).abs() < 1e-13, "n={n} λ={lambda}");
            }
        }
    }

    #[test]
    fn two_spine_laplace_binary_n1() {
        // The height-1 two-spine tree is the forced pair: Z̈_1 = 2.
        let d = binary();
        for lambda in [0.0f64, 0.5, 1.0, 2.5] {
            let want = (-2.0 * lambda).exp();
            for method in [TwoSpineMethod::Decomposition, TwoSpineMethod::FactorialMoment] {
                let v = laplace_two_spine(&d, 1, lambda, method).unwrap();
                assert!((v - want).abs() < 1e-14, "λ={lambda} {method:?}");
            }
        }
        assert!(matches!(
            laplace_two_spine(&d, 0, 1.0, TwoSpineMethod::Decomposition),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn two_spine_routes_agree_on_grid() {
        for d in [binary(), geometric()] {
            for n in [1usize, 2, 5, 20, 100, 200] {
                for i in 1..=50 {
                    let lambda = 0.2 * i as f64;
                    let a =
                        laplace_two_spine(&d, n, lambda, TwoSpineMethod::Decomposition).unwrap();
                    let b =
                        laplace_two_spine(&d, n, lambda, TwoSpineMethod::FactorialMoment).unwrap();
                    assert!((a - b).abs() <= 1e-10, "n={n} λ={lambda}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn two_spine_matches_factorial_population_law() {
        // E[e^(-λZ̈_n)] = Σ_z z(z-1)·P(Z_n = z)·e^(-λz) / (nσ²).
        let d = binary();
        for n in 1..=3 {
            let law = population_pmf(&d, n).unwrap();
            for lambda in [0.4, 1.0] {
                let direct: f64 = law
                    .iter()
                    .enumerate()
                    .map(|(z, &p)| (z * z.saturating_sub(1)) as f64 * p * (-lambda * z as f64).exp())
                    .sum::<f64>()
                    / (n as f64 * d.variance());
                let v = laplace_two_spine(&d, n, lambda, TwoSpineMethod::Decomposition).unwrap();
                assert!((v - direct).abs() < 1e-13, "n={n} λ={lambda}");
            }
        }
    }

    #[test]
    fn second_factorial_moment_is_n_sigma_sq() {
        assert_eq!(second_factorial_moment(&binary(), 0).unwrap(), 0.0);
        assert!((second_factorial_moment(&binary(), 2).unwrap() - 2.0).abs() < 1e-12);
        assert!((second_factorial_moment(&geometric(), 5).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn second_derivative_matches_finite_differences() {
        // Central differences of f^(n) at s = 0.9 as a numerical sanity
        // check on the chain-rule recursion.
        let d = geometric();
        let n = 12;
        let h = 1e-4;
        let value = |s: f64| PgfIterates::new(&d, s).unwrap().value(n);
        let fd = (value(0.9 + h) - 2.0 * value(0.9) + value(0.9 - h)) / (h * h);
        let exact = PgfIterates::new(&d, 0.9).unwrap().at(n).second;
        assert!((fd - exact).abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn yaglom_conditional_approaches_exponential_limit() {
        for (d, sigma_sq) in [(binary(), 1.0), (geometric(), 2.0)] {
            assert_eq!(yaglom_conditional(&d, 10, 0.0).unwrap(), 1.0);
            for lambda in [0.5, 1.0, 2.0, 4.0] {
                let v = yaglom_conditional(&d, 10_000, lambda).unwrap();
                let limit = 1.0 / (1.0 + sigma_sq * lambda / 2.0);
                assert!((v - limit).abs() < 0.01, "λ={lambda}: {v} vs {limit}");
                assert!((limit - yaglom_limit(&d, lambda)).abs() < 1e-10);
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!(yaglom_conditional(&binary(), 0, 1.0).is_err());
        assert!(yaglom_conditional(&binary(), 5, -0.5).is_err());
    }

    #[test]
    fn bush_ratio_bracket_holds() {
        for d in [binary(), geometric()] {
            for m in [0usize, 1, 5, 50, 200] {
                let (lower, upper) = bush_transform_ratio_bounds(&d, m).unwrap();
                assert!(lower <= 1.0 + 1e-12 && upper >= 1.0 - 1e-12);
                for i in 0..=20 {
                    let lambda = 0.5 * i as f64;
                    let g = bush_transform_ratio(&d, m, lambda).unwrap();
                    assert!(
                        g >= lower - 1e-12 && g <= upper + 1e-12,
                        "m={m} λ={lambda}: {lower} <= {g} <= {upper}"
                    );
                }
            }
            // Both bound sequences approach 1.
            let (lower, upper) = bush_transform_ratio_bounds(&d, 2000).unwrap();
            assert!((lower - 1.0).abs() < 0.01 && (upper - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn population_pmf_binary_small_n() {
        let d = binary();
        let law = population_pmf(&d, 2).unwrap();
        assert_eq!(law.len(), 5);
        assert!((law[0] - 0.625).abs() < 1e-15);
        assert!((law[2] - 0.25).abs() < 1e-15);
        assert!((law[4] - 0.125).abs() < 1e-15);
        // E[Z_2²]/E[Z_2] = 3.
        let second: f64 = law.iter().enumerate().map(|(z, &p)| (z * z) as f64 * p).sum();
        let first: f64 = law.iter().enumerate().map(|(z, &p)| z as f64 * p).sum();
        assert!((second / first - 3.0).abs() < 1e-13);
    }

    #[test]
    fn transform_table_contract() {
        let d = binary();
        let grid = [0.5, 1.0, 2.0];
        let t = TransformTable::build(
            "plain",
            &grid,
            |l| laplace_population(&d, 3, l),
            |l| laplace_population(&d, 3, l),
        )
        .unwrap();
        assert!(t.is_monotone());
        assert_eq!(t.max_gap(), 0.0);
        let mut csv = Vec::new();
        t.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("lambda,value,reference,abs_gap"));

        assert!(TransformTable::build("x", &[], |_| Ok(1.0), |_| Ok(1.0)).is_err());
        assert!(TransformTable::build("x", &[1.0, 0.5], |_| Ok(1.0), |_| Ok(1.0)).is_err());
    }

    #[test]
    fn spine_increment_identity() {
        // The transform of (Z̈_n - 1)/n computed through the decomposition
        // equals the factorial-moment route, and the pair's mean is σ².
        for d in [binary(), geometric()] {
            let grid: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
            let table = spine_increment_table(&d, 100, &grid).unwrap();
            assert!(table.max_gap() < 1e-10, "gap {}", table.max_gap());

            let pair = SpineIncrement::new(&d, 100).unwrap();
            assert!((LaplacePair::mean(&pair) - d.variance()).abs() < 1e-12);
            // Transform at 0 is 1.
            assert!((pair.laplace(0.0) - 1.0).abs() < 1e-10);
            assert!((pair.biased_laplace(0.0) - 1.0).abs() < 1e-10);
        }
    }
}

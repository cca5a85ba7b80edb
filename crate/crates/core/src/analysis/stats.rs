//! Goodness-of-fit machinery: Kolmogorov-Smirnov tests (one and two sample)
//! with asymptotic p-values, and the chi-square test with p-values via the
//! regularized incomplete gamma function.

use crate::error::{Error, Result};

/// Outcome of a Kolmogorov-Smirnov test.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
    /// `n` for one-sample, `n·m/(n+m)` for two-sample.
    pub n_effective: f64,
}

impl KsTest {
    pub fn passes_at(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// One-sample KS statistic of `sample` against a reference cdf, with the
/// asymptotic p-value.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsTest> {
    if sample.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    let mut xs = sample.to_vec();
    sort_finite(&mut xs)?;
    let n = xs.len() as f64;
    let mut stat: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let c = cdf(x);
        stat = stat.max((i as f64 / n - c).abs()).max(((i + 1) as f64 / n - c).abs());
    }
    Ok(KsTest {
        statistic: stat,
        p_value: ks_p_value(stat, n),
        n_effective: n,
    })
}

/// Two-sample KS statistic with the asymptotic p-value at effective size
/// `n·m/(n+m)`.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> Result<KsTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    sort_finite(&mut xs)?;
    sort_finite(&mut ys)?;
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut stat: f64 = 0.0;
    while i < n && j < m {
        let current = xs[i].min(ys[j]);
        while i < n && xs[i] == current {
            i += 1;
        }
        while j < m && ys[j] == current {
            j += 1;
        }
        let fx = i as f64 / n as f64;
        let fy = j as f64 / m as f64;
        stat = stat.max((fx - fy).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n + m) as f64;
    Ok(KsTest {
        statistic: stat,
        p_value: ks_p_value(stat, n_eff),
        n_effective: n_eff,
    })
}

/// Asymptotic p-value `P(D > stat)` with the finite-size correction
/// `(√n + 0.12 + 0.11/√n)·D` of Stephens.
pub fn ks_p_value(stat: f64, n_effective: f64) -> f64 {
    let sqrt_n = n_effective.sqrt();
    kolmogorov_complement((sqrt_n + 0.12 + 0.11 / sqrt_n) * stat)
}

/// Complement `Q(z) = 1 - K(z)` of the Kolmogorov cdf, by the series that
/// converges fastest for the given argument.
pub fn kolmogorov_complement(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        1.0 - kolmogorov_cdf_small(z)
    } else {
        let t = (-2.0 * z * z).exp();
        (2.0 * (t - t.powi(4) + t.powi(9) - t.powi(16))).clamp(0.0, 1.0)
    }
}

/// Jacobi-theta form of the Kolmogorov cdf, accurate for small arguments.
fn kolmogorov_cdf_small(z: f64) -> f64 {
    let factor = (2.0 * std::f64::consts::PI).sqrt() / z;
    let t = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * z * z)).exp();
    (factor * (t + t.powi(9) + t.powi(25) + t.powi(49))).clamp(0.0, 1.0)
}

/// Critical statistic at the given significance: the `d` with
/// `p_value(d) = significance`, found by bisection.
pub fn ks_critical_value(n_effective: f64, significance: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ks_p_value(mid, n_effective) > significance {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Outcome of a chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy)]
pub struct ChiSquare {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

impl ChiSquare {
    pub fn passes_at(&self, significance: f64) -> bool {
        self.p_value > significance
    }
}

/// Chi-square test of observed counts against cell probabilities.
///
/// Zero-probability cells must have zero observations (otherwise the test
/// fails outright with a zero p-value) and are excluded from the statistic.
pub fn chi_square_gof(observed: &[u64], probabilities: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(Error::Domain(
            "observed counts and probabilities must be non-empty and equal length".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Domain("no observations".into()));
    }
    let n = total as f64;
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&obs, &p) in observed.iter().zip(probabilities) {
        if p <= 0.0 {
            if obs > 0 {
                return Ok(ChiSquare {
                    statistic: f64::INFINITY,
                    degrees_of_freedom: observed.len().saturating_sub(1),
                    p_value: 0.0,
                });
            }
            continue;
        }
        let expected = n * p;
        let diff = obs as f64 - expected;
        stat += diff * diff / expected;
        cells += 1;
    }
    let df = cells.saturating_sub(1).max(1);
    Ok(ChiSquare {
        statistic: stat,
        degrees_of_freedom: df,
        p_value: gamma_q(df as f64 / 2.0, stat / 2.0),
    })
}

/// Chi-square test with adjacent-cell pooling: consecutive cells are merged
/// until each pooled bin has expected count at least `min_expected`, the
/// standard remedy for sparse tails where the chi-square asymptotics break
/// down. A trailing underweight bin is merged into its predecessor.
pub fn chi_square_gof_pooled(
    observed: &[u64],
    probabilities: &[f64],
    min_expected: f64,
) -> Result<ChiSquare> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(Error::Domain(
            "observed counts and probabilities must be non-empty and equal length".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut pooled_obs = Vec::new();
    let mut pooled_probs = Vec::new();
    let mut acc_obs = 0u64;
    let mut acc_p = 0.0f64;
    for (&obs, &p) in observed.iter().zip(probabilities) {
        acc_obs += obs;
        acc_p += p;
        if acc_p * n >= min_expected {
            pooled_obs.push(acc_obs);
            pooled_probs.push(acc_p);
            acc_obs = 0;
            acc_p = 0.0;
        }
    }
    if acc_p > 0.0 || acc_obs > 0 {
        match (pooled_obs.last_mut(), pooled_probs.last_mut()) {
            (Some(o), Some(p)) => {
                *o += acc_obs;
                *p += acc_p;
            }
            _ => {
                pooled_obs.push(acc_obs);
                pooled_probs.push(acc_p);
            }
        }
    }
    chi_square_gof(&pooled_obs, &pooled_probs)
}

/// Lanczos approximation of `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const COEFFICIENTS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const G: f64 = 7.0;
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEFFICIENTS[0];
    for (i, &c) in COEFFICIENTS[1..].iter().enumerate() {
        sum += c / (x + i as f64 + 1.0);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_cf(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_cf(a, x)
    }
}

/// Series expansion of `P(a, x)`, best for `x < a + 1`.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    (sum * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0)
}

/// Lentz continued fraction for `Q(a, x)`, best for `x >= a + 1`.
fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (h * (-x + a * x.ln() - ln_gamma(a)).exp()).clamp(0.0, 1.0)
}

fn sort_finite(xs: &mut [f64]) -> Result<()> {
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(())
}

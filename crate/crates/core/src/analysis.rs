//! Statistical and analytic verification layer.
//!
//! Provides empirical Laplace transforms, the Kolmogorov-Smirnov and
//! chi-square machinery, the three distributional-equation characterizations
//! of the exponential law, and the transform-distance bound used to compare
//! two laws with the same mean through their size-biased add-on structure:
//!
//! - the `x²`-type equation `Ÿ =ᵈ Ẏ + U·Ẏ'`,
//! - the `x`-type equation `Y =ᵈ U·Ẏ`,
//! - the splitting equation `Y =ᵈ U·(Y⁽¹⁾ + Y⁽²⁾)`,
//!
//! with `U` uniform on `[0,1]`, independent of the other factors; each holds
//! if and only if `Y` is exponential.

pub mod law;
pub mod quadrature;
pub mod stats;

pub use law::{LaplacePair, TestLaw};
pub use stats::{chi_square_gof, ks_statistic, two_sample_ks, ChiSquare, KsTest};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::TransformTable;
use crate::rng::{stream_rng, SimRng};

/// A batch of non-negative real samples with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub provenance: String,
    pub seed: u64,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, provenance: impl Into<String>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("empty sample set".into()));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::Domain(
                "sample set contains negative or NaN values".into(),
            ));
        }
        Ok(Self {
            values,
            provenance: provenance.into(),
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Monte Carlo estimate of `E[e^(-λX)]` on a λ grid; exactly 1 at λ = 0.
pub fn empirical_laplace(samples: &SampleSet, grid: &[f64]) -> Result<TransformTable> {
    let n = samples.len() as f64;
    TransformTable::build(
        format!("empirical[{}]", samples.provenance),
        grid,
        |lambda| {
            Ok(samples
                .values
                .iter()
                .map(|&x| (-lambda * x).exp())
                .sum::<f64>()
                / n)
        },
        |_| Ok(f64::NAN),
    )
}

/// Importance-weighted estimate of `E[e^(-λẊ)]` for the size-biased
/// transform of the sampled variable: weight `x/mean` instead of resampling.
pub fn empirical_biased_laplace(samples: &SampleSet, lambda: f64) -> f64 {
    let total: f64 = samples.values.iter().sum();
    samples
        .values
        .iter()
        .map(|&x| x * (-lambda * x).exp())
        .sum::<f64>()
        / total
}

/// Verdict of one verification check: `pass ⇔ value ≤ threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub check: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub sample_sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
}

impl ComparisonReport {
    pub fn new(
        check: impl Into<String>,
        metric: impl Into<String>,
        value: f64,
        threshold: f64,
        sample_sizes: Vec<usize>,
        p_value: Option<f64>,
    ) -> Self {
        Self {
            check: check.into(),
            metric: metric.into(),
            value,
            threshold,
            pass: value <= threshold,
            sample_sizes,
            p_value,
        }
    }
}

/// How a distributional-equation check is carried out.
#[derive(Debug, Clone)]
pub enum CheckMode<'a> {
    /// Compare closed-form/quadrature transforms of both sides on a λ grid;
    /// the metric is the sup gap.
    AnalyticGrid { lambdas: &'a [f64], tol: f64 },
    /// Draw both sides and run a two-sample KS test; the metric is the KS
    /// statistic against its critical value at the significance level.
    TwoSample {
        samples: usize,
        significance: f64,
        seed: u64,
    },
}

/// Which of the three characterization equations to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// `Ÿ =ᵈ Ẏ + U·Ẏ'` (the `x²`-type size-biased equation).
    SquareBias,
    /// `Y =ᵈ U·Ẏ` (the `x`-type size-biased equation).
    SizeBias,
    /// `Y =ᵈ U·(Y⁽¹⁾ + Y⁽²⁾)` (the independent-splitting equation).
    Splitting,
}

impl Equation {
    pub fn name(&self) -> &'static str {
        match self {
            Equation::SquareBias => "square_bias_equation",
            Equation::SizeBias => "size_bias_equation",
            Equation::Splitting => "splitting_equation",
        }
    }

    /// Laplace transform of the equation's left side.
    fn lhs_laplace(&self, law: &TestLaw, lambda: f64) -> f64 {
        match self {
            Equation::SquareBias => law.square_biased_laplace(lambda),
            Equation::SizeBias | Equation::Splitting => law.laplace(lambda),
        }
    }

    /// Laplace transform of the right side. The uniform factor integrates
    /// out: `E[e^(-λU·W)] = ∫_0^1 E[e^(-λuW)] du` by independence.
    fn rhs_laplace(&self, law: &TestLaw, lambda: f64) -> f64 {
        match self {
            Equation::SquareBias => {
                law.biased_laplace(lambda)
                    * quadrature::integrate_smooth(|u| law.biased_laplace(lambda * u), 0.0, 1.0)
            }
            Equation::SizeBias => {
                quadrature::integrate_smooth(|u| law.biased_laplace(lambda * u), 0.0, 1.0)
            }
            Equation::Splitting => quadrature::integrate_smooth(
                |u| {
                    let l = law.laplace(lambda * u);
                    l * l
                },
                0.0,
                1.0,
            ),
        }
    }

    fn sample_lhs(&self, law: &TestLaw, rng: &mut SimRng) -> f64 {
        match self {
            Equation::SquareBias => law.sample_square_biased(rng),
            Equation::SizeBias | Equation::Splitting => law.sample(rng),
        }
    }

    fn sample_rhs(&self, law: &TestLaw, rng: &mut SimRng) -> f64 {
        match self {
            Equation::SquareBias => {
                let u: f64 = rng.random();
                law.sample_biased(rng) + u * law.sample_biased(rng)
            }
            Equation::SizeBias => {
                let u: f64 = rng.random();
                u * law.sample_biased(rng)
            }
            Equation::Splitting => {
                let u: f64 = rng.random();
                u * (law.sample(rng) + law.sample(rng))
            }
        }
    }
}

/// Tests the `x²`-type equation `Ÿ =ᵈ Ẏ + U·Ẏ'` for the given law.
pub fn check_square_bias_equation(law: &TestLaw, mode: &CheckMode) -> Result<ComparisonReport> {
    check_equation(Equation::SquareBias, law, mode)
}

/// Tests the `x`-type equation `Y =ᵈ U·Ẏ`.
pub fn check_size_bias_equation(law: &TestLaw, mode: &CheckMode) -> Result<ComparisonReport> {
    check_equation(Equation::SizeBias, law, mode)
}

/// Tests the splitting equation `Y =ᵈ U·(Y⁽¹⁾ + Y⁽²⁾)`.
pub fn check_splitting_equation(law: &TestLaw, mode: &CheckMode) -> Result<ComparisonReport> {
    check_equation(Equation::Splitting, law, mode)
}

/// Shared driver for the three equations.
pub fn check_equation(
    equation: Equation,
    law: &TestLaw,
    mode: &CheckMode,
) -> Result<ComparisonReport> {
    law.validate()?;
    match *mode {
        CheckMode::AnalyticGrid { lambdas, tol } => {
            if lambdas.is_empty() {
                return Err(Error::Domain("empty lambda grid".into()));
            }
            let sup_gap = lambdas
                .iter()
                .map(|&l| (equation.lhs_laplace(law, l) - equation.rhs_laplace(law, l)).abs())
                .fold(0.0, f64::max);
            Ok(ComparisonReport::new(
                equation.name(),
                "analytic_sup_gap",
                sup_gap,
                tol,
                vec![],
                None,
            ))
        }
        CheckMode::TwoSample {
            samples,
            significance,
            seed,
        } => {
            if samples == 0 {
                return Err(Error::Domain("two-sample mode needs samples > 0".into()));
            }
            // Independent streams keep the two sides independent of each
            // other, as the equations require.
            let mut lhs_rng = stream_rng(seed, 1);
            let mut rhs_rng = stream_rng(seed, 2);
            let lhs: Vec<f64> = (0..samples)
                .map(|_| equation.sample_lhs(law, &mut lhs_rng))
                .collect();
            let rhs: Vec<f64> = (0..samples)
                .map(|_| equation.sample_rhs(law, &mut rhs_rng))
                .collect();
            let ks = stats::two_sample_ks(&lhs, &rhs)?;
            let critical = stats::ks_critical_value(ks.n_effective, significance);
            Ok(ComparisonReport::new(
                equation.name(),
                "two_sample_ks",
                ks.statistic,
                critical,
                vec![lhs.len(), rhs.len()],
                Some(ks.p_value),
            ))
        }
    }
}

/// Checks the transform-distance bound for two non-negative variables with
/// the same mean `a`:
///
/// `|E[e^(-λX₀)] - E[e^(-λX₁)]| ≤ a·∫_0^λ |F₀(s) - F₁(s)| ds`
///
/// where `F_i` is the ratio of the size-biased transform to the plain one.
/// The right side is evaluated by adaptive quadrature; the reported value is
/// the maximal slack `lhs - rhs` over the grid, which must stay below the
/// quadrature tolerance.
pub fn transform_distance_bound(
    x0: &dyn LaplacePair,
    x1: &dyn LaplacePair,
    lambda_max: f64,
    grid_points: usize,
    quad_tol: f64,
) -> Result<ComparisonReport> {
    let a = x0.mean();
    if (a - x1.mean()).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "means differ: {} vs {}",
            a,
            x1.mean()
        )));
    }
    if lambda_max.is_nan() || lambda_max <= 0.0 || grid_points == 0 {
        return Err(Error::Domain(
            "need lambda_max > 0 and at least one grid point".into(),
        ));
    }
    let ratio_gap = |s: f64| (x0.ratio(s) - x1.ratio(s)).abs();
    let mut max_slack = f64::NEG_INFINITY;
    let mut integral = 0.0;
    let mut prev = 0.0;
    for i in 1..=grid_points {
        let lambda = lambda_max * i as f64 / grid_points as f64;
        integral += quadrature::integrate_adaptive(&ratio_gap, prev, lambda, quad_tol / 8.0);
        prev = lambda;
        let lhs = (x0.laplace(lambda) - x1.laplace(lambda)).abs();
        max_slack = max_slack.max(lhs - a * integral);
    }
    Ok(ComparisonReport::new(
        "transform_distance_bound",
        "max_slack",
        max_slack,
        quad_tol,
        vec![],
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::SpineIncrement;
    use crate::offspring::OffspringDistribution;

    const GRID: [f64; 9] = [0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0];

    #[test]
    fn sample_set_validation() {
        assert!(SampleSet::new(vec![], "x", 0).is_err());
        assert!(SampleSet::new(vec![1.0, -0.5], "x", 0).is_err());
        assert!(SampleSet::new(vec![1.0, f64::NAN], "x", 0).is_err());
        let s = SampleSet::new(vec![1.0, 3.0], "x", 7).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.mean(), 2.0);
    }

    #[test]
    fn empirical_laplace_values() {
        let s = SampleSet::new(vec![2.0, 2.0, 2.0], "constant", 0).unwrap();
        let t = empirical_laplace(&s, &[0.0, 1.0]).unwrap();
        assert_eq!(t.rows[0].value, 1.0);
        assert!((t.rows[1].value - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn empirical_laplace_of_exponential_draws() {
        let law = TestLaw::Exponential { mean: 1.0 };
        let mut rng = stream_rng(3, 0);
        let values: Vec<f64> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
        let s = SampleSet::new(values, "exp", 3).unwrap();
        let t = empirical_laplace(&s, &[1.0]).unwrap();
        assert!((t.rows[0].value - 0.5).abs() < 0.002, "{}", t.rows[0].value);
        // Importance-weighted size-biased transform: 1/(1+λ)² at λ = 1.
        let biased = empirical_biased_laplace(&s, 1.0);
        assert!((biased - 0.25).abs() < 0.002, "{biased}");
    }

    #[test]
    fn square_bias_equation_exponential_fixed_point() {
        let law = TestLaw::Exponential { mean: 1.0 };
        // Closed forms at λ = θ = 1: both sides are exactly 1/8.
        assert_eq!(law.square_biased_laplace(1.0), 0.125);
        assert!((Equation::SquareBias.rhs_laplace(&law, 1.0) - 0.125).abs() < 1e-13);
        assert_eq!(Equation::SquareBias.lhs_laplace(&law, 0.0), 1.0);

        let report = check_square_bias_equation(
            &law,
            &CheckMode::AnalyticGrid {
                lambdas: &GRID,
                tol: 1e-12,
            },
        )
        .unwrap();
        assert!(report.pass, "sup gap {}", report.value);
    }

    #[test]
    fn square_bias_equation_rejects_uniform() {
        let law = TestLaw::Uniform { lo: 0.0, hi: 1.0 };
        let report = check_square_bias_equation(
            &law,
            &CheckMode::AnalyticGrid {
                lambdas: &GRID,
                tol: 0.01,
            },
        )
        .unwrap();
        assert!(!report.pass, "uniform should fail, sup gap {}", report.value);
        assert!(report.value > 0.01);
    }

    #[test]
    fn size_bias_equation_values() {
        let law = TestLaw::Exponential { mean: 1.0 };
        assert_eq!(Equation::SizeBias.lhs_laplace(&law, 1.0), 0.5);
        assert!((Equation::SizeBias.rhs_laplace(&law, 1.0) - 0.5).abs() < 1e-13);
        let report = check_size_bias_equation(
            &law,
            &CheckMode::AnalyticGrid {
                lambdas: &GRID,
                tol: 1e-12,
            },
        )
        .unwrap();
        assert!(report.pass);

        // Constant 1: LHS e^(-λ) vs RHS (1 - e^(-λ))/λ, gap > 0.1 at λ = 1.
        let constant = TestLaw::Constant { value: 1.0 };
        let lhs = Equation::SizeBias.lhs_laplace(&constant, 1.0);
        let rhs = Equation::SizeBias.rhs_laplace(&constant, 1.0);
        assert!((lhs - (-1.0f64).exp()).abs() < 1e-14);
        assert!((rhs - (1.0 - (-1.0f64).exp())).abs() < 1e-13);
        assert!((lhs - rhs).abs() > 0.1);
    }

    #[test]
    fn splitting_equation_two_sample() {
        let mode = CheckMode::TwoSample {
            samples: 100_000,
            significance: 0.001,
            seed: 17,
        };
        let exp = TestLaw::Exponential { mean: 1.0 };
        let report = check_splitting_equation(&exp, &mode).unwrap();
        assert!(report.pass, "p = {:?}", report.p_value);

        // Constant 1: the right side is uniform on (0, 2).
        let constant = TestLaw::Constant { value: 1.0 };
        let report = check_splitting_equation(&constant, &mode).unwrap();
        assert!(!report.pass);

        let uniform = TestLaw::Uniform { lo: 0.0, hi: 1.0 };
        let report = check_splitting_equation(&uniform, &mode).unwrap();
        assert!(!report.pass);

        // Degenerate law rejected by the strict-positivity precondition.
        assert!(check_splitting_equation(&TestLaw::Constant { value: 0.0 }, &mode).is_err());
    }

    #[test]
    fn all_equations_two_sample_fixed_point_and_power() {
        let mode = CheckMode::TwoSample {
            samples: 100_000,
            significance: 0.001,
            seed: 29,
        };
        let exp = TestLaw::Exponential { mean: 0.5 };
        for eq in [Equation::SquareBias, Equation::SizeBias, Equation::Splitting] {
            let report = check_equation(eq, &exp, &mode).unwrap();
            assert!(report.pass, "{eq:?} p = {:?}", report.p_value);
        }
        for law in [
            TestLaw::Uniform { lo: 0.0, hi: 1.0 },
            TestLaw::Constant { value: 1.0 },
        ] {
            for eq in [Equation::SquareBias, Equation::SizeBias, Equation::Splitting] {
                let report = check_equation(eq, &law, &mode).unwrap();
                assert!(!report.pass, "{eq:?} should reject {law:?}");
            }
        }
    }

    #[test]
    fn empty_grid_is_domain_error() {
        let law = TestLaw::Exponential { mean: 1.0 };
        assert!(check_square_bias_equation(
            &law,
            &CheckMode::AnalyticGrid {
                lambdas: &[],
                tol: 1e-12
            }
        )
        .is_err());
    }

    #[test]
    fn transform_bound_identical_laws_is_tight_zero() {
        let a = TestLaw::Exponential { mean: 1.0 };
        let report = transform_distance_bound(&a, &a, 5.0, 20, 1e-6).unwrap();
        assert!(report.pass);
        assert!(report.value.abs() < 1e-9, "slack {}", report.value);
    }

    #[test]
    fn transform_bound_exponential_vs_constant() {
        let x0 = TestLaw::Exponential { mean: 1.0 };
        let x1 = TestLaw::Constant { value: 1.0 };
        let report = transform_distance_bound(&x0, &x1, 5.0, 25, 1e-6).unwrap();
        assert!(report.pass, "slack {}", report.value);
        // The right side is strictly positive here: F0 = 1/(1+s), F1 = 1.
        let rhs = quadrature::integrate_adaptive(
            &|s: f64| (x0.ratio(s) - x1.ratio(s)).abs(),
            0.0,
            5.0,
            1e-9,
        );
        assert!(((5.0f64 + 1.0).ln() - (5.0 - rhs)).abs() < 1e-7);
        assert!(rhs > 3.0);
    }

    #[test]
    fn transform_bound_spine_increment_vs_gamma() {
        // (Ż_n - 1)/n for binary offspring at n = 100 against the Gamma
        // limit with shape 2 and scale σ²/2; both have mean σ² = 1.
        let d = OffspringDistribution::binary(0.5).unwrap();
        let pair = SpineIncrement::new(&d, 100).unwrap();
        let gamma = TestLaw::Gamma {
            shape: 2.0,
            scale: 0.5,
        };
        let report = transform_distance_bound(&pair, &gamma, 10.0, 25, 1e-6).unwrap();
        assert!(report.pass, "slack {}", report.value);
    }

    #[test]
    fn transform_bound_rejects_mean_mismatch() {
        let x0 = TestLaw::Exponential { mean: 1.0 };
        let x1 = TestLaw::Constant { value: 2.0 };
        assert!(matches!(
            transform_distance_bound(&x0, &x1, 5.0, 10, 1e-6),
            Err(Error::Precondition(_))
        ));
    }
}

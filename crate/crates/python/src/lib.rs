//! Python bindings: exposes the offspring laws, the exact
//! generating-function engine, the spine samplers, and the enumeration
//! checks as a `gwspine_py` extension module.
//!
//! Scalar results come back as plain Python numbers and lists; structured
//! reports come back as JSON strings so Python callers can `json.loads`
//! them without a type shim.

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use gwspine::analysis::{check_equation, CheckMode, Equation, TestLaw};
use gwspine::exact::{self, MeanMethod, SizeBiasedMethod, TwoSpineMethod};
use gwspine::rng::stream_rng;
use gwspine::tree::{self, BiasOrder, MeasureReport, DEFAULT_ENUMERATION_CAP};
use gwspine::{BiasedKind, OffspringDistribution, OffspringSpec};

fn value_error(err: gwspine::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_bias(kind: &str) -> PyResult<BiasedKind> {
    match kind {
        "plain" => Ok(BiasedKind::Plain),
        "first_order" => Ok(BiasedKind::FirstOrder),
        "second_factorial" => Ok(BiasedKind::SecondFactorial),
        other => Err(PyValueError::new_err(format!(
            "unknown bias kind {other:?}; expected plain, first_order, or second_factorial"
        ))),
    }
}

fn parse_order(order: u8) -> PyResult<BiasOrder> {
    match order {
        1 => Ok(BiasOrder::First),
        2 => Ok(BiasOrder::Second),
        other => Err(PyValueError::new_err(format!(
            "order must be 1 or 2, got {other}"
        ))),
    }
}

/// A finitely supported offspring law.
#[pyclass(name = "Offspring", from_py_object)]
#[derive(Clone)]
struct PyOffspring {
    inner: OffspringDistribution,
}

#[pymethods]
impl PyOffspring {
    /// Builds from a list of non-negative weights (normalized internally).
    #[new]
    fn new(weights: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: OffspringDistribution::from_weights(&weights).map_err(value_error)?,
        })
    }

    /// The binary law μ(0) = 1-p, μ(2) = p; p = 1/2 is critical.
    #[staticmethod]
    #[pyo3(signature = (p = 0.5))]
    fn binary(p: f64) -> PyResult<Self> {
        Ok(Self {
            inner: OffspringDistribution::binary(p).map_err(value_error)?,
        })
    }

    /// Truncated geometric law; p = 1/2 is the critical member with σ² = 2.
    #[staticmethod]
    #[pyo3(signature = (p = 0.5, truncate = 50))]
    fn geometric(p: f64, truncate: usize) -> PyResult<Self> {
        Ok(Self {
            inner: OffspringDistribution::geometric(p, truncate).map_err(value_error)?,
        })
    }

    /// Truncated Poisson law; rate 1 is the critical member.
    #[staticmethod]
    #[pyo3(signature = (rate = 1.0, truncate = 40))]
    fn poisson(rate: f64, truncate: usize) -> PyResult<Self> {
        Ok(Self {
            inner: OffspringDistribution::poisson(rate, truncate).map_err(value_error)?,
        })
    }

    /// Builds from the JSON offspring specification used by the CLI:
    /// either `[w0, w1, ...]` or `{"family": ..., ...}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: OffspringSpec =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: spec.build().map_err(value_error)?,
        })
    }

    fn pmf(&self, k: usize) -> f64 {
        self.inner.pmf(k)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    /// Second factorial moment Σ k(k-1)μ(k) (the variance σ² when the
    /// mean is 1).
    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn max_support(&self) -> usize {
        self.inner.max_support()
    }

    fn is_critical(&self) -> bool {
        self.inner.is_critical()
    }

    /// Generating function f(s).
    fn pgf(&self, s: f64) -> PyResult<f64> {
        self.inner.pgf(s).map_err(value_error)
    }

    /// f'(s) or f''(s).
    fn pgf_derivative(&self, s: f64, order: u8) -> PyResult<f64> {
        self.inner.pgf_derivative(s, order).map_err(value_error)
    }

    /// The biased law: "plain", "first_order" (k·μ(k)), or
    /// "second_factorial" (k(k-1)·μ(k)/σ²).
    fn biased(&self, kind: &str) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.biased(parse_bias(kind)?).map_err(value_error)?,
        })
    }

    /// Reproducible draws from the selected biased law.
    #[pyo3(signature = (count, seed, kind = "plain"))]
    fn sample(&self, count: usize, seed: u64, kind: &str) -> PyResult<Vec<u32>> {
        let law = self.inner.biased(parse_bias(kind)?).map_err(value_error)?;
        let mut rng = stream_rng(seed, 0);
        Ok((0..count).map(|_| law.sample(&mut rng)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Offspring(max_support={}, mean={}, variance={}, critical={})",
            self.inner.max_support(),
            self.inner.mean(),
            self.inner.variance(),
            self.inner.is_critical()
        )
    }
}

/// Monte Carlo generators for one offspring law.
#[pyclass(name = "Sampler")]
struct PySampler {
    inner: gwspine::Sampler,
}

#[pymethods]
impl PySampler {
    #[new]
    fn new(offspring: PyOffspring) -> PyResult<Self> {
        Ok(Self {
            inner: gwspine::Sampler::new(&offspring.inner).map_err(value_error)?,
        })
    }

    /// One plain path (Z_0, ..., Z_n).
    fn population_path(&self, n: usize, seed: u64) -> PyResult<Vec<u64>> {
        let mut rng = stream_rng(seed, 0);
        Ok(self
            .inner
            .sample_path(n, &mut rng)
            .map_err(value_error)?
            .sizes)
    }

    /// One one-spine path (Ż_0, ..., Ż_n).
    fn spined_path(&self, n: usize, seed: u64) -> PyResult<Vec<u64>> {
        let mut rng = stream_rng(seed, 0);
        Ok(self
            .inner
            .sample_spined_path(n, &mut rng)
            .map_err(value_error)?
            .sizes)
    }

    /// One two-spine path and its split generation: ((Z̈_0, ..., Z̈_n), K).
    fn two_spined_path(&self, n: usize, seed: u64) -> PyResult<(Vec<u64>, u32)> {
        let mut rng = stream_rng(seed, 0);
        let (path, split) = self
            .inner
            .sample_two_spined_path(n, &mut rng)
            .map_err(value_error)?;
        Ok((path.sizes, split))
    }

    /// Batch of terminal populations Z_n.
    #[pyo3(signature = (n, runs, seed, workers = 1))]
    fn populations(&self, n: usize, runs: u64, seed: u64, workers: usize) -> PyResult<Vec<u64>> {
        self.inner
            .plain_population_sample(n, runs, seed, workers)
            .map_err(value_error)
    }

    /// Batch of (K_n, Z̈_n) pairs from the two-spine sampler.
    #[pyo3(signature = (n, runs, seed, workers = 1))]
    fn two_spined_populations(
        &self,
        n: usize,
        runs: u64,
        seed: u64,
        workers: usize,
    ) -> PyResult<Vec<(u32, u64)>> {
        self.inner
            .two_spined_population_sample(n, runs, seed, workers)
            .map_err(value_error)
    }

    /// Rejection sample of Z_n/n conditioned on survival. Returns
    /// (values, attempts, acceptance_rate).
    #[pyo3(signature = (n, attempts, seed, workers = 1))]
    fn conditioned_sample(
        &self,
        n: usize,
        attempts: u64,
        seed: u64,
        workers: usize,
    ) -> PyResult<(Vec<f64>, u64, f64)> {
        let sample = self
            .inner
            .conditioned_population_sample(n, attempts, seed, workers)
            .map_err(value_error)?;
        Ok((sample.normalized, sample.attempts, sample.acceptance_rate))
    }
}

/// Extinction probabilities q_0, ..., q_n.
#[pyfunction]
fn extinction_probs(offspring: PyOffspring, n: usize) -> PyResult<Vec<f64>> {
    exact::extinction_probs(&offspring.inner, n).map_err(value_error)
}

/// Survival probabilities p_0, ..., p_n.
#[pyfunction]
fn survival_probs(offspring: PyOffspring, n: usize) -> PyResult<Vec<f64>> {
    exact::survival_probs(&offspring.inner, n).map_err(value_error)
}

/// The normalized sequence m·p_m·σ²/2 for m = 0..n.
#[pyfunction]
fn kolmogorov_sequence(offspring: PyOffspring, n: usize) -> PyResult<Vec<f64>> {
    exact::kolmogorov_sequence(&offspring.inner, n).map_err(value_error)
}

/// E[Z_n | Z_n > 0] by "direct" (1/p_n) or "recursion".
#[pyfunction]
#[pyo3(signature = (offspring, n, method = "direct"))]
fn conditional_mean(offspring: PyOffspring, n: usize, method: &str) -> PyResult<f64> {
    let method = match method {
        "direct" => MeanMethod::Direct,
        "recursion" => MeanMethod::Recursion,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other:?}; expected direct or recursion"
            )))
        }
    };
    exact::conditional_mean(&offspring.inner, n, method).map_err(value_error)
}

/// E[exp(-λ Z_n)].
#[pyfunction]
fn laplace_population(offspring: PyOffspring, n: usize, lam: f64) -> PyResult<f64> {
    exact::laplace_population(&offspring.inner, n, lam).map_err(value_error)
}

/// E[exp(-λ Ż_n)] by "product" or "derivative".
#[pyfunction]
#[pyo3(signature = (offspring, n, lam, method = "derivative"))]
fn laplace_size_biased(offspring: PyOffspring, n: usize, lam: f64, method: &str) -> PyResult<f64> {
    let method = match method {
        "product" => SizeBiasedMethod::Product,
        "derivative" => SizeBiasedMethod::Derivative,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other:?}; expected product or derivative"
            )))
        }
    };
    exact::laplace_size_biased(&offspring.inner, n, lam, method).map_err(value_error)
}

/// E[exp(-λ Z̈_n)] by "decomposition" or "factorial_moment".
#[pyfunction]
#[pyo3(signature = (offspring, n, lam, method = "decomposition"))]
fn laplace_two_spine(offspring: PyOffspring, n: usize, lam: f64, method: &str) -> PyResult<f64> {
    let method = match method {
        "decomposition" => TwoSpineMethod::Decomposition,
        "factorial_moment" => TwoSpineMethod::FactorialMoment,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other:?}; expected decomposition or factorial_moment"
            )))
        }
    };
    exact::laplace_two_spine(&offspring.inner, n, lam, method).map_err(value_error)
}

/// E[Z_n(Z_n - 1)] = (f^(n))''(1), which equals nσ² for critical laws.
#[pyfunction]
fn second_factorial_moment(offspring: PyOffspring, n: usize) -> PyResult<f64> {
    exact::second_factorial_moment(&offspring.inner, n).map_err(value_error)
}

/// E[exp(-λ Z_n/n) | Z_n > 0].
#[pyfunction]
fn yaglom_conditional(offspring: PyOffspring, n: usize, lam: f64) -> PyResult<f64> {
    exact::yaglom_conditional(&offspring.inner, n, lam).map_err(value_error)
}

/// The exponential-limit transform 1/(1 + σ²λ/2).
#[pyfunction]
fn yaglom_limit(offspring: PyOffspring, lam: f64) -> f64 {
    exact::yaglom_limit(&offspring.inner, lam)
}

/// Per-tree measure table over the enumerated height-n tree space, as a
/// JSON string with rows (tree_id, x_n, gw, first_order, second_order).
#[pyfunction]
#[pyo3(signature = (offspring, n, max_trees = DEFAULT_ENUMERATION_CAP))]
fn measure_report(offspring: PyOffspring, n: usize, max_trees: u64) -> PyResult<String> {
    let report = MeasureReport::build(&offspring.inner, n, max_trees).map_err(value_error)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Verifies the change of measure for a Python functional g acting on the
/// population path (Z_1, ..., Z_n). Returns (lhs, rhs, gap).
#[pyfunction]
#[pyo3(signature = (offspring, n, g, order = 2, max_trees = DEFAULT_ENUMERATION_CAP))]
fn verify_change_of_measure(
    offspring: PyOffspring,
    n: usize,
    g: Bound<'_, PyAny>,
    order: u8,
    max_trees: u64,
) -> PyResult<(f64, f64, f64)> {
    let order = parse_order(order)?;
    // Evaluate the Python functional once per distinct path, then hand the
    // enumeration a pure lookup.
    let paths: Vec<Vec<u64>> = tree::path_law(&offspring.inner, n, None, max_trees)
        .map_err(value_error)?
        .into_keys()
        .collect();
    let mut table: HashMap<Vec<u64>, f64> = HashMap::with_capacity(paths.len());
    for path in paths {
        let value: f64 = g.call1((path.clone(),))?.extract()?;
        table.insert(path, value);
    }
    let lookup = |path: &[u64]| table[path];
    let check = tree::verify_change_of_measure(&offspring.inner, n, &lookup, order, max_trees)
        .map_err(value_error)?;
    Ok((check.lhs, check.rhs, check.gap))
}

/// Runs one exponential-characterization equation ("square_bias",
/// "size_bias", or "splitting") for a law given as JSON, in either
/// "analytic" or "two_sample" mode. Returns the ComparisonReport as JSON.
#[pyfunction]
#[pyo3(signature = (law_json, equation, mode = "analytic", lambdas = None, samples = 100_000, significance = 0.001, seed = 42, tol = 1e-9))]
#[allow(clippy::too_many_arguments)]
fn characterize_equation(
    law_json: &str,
    equation: &str,
    mode: &str,
    lambdas: Option<Vec<f64>>,
    samples: usize,
    significance: f64,
    seed: u64,
    tol: f64,
) -> PyResult<String> {
    let law: TestLaw =
        serde_json::from_str(law_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let equation = match equation {
        "square_bias" => Equation::SquareBias,
        "size_bias" => Equation::SizeBias,
        "splitting" => Equation::Splitting,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown equation {other:?}"
            )))
        }
    };
    let lambdas = lambdas.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]);
    let mode = match mode {
        "analytic" => CheckMode::AnalyticGrid {
            lambdas: &lambdas,
            tol,
        },
        "two_sample" => CheckMode::TwoSample {
            samples,
            significance,
            seed,
        },
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let report = check_equation(equation, &law, &mode).map_err(value_error)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn gwspine_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyOffspring>()?;
    m.add_class::<PySampler>()?;
    m.add_function(wrap_pyfunction!(extinction_probs, m)?)?;
    m.add_function(wrap_pyfunction!(survival_probs, m)?)?;
    m.add_function(wrap_pyfunction!(kolmogorov_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(conditional_mean, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_population, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_size_biased, m)?)?;
    m.add_function(wrap_pyfunction!(laplace_two_spine, m)?)?;
    m.add_function(wrap_pyfunction!(second_factorial_moment, m)?)?;
    m.add_function(wrap_pyfunction!(yaglom_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(yaglom_limit, m)?)?;
    m.add_function(wrap_pyfunction!(measure_report, m)?)?;
    m.add_function(wrap_pyfunction!(verify_change_of_measure, m)?)?;
    m.add_function(wrap_pyfunction!(characterize_equation, m)?)?;
    Ok(())
}

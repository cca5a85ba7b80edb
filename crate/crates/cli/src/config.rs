//! Experiment configuration: a single JSON document whose fields mirror the
//! command-line flags; flags take precedence over the file. Unknown keys are
//! rejected so a manifest typo cannot silently change an experiment.

use std::path::PathBuf;

use serde::Deserialize;

use gwspine::analysis::TestLaw;
use gwspine::OffspringSpec;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Offspring specification: a weight list or a named family object.
    pub offspring: Option<OffspringSpec>,
    /// Generation horizon.
    pub n: Option<usize>,
    /// Schedule of horizons (kolmogorov).
    pub n_schedule: Option<Vec<usize>>,
    /// Monte Carlo run count.
    pub samples: Option<u64>,
    /// Surviving-run target for conditioned sampling (yaglom).
    pub target_survivors: Option<u64>,
    /// Hard cap on rejection attempts (yaglom).
    pub max_attempts: Option<u64>,
    /// λ grid for transform comparisons.
    pub lambda_grid: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Verification tolerance on the command's headline gap.
    pub tolerance: Option<f64>,
    /// Significance level for hypothesis tests.
    pub significance: Option<f64>,
    /// Bias order for change-of-measure checks: 1 or 2.
    pub order: Option<u8>,
    /// Number of random bounded functionals in the battery.
    pub functionals: Option<usize>,
    /// Reference law for the characterization checks.
    pub law: Option<TestLaw>,
    pub out_dir: Option<PathBuf>,
    /// Retain and export full tree shapes (simulate).
    pub keep_trees: Option<bool>,
    /// Monte Carlo agreement band in standard errors (two-spine).
    pub mc_sigma: Option<f64>,
    /// Enumeration bound override.
    pub max_trees: Option<u64>,
    /// Per-generation population bound override.
    pub population_cap: Option<u64>,
    /// Which sampler `simulate` runs: plain, spined, or two-spined.
    pub sampler: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }
}

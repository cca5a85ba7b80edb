//! The six experiment commands. Each resolves its inputs from the merged
//! configuration, writes its artifacts under the output directory, prints a
//! one-line verdict, and returns `Ok(pass)`; input problems surface as
//! `Err` and exit code 2.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::Rng;

use gwspine::analysis::stats::ks_statistic;
use gwspine::analysis::{check_equation, CheckMode, ComparisonReport, Equation, TestLaw};
use gwspine::exact;
use gwspine::rng::stream_rng;
use gwspine::tree::{self, BiasOrder, MeasureReport, DEFAULT_ENUMERATION_CAP};
use gwspine::{OffspringDistribution, Sampler};

use crate::config::ExperimentConfig;
use crate::output::{fmt, write_json, CsvOut};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

struct Resolved {
    dist: OffspringDistribution,
    offspring_json: String,
    seed: u64,
    workers: usize,
    out_dir: PathBuf,
}

fn resolve(config: &ExperimentConfig) -> Result<Resolved, String> {
    let spec = config
        .offspring
        .clone()
        .ok_or("missing offspring specification (flag --offspring or config key)")?;
    let dist = spec.build().map_err(|e| e.to_string())?;
    let offspring_json = serde_json::to_string(&spec).unwrap();
    Ok(Resolved {
        dist,
        offspring_json,
        seed: config.seed.unwrap_or(DEFAULT_SEED),
        workers: config
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
        out_dir: config
            .out_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("gwspine-out")),
    })
}

fn lambda_grid(config: &ExperimentConfig) -> Result<Vec<f64>, String> {
    let grid = config
        .lambda_grid
        .clone()
        .unwrap_or_else(|| DEFAULT_LAMBDA_GRID.to_vec());
    if grid.is_empty() {
        return Err("empty lambda grid".into());
    }
    if grid.iter().any(|&l| l.is_nan() || l < 0.0) {
        return Err("lambda grid must be non-negative".into());
    }
    Ok(grid)
}

pub fn kolmogorov(config: &ExperimentConfig) -> Result<bool, String> {
    let resolved = resolve(config)?;
    let schedule = config
        .n_schedule
        .clone()
        .or_else(|| config.n.map(|n| vec![n]))
        .unwrap_or_else(|| vec![10, 100, 1000, 10_000]);
    if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err("n schedule must be non-empty and strictly increasing".into());
    }
    let tolerance = config.tolerance.unwrap_or(0.01);
    let horizon = *schedule.last().unwrap();
    let sequence =
        exact::kolmogorov_sequence(&resolved.dist, horizon).map_err(|e| e.to_string())?;

    let mut csv = CsvOut::create(
        &resolved.out_dir,
        "kolmogorov.csv",
        "kolmogorov",
        resolved.seed,
        &[("offspring", resolved.offspring_json.clone())],
        "n,normalized_survival",
    )?;
    for &n in &schedule {
        csv.row(&[n.to_string(), fmt(sequence[n])])?;
    }
    let path = csv.finish()?;

    let final_gap = (sequence[horizon] - 1.0).abs();
    let pass = final_gap <= tolerance;
    println!(
        "kolmogorov: final |n·p_n·sigma^2/2 - 1| = {final_gap:.3e} (tolerance {tolerance}) -> {} [{}]",
        verdict(pass),
        path.display()
    );
    Ok(pass)
}

pub fn yaglom(config: &ExperimentConfig) -> Result<bool, String> {
    let resolved = resolve(config)?;
    let n = config.n.unwrap_or(2000);
    if n == 0 {
        return Err("yaglom needs n >= 1".into());
    }
    let grid = lambda_grid(config)?;
    let tolerance = config.tolerance.unwrap_or(0.01);
    let significance = config.significance.unwrap_or(0.001);
    let target = config.target_survivors.unwrap_or(10_000);

    // Budget rejection attempts from the exact survival probability.
    let survival = exact::survival_probs(&resolved.dist, n).map_err(|e| e.to_string())?[n];
    let mut attempts = (target as f64 * 1.05 / survival).ceil() as u64;
    if let Some(cap) = config.max_attempts {
        attempts = attempts.min(cap);
    }

    let mut sampler = Sampler::new(&resolved.dist).map_err(|e| e.to_string())?;
    if let Some(cap) = config.population_cap {
        sampler = sampler.with_population_cap(cap);
    }
    let sample = sampler
        .conditioned_population_sample(n, attempts, resolved.seed, resolved.workers)
        .map_err(|e| e.to_string())?;
    if sample.survivors == 0 {
        return Err(format!("no surviving runs in {attempts} attempts"));
    }

    let mut csv = CsvOut::create(
        &resolved.out_dir,
        "yaglom.csv",
        "yaglom",
        resolved.seed,
        &[
            ("offspring", resolved.offspring_json.clone()),
            ("n", n.to_string()),
            ("survivors", sample.survivors.to_string()),
            ("attempts", sample.attempts.to_string()),
            ("acceptance_rate", format!("{:.3e}", sample.acceptance_rate)),
        ],
        "lambda,exact_conditional,monte_carlo,limit",
    )?;
    let mut sup_gap = 0.0f64;
    for &lambda in &grid {
        let exact_value =
            exact::yaglom_conditional(&resolved.dist, n, lambda).map_err(|e| e.to_string())?;
        let limit = exact::yaglom_limit(&resolved.dist, lambda);
        let monte_carlo = sample
            .normalized
            .iter()
            .map(|&x| (-lambda * x).exp())
            .sum::<f64>()
            / sample.survivors as f64;
        sup_gap = sup_gap.max((exact_value - limit).abs());
        csv.row(&[fmt(lambda), fmt(exact_value), fmt(monte_carlo), fmt(limit)])?;
    }
    let path = csv.finish()?;

    // Conditioned sample against the exponential law with mean sigma^2/2.
    let mean = resolved.dist.variance() / 2.0;
    let ks = ks_statistic(&sample.normalized, |x| -(-x / mean).exp_m1())
        .map_err(|e| e.to_string())?;
    let pass = sup_gap <= tolerance && ks.p_value > significance;
    println!(
        "yaglom: exact-vs-limit sup gap {sup_gap:.3e} (tolerance {tolerance}), \
         KS p = {:.4} over {} survivors (acceptance rate {:.3e}) -> {} [{}]",
        ks.p_value,
        sample.survivors,
        sample.acceptance_rate,
        verdict(pass),
        path.display()
    );
    Ok(pass)
}

pub fn change_of_measure(config: &ExperimentConfig) -> Result<bool, String> {
    let resolved = resolve(config)?;
    let n = config.n.ok_or("missing n")?;
    let order = match config.order.unwrap_or(2) {
        1 => BiasOrder::First,
        2 => BiasOrder::Second,
        other => return Err(format!("order must be 1 or 2, got {other}")),
    };
    if n == 0 && order == BiasOrder::Second {
        return Err("the two-spine measure needs n >= 1".into());
    }
    let functional_count = config.functionals.unwrap_or(20);
    let tolerance = config.tolerance.unwrap_or(1e-10);
    let max_trees = config.max_trees.unwrap_or(DEFAULT_ENUMERATION_CAP);

    let report =
        MeasureReport::build(&resolved.dist, n, max_trees).map_err(|e| e.to_string())?;
    let mut csv = CsvOut::create(
        &resolved.out_dir,
        "change_of_measure.csv",
        "change-of-measure",
        resolved.seed,
        &[
            ("offspring", resolved.offspring_json.clone()),
            ("n", n.to_string()),
        ],
        "tree_id,x_n,gw,first_order,second_order",
    )?;
    for row in &report.rows {
        csv.row(&[
            row.tree_id.to_string(),
            row.population.to_string(),
            fmt(row.gw),
            fmt(row.first_order),
            row.second_order.map(fmt).unwrap_or_default(),
        ])?;
    }
    let path = csv.finish()?;

    // Total masses of all defined measures must normalize.
    let mut mass_gap = (report.total_gw - 1.0).abs().max((report.total_first - 1.0).abs());
    if let Some(second) = report.total_second {
        mass_gap = mass_gap.max((second - 1.0).abs());
    }

    // Battery of random bounded functionals on population paths.
    let mut rng = stream_rng(resolved.seed, 0);
    let paths: Vec<Vec<u64>> = tree::path_law(&resolved.dist, n, None, max_trees)
        .map_err(|e| e.to_string())?
        .into_keys()
        .collect();
    let mut max_gap = 0.0f64;
    for _ in 0..functional_count {
        let table: HashMap<Vec<u64>, f64> = paths
            .iter()
            .map(|p| (p.clone(), rng.random::<f64>()))
            .collect();
        let g = |path: &[u64]| table[path];
        let check = tree::verify_change_of_measure(&resolved.dist, n, &g, order, max_trees)
            .map_err(|e| e.to_string())?;
        max_gap = max_gap.max(check.gap);
    }

    let pass = max_gap <= tolerance && mass_gap <= 1e-10;
    println!(
        "change-of-measure: battery of {functional_count} functionals max gap {max_gap:.3e} \
         (tolerance {tolerance:.0e}), measure masses off by {mass_gap:.3e} -> {} [{}]",
        verdict(pass),
        path.display()
    );
    Ok(pass)
}

pub fn two_spine(config: &ExperimentConfig) -> Result<bool, String> {
    let resolved = resolve(config)?;
    let n = config.n.unwrap_or(50);
    if n == 0 {
        return Err("two-spine needs n >= 1".into());
    }
    let grid = lambda_grid(config)?;
    let samples = config.samples.unwrap_or(1_000_000);
    if samples == 0 {
        return Err("two-spine needs samples >= 1".into());
    }
    let tolerance = config.tolerance.unwrap_or(1e-10);
    let mc_sigma = config.mc_sigma.unwrap_or(3.0);

    let sampler = Sampler::new(&resolved.dist).map_err(|e| e.to_string())?;
    let populations: Vec<u64> = sampler
        .two_spined_population_sample(n, samples, resolved.seed, resolved.workers)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|(_, z)| z)
        .collect();

    let mut csv = CsvOut::create(
        &resolved.out_dir,
        "two_spine.csv",
        "two-spine",
        resolved.seed,
        &[
            ("offspring", resolved.offspring_json.clone()),
            ("n", n.to_string()),
            ("samples", samples.to_string()),
        ],
        "lambda,decomposition,factorial_moment,monte_carlo,mc_stderr",
    )?;
    let mut exact_gap = 0.0f64;
    let mut mc_ok = true;
    for &lambda in &grid {
        let decomposition =
            exact::laplace_two_spine(&resolved.dist, n, lambda, exact::TwoSpineMethod::Decomposition)
                .map_err(|e| e.to_string())?;
        let factorial =
            exact::laplace_two_spine(&resolved.dist, n, lambda, exact::TwoSpineMethod::FactorialMoment)
                .map_err(|e| e.to_string())?;
        exact_gap = exact_gap.max((decomposition - factorial).abs());
        let count = populations.len() as f64;
        let mean = populations
            .iter()
            .map(|&z| (-lambda * z as f64).exp())
            .sum::<f64>()
            / count;
        let var = populations
            .iter()
            .map(|&z| ((-lambda * z as f64).exp() - mean).powi(2))
            .sum::<f64>()
            / (count - 1.0);
        let stderr = (var / count).sqrt();
        // The 1e-12 floor keeps degenerate cases (a constant sample has
        // stderr 0) from failing on float accumulation noise.
        mc_ok &= (mean - decomposition).abs() <= mc_sigma * stderr + 1e-12;
        csv.row(&[
            fmt(lambda),
            fmt(decomposition),
            fmt(factorial),
            fmt(mean),
            fmt(stderr),
        ])?;
    }
    let path = csv.finish()?;

    let pass = exact_gap <= tolerance && mc_ok;
    println!(
        "two-spine: decomposition vs factorial-moment gap {exact_gap:.3e} (tolerance {tolerance:.0e}), \
         Monte Carlo within {mc_sigma} stderr: {mc_ok} -> {} [{}]",
        verdict(pass),
        path.display()
    );
    Ok(pass)
}

pub fn characterize(config: &ExperimentConfig) -> Result<bool, String> {
    let law = config.law.unwrap_or(TestLaw::Exponential { mean: 1.0 });
    law.validate().map_err(|e| e.to_string())?;
    let grid = lambda_grid(config)?;
    let samples = config.samples.unwrap_or(1_000_000);
    let significance = config.significance.unwrap_or(0.001);
    let tolerance = config.tolerance.unwrap_or(1e-9);
    let seed = config.seed.unwrap_or(DEFAULT_SEED);
    let out_dir = config
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("gwspine-out"));

    let mut reports: Vec<ComparisonReport> = Vec::new();
    let mut pass = true;
    for equation in [Equation::SquareBias, Equation::SizeBias, Equation::Splitting] {
        let analytic = check_equation(
            equation,
            &law,
            &CheckMode::AnalyticGrid {
                lambdas: &grid,
                tol: tolerance,
            },
        )
        .map_err(|e| e.to_string())?;
        let empirical = check_equation(
            equation,
            &law,
            &CheckMode::TwoSample {
                samples: samples as usize,
                significance,
                seed,
            },
        )
        .map_err(|e| e.to_string())?;
        pass &= analytic.pass && empirical.pass;
        reports.push(analytic);
        reports.push(empirical);
    }

    let path = write_json(
        &out_dir,
        "characterize.json",
        "characterize",
        seed,
        serde_json::json!({
            "law": law,
            "pass": pass,
            "checks": reports,
        }),
    )?;
    println!(
        "characterize: {:?} satisfies all three equations: {} -> {} [{}]",
        law,
        pass,
        verdict(pass),
        path.display()
    );
    Ok(pass)
}

pub fn simulate(config: &ExperimentConfig) -> Result<bool, String> {
    let resolved = resolve(config)?;
    let n = config.n.unwrap_or(10);
    let runs = config.samples.unwrap_or(1000);
    let kind = config.sampler.clone().unwrap_or_else(|| "plain".into());
    let keep_trees = config.keep_trees.unwrap_or(false);

    let mut sampler = Sampler::new(&resolved.dist).map_err(|e| e.to_string())?;
    if let Some(cap) = config.population_cap {
        sampler = sampler.with_population_cap(cap);
    }

    // (Z_n, K_n) per run; the split generation exists only for two-spined.
    let rows: Vec<(u64, Option<u32>)> = match kind.as_str() {
        "plain" => sampler
            .plain_population_sample(n, runs, resolved.seed, resolved.workers)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|z| (z, None))
            .collect(),
        "spined" => sampler
            .spined_population_sample(n, runs, resolved.seed, resolved.workers)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|z| (z, None))
            .collect(),
        "two-spined" => sampler
            .two_spined_population_sample(n, runs, resolved.seed, resolved.workers)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|(split, z)| (z, Some(split)))
            .collect(),
        other => {
            return Err(format!(
                "unknown sampler {other:?}; expected plain, spined, or two-spined"
            ))
        }
    };

    let mut csv = CsvOut::create(
        &resolved.out_dir,
        "simulate.csv",
        "simulate",
        resolved.seed,
        &[
            ("offspring", resolved.offspring_json.clone()),
            ("sampler", kind.clone()),
            ("n", n.to_string()),
        ],
        "run_id,n,z_n,survived,k_n",
    )?;
    for (run_id, (z, split)) in rows.iter().enumerate() {
        csv.row(&[
            run_id.to_string(),
            n.to_string(),
            z.to_string(),
            (*z > 0).to_string(),
            split.map(|k| k.to_string()).unwrap_or_default(),
        ])?;
    }
    let path = csv.finish()?;
    println!("simulate: wrote {} runs -> [{}]", rows.len(), path.display());

    if keep_trees {
        let mut rng = stream_rng(resolved.seed, 1);
        let mut trees = Vec::with_capacity(runs as usize);
        for _ in 0..runs {
            let entry = match kind.as_str() {
                "plain" => {
                    let t = sampler.sample_tree(n, &mut rng).map_err(|e| e.to_string())?;
                    serde_json::json!({ "tree": t })
                }
                "spined" => {
                    let s = sampler.sample_spined(n, &mut rng).map_err(|e| e.to_string())?;
                    serde_json::json!({
                        "tree": s.tree,
                        "spine": s.spine.iter().map(|p| p.label().to_vec()).collect::<Vec<_>>(),
                    })
                }
                _ => {
                    let s = sampler
                        .sample_two_spined(n, &mut rng)
                        .map_err(|e| e.to_string())?;
                    serde_json::json!({
                        "tree": s.tree,
                        "spine_long": s.spine_long.iter().map(|p| p.label().to_vec()).collect::<Vec<_>>(),
                        "spine_short": s.spine_short.iter().map(|p| p.label().to_vec()).collect::<Vec<_>>(),
                        "split_generation": s.split_generation,
                    })
                }
            };
            trees.push(entry);
        }
        let tree_path = write_json(
            &resolved.out_dir,
            "simulate_trees.json",
            "simulate",
            resolved.seed,
            serde_json::json!(trees),
        )?;
        println!("simulate: tree shapes -> [{}]", tree_path.display());
    }
    Ok(true)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

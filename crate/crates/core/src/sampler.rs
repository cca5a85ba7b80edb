//! Monte Carlo generators for the plain Galton-Watson process, the
//! one-spine size-biased tree, and the two-spine `k(k-1)`-biased tree.
//!
//! Trees are generated lazily generation by generation. Every sampler comes
//! in two flavours: a population-only variant that keeps just the generation
//! sizes (what the large-`n` experiments need) and a full-tree variant that
//! retains the shape and the spine labels for the bush decomposition.
//!
//! Population-only sampling advances a whole generation at once through an
//! exact multinomial decomposition into conditional binomials, so the cost
//! of a generation is logarithmic in its size rather than linear. All draws
//! come from explicitly seeded ChaCha streams; identical seeds reproduce
//! identical trees.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::offspring::{BiasedKind, OffspringDistribution, PeelStep};
use crate::rng::{stream_rng, SimRng};
use crate::tree::{Particle, Tree};

/// Default bound on a single generation's population.
pub const DEFAULT_POPULATION_CAP: u64 = 1_000_000_000;

/// Generation sizes `(Z_0, ..., Z_n)` of one sampled tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PopulationPath {
    pub sizes: Vec<u64>,
}

impl PopulationPath {
    /// Height `n`.
    pub fn height(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn last(&self) -> u64 {
        *self.sizes.last().unwrap()
    }

    pub fn survived(&self) -> bool {
        self.last() > 0
    }
}

/// A tree with one distinguished root-to-height spine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinedTree {
    pub tree: Tree,
    /// Spine particles `v^(0) = root, ..., v^(n)`.
    pub spine: Vec<Particle>,
}

/// A tree with two distinguished spines that coincide up to the split
/// generation and differ from the next generation on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoSpinedTree {
    pub tree: Tree,
    /// The spine continued by the first marked child at the split.
    pub spine_long: Vec<Particle>,
    /// The spine continued by the second marked child; it shares the first
    /// `split_generation + 1` particles with the long spine.
    pub spine_short: Vec<Particle>,
    /// The last generation where the two spines are together.
    pub split_generation: u32,
}

/// Generation-`n` populations grouped by nearest spine ancestor: entry `k`
/// counts the particles whose deepest ancestor on the spine sits at
/// generation `k`; the spine tip itself lands in bush `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BushDecomposition {
    OneSpine {
        populations: Vec<u64>,
    },
    TwoSpine {
        long: Vec<u64>,
        short: Vec<u64>,
        split_generation: u32,
    },
}

impl BushDecomposition {
    /// Total generation-`n` population across all bushes.
    pub fn total(&self) -> u64 {
        match self {
            BushDecomposition::OneSpine { populations } => populations.iter().sum(),
            BushDecomposition::TwoSpine { long, short, .. } => {
                long.iter().sum::<u64>() + short.iter().sum::<u64>()
            }
        }
    }
}

/// Samplers for one offspring law, with the biased laws prebuilt.
#[derive(Debug, Clone)]
pub struct Sampler {
    dist: OffspringDistribution,
    first: OffspringDistribution,
    second: Option<OffspringDistribution>,
    population_cap: u64,
}

impl Sampler {
    /// Requires a unit-mean law; the `k(k-1)` machinery additionally needs
    /// positive variance and stays unavailable otherwise.
    pub fn new(dist: &OffspringDistribution) -> Result<Self> {
        let first = dist.biased(BiasedKind::FirstOrder)?;
        let second = if dist.variance() > 0.0 {
            Some(dist.biased(BiasedKind::SecondFactorial)?)
        } else {
            None
        };
        Ok(Self {
            dist: dist.clone(),
            first,
            second,
            population_cap: DEFAULT_POPULATION_CAP,
        })
    }

    pub fn with_population_cap(mut self, cap: u64) -> Self {
        self.population_cap = cap;
        self
    }

    pub fn offspring(&self) -> &OffspringDistribution {
        &self.dist
    }

    fn second(&self) -> Result<&OffspringDistribution> {
        self.second.as_ref().ok_or(Error::DegenerateVariance)
    }

    fn check_cap(&self, z: u64) -> Result<u64> {
        if z > self.population_cap {
            Err(Error::Capacity {
                what: "generation population".into(),
                bound: self.population_cap,
            })
        } else {
            Ok(z)
        }
    }

    /// One plain Galton-Watson path `(Z_0, ..., Z_n)`.
    pub fn sample_path(&self, n: usize, rng: &mut SimRng) -> Result<PopulationPath> {
        let mut sizes = Vec::with_capacity(n + 1);
        let mut z = 1u64;
        sizes.push(z);
        for _ in 0..n {
            z = self.check_cap(kernel::advance(&self.dist, z, rng))?;
            sizes.push(z);
        }
        Ok(PopulationPath { sizes })
    }

    /// Population of a plain path at generation `n`, without storing the
    /// path; extinct runs exit early.
    pub fn population_at(&self, n: usize, rng: &mut SimRng) -> Result<u64> {
        let mut z = 1u64;
        for _ in 0..n {
            if z == 0 {
                return Ok(0);
            }
            z = self.check_cap(kernel::advance(&self.dist, z, rng))?;
        }
        Ok(z)
    }

    /// One-spine population path: the spine particle births by the
    /// first-order biased law, everyone else by the plain law.
    pub fn sample_spined_path(&self, n: usize, rng: &mut SimRng) -> Result<PopulationPath> {
        let mut sizes = Vec::with_capacity(n + 1);
        let mut z = 1u64;
        sizes.push(z);
        for _ in 0..n {
            let others = kernel::advance(&self.dist, z - 1, rng);
            let spine_children = self.first.sample(rng) as u64;
            z = self.check_cap(others + spine_children)?;
            sizes.push(z);
        }
        Ok(PopulationPath { sizes })
    }

    /// Two-spine population path with its split generation `K_n`, drawn
    /// uniformly on `{0, ..., n-1}`.
    pub fn sample_two_spined_path(
        &self,
        n: usize,
        rng: &mut SimRng,
    ) -> Result<(PopulationPath, u32)> {
        if n == 0 {
            return Err(Error::Domain(
                "two-spine sampling needs n >= 1 (the split generation is uniform on 0..n)".into(),
            ));
        }
        let second = self.second()?;
        let split = rng.random_range(0..n as u32);
        let mut sizes = Vec::with_capacity(n + 1);
        let mut z = 1u64;
        sizes.push(z);
        for m in 0..n {
            let marked = if m <= split as usize { 1 } else { 2 };
            let others = kernel::advance(&self.dist, z - marked, rng);
            let spine_children = if m == split as usize {
                second.sample(rng) as u64
            } else {
                (0..marked).map(|_| self.first.sample(rng) as u64).sum()
            };
            z = self.check_cap(others + spine_children)?;
            sizes.push(z);
        }
        Ok((PopulationPath { sizes }, split))
    }

    /// One full plain tree with height cap `n`.
    pub fn sample_tree(&self, n: usize, rng: &mut SimRng) -> Result<Tree> {
        let mut counts: Vec<Vec<u32>> = Vec::with_capacity(n);
        let mut z = 1u64;
        for _ in 0..n {
            let mut gen = Vec::with_capacity(z as usize);
            let mut next = 0u64;
            for _ in 0..z {
                let c = self.dist.sample(rng);
                next += c as u64;
                gen.push(c);
            }
            counts.push(gen);
            z = self.check_cap(next)?;
        }
        Ok(Tree::from_counts_unchecked(counts))
    }

    /// One full one-spine tree: the tree shape plus the spine labels.
    pub fn sample_spined(&self, n: usize, rng: &mut SimRng) -> Result<SpinedTree> {
        let mut counts: Vec<Vec<u32>> = Vec::with_capacity(n);
        let mut spine = vec![Particle::root()];
        let mut spine_pos = 0usize;
        let mut z = 1u64;
        for _ in 0..n {
            let mut gen = Vec::with_capacity(z as usize);
            let mut next = 0u64;
            for i in 0..z as usize {
                let c = if i == spine_pos {
                    self.first.sample(rng)
                } else {
                    self.dist.sample(rng)
                };
                next += c as u64;
                gen.push(c);
            }
            // Mark a uniformly chosen child of the spine particle.
            let spine_children = gen[spine_pos];
            let choice = rng.random_range(1..=spine_children);
            let offset: usize = gen[..spine_pos].iter().map(|&c| c as usize).sum();
            spine.push(spine.last().unwrap().child(choice));
            spine_pos = offset + choice as usize - 1;
            counts.push(gen);
            z = self.check_cap(next)?;
        }
        Ok(SpinedTree {
            tree: Tree::from_counts_unchecked(counts),
            spine,
        })
    }

    /// One full two-spine tree with the forced split at a uniform
    /// generation: the split particle births by the `k(k-1)` law and an
    /// ordered pair of distinct children continues the two spines.
    pub fn sample_two_spined(&self, n: usize, rng: &mut SimRng) -> Result<TwoSpinedTree> {
        if n == 0 {
            return Err(Error::Domain(
                "two-spine sampling needs n >= 1 (the split generation is uniform on 0..n)".into(),
            ));
        }
        let second = self.second()?;
        let split = rng.random_range(0..n as u32) as usize;
        let mut counts: Vec<Vec<u32>> = Vec::with_capacity(n);
        let mut long = vec![Particle::root()];
        let mut short = vec![Particle::root()];
        let mut long_pos = 0usize;
        let mut short_pos = 0usize;
        let mut z = 1u64;
        for m in 0..n {
            let mut gen = Vec::with_capacity(z as usize);
            let mut next = 0u64;
            for i in 0..z as usize {
                let on_long = i == long_pos;
                let on_short = i == short_pos;
                let c = if m == split && on_long {
                    second.sample(rng)
                } else if on_long || (on_short && m > split) {
                    self.first.sample(rng)
                } else {
                    self.dist.sample(rng)
                };
                next += c as u64;
                gen.push(c);
            }
            let offset_of =
                |pos: usize, gen: &[u32]| -> usize { gen[..pos].iter().map(|&c| c as usize).sum() };
            if m == split {
                // Ordered pair of distinct children of the split particle.
                let c = gen[long_pos];
                let a = rng.random_range(1..=c);
                let mut b = rng.random_range(1..=c - 1);
                if b >= a {
                    b += 1;
                }
                let offset = offset_of(long_pos, &gen);
                long.push(long.last().unwrap().child(a));
                short.push(short.last().unwrap().child(b));
                long_pos = offset + a as usize - 1;
                short_pos = offset + b as usize - 1;
            } else if m < split {
                let c = gen[long_pos];
                let choice = rng.random_range(1..=c);
                let offset = offset_of(long_pos, &gen);
                long.push(long.last().unwrap().child(choice));
                short.push(short.last().unwrap().child(choice));
                long_pos = offset + choice as usize - 1;
                short_pos = long_pos;
            } else {
                let a = rng.random_range(1..=gen[long_pos]);
                let b = rng.random_range(1..=gen[short_pos]);
                let long_offset = offset_of(long_pos, &gen);
                let short_offset = offset_of(short_pos, &gen);
                long.push(long.last().unwrap().child(a));
                short.push(short.last().unwrap().child(b));
                long_pos = long_offset + a as usize - 1;
                short_pos = short_offset + b as usize - 1;
            }
            counts.push(gen);
            z = self.check_cap(next)?;
        }
        Ok(TwoSpinedTree {
            tree: Tree::from_counts_unchecked(counts),
            spine_long: long,
            spine_short: short,
            split_generation: split as u32,
        })
    }

    /// Conditioned sample of `Z_n/n` given survival, by rejection: extinct
    /// runs are discarded inside each worker, so only survivors are ever
    /// stored. Deterministic for a fixed `(seed, workers)` plan.
    pub fn conditioned_population_sample(
        &self,
        n: usize,
        attempts: u64,
        seed: u64,
        workers: usize,
    ) -> Result<SurvivalSample> {
        let per_worker = parallel_partition(attempts, seed, workers, |rng, count| {
            let mut survivors = Vec::new();
            for _ in 0..count {
                let z = self.population_at(n, rng)?;
                if z > 0 {
                    survivors.push(z as f64 / n as f64);
                }
            }
            Ok(survivors)
        })?;
        let normalized: Vec<f64> = per_worker.into_iter().flatten().collect();
        let survivors = normalized.len() as u64;
        Ok(SurvivalSample {
            normalized,
            attempts,
            survivors,
            acceptance_rate: survivors as f64 / attempts as f64,
            seed,
            workers,
        })
    }

    /// Batch of plain populations `Z_n`.
    pub fn plain_population_sample(
        &self,
        n: usize,
        runs: u64,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<u64>> {
        parallel_runs(runs, seed, workers, |rng, _| self.population_at(n, rng))
    }

    /// Batch of one-spine populations `Ż_n`.
    pub fn spined_population_sample(
        &self,
        n: usize,
        runs: u64,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<u64>> {
        parallel_runs(runs, seed, workers, |rng, _| {
            Ok(self.sample_spined_path(n, rng)?.last())
        })
    }

    /// Batch of two-spine populations `(K_n, Z̈_n)`.
    pub fn two_spined_population_sample(
        &self,
        n: usize,
        runs: u64,
        seed: u64,
        workers: usize,
    ) -> Result<Vec<(u32, u64)>> {
        parallel_runs(runs, seed, workers, |rng, _| {
            let (path, split) = self.sample_two_spined_path(n, rng)?;
            Ok((split, path.last()))
        })
    }
}

/// Conditioned-sample batch with its rejection bookkeeping; the acceptance
/// rate is roughly `2/(σ²n)`, which callers can use to budget attempts.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalSample {
    pub normalized: Vec<f64>,
    pub attempts: u64,
    pub survivors: u64,
    pub acceptance_rate: f64,
    pub seed: u64,
    pub workers: usize,
}

/// Partitions `runs` contiguously over worker threads, handing each worker
/// its run count and its own ChaCha stream (`w + 1` of the master seed), and
/// returns the per-worker results in worker order. Results therefore depend
/// only on `(seed, workers)`, never on scheduling.
fn parallel_partition<T: Send>(
    runs: u64,
    seed: u64,
    workers: usize,
    f: impl Fn(&mut SimRng, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let workers = workers.max(1);
    let chunk = runs / workers as u64;
    let remainder = runs % workers as u64;
    if workers == 1 {
        let mut rng = stream_rng(seed, 1);
        return Ok(vec![f(&mut rng, runs)?]);
    }
    let mut partials: Vec<Result<T>> = Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(workers);
        for w in 0..workers as u64 {
            let f = &f;
            handles.push(scope.spawn(move || {
                let mut rng = stream_rng(seed, w + 1);
                f(&mut rng, chunk + u64::from(w < remainder))
            }));
        }
        for handle in handles {
            partials.push(handle.join().expect("sampler worker panicked"));
        }
    });
    partials.into_iter().collect()
}

/// Runs `f` once per run index and gathers every result, partitioned over
/// workers as in [`parallel_partition`].
fn parallel_runs<T: Send>(
    runs: u64,
    seed: u64,
    workers: usize,
    f: impl Fn(&mut SimRng, u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let per_worker = parallel_partition(runs, seed, workers, |rng, count| {
        let mut local = Vec::with_capacity(count as usize);
        for i in 0..count {
            local.push(f(rng, i)?);
        }
        Ok(local)
    })?;
    Ok(per_worker.into_iter().flatten().collect())
}

/// Nearest-spine-ancestor decomposition of the top-generation population of
/// a one-spine tree: bush `k` collects the particles whose deepest spine
/// ancestor is `v^(k)`; the spine tip itself is bush `n`.
pub fn decompose_bushes(spined: &SpinedTree) -> BushDecomposition {
    let n = spined.tree.cap();
    let spine_path = spined.spine[n].label();
    let mut populations = vec![0u64; n + 1];
    for particle in spined.tree.particles_at(n) {
        populations[prefix_match(particle.label(), spine_path)] += 1;
    }
    BushDecomposition::OneSpine { populations }
}

/// Bush decomposition of a two-spine tree: a particle belongs to a short
/// bush when its ancestry passes through the short spine's own branch
/// (below the split); otherwise to the long bush of its deepest long-spine
/// ancestor.
pub fn decompose_two_spine_bushes(spined: &TwoSpinedTree) -> BushDecomposition {
    let n = spined.tree.cap();
    let long_path = spined.spine_long[n].label();
    let short_path = spined.spine_short[n].label();
    let split = spined.split_generation as usize;
    let mut long = vec![0u64; n + 1];
    let mut short = vec![0u64; n + 1];
    for particle in spined.tree.particles_at(n) {
        let label = particle.label();
        let on_short = prefix_match(label, short_path);
        if on_short > split {
            short[on_short] += 1;
        } else {
            long[prefix_match(label, long_path)] += 1;
        }
    }
    BushDecomposition::TwoSpine {
        long,
        short,
        split_generation: spined.split_generation,
    }
}

/// Length of the common prefix of two label sequences: the generation of
/// the deepest common ancestor along a spine.
fn prefix_match(label: &[u32], spine: &[u32]) -> usize {
    label
        .iter()
        .zip(spine.iter())
        .take_while(|(a, b)| a == b)
        .count()
}

/// Exact whole-generation offspring sampling.
mod kernel {
    use super::*;
    use rand_distr::Distribution as _;

    /// Conditional probabilities this close to 1/2 use the bit-population
    /// path with an exact thinning correction.
    const NEAR_HALF: f64 = 1e-6;

    /// Total offspring of `z` independent individuals with law `dist`:
    /// exact, with cost `O(support · log z)` for large generations via the
    /// precomputed conditional-binomial peel plan.
    pub fn advance(dist: &OffspringDistribution, z: u64, rng: &mut SimRng) -> u64 {
        if z == 0 {
            return 0;
        }
        if z == 1 {
            return dist.sample(rng) as u64;
        }
        let mut total = 0u64;
        let mut remaining = z;
        for step in dist.peel_plan() {
            let (count, assigned) = match *step {
                PeelStep::TakeAll { count } => (count, remaining),
                PeelStep::Half { count } => (count, binomial_near_half(remaining, 0.0, rng)),
                PeelStep::NearHalf { count, delta } => {
                    (count, binomial_near_half(remaining, delta, rng))
                }
                PeelStep::Plain { count, ratio } => (count, binomial_plain(remaining, ratio, rng)),
            };
            total += count * assigned;
            remaining -= assigned;
            if remaining == 0 {
                break;
            }
        }
        total
    }

    /// Exact `Binomial(n, p)` draw, routed by parameter regime.
    pub fn binomial(n: u64, p: f64, rng: &mut SimRng) -> u64 {
        if n == 0 || p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        let delta = p - 0.5;
        if delta.abs() <= NEAR_HALF {
            binomial_near_half(n, delta, rng)
        } else {
            binomial_plain(n, p, rng)
        }
    }

    /// Exact binomial for probabilities away from 1/2: inversion for small
    /// expectations, the library sampler (BTPE) otherwise.
    fn binomial_plain(n: u64, p: f64, rng: &mut SimRng) -> u64 {
        if p <= 0.0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        let expectation = n as f64 * p.min(1.0 - p);
        if expectation <= 12.0 || n <= 64 {
            binomial_inversion(n, p, rng)
        } else {
            rand_distr::Binomial::new(n, p)
                .expect("validated parameters")
                .sample(rng)
        }
    }

    /// `Binomial(n, 1/2)` as the popcount of `n` random bits.
    fn binomial_half(n: u64, rng: &mut SimRng) -> u64 {
        let mut ones = 0u64;
        let mut left = n;
        while left >= 64 {
            ones += rng.random::<u64>().count_ones() as u64;
            left -= 64;
        }
        if left > 0 {
            let mask = (1u64 << left) - 1;
            ones += (rng.random::<u64>() & mask).count_ones() as u64;
        }
        ones
    }

    /// `Binomial(n, 1/2 + δ)`: draw the fair-coin count, then promote
    /// failures (or demote successes) with probability `2|δ|`. Exact for
    /// any `|δ| ≤ 1/2`.
    pub fn binomial_near_half(n: u64, delta: f64, rng: &mut SimRng) -> u64 {
        if n <= 48 && delta.abs() <= 1e-6 {
            // One word carries both the n coin flips and a 16-bit squeeze
            // uniform for the thinning correction: m·q is at most ~1e-4
            // here, so all but the top few of the 65536 squeeze buckets
            // certify outright that no correction fires.
            let word = rng.random::<u64>();
            let heads = (word & ((1u64 << n) - 1)).count_ones() as u64;
            if delta == 0.0 {
                return heads;
            }
            let (m, q, sign) = if delta > 0.0 {
                (n - heads, 2.0 * delta, 1i64)
            } else {
                (heads, -2.0 * delta, -1i64)
            };
            let v = (word >> 48) as u32;
            // Zero corrections correspond to u < (1-q)^m under the
            // inversion in `binomial_sparse`; (v+1)/65536 <= 1 - m·q is a
            // sufficient certificate since (1-q)^m >= 1 - m·q.
            if (v as f64 + 1.0) / 65536.0 <= 1.0 - m as f64 * q {
                return heads;
            }
            // Refine the same uniform to full precision and fall back to
            // the exact path.
            let u = (v as f64 + rng.random::<f64>()) / 65536.0;
            let correction = binomial_sparse_from(m, q, u, rng);
            return if sign > 0 {
                heads + correction
            } else {
                heads - correction
            };
        }
        let heads = binomial_half(n, rng);
        if delta == 0.0 {
            heads
        } else if delta > 0.0 {
            heads + binomial_sparse(n - heads, 2.0 * delta, rng)
        } else {
            heads - binomial_sparse(heads, -2.0 * delta, rng)
        }
    }

    /// `Binomial(m, q)` by geometric gap skipping: cheap when `m·q` is
    /// small, exact for all parameters.
    fn binomial_sparse(m: u64, q: f64, rng: &mut SimRng) -> u64 {
        if m == 0 || q <= 0.0 {
            return 0;
        }
        if q >= 1.0 {
            return m;
        }
        let u = 1.0 - rng.random::<f64>(); // (0, 1]
        // Squeeze: under the inversion below, zero successes corresponds to
        // u < (1-q)^m, and (1-q)^m >= 1 - m·q, so u < 1 - m·q settles the
        // overwhelmingly common case without touching a logarithm.
        if u < 1.0 - m as f64 * q {
            return 0;
        }
        binomial_sparse_from(m, q, u, rng)
    }

    /// Gap-skipping tail of the sparse binomial, continuing from an
    /// already-drawn first uniform.
    fn binomial_sparse_from(m: u64, q: f64, first: f64, rng: &mut SimRng) -> u64 {
        let log_miss = (1.0 - q).ln();
        let mut u = first;
        let mut successes = 0u64;
        let mut position = 0u64;
        loop {
            let gap = (u.ln() / log_miss).floor() as u64;
            position = position.saturating_add(gap).saturating_add(1);
            if position > m {
                return successes;
            }
            successes += 1;
            u = 1.0 - rng.random::<f64>();
        }
    }

    /// Classic cdf-inversion binomial; expected cost `O(np)`.
    fn binomial_inversion(n: u64, p: f64, rng: &mut SimRng) -> u64 {
        // Work on the smaller tail.
        let flipped = p > 0.5;
        let p = if flipped { 1.0 - p } else { p };
        let ratio = p / (1.0 - p);
        let mut pmf = ((n as f64) * (1.0 - p).ln()).exp();
        let mut cdf = pmf;
        let u: f64 = rng.random();
        let mut k = 0u64;
        while u > cdf && k < n {
            pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
            cdf += pmf;
            k += 1;
        }
        if flipped {
            n - k
        } else {
            k
        }
    }
}

pub use kernel::advance as advance_generation;
pub use kernel::binomial as sample_binomial;

//! Ulam-Harris tree model, exhaustive enumeration of small tree spaces, and
//! exact evaluation of the plain and size-biased Galton-Watson measures.
//!
//! A tree capped at height `n` is stored as its breadth-first child-count
//! sequences: `counts[m][i]` is the number of children of the `i`-th
//! generation-`m` particle, for `m < n`. This encoding is canonical, so
//! enumeration over count sequences is automatically duplicate-free;
//! Ulam-Harris labels are reconstructed on demand.
//!
//! The three measures on trees of height at most `n` are
//!
//! - the plain measure `G_n(t) = Π_{|u| < n} μ(l_u)`,
//! - the one-spine measure `Ġ_n(t) = X_n(t)·G_n(t)`, and
//! - the two-spine measure `G̈_n(t) = X_n(t)(X_n(t)-1)/(nσ²)·G_n(t)`,
//!
//! each a probability measure for critical offspring with finite support.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

/// Default bound on the number of enumerated trees; the tree space grows
/// doubly exponentially in the height.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// An Ulam-Harris label: the empty sequence is the root, and `u·j` is the
/// `j`-th child (1-based) of `u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Particle(Vec<u32>);

impl Particle {
    pub fn root() -> Self {
        Particle(Vec::new())
    }

    pub fn from_label(label: Vec<u32>) -> Result<Self> {
        if label.contains(&0) {
            return Err(Error::Domain("child indices are 1-based".into()));
        }
        Ok(Particle(label))
    }

    pub fn label(&self) -> &[u32] {
        &self.0
    }

    /// Generation `|u|`: the length of the label.
    pub fn generation(&self) -> usize {
        self.0.len()
    }

    /// The parent, obtained by dropping the last index; `None` for the root.
    pub fn parent(&self) -> Option<Particle> {
        if self.0.is_empty() {
            None
        } else {
            Some(Particle(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, index: u32) -> Particle {
        debug_assert!(index >= 1);
        let mut label = self.0.clone();
        label.push(index);
        Particle(label)
    }

    pub fn is_ancestor_of(&self, other: &Particle) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl std::fmt::Display for Particle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0.is_empty() {
            write!(f, "<root>")
        } else {
            let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
            write!(f, "{}", parts.join("."))
        }
    }
}

/// Serialized tree form: the height cap plus the flat breadth-first list of
/// child counts (generation boundaries are implied by the populations).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TreeJson {
    height_cap: usize,
    child_counts: Vec<u32>,
}

/// A finite tree capped at a fixed height.
///
/// `counts[m]` lists the child counts of the generation-`m` particles in
/// breadth-first order; generations that have died out are empty lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TreeJson", into = "TreeJson")]
pub struct Tree {
    counts: Vec<Vec<u32>>,
}

impl Tree {
    /// Builds from per-generation child counts, validating consistency:
    /// `counts[0]` has one entry (the root) and each later generation has
    /// exactly as many entries as the previous generation has children.
    pub fn from_generation_counts(counts: Vec<Vec<u32>>) -> Result<Self> {
        let mut expected = 1usize;
        for (m, gen) in counts.iter().enumerate() {
            if gen.len() != expected {
                return Err(Error::Domain(format!(
                    "generation {m} lists {} particles but the parents have {expected} children",
                    gen.len()
                )));
            }
            expected = gen.iter().map(|&c| c as usize).sum();
        }
        Ok(Tree { counts })
    }

    /// The single root-only tree of cap 0.
    pub fn root_only() -> Self {
        Tree { counts: Vec::new() }
    }

    pub(crate) fn from_counts_unchecked(counts: Vec<Vec<u32>>) -> Self {
        Tree { counts }
    }

    /// Height cap `n`: child counts are recorded for generations `< n`.
    pub fn cap(&self) -> usize {
        self.counts.len()
    }

    /// Population `X_m` of generation `m`; `X_0 = 1` always.
    pub fn population(&self, m: usize) -> u64 {
        if m == 0 {
            1
        } else if m <= self.counts.len() {
            self.counts[m - 1].iter().map(|&c| c as u64).sum()
        } else {
            0
        }
    }

    /// `(X_0, ..., X_cap)`.
    pub fn populations(&self) -> Vec<u64> {
        (0..=self.cap()).map(|m| self.population(m)).collect()
    }

    /// The population path `(Z_1, ..., Z_n)` that the change-of-measure
    /// functionals act on.
    pub fn path(&self) -> Vec<u64> {
        (1..=self.cap()).map(|m| self.population(m)).collect()
    }

    /// Height of the tree as a particle set: the last populated generation.
    pub fn height(&self) -> usize {
        (0..=self.cap())
            .rev()
            .find(|&m| self.population(m) > 0)
            .unwrap_or(0)
    }

    pub fn generation_counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    /// Child counts of the generation-`m` particles in breadth-first order.
    pub fn counts_at(&self, m: usize) -> &[u32] {
        &self.counts[m]
    }

    /// Reconstructs the Ulam-Harris labels of the generation-`m` particles,
    /// in breadth-first order.
    pub fn particles_at(&self, m: usize) -> Vec<Particle> {
        let mut current = vec![Particle::root()];
        for gen in 0..m {
            let mut next = Vec::new();
            for (i, particle) in current.iter().enumerate() {
                let c = self.counts.get(gen).map_or(0, |g| g[i]);
                for j in 1..=c {
                    next.push(particle.child(j));
                }
            }
            current = next;
        }
        current
    }

    /// All particles of the tree, breadth-first.
    pub fn particles(&self) -> Vec<Particle> {
        let mut all = Vec::new();
        for m in 0..=self.cap() {
            all.extend(self.particles_at(m));
        }
        all
    }

    /// Number of children of the given particle, or `None` if the particle
    /// is not in the tree.
    pub fn child_count(&self, particle: &Particle) -> Option<u32> {
        let m = particle.generation();
        if m >= self.counts.len() {
            return self.particles_at(m).contains(particle).then_some(0);
        }
        let position = self.particles_at(m).iter().position(|p| p == particle)?;
        Some(self.counts[m][position])
    }
}

impl TryFrom<TreeJson> for Tree {
    type Error = Error;
    fn try_from(json: TreeJson) -> Result<Tree> {
        let mut counts = Vec::with_capacity(json.height_cap);
        let mut offset = 0usize;
        let mut expected = 1usize;
        for m in 0..json.height_cap {
            if offset + expected > json.child_counts.len() {
                return Err(Error::Domain(format!(
                    "flat child-count list too short at generation {m}"
                )));
            }
            let gen: Vec<u32> = json.child_counts[offset..offset + expected].to_vec();
            offset += expected;
            expected = gen.iter().map(|&c| c as usize).sum();
            counts.push(gen);
        }
        if offset != json.child_counts.len() {
            return Err(Error::Domain("trailing child counts beyond the cap".into()));
        }
        Tree::from_generation_counts(counts)
    }
}

impl From<Tree> for TreeJson {
    fn from(tree: Tree) -> TreeJson {
        TreeJson {
            height_cap: tree.cap(),
            child_counts: tree.counts.into_iter().flatten().collect(),
        }
    }
}

/// Exhaustive, duplicate-free enumeration of all trees with height cap `n`
/// and child counts drawn from `support`, up to `max_trees`.
pub fn enumerate_trees(n: usize, support: &[u32], max_trees: u64) -> Result<Vec<Tree>> {
    if support.is_empty() {
        return Err(Error::Domain("empty child-count support".into()));
    }
    let mut out = Vec::new();
    let mut counts: Vec<Vec<u32>> = Vec::with_capacity(n);
    enumerate_rec(n, support, max_trees, &mut counts, &mut out)?;
    Ok(out)
}

/// Enumeration restricted to the support of an offspring law.
pub fn enumerate_trees_for(
    dist: &OffspringDistribution,
    n: usize,
    max_trees: u64,
) -> Result<Vec<Tree>> {
    enumerate_trees(n, &dist.support(), max_trees)
}

fn enumerate_rec(
    n: usize,
    support: &[u32],
    max_trees: u64,
    counts: &mut Vec<Vec<u32>>,
    out: &mut Vec<Tree>,
) -> Result<()> {
    let gen = counts.len();
    if gen == n {
        if out.len() as u64 >= max_trees {
            return Err(Error::Capacity {
                what: "tree enumeration".into(),
                bound: max_trees,
            });
        }
        out.push(Tree {
            counts: counts.clone(),
        });
        return Ok(());
    }
    let particles = if gen == 0 {
        1
    } else {
        counts[gen - 1].iter().map(|&c| c as usize).sum()
    };
    if particles == 0 {
        // The population has died out; all later generations are empty.
        counts.push(Vec::new());
        enumerate_rec(n, support, max_trees, counts, out)?;
        counts.pop();
        return Ok(());
    }
    // Odometer over the child counts of this generation's particles.
    let mut assignment = vec![0usize; particles];
    loop {
        counts.push(assignment.iter().map(|&i| support[i]).collect());
        enumerate_rec(n, support, max_trees, counts, out)?;
        counts.pop();
        let mut pos = 0;
        loop {
            if pos == particles {
                return Ok(());
            }
            assignment[pos] += 1;
            if assignment[pos] < support.len() {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Galton-Watson weight `G_n(t) = Π_{u: |u| < n} μ(l_u(t))`.
///
/// Child counts outside the support contribute a zero factor, not an error.
pub fn gw_weight(tree: &Tree, dist: &OffspringDistribution, n: usize) -> Result<f64> {
    if tree.cap() != n {
        return Err(Error::Precondition(format!(
            "tree has height cap {}, expected {n}",
            tree.cap()
        )));
    }
    let mut weight = 1.0;
    for gen in &tree.counts {
        for &c in gen {
            weight *= dist.pmf(c as usize);
        }
    }
    Ok(weight)
}

/// Order of the size-biased measure: weight `X_n` or `X_n(X_n-1)/(nσ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasOrder {
    First,
    Second,
}

/// Size-biased weight `Ġ_n(t) = X_n·G_n(t)` or
/// `G̈_n(t) = X_n(X_n-1)/(nσ²)·G_n(t)`.
pub fn biased_weight(
    tree: &Tree,
    dist: &OffspringDistribution,
    n: usize,
    order: BiasOrder,
) -> Result<f64> {
    let base = gw_weight(tree, dist, n)?;
    let x_n = tree.population(n) as f64;
    match order {
        BiasOrder::First => Ok(x_n * base),
        BiasOrder::Second => {
            if n == 0 {
                return Err(Error::Domain(
                    "the two-spine measure needs n >= 1 (the split generation is uniform on 0..n)"
                        .into(),
                ));
            }
            if dist.variance() <= 0.0 {
                return Err(Error::DegenerateVariance);
            }
            Ok(x_n * (x_n - 1.0) / (n as f64 * dist.variance()) * base)
        }
    }
}

/// Number of height-`n` spines on the tree, by explicit path enumeration:
/// walks every root-to-generation-`n` ancestral line. With `pairs` set,
/// counts ordered pairs of distinct spines.
///
/// The closed forms are `X_n(t)` and `X_n(t)(X_n(t)-1)`; this routine
/// deliberately counts paths instead so the identity can be tested.
pub fn count_spines(tree: &Tree, n: usize, pairs: bool) -> u64 {
    fn walk(tree: &Tree, gen: usize, index: usize, n: usize) -> u64 {
        if gen == n {
            return 1;
        }
        let children = tree.counts.get(gen).map_or(0, |g| g[index]) as usize;
        // Breadth-first index of the first child: children of earlier
        // particles in this generation come first.
        let offset: usize = tree.counts[gen][..index].iter().map(|&c| c as usize).sum();
        (0..children)
            .map(|j| walk(tree, gen + 1, offset + j, n))
            .sum()
    }
    if n > tree.cap() {
        // Nothing is recorded beyond the cap.
        return 0;
    }
    let spines = walk(tree, 0, 0, n);
    if pairs {
        spines * spines.saturating_sub(1)
    } else {
        spines
    }
}

/// Result of one change-of-measure verification.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChangeOfMeasureCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Verifies the change of measure by exhaustive enumeration: the biased
/// expectation of `g(Z_1, ..., Z_n)` (left side) against the reweighted
/// plain expectation (right side),
///
/// `Σ_t Ġ/G̈(t)·g(path(t))` vs `Σ_t G(t)·w(X_n)·g / Σ_t G(t)·w(X_n)`
///
/// with `w(x) = x` for the first order and `w(x) = x(x-1)` for the second.
pub fn verify_change_of_measure(
    dist: &OffspringDistribution,
    n: usize,
    g: &dyn Fn(&[u64]) -> f64,
    order: BiasOrder,
    max_trees: u64,
) -> Result<ChangeOfMeasureCheck> {
    let trees = enumerate_trees_for(dist, n, max_trees)?;
    let mut lhs = 0.0;
    let mut weighted = 0.0;
    let mut normalizer = 0.0;
    for tree in &trees {
        let path = tree.path();
        let value = g(&path);
        lhs += biased_weight(tree, dist, n, order)? * value;
        let base = gw_weight(tree, dist, n)?;
        let x_n = tree.population(n) as f64;
        let w = match order {
            BiasOrder::First => x_n,
            BiasOrder::Second => x_n * (x_n - 1.0),
        };
        weighted += base * w * value;
        normalizer += base * w;
    }
    let rhs = weighted / normalizer;
    Ok(ChangeOfMeasureCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// Per-tree table of the three measures over an enumerated tree space.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub n: usize,
    pub rows: Vec<MeasureRow>,
    pub total_gw: f64,
    pub total_first: f64,
    /// Absent when `n = 0`, where the two-spine measure is undefined.
    pub total_second: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeasureRow {
    pub tree_id: usize,
    pub population: u64,
    pub gw: f64,
    pub first_order: f64,
    pub second_order: Option<f64>,
}

impl MeasureReport {
    pub fn build(dist: &OffspringDistribution, n: usize, max_trees: u64) -> Result<Self> {
        let trees = enumerate_trees_for(dist, n, max_trees)?;
        let mut rows = Vec::with_capacity(trees.len());
        let mut total_gw = 0.0;
        let mut total_first = 0.0;
        let mut total_second = (n > 0).then_some(0.0);
        for (tree_id, tree) in trees.iter().enumerate() {
            let gw = gw_weight(tree, dist, n)?;
            let first = biased_weight(tree, dist, n, BiasOrder::First)?;
            let second = match total_second {
                Some(_) => Some(biased_weight(tree, dist, n, BiasOrder::Second)?),
                None => None,
            };
            total_gw += gw;
            total_first += first;
            if let (Some(total), Some(s)) = (total_second.as_mut(), second) {
                *total += s;
            }
            rows.push(MeasureRow {
                tree_id,
                population: tree.population(n),
                gw,
                first_order: first,
                second_order: second,
            });
        }
        Ok(MeasureReport {
            n,
            rows,
            total_gw,
            total_first,
            total_second,
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "tree_id,x_n,gw,first_order,second_order")?;
        for r in &self.rows {
            match r.second_order {
                Some(s) => writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.tree_id, r.population, r.gw, r.first_order, s
                )?,
                None => writeln!(
                    w,
                    "{},{},{},{},",
                    r.tree_id, r.population, r.gw, r.first_order
                )?,
            }
        }
        Ok(())
    }
}

/// Exact distribution of the population path `(Z_1, ..., Z_n)` under the
/// selected measure, keyed by path. Used as the oracle for sampler laws.
pub fn path_law(
    dist: &OffspringDistribution,
    n: usize,
    order: Option<BiasOrder>,
    max_trees: u64,
) -> Result<HashMap<Vec<u64>, f64>> {
    let trees = enumerate_trees_for(dist, n, max_trees)?;
    let mut law: HashMap<Vec<u64>, f64> = HashMap::new();
    for tree in &trees {
        let weight = match order {
            None => gw_weight(tree, dist, n)?,
            Some(o) => biased_weight(tree, dist, n, o)?,
        };
        *law.entry(tree.path()).or_insert(0.0) += weight;
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    fn binary() -> OffspringDistribution {
        OffspringDistribution::binary(0.5).unwrap()
    }

    /// Support {0, 1, 2} with μ(1) = 1 - 2p, μ(0) = μ(2) = p: critical for
    /// every p, with σ² = 2p.
    fn ternary(p: f64) -> OffspringDistribution {
        OffspringDistribution::from_weights(&[p, 1.0 - 2.0 * p, p]).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        // Height 0: only the root.
        assert_eq!(enumerate_trees(0, &[0, 2], 100).unwrap().len(), 1);
        // Height 1, support {0,1,2}: one tree per root child count.
        assert_eq!(enumerate_trees(1, &[0, 1, 2], 100).unwrap().len(), 3);
        // Height 2, support {0,2}: bare root, plus 2x2 child assignments.
        assert_eq!(enumerate_trees(2, &[0, 2], 100).unwrap().len(), 5);
        // Height 3, support {0,2}: 1 + 1 + 4 + 4 + 16.
        assert_eq!(enumerate_trees(3, &[0, 2], 100).unwrap().len(), 26);
    }

    #[test]
    fn enumeration_is_duplicate_free() {
        let trees = enumerate_trees(3, &[0, 1, 2], DEFAULT_ENUMERATION_CAP).unwrap();
        let set: std::collections::HashSet<_> = trees.iter().cloned().collect();
        assert_eq!(set.len(), trees.len());
    }

    #[test]
    fn enumeration_capacity_error_names_bound() {
        match enumerate_trees(3, &[0, 2], 10) {
            Err(Error::Capacity { bound, .. }) => assert_eq!(bound, 10),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn gw_weights_binary() {
        let d = binary();
        let trees = enumerate_trees_for(&d, 2, 100).unwrap();
        // Bare root at height cap 2: single factor μ(0).
        let bare = trees.iter().find(|t| t.population(1) == 0).unwrap();
        assert_eq!(gw_weight(bare, &d, 2).unwrap(), 0.5);
        // Full binary tree: μ(2)³ = 1/8.
        let full = trees.iter().find(|t| t.population(2) == 4).unwrap();
        assert_eq!(gw_weight(full, &d, 2).unwrap(), 0.125);
        // Height 0: empty product.
        assert_eq!(gw_weight(&Tree::root_only(), &d, 0).unwrap(), 1.0);
        // Cap mismatch is a precondition error.
        assert!(gw_weight(bare, &d, 3).is_err());
        // Counts outside the support give zero weight, not an error.
        let line = Tree::from_generation_counts(vec![vec![1]]).unwrap();
        assert_eq!(gw_weight(&line, &d, 1).unwrap(), 0.0);
    }

    #[test]
    fn biased_weights_binary_n2() {
        let d = binary();
        let trees = enumerate_trees_for(&d, 2, 100).unwrap();
        let bare = trees.iter().find(|t| t.population(1) == 0).unwrap();
        assert_eq!(biased_weight(bare, &d, 2, BiasOrder::First).unwrap(), 0.0);
        assert_eq!(biased_weight(bare, &d, 2, BiasOrder::Second).unwrap(), 0.0);

        let full = trees.iter().find(|t| t.population(2) == 4).unwrap();
        assert_eq!(biased_weight(full, &d, 2, BiasOrder::First).unwrap(), 0.5);
        assert_eq!(biased_weight(full, &d, 2, BiasOrder::Second).unwrap(), 0.75);

        // Trees with one surviving grandchild pair: X_2 = 2.
        let halves: Vec<&Tree> = trees.iter().filter(|t| t.population(2) == 2).collect();
        assert_eq!(halves.len(), 2);
        for t in halves {
            assert_eq!(biased_weight(t, &d, 2, BiasOrder::First).unwrap(), 0.25);
            assert_eq!(biased_weight(t, &d, 2, BiasOrder::Second).unwrap(), 0.125);
        }

        assert!(matches!(
            biased_weight(&Tree::root_only(), &d, 0, BiasOrder::Second),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn measures_normalize_for_small_heights() {
        for d in [binary(), ternary(0.3)] {
            for n in 1..=4 {
                let report = MeasureReport::build(&d, n, DEFAULT_ENUMERATION_CAP).unwrap();
                assert!((report.total_gw - 1.0).abs() < 1e-10, "G_{n}");
                assert!((report.total_first - 1.0).abs() < 1e-10, "Gdot_{n}");
                assert!(
                    (report.total_second.unwrap() - 1.0).abs() < 1e-10,
                    "Gddot_{n}"
                );
            }
            let report = MeasureReport::build(&d, 0, 10).unwrap();
            assert!((report.total_gw - 1.0).abs() < 1e-12);
            assert!(report.total_second.is_none());
        }
    }

    #[test]
    fn spine_counts_match_population_closed_form() {
        let d = ternary(0.25);
        for n in 0..=3 {
            for tree in enumerate_trees_for(&d, n, DEFAULT_ENUMERATION_CAP).unwrap() {
                let x_n = tree.population(n);
                assert_eq!(count_spines(&tree, n, false), x_n);
                assert_eq!(count_spines(&tree, n, true), x_n * x_n.saturating_sub(1));
            }
        }
        // Explicit small cases.
        let full = Tree::from_generation_counts(vec![vec![2], vec![2, 2]]).unwrap();
        assert_eq!(count_spines(&full, 2, false), 4);
        assert_eq!(count_spines(&full, 2, true), 12);
        assert_eq!(count_spines(&Tree::root_only(), 1, false), 0);
    }

    #[test]
    fn second_factorial_mass_is_n_sigma_sq() {
        // Σ_t G_n(t)·X_n(X_n-1) = nσ².
        for d in [binary(), ternary(0.3)] {
            for n in 1..=4 {
                let total: f64 = enumerate_trees_for(&d, n, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .iter()
                    .map(|t| {
                        let x = t.population(n) as f64;
                        gw_weight(t, &d, n).unwrap() * x * (x - 1.0)
                    })
                    .sum();
                assert!(
                    (total - n as f64 * d.variance()).abs() < 1e-10,
                    "n={n}: {total}"
                );
            }
        }
    }

    #[test]
    fn change_of_measure_simple_functionals() {
        let d = binary();
        // g ≡ 1: both sides are 1.
        let check = verify_change_of_measure(&d, 1, &|_| 1.0, BiasOrder::Second, 1000).unwrap();
        assert!((check.lhs - 1.0).abs() < 1e-12 && check.gap < 1e-12);
        // Indicator of Z_2 = 4 under the second-order measure: 0.75.
        let check = verify_change_of_measure(
            &d,
            2,
            &|path| if path[1] == 4 { 1.0 } else { 0.0 },
            BiasOrder::Second,
            1000,
        )
        .unwrap();
        assert!((check.lhs - 0.75).abs() < 1e-12);
        assert!(check.gap < 1e-12);
        // g = Z_2 under the first-order measure: E[Z²]/E[Z] = 3.
        let check = verify_change_of_measure(
            &d,
            2,
            &|path| path[1] as f64,
            BiasOrder::First,
            1000,
        )
        .unwrap();
        assert!((check.lhs - 3.0).abs() < 1e-12);
        assert!(check.gap < 1e-12);
    }

    #[test]
    fn change_of_measure_random_functional_battery() {
        // Random bounded functionals: coefficients in [0,1] indexed by path.
        let mut rng = stream_rng(99, 0);
        for d in [binary(), ternary(0.3)] {
            for n in 1..=3 {
                let paths: Vec<Vec<u64>> = path_law(&d, n, None, DEFAULT_ENUMERATION_CAP)
                    .unwrap()
                    .into_keys()
                    .collect();
                for _ in 0..20 {
                    let table: HashMap<Vec<u64>, f64> = paths
                        .iter()
                        .map(|p| (p.clone(), rng.random::<f64>()))
                        .collect();
                    for order in [BiasOrder::First, BiasOrder::Second] {
                        let g = |path: &[u64]| table[path];
                        let check =
                            verify_change_of_measure(&d, n, &g, order, DEFAULT_ENUMERATION_CAP)
                                .unwrap();
                        assert!(check.gap <= 1e-10, "n={n} {order:?}: gap {}", check.gap);
                    }
                }
            }
        }
    }

    #[test]
    fn transforms_match_enumeration_sums() {
        // The generating-function engine against the raw measure sums:
        // Σ_t G_n(t)·e^(-λX_n), Σ_t Ġ_n(t)·e^(-λX_n), Σ_t G̈_n(t)·e^(-λX_n).
        use crate::exact;
        let d = binary();
        for n in 1..=3 {
            let trees = enumerate_trees_for(&d, n, DEFAULT_ENUMERATION_CAP).unwrap();
            for lambda in [0.4f64, 1.0] {
                let mut plain = 0.0;
                let mut first = 0.0;
                let mut second = 0.0;
                for t in &trees {
                    let weight = (-lambda * t.population(n) as f64).exp();
                    plain += gw_weight(t, &d, n).unwrap() * weight;
                    first += biased_weight(t, &d, n, BiasOrder::First).unwrap() * weight;
                    second += biased_weight(t, &d, n, BiasOrder::Second).unwrap() * weight;
                }
                let v = exact::laplace_population(&d, n, lambda).unwrap();
                assert!((v - plain).abs() < 1e-13, "plain n={n} λ={lambda}");
                let v = exact::laplace_size_biased(
                    &d,
                    n,
                    lambda,
                    exact::SizeBiasedMethod::Product,
                )
                .unwrap();
                assert!((v - first).abs() < 1e-13, "first n={n} λ={lambda}");
                let v = exact::laplace_two_spine(
                    &d,
                    n,
                    lambda,
                    exact::TwoSpineMethod::Decomposition,
                )
                .unwrap();
                assert!((v - second).abs() < 1e-13, "second n={n} λ={lambda}");
            }
        }
    }

    #[test]
    fn two_spine_measures_are_not_consistent() {
        // The marginal of the height-2 two-spine measure on the first
        // generation differs from the height-1 measure: with support
        // {0,1,2}, a single child can still split later.
        let d = ternary(0.3);
        let law1 = path_law(&d, 1, Some(BiasOrder::Second), 1000).unwrap();
        let z1_mass_one: f64 = law1
            .iter()
            .filter(|(path, _)| path[0] == 1)
            .map(|(_, w)| w)
            .sum();
        assert!(z1_mass_one.abs() < 1e-15, "height-1 measure: {z1_mass_one}");

        let law2 = path_law(&d, 2, Some(BiasOrder::Second), DEFAULT_ENUMERATION_CAP).unwrap();
        let marginal_one: f64 = law2
            .iter()
            .filter(|(path, _)| path[0] == 1)
            .map(|(_, w)| w)
            .sum();
        assert!(marginal_one > 0.1, "height-2 marginal: {marginal_one}");
    }

    #[test]
    fn tree_json_round_trip() {
        let tree = Tree::from_generation_counts(vec![vec![2], vec![0, 2]]).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        assert_eq!(json, r#"{"height_cap":2,"child_counts":[2,0,2]}"#);
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);

        // Inconsistent flat lists are rejected.
        let bad: std::result::Result<Tree, _> =
            serde_json::from_str(r#"{"height_cap":2,"child_counts":[2,0]}"#);
        assert!(bad.is_err());
        let bad: std::result::Result<Tree, _> =
            serde_json::from_str(r#"{"height_cap":1,"child_counts":[0,7]}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn particle_labels() {
        let u = Particle::from_label(vec![2, 1, 3]).unwrap();
        assert_eq!(u.generation(), 3);
        assert_eq!(u.parent().unwrap().label(), &[2, 1]);
        assert!(Particle::root().is_ancestor_of(&u));
        assert!(Particle::from_label(vec![2, 1]).unwrap().is_ancestor_of(&u));
        assert!(!Particle::from_label(vec![1]).unwrap().is_ancestor_of(&u));
        assert_eq!(Particle::root().parent(), None);
        assert!(Particle::from_label(vec![0]).is_err());
        assert_eq!(format!("{u}"), "2.1.3");
    }

    #[test]
    fn tree_structure_accessors() {
        let tree = Tree::from_generation_counts(vec![vec![2], vec![1, 0]]).unwrap();
        assert_eq!(tree.populations(), vec![1, 2, 1]);
        assert_eq!(tree.path(), vec![2, 1]);
        assert_eq!(tree.height(), 2);
        assert_eq!(tree.particles().len(), 4);
        let first_child = Particle::from_label(vec![1]).unwrap();
        assert_eq!(tree.child_count(&first_child), Some(1));
        let stranger = Particle::from_label(vec![3]).unwrap();
        assert_eq!(tree.child_count(&stranger), None);

        // Validation rejects inconsistent generations.
        assert!(Tree::from_generation_counts(vec![vec![2], vec![1]]).is_err());
        assert!(Tree::from_generation_counts(vec![vec![1, 1]]).is_err());
    }
}

//! KSG (algorithm 1) k-nearest-neighbor mutual information estimator.
//!
//! For every sample the distance `eps` to its k-th nearest neighbor in the
//! joint space is found under the max-norm, then the neighbors strictly
//! closer than `eps` are counted in each marginal space:
//!
//! ```text
//! I = psi(k) + psi(N) - <psi(n_x + 1) + psi(n_y + 1)>
//! ```

mod digamma;
mod kdtree;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use digamma::digamma;
pub(crate) use digamma::digamma_unchecked;
pub use kdtree::KdTree;

use crate::error::{Error, Result};
use crate::seed::{mix64, rng_for};

/// Above this many samples the automatic search switches to kd-trees. Both
/// searches give identical results; the limit is the measured single-core
/// crossover for 2-D marginals.
pub const BRUTE_FORCE_LIMIT: usize = 160;

/// `n` points of fixed dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("point dimension must be positive"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::contract(format!(
                "{} coordinates do not form points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::contract("point coordinates must be finite"));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::contract("rows have inconsistent dimension"));
        }
        Self::new(dim, rows.concat())
    }

    /// One-dimensional cloud from scalar samples.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, l: usize) -> &[f64] {
        &self.coords[l * self.dim..(l + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|v| v * c).collect(),
        }
    }

    /// Reorders points so that point `l` of the result is point `perm[l]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(self.point(p));
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Concatenates coordinates point by point: `[self_l, other_l]`.
    pub fn hstack(&self, other: &PointCloud) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::contract(format!(
                "cannot stack clouds of {} and {} points",
                self.len(),
                other.len()
            )));
        }
        let mut coords = Vec::with_capacity(self.coords.len() + other.coords.len());
        for l in 0..self.len() {
            coords.extend_from_slice(self.point(l));
            coords.extend_from_slice(other.point(l));
        }
        Ok(Self {
            dim: self.dim + other.dim,
            coords,
        })
    }

    /// Pooled standard deviation over all coordinates.
    pub fn spread(&self) -> f64 {
        let n = self.len() as f64;
        let mut total = 0.0;
        for c in 0..self.dim {
            let mean = self.coords.iter().skip(c).step_by(self.dim).sum::<f64>() / n;
            total += self
                .coords
                .iter()
                .skip(c)
                .step_by(self.dim)
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n;
        }
        (total / self.dim as f64).sqrt()
    }

    fn is_constant(&self) -> bool {
        let first = self.point(0);
        (1..self.len()).all(|l| self.point(l) == first)
    }

    fn content_hash(&self) -> u64 {
        self.coords
            .iter()
            .fold(mix64(self.dim as u64), |h, v| mix64(h ^ v.to_bits()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborSearch {
    /// Brute force up to [`BRUTE_FORCE_LIMIT`] samples, kd-tree above.
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

impl NeighborSearch {
    fn use_tree(self, n: usize) -> bool {
        match self {
            NeighborSearch::Auto => n > BRUTE_FORCE_LIMIT,
            NeighborSearch::BruteForce => false,
            NeighborSearch::KdTree => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsgParams {
    /// Neighbor count K.
    pub k: usize,
    /// Tie-breaking noise amplitude relative to each cloud's spread; 0 disables.
    pub jitter_scale: f64,
    pub seed: u64,
    pub search: NeighborSearch,
}

impl Default for KsgParams {
    fn default() -> Self {
        Self {
            k: 3,
            jitter_scale: 1e-10,
            seed: 0,
            search: NeighborSearch::Auto,
        }
    }
}

impl KsgParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_jitter(mut self, jitter_scale: f64) -> Self {
        self.jitter_scale = jitter_scale;
        self
    }

    pub fn with_search(mut self, search: NeighborSearch) -> Self {
        self.search = search;
        self
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::contract("k must be at least 1"));
        }
        if n <= self.k {
            return Err(Error::contract(format!(
                "{n} samples are not enough for k = {}",
                self.k
            )));
        }
        if !(self.jitter_scale >= 0.0) || !self.jitter_scale.is_finite() {
            return Err(Error::contract("jitter_scale must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A marginal sample set ready for repeated KSG evaluations: jittered once,
/// with its search index built once.
#[derive(Debug, Clone)]
pub struct Marginal {
    cloud: PointCloud,
    tree: Option<KdTree>,
    constant: bool,
}

impl Marginal {
    pub fn prepare(cloud: &PointCloud, params: &KsgParams) -> Self {
        let constant = cloud.is_empty() || cloud.is_constant();
        let cloud = if constant || params.jitter_scale == 0.0 {
            cloud.clone()
        } else {
            jittered(cloud, params)
        };
        let tree = params
            .search
            .use_tree(cloud.len())
            .then(|| KdTree::build(cloud.coords(), cloud.dim()));
        Self {
            cloud,
            tree,
            constant,
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    fn count_within(&self, l: usize, radius: f64) -> usize {
        let q = self.cloud.point(l);
        match &self.tree {
            Some(tree) => tree.count_within(q, l, radius),
            None => brute_count(&self.cloud, l, radius),
        }
    }
}

/// Adds uniform noise in `[-a, a)`, `a = jitter_scale * spread`. The stream
/// is keyed by the cloud's content so a cloud receives the same noise
/// whichever argument position it is passed in.
fn jittered(cloud: &PointCloud, params: &KsgParams) -> PointCloud {
    let amplitude = params.jitter_scale * cloud.spread();
    let mut rng = rng_for(params.seed, &[cloud.content_hash()]);
    let coords = cloud
        .coords
        .iter()
        .map(|v| v + amplitude * rng.random_range(-1.0..1.0))
        .collect();
    PointCloud {
        dim: cloud.dim,
        coords,
    }
}

fn brute_count(cloud: &PointCloud, l: usize, radius: f64) -> usize {
    let q = cloud.point(l);
    let inside: usize = cloud
        .coords()
        .chunks_exact(cloud.dim())
        .map(|p| (kdtree::chebyshev(q, p) < radius) as usize)
        .sum();
    // the query itself sits at distance exactly 0
    inside - (0.0 < radius) as usize
}

/// `best` is scratch space holding the `k` smallest distances seen so far.
fn brute_kth(joint: &PointCloud, l: usize, k: usize, best: &mut Vec<f64>) -> f64 {
    let q = joint.point(l);
    best.clear();
    best.resize(k, f64::INFINITY);
    for (j, p) in joint.coords().chunks_exact(joint.dim()).enumerate() {
        let d = kdtree::chebyshev(q, p);
        if d < best[k - 1] && j != l {
            let mut i = k - 1;
            while i > 0 && best[i - 1] > d {
                best[i] = best[i - 1];
                i -= 1;
            }
            best[i] = d;
        }
    }
    best[k - 1]
}

/// Per-sample KSG quantities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborCounts {
    /// Max-norm distance to the k-th joint neighbor, stored as raw bits so
    /// the struct compares exactly.
    pub eps_bits: Vec<u64>,
    pub n_x: Vec<usize>,
    pub n_y: Vec<usize>,
}

impl NeighborCounts {
    pub fn eps(&self) -> impl Iterator<Item = f64> + '_ {
        self.eps_bits.iter().map(|&b| f64::from_bits(b))
    }
}

/// Joint k-th neighbor distances and strict marginal counts, with `x`
/// sample `pairing[l]` matched to `y` sample `l` (identity when `None`).
pub(crate) fn neighbor_counts(
    x: &Marginal,
    y: &Marginal,
    pairing: Option<&[usize]>,
    k: usize,
    search: NeighborSearch,
) -> NeighborCounts {
    let n = y.len();
    let x_index = |l: usize| pairing.map_or(l, |p| p[l]);
    let joint = {
        let (dx, dy) = (x.cloud.dim(), y.cloud.dim());
        let mut coords = Vec::with_capacity(n * (dx + dy));
        for l in 0..n {
            coords.extend_from_slice(x.cloud.point(x_index(l)));
            coords.extend_from_slice(y.cloud.point(l));
        }
        PointCloud {
            dim: dx + dy,
            coords,
        }
    };

    let eps: Vec<f64> = if search.use_tree(n) {
        let tree = KdTree::build(joint.coords(), joint.dim());
        let mut eps = vec![0.0; n];
        for l in tree.order() {
            eps[l] = tree.kth_distance(joint.point(l), l, k);
        }
        eps
    } else {
        let mut scratch = Vec::with_capacity(k);
        (0..n).map(|l| brute_kth(&joint, l, k, &mut scratch)).collect()
    };

    let mut n_x = vec![0; n];
    let mut n_y = vec![0; n];
    let mut count = |l: usize| {
        n_x[l] = x.count_within(x_index(l), eps[l]);
        n_y[l] = y.count_within(l, eps[l]);
    };
    match &y.tree {
        Some(tree) => tree.order().for_each(&mut count),
        None => (0..n).for_each(&mut count),
    }
    NeighborCounts {
        eps_bits: eps.iter().map(|e| e.to_bits()).collect(),
        n_x,
        n_y,
    }
}

/// KSG estimate from prepared marginals. A constant marginal carries no
/// information and yields exactly 0.
pub(crate) fn ksg_prepared(
    x: &Marginal,
    y: &Marginal,
    pairing: Option<&[usize]>,
    params: &KsgParams,
) -> f64 {
    if x.constant || y.constant {
        return 0.0;
    }
    let counts = neighbor_counts(x, y, pairing, params.k, params.search);
    ksg_from_counts(&counts, params.k)
}

pub(crate) fn ksg_from_counts(counts: &NeighborCounts, k: usize) -> f64 {
    let n = counts.n_x.len();
    let mut acc = 0.0;
    for (&nx, &ny) in counts.n_x.iter().zip(&counts.n_y) {
        acc += digamma_unchecked(nx as f64 + 1.0) + digamma_unchecked(ny as f64 + 1.0);
    }
    digamma_unchecked(k as f64) + digamma_unchecked(n as f64) - acc / n as f64
}

fn check_pair(xs: &PointCloud, ys: &PointCloud, params: &KsgParams) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::contract(format!(
            "point counts differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    params.validate(xs.len())
}

/// Mutual information (nats) between paired samples `xs[l]`, `ys[l]`.
pub fn ksg_mi(xs: &PointCloud, ys: &PointCloud, params: &KsgParams) -> Result<f64> {
    check_pair(xs, ys, params)?;
    let x = Marginal::prepare(xs, params);
    let y = Marginal::prepare(ys, params);
    Ok(ksg_prepared(&x, &y, None, params))
}

/// Exposes `(eps_l, n_x^l, n_y^l)` for every sample, without jitter.
pub fn knn_counts(
    xs: &PointCloud,
    ys: &PointCloud,
    k: usize,
    search: NeighborSearch,
) -> Result<NeighborCounts> {
    let params = KsgParams {
        k,
        jitter_scale: 0.0,
        seed: 0,
        search,
    };
    check_pair(xs, ys, &params)?;
    let x = Marginal::prepare(xs, &params);
    let y = Marginal::prepare(ys, &params);
    Ok(neighbor_counts(&x, &y, None, k, search))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_pair(n: usize, rho: f64, seed: u64) -> (PointCloud, PointCloud) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            xs.push(a);
            ys.push(rho * a + (1.0 - rho * rho).sqrt() * b);
        }
        (
            PointCloud::from_scalars(&xs).unwrap(),
            PointCloud::from_scalars(&ys).unwrap(),
        )
    }

    #[test]
    fn collinear_points_interior_eps_is_spacing() {
        let xs = PointCloud::from_scalars(&[0.0, 2.0, 4.0, 6.0]).unwrap();
        let ys = PointCloud::from_scalars(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        for search in [NeighborSearch::BruteForce, NeighborSearch::KdTree] {
            let c = knn_counts(&xs, &ys, 1, search).unwrap();
            let eps: Vec<f64> = c.eps().collect();
            assert_eq!(eps, vec![2.0, 2.0, 2.0, 2.0]);
            // strict inequality: the neighbor at exactly eps is not counted
            assert_eq!(c.n_x, vec![0, 0, 0, 0]);
            assert_eq!(c.n_y, vec![3, 3, 3, 3]);
        }
    }

    #[test]
    fn duplicates_without_jitter_are_not_counted() {
        let xs = PointCloud::from_scalars(&[1.0, 1.0, 1.0, 5.0, 9.0]).unwrap();
        let ys = PointCloud::from_scalars(&[2.0, 2.0, 2.0, 3.0, 4.0]).unwrap();
        let c = knn_counts(&xs, &ys, 2, NeighborSearch::BruteForce).unwrap();
        // the three duplicates see two neighbors at distance 0
        assert_eq!(c.eps().take(3).collect::<Vec<_>>(), vec![0.0; 3]);
        assert_eq!(&c.n_x[..3], &[0, 0, 0]);
        assert_eq!(&c.n_y[..3], &[0, 0, 0]);
    }

    #[test]
    fn independent_gaussians_near_zero() {
        let (xs, _) = gaussian_pair(10_000, 0.0, 1);
        let (_, ys) = gaussian_pair(10_000, 0.0, 2);
        let mi = ksg_mi(&xs, &ys, &KsgParams::default()).unwrap();
        assert!(mi.abs() <= 0.02, "mi = {mi}");
    }

    #[test]
    fn correlated_gaussian_matches_closed_form() {
        let (xs, ys) = gaussian_pair(10_000, 0.9, 5);
        let mi = ksg_mi(&xs, &ys, &KsgParams::default()).unwrap();
        let truth = -0.5 * (1.0f64 - 0.81).ln();
        assert!((truth - 0.8304).abs() < 1e-4);
        assert!((mi - truth).abs() <= 0.05, "mi = {mi}");
    }

    #[test]
    fn broken_pairing_gives_zero() {
        let (xs, ys) = gaussian_pair(10_000, 0.9, 11);
        let mut perm: Vec<usize> = (0..10_000).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        let mi = ksg_mi(&xs.permuted(&perm), &ys, &KsgParams::default()).unwrap();
        assert!(mi.abs() <= 0.02, "mi = {mi}");
    }

    #[test]
    fn argument_order_does_not_matter() {
        let (xs, ys) = gaussian_pair(3000, 0.6, 8);
        let p = KsgParams::default().with_seed(4);
        let a = ksg_mi(&xs, &ys, &p).unwrap();
        let b = ksg_mi(&ys, &xs, &p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn joint_power_of_two_scaling_is_exact() {
        let (xs, ys) = gaussian_pair(3000, 0.7, 21);
        let p = KsgParams::default().with_jitter(0.0);
        let base = ksg_mi(&xs, &ys, &p).unwrap();
        for c in [0.25, 2.0, 8.0] {
            let scaled = ksg_mi(&xs.scaled(c), &ys.scaled(c), &p).unwrap();
            assert_eq!(base.to_bits(), scaled.to_bits(), "c = {c}");
        }
    }

    #[test]
    fn single_block_scaling_is_statistically_invariant() {
        let p = KsgParams::default();
        let mut diff = 0.0;
        for seed in 0..10 {
            let (xs, ys) = gaussian_pair(5000, 0.7, 100 + seed);
            let a = ksg_mi(&xs, &ys, &p).unwrap();
            let b = ksg_mi(&xs.scaled(37.5), &ys, &p).unwrap();
            diff += (a - b) / 10.0;
        }
        assert!(diff.abs() <= 0.01, "mean diff = {diff}");
    }

    #[test]
    fn constant_cloud_carries_no_information() {
        let xs = PointCloud::from_scalars(&[0.0; 50]).unwrap();
        let (_, ys) = gaussian_pair(50, 0.0, 1);
        assert_eq!(ksg_mi(&xs, &ys, &KsgParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn contract_errors() {
        let (xs, ys) = gaussian_pair(10, 0.0, 1);
        let short = PointCloud::from_scalars(&[1.0, 2.0]).unwrap();
        assert!(ksg_mi(&xs, &short, &KsgParams::default()).is_err());
        let tiny = PointCloud::from_scalars(&[1.0, 2.0, 3.0]).unwrap();
        assert!(ksg_mi(&tiny, &tiny, &KsgParams::default()).is_err());
        assert!(ksg_mi(&xs, &ys, &KsgParams::default().with_k(0)).is_err());
        assert!(PointCloud::new(2, vec![1.0, 2.0, 3.0]).is_err());
        assert!(PointCloud::new(1, vec![f64::INFINITY]).is_err());
    }

    fn cloud_strategy(n: usize, dim: usize) -> impl Strategy<Value = PointCloud> {
        proptest::collection::vec(-3i32..3, n * dim).prop_map(move |v| {
            // coarse values force many exact ties
            PointCloud::new(dim, v.into_iter().map(|c| c as f64 * 0.5).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn tree_counts_equal_brute_force(
            (xs, ys, k) in (5usize..200, 1usize..4, 1usize..4, 1usize..5).prop_flat_map(|(n, dx, dy, k)| {
                (cloud_strategy(n, dx), cloud_strategy(n, dy), Just(k.min(n - 1)))
            })
        ) {
            let brute = knn_counts(&xs, &ys, k, NeighborSearch::BruteForce).unwrap();
            let tree = knn_counts(&xs, &ys, k, NeighborSearch::KdTree).unwrap();
            prop_assert_eq!(brute, tree);
        }

        #[test]
        fn estimate_is_finite(
            (xs, ys) in (5usize..100, 1usize..3).prop_flat_map(|(n, d)| (cloud_strategy(n, d), cloud_strategy(n, d)))
        ) {
            let mi = ksg_mi(&xs, &ys, &KsgParams::default()).unwrap();
            prop_assert!(mi.is_finite());
        }
    }
}

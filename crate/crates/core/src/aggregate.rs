//! Coupled frequency sets and the final MI estimate.

use std::collections::BTreeSet;

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{ksg_mi, KsgParams, PointCloud};
use crate::mif::{MifMatrix, SignificanceMask};
use crate::spectral::SpectralIncrements;

/// Frequency bins of X (`lambda_x`) and Y (`lambda_y`) that take part in at
/// least one significant pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSets {
    pub lambda_x: Vec<usize>,
    pub lambda_y: Vec<usize>,
}

impl CouplingSets {
    /// Sorts and deduplicates both sets.
    pub fn new(lambda_x: impl IntoIterator<Item = usize>, lambda_y: impl IntoIterator<Item = usize>) -> Self {
        let x: BTreeSet<usize> = lambda_x.into_iter().collect();
        let y: BTreeSet<usize> = lambda_y.into_iter().collect();
        Self {
            lambda_x: x.into_iter().collect(),
            lambda_y: y.into_iter().collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.lambda_x.len()
    }

    pub fn q(&self) -> usize {
        self.lambda_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_x.is_empty() && self.lambda_y.is_empty()
    }
}

pub fn coupled_sets(mask: &SignificanceMask) -> CouplingSets {
    let pairs = mask.pairs();
    CouplingSets::new(pairs.iter().map(|p| p.0), pairs.iter().map(|p| p.1))
}

/// Concatenates `(re, im)` of the selected bins, in ascending bin order,
/// into one `2 * |set|`-dimensional point per window.
pub fn stack_increments(inc: &SpectralIncrements, set: &[usize]) -> Result<PointCloud> {
    if set.is_empty() {
        return Err(Error::contract("cannot stack an empty frequency set"));
    }
    let bins: BTreeSet<usize> = set.iter().copied().collect();
    for &i in &bins {
        inc.check_row(i)?;
    }
    let mut coords = Vec::with_capacity(inc.n_s() * 2 * bins.len());
    for l in 0..inc.n_s() {
        for &i in &bins {
            let z = inc.get(i, l);
            coords.push(z.re);
            coords.push(z.im);
        }
    }
    PointCloud::new(2 * bins.len(), coords)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// KSG between the stacked coupled bins, divided by `max(P, Q)`.
    Joint,
    /// Sum of same-frequency estimates over `0..=n_f/2`, divided by `n_f`.
    LinearShortcut,
    /// Joint estimates per connected group of coupled bins, summed.
    Clustered,
    ZeroNoCoupling,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Joint => "joint",
            Method::LinearShortcut => "linear_shortcut",
            Method::Clustered => "clustered",
            Method::ZeroNoCoupling => "zero_no_coupling",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    /// Headline estimate, clamped at zero.
    pub mi_nats: f64,
    pub mi_bits: f64,
    pub method: Method,
    pub lambda_x: Vec<usize>,
    pub lambda_y: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub n_f: usize,
    pub n_s: usize,
    pub k: usize,
    pub n_p: usize,
    pub seed: u64,
    /// Unclamped estimate.
    pub raw_mi_nats: f64,
}

impl MiReport {
    fn new(raw: f64, method: Method, sets: &CouplingSets, n_f: usize, n_s: usize, params: &KsgParams) -> Self {
        let mi_nats = raw.max(0.0);
        Self {
            mi_nats,
            mi_bits: mi_nats / std::f64::consts::LN_2,
            method,
            lambda_x: sets.lambda_x.clone(),
            lambda_y: sets.lambda_y.clone(),
            p: sets.p(),
            q: sets.q(),
            n_f,
            n_s,
            k: params.k,
            n_p: 0,
            seed: params.seed,
            raw_mi_nats: raw,
        }
    }

    /// Records the significance settings the coupling sets came from.
    pub fn with_significance(mut self, mask: &SignificanceMask) -> Self {
        self.n_p = mask.n_p;
        self
    }

    pub fn sets(&self) -> CouplingSets {
        CouplingSets::new(self.lambda_x.iter().copied(), self.lambda_y.iter().copied())
    }

    pub fn summary(&self) -> String {
        format!(
            "MI = {:.6} nats ({:.6} bits) via {}",
            self.mi_nats, self.mi_bits, self.method
        )
    }
}

fn joint_estimate(
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    sets: &CouplingSets,
    params: &KsgParams,
) -> Result<f64> {
    let xs = stack_increments(inc_x, &sets.lambda_x)?;
    let ys = stack_increments(inc_y, &sets.lambda_y)?;
    ksg_mi(&xs, &ys, params)
}

/// `I(X; Y) = I(X(Lx); Y(Ly)) / max(P, Q)`, or 0 with no coupled bins.
pub fn estimate_mi(
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    sets: &CouplingSets,
    params: &KsgParams,
) -> Result<MiReport> {
    let (n_f, n_s) = (inc_x.n_f(), inc_x.n_s());
    if sets.p() == 0 || sets.q() == 0 {
        return Ok(MiReport::new(0.0, Method::ZeroNoCoupling, &CouplingSets::default(), n_f, n_s, params));
    }
    let joint = joint_estimate(inc_x, inc_y, sets, params)?;
    let raw = joint / sets.p().max(sets.q()) as f64;
    Ok(MiReport::new(raw, Method::Joint, sets, n_f, n_s, params))
}

/// Shortcut for models without cross-frequency coupling:
/// `(1 / n_f) * sum_{i=0}^{n_f/2} max(MIF(i, i), 0)`.
pub fn estimate_mi_linear(mif: &MifMatrix, params: &KsgParams, n_s: usize) -> Result<MiReport> {
    let diag = (0..=mif.n_f / 2)
        .map(|i| {
            mif.value(i, i).ok_or_else(|| {
                Error::contract(format!("same-frequency estimate for bin {i} is not available"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    linear_from_diagonal(&diag, mif.n_f, params, n_s)
}

/// The linear shortcut from same-frequency estimates for bins `0..=n_f/2`
/// (see [`crate::mif::mif_diagonal`]).
pub fn linear_from_diagonal(diag: &[f64], n_f: usize, params: &KsgParams, n_s: usize) -> Result<MiReport> {
    if diag.len() != n_f / 2 + 1 {
        return Err(Error::contract(format!(
            "expected {} same-frequency estimates, got {}",
            n_f / 2 + 1,
            diag.len()
        )));
    }
    let total: f64 = diag.iter().map(|v| v.max(0.0)).sum();
    let bins = 0..=n_f / 2;
    let sets = CouplingSets::new(bins.clone(), bins);
    Ok(MiReport::new(total / n_f as f64, Method::LinearShortcut, &sets, n_f, n_s, params))
}

/// Connected components of the bipartite graph whose edges are the
/// significant pairs; each component lists its X and Y bins.
pub fn coupling_components(mask: &SignificanceMask) -> Vec<CouplingSets> {
    let pairs = mask.pairs();
    let sets = coupled_sets(mask);
    let p = sets.p();
    let x_node = |i: usize| sets.lambda_x.binary_search(&i).unwrap();
    let y_node = |j: usize| p + sets.lambda_y.binary_search(&j).unwrap();
    let mut uf = UnionFind::<usize>::new(p + sets.q());
    for &(i, j) in &pairs {
        uf.union(x_node(i), y_node(j));
    }
    let mut groups: Vec<(usize, CouplingSets)> = Vec::new();
    for &(i, j) in &pairs {
        let root = uf.find(x_node(i));
        match groups.iter_mut().find(|(r, _)| *r == root) {
            Some((_, g)) => {
                g.lambda_x.push(i);
                g.lambda_y.push(j);
            }
            None => groups.push((
                root,
                CouplingSets {
                    lambda_x: vec![i],
                    lambda_y: vec![j],
                },
            )),
        }
    }
    groups
        .into_iter()
        .map(|(_, g)| CouplingSets::new(g.lambda_x, g.lambda_y))
        .collect()
}

/// Chain-rule variant: joint estimates per independent group of coupled
/// bins, summed and divided by the global `max(P, Q)`.
pub fn clustered_mi(
    mask: &SignificanceMask,
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    params: &KsgParams,
) -> Result<MiReport> {
    let sets = coupled_sets(mask);
    let (n_f, n_s) = (inc_x.n_f(), inc_x.n_s());
    if sets.is_empty() {
        return Ok(MiReport::new(0.0, Method::ZeroNoCoupling, &sets, n_f, n_s, params).with_significance(mask));
    }
    let mut total = 0.0;
    for component in coupling_components(mask) {
        total += joint_estimate(inc_x, inc_y, &component, params)?;
    }
    let raw = total / sets.p().max(sets.q()) as f64;
    Ok(MiReport::new(raw, Method::Clustered, &sets, n_f, n_s, params).with_significance(mask))
}

/// Picks the aggregation from the mask: nothing significant gives zero,
/// diagonal-only coupling uses the linear shortcut, anything else the joint
/// (or clustered) estimate.
pub fn auto_method(
    mask: &SignificanceMask,
    mif: &MifMatrix,
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    params: &KsgParams,
    clustered: bool,
) -> Result<MiReport> {
    let pairs = mask.pairs();
    if pairs.is_empty() {
        return estimate_mi(inc_x, inc_y, &CouplingSets::default(), params)
            .map(|r| r.with_significance(mask));
    }
    if pairs.iter().all(|&(i, j)| i == j) {
        return estimate_mi_linear(mif, params, inc_x.n_s()).map(|r| r.with_significance(mask));
    }
    if clustered {
        clustered_mi(mask, inc_x, inc_y, params)
    } else {
        estimate_mi(inc_x, inc_y, &coupled_sets(mask), params).map(|r| r.with_significance(mask))
    }
}

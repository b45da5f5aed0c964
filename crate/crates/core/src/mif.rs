//! Mutual information in frequency and its permutation significance test.
//!
//! `MI_XY(i, j)` is the KSG estimate between the 2-D `(re, im)` samples of
//! X's increment at bin `i` and Y's increment at bin `j`. A pair is
//! significant when its estimate beats every one of `n_p` estimates computed
//! after randomly re-pairing X's samples.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{ksg_prepared, KsgParams, Marginal};
use crate::seed::rng_for;
use crate::spectral::{increment_samples, SpectralIncrements};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MifMode {
    /// Between two processes; not symmetric in general.
    Cross,
    /// Between frequencies of one process; symmetric, diagonal excluded.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Bins `0..=n_f/2`; the rest are conjugates for real input.
    #[default]
    Half,
    Full,
}

impl GridMode {
    pub fn indices(self, n_f: usize) -> Vec<usize> {
        match self {
            GridMode::Half => (0..=n_f / 2).collect(),
            GridMode::Full => (0..n_f).collect(),
        }
    }
}

/// MI-in-frequency estimates over `grid x grid`. `None` marks an excluded
/// (auto-mode diagonal) entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MifMatrix {
    pub n_f: usize,
    pub grid: Vec<usize>,
    pub mode: MifMode,
    /// Row-major over grid positions, nats.
    pub values: Vec<Option<f64>>,
}

impl MifMatrix {
    fn position(&self, freq: usize) -> Option<usize> {
        self.grid.iter().position(|&g| g == freq)
    }

    /// Estimate for frequency indices `(i, j)`; `None` if off-grid or excluded.
    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (self.position(i)?, self.position(j)?);
        self.values[a * self.grid.len() + b]
    }

    /// Iterates `(i, j, value)` over grid frequency indices.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Option<f64>)> + '_ {
        let g = self.grid.len();
        self.values
            .iter()
            .enumerate()
            .map(move |(p, v)| (self.grid[p / g], self.grid[p % g], *v))
    }

    /// Grid-indexed CSV: header `i\j,<j...>`, excluded cells as `excluded`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_grid_csv(out, &self.grid, |p| match self.values[p] {
            Some(v) => format!("{v:?}"),
            None => "excluded".to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceMask {
    pub grid: Vec<usize>,
    /// Row-major over grid positions.
    pub significant: Vec<bool>,
    pub n_p: usize,
    /// Implied level `1 / (n_p + 1)`.
    pub alpha: f64,
    pub seed: u64,
}

impl SignificanceMask {
    pub fn is_significant(&self, i: usize, j: usize) -> bool {
        let g = self.grid.len();
        match (
            self.grid.iter().position(|&v| v == i),
            self.grid.iter().position(|&v| v == j),
        ) {
            (Some(a), Some(b)) => self.significant[a * g + b],
            _ => false,
        }
    }

    /// Significant `(i, j)` frequency pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let g = self.grid.len();
        self.significant
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(p, _)| (self.grid[p / g], self.grid[p % g]))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.significant.iter().filter(|&&s| s).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_grid_csv(out, &self.grid, |p| {
            if self.significant[p] { "1" } else { "0" }.to_string()
        })
    }
}

fn write_grid_csv<W: Write>(out: W, grid: &[usize], cell: impl Fn(usize) -> String) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let map = |e: csv::Error| Error::Format(e.to_string());
    let mut header = vec!["i\\j".to_string()];
    header.extend(grid.iter().map(|j| j.to_string()));
    writer.write_record(&header).map_err(map)?;
    let g = grid.len();
    for (a, i) in grid.iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend((0..g).map(|b| cell(a * g + b)));
        writer.write_record(&record).map_err(map)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// JSON export of a matrix and its mask, the input for heatmap plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MifDocument {
    pub n_f: usize,
    pub n_s: usize,
    pub mode: MifMode,
    pub grid: Vec<usize>,
    /// `values[a][b]` in nats for grid positions `a`, `b`; null when excluded.
    pub values: Vec<Vec<Option<f64>>>,
    pub mask: Vec<Vec<bool>>,
    pub n_p: usize,
    pub alpha: f64,
    pub seed: u64,
    pub ksg: KsgParams,
}

impl MifDocument {
    pub fn new(mif: &MifMatrix, mask: &SignificanceMask, n_s: usize, ksg: KsgParams) -> Self {
        let g = mif.grid.len();
        Self {
            n_f: mif.n_f,
            n_s,
            mode: mif.mode,
            grid: mif.grid.clone(),
            values: mif.values.chunks(g).map(<[_]>::to_vec).collect(),
            mask: mask.significant.chunks(g).map(<[_]>::to_vec).collect(),
            n_p: mask.n_p,
            alpha: mask.alpha,
            seed: mask.seed,
            ksg,
        }
    }
}

fn check_shapes(inc_x: &SpectralIncrements, inc_y: &SpectralIncrements) -> Result<()> {
    if inc_x.n_s() != inc_y.n_s() {
        return Err(Error::contract(format!(
            "window counts differ: {} vs {}",
            inc_x.n_s(),
            inc_y.n_s()
        )));
    }
    Ok(())
}

fn check_grid(grid: &[usize], n_f: usize) -> Result<()> {
    if let Some(&bad) = grid.iter().find(|&&g| g >= n_f) {
        return Err(Error::IndexOutOfRange { index: bad, len: n_f });
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != grid.len() {
        return Err(Error::contract("grid has duplicate indices"));
    }
    Ok(())
}

fn same_source(a: &SpectralIncrements, b: &SpectralIncrements) -> bool {
    std::ptr::eq(a, b)
}

/// MI in frequency between X at bin `i` and Y at bin `j`.
///
/// Passing the same increments for both arguments selects the
/// within-process reading, where `i == j` is undefined (infinite).
pub fn mif_pair(
    inc_x: &SpectralIncrements,
    i: usize,
    inc_y: &SpectralIncrements,
    j: usize,
    params: &KsgParams,
) -> Result<f64> {
    check_shapes(inc_x, inc_y)?;
    if same_source(inc_x, inc_y) && i == j {
        return Err(Error::ExcludedPair(i));
    }
    let xs = increment_samples(inc_x, i)?;
    let ys = increment_samples(inc_y, j)?;
    params.validate(xs.len())?;
    let x = Marginal::prepare(&xs, params);
    let y = Marginal::prepare(&ys, params);
    Ok(ksg_prepared(&x, &y, None, params))
}

/// Prepared marginals for every grid row of X and Y.
struct PreparedRows {
    x: Vec<Marginal>,
    y: Vec<Marginal>,
}

impl PreparedRows {
    fn new(
        inc_x: &SpectralIncrements,
        inc_y: &SpectralIncrements,
        grid: &[usize],
        params: &KsgParams,
        mode: MifMode,
    ) -> Result<Self> {
        let prepare = |inc: &SpectralIncrements| -> Result<Vec<Marginal>> {
            grid.par_iter()
                .map(|&i| Ok(Marginal::prepare(&increment_samples(inc, i)?, params)))
                .collect()
        };
        let x = prepare(inc_x)?;
        let y = match mode {
            MifMode::Auto => x.clone(),
            MifMode::Cross => prepare(inc_y)?,
        };
        Ok(Self { x, y })
    }
}

/// Grid positions `(a, b)` that need an estimate; auto mode evaluates each
/// unordered pair once.
fn task_positions(g: usize, mode: MifMode) -> Vec<(usize, usize)> {
    (0..g)
        .flat_map(|a| (0..g).map(move |b| (a, b)))
        .filter(|&(a, b)| mode == MifMode::Cross || a < b)
        .collect()
}

/// Estimates MI in frequency for every pair of grid bins.
pub fn mif_matrix(
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    grid: &[usize],
    params: &KsgParams,
    mode: MifMode,
) -> Result<MifMatrix> {
    check_shapes(inc_x, inc_y)?;
    check_grid(grid, inc_x.n_f().min(inc_y.n_f()))?;
    params.validate(inc_x.n_s())?;
    let rows = PreparedRows::new(inc_x, inc_y, grid, params, mode)?;
    let g = grid.len();
    let tasks = task_positions(g, mode);
    let estimates: Vec<f64> = tasks
        .par_iter()
        .map(|&(a, b)| ksg_prepared(&rows.x[a], &rows.y[b], None, params))
        .collect();

    let mut values = vec![None; g * g];
    for (&(a, b), &v) in tasks.iter().zip(&estimates) {
        values[a * g + b] = Some(v);
        if mode == MifMode::Auto {
            values[b * g + a] = Some(v);
        }
    }
    Ok(MifMatrix {
        n_f: inc_x.n_f(),
        grid: grid.to_vec(),
        mode,
        values,
    })
}

/// Same-frequency estimates `MI_XY(i, i)` for every bin of `grid`, without
/// the rest of the matrix.
pub fn mif_diagonal(
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    grid: &[usize],
    params: &KsgParams,
) -> Result<Vec<f64>> {
    check_shapes(inc_x, inc_y)?;
    if same_source(inc_x, inc_y) {
        if let Some(&i) = grid.first() {
            return Err(Error::ExcludedPair(i));
        }
    }
    check_grid(grid, inc_x.n_f().min(inc_y.n_f()))?;
    params.validate(inc_x.n_s())?;
    grid.par_iter()
        .map(|&i| {
            let x = Marginal::prepare(&increment_samples(inc_x, i)?, params);
            let y = Marginal::prepare(&increment_samples(inc_y, i)?, params);
            Ok(ksg_prepared(&x, &y, None, params))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub is_significant: bool,
    /// Surrogates with estimate `>= observed`.
    pub exceed_count: usize,
    pub surrogates: Vec<f64>,
}

fn surrogate_pairing(n: usize, base_seed: u64, i: usize, j: usize, replicate: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(base_seed, &[i as u64, j as u64, replicate as u64]));
    perm
}

/// Permutation test for one frequency pair with all `n_p` surrogates.
pub fn permutation_test(
    inc_x: &SpectralIncrements,
    i: usize,
    inc_y: &SpectralIncrements,
    j: usize,
    n_p: usize,
    params: &KsgParams,
    base_seed: u64,
) -> Result<PermutationOutcome> {
    if n_p == 0 {
        return Err(Error::contract("n_p must be at least 1"));
    }
    check_shapes(inc_x, inc_y)?;
    if same_source(inc_x, inc_y) && i == j {
        return Err(Error::ExcludedPair(i));
    }
    let xs = increment_samples(inc_x, i)?;
    let ys = increment_samples(inc_y, j)?;
    params.validate(xs.len())?;
    let x = Marginal::prepare(&xs, params);
    let y = Marginal::prepare(&ys, params);
    let observed = ksg_prepared(&x, &y, None, params);
    let n = xs.len();
    let surrogates: Vec<f64> = (0..n_p)
        .into_par_iter()
        .map(|r| {
            let perm = surrogate_pairing(n, base_seed, i, j, r);
            ksg_prepared(&x, &y, Some(&perm), params)
        })
        .collect();
    let exceed_count = surrogates.iter().filter(|&&s| s >= observed).count();
    Ok(PermutationOutcome {
        observed,
        is_significant: exceed_count == 0,
        exceed_count,
        surrogates,
    })
}

/// Same verdict as [`permutation_test`], stopping at the first surrogate
/// that reaches the observed value.
fn is_significant(
    x: &Marginal,
    y: &Marginal,
    observed: f64,
    (i, j): (usize, usize),
    n_p: usize,
    params: &KsgParams,
    base_seed: u64,
) -> bool {
    let n = y.len();
    (0..n_p).all(|r| {
        let perm = surrogate_pairing(n, base_seed, i, j, r);
        ksg_prepared(x, y, Some(&perm), params) < observed
    })
}

/// Applies the permutation test to every entry of `mif`.
///
/// `mif` must have been computed from the same increments and parameters;
/// its entries are used as the observed statistics.
pub fn significance_mask(
    inc_x: &SpectralIncrements,
    inc_y: &SpectralIncrements,
    mif: &MifMatrix,
    n_p: usize,
    params: &KsgParams,
    base_seed: u64,
) -> Result<SignificanceMask> {
    if n_p == 0 {
        return Err(Error::contract("n_p must be at least 1"));
    }
    check_shapes(inc_x, inc_y)?;
    let rows = PreparedRows::new(inc_x, inc_y, &mif.grid, params, mif.mode)?;
    let g = mif.grid.len();
    let tasks = task_positions(g, mif.mode);
    let verdicts: Vec<bool> = tasks
        .par_iter()
        .map(|&(a, b)| match mif.values[a * g + b] {
            Some(observed) => is_significant(
                &rows.x[a],
                &rows.y[b],
                observed,
                (mif.grid[a], mif.grid[b]),
                n_p,
                params,
                base_seed,
            ),
            None => false,
        })
        .collect();

    let mut significant = vec![false; g * g];
    for (&(a, b), &s) in tasks.iter().zip(&verdicts) {
        significant[a * g + b] = s;
        if mif.mode == MifMode::Auto {
            significant[b * g + a] = s;
        }
    }
    Ok(SignificanceMask {
        grid: mif.grid.clone(),
        significant,
        n_p,
        alpha: 1.0 / (n_p as f64 + 1.0),
        seed: base_seed,
    })
}

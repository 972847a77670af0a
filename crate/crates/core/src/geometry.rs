//! Point sets, ground costs and the log-domain reductions shared by every solver.
//!
//! Costs are always handled in *scaled* form `C(x, y) / ε`: the regularization is
//! folded into the cost once, solvers run at unit regularization, and reported
//! distances are multiplied back by `ε`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Above this many points the diameter falls back to the bounding-box diagonal.
const EXACT_DIAMETER_LIMIT: usize = 4096;

/// Rows handed to a single rayon task in the parallel kernels.
const PAR_MIN_ROWS: usize = 8;

/// A set of `len` points in `R^dim`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("point dimension must be at least 1"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: index / dim });
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        assert!(dim > 0, "point dimension must be at least 1");
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::Empty("point rows"))?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::new(dim, coords)
    }

    /// One-dimensional point set from scalars.
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

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        if point.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index: self.len() });
        }
        self.coords.extend_from_slice(point);
        Ok(())
    }

    pub fn extend(&mut self, other: &PointSet) -> Result<()> {
        self.check_same_dim(other)?;
        self.coords.extend_from_slice(&other.coords);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> Result<PointSet> {
        let len = self.len();
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= len {
                return Err(Error::IndexOutOfRange { index: i, len });
            }
            coords.extend_from_slice(self.point(i));
        }
        Ok(PointSet {
            dim: self.dim,
            coords,
        })
    }

    pub(crate) fn check_same_dim(&self, other: &PointSet) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }
}

/// User-supplied ground cost `C(x, y)` (unscaled).
pub type CostFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum CostKind {
    /// `|x - y|^2`
    SquaredEuclidean,
    /// `|x - y|`
    Euclidean,
    Custom { name: String, cost: CostFn },
}

impl CostKind {
    pub fn name(&self) -> &str {
        match self {
            CostKind::SquaredEuclidean => "squared_euclidean",
            CostKind::Euclidean => "euclidean",
            CostKind::Custom { name, .. } => name,
        }
    }
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Custom { name, .. } => write!(f, "Custom({name})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Ground cost together with the regularization strength it is scaled by.
#[derive(Clone, Debug)]
pub struct CostOracle {
    kind: CostKind,
    epsilon: f64,
    lipschitz_bound: Option<f64>,
}

impl CostOracle {
    pub fn new(kind: CostKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self {
            kind,
            epsilon,
            lipschitz_bound: None,
        })
    }

    pub fn squared_euclidean(epsilon: f64) -> Result<Self> {
        Self::new(CostKind::SquaredEuclidean, epsilon)
    }

    pub fn euclidean(epsilon: f64) -> Result<Self> {
        Self::new(CostKind::Euclidean, epsilon)
    }

    /// Lipschitz constant of the *scaled* cost `C / ε`. Required for custom
    /// costs when a contraction factor is needed; overrides the built-in value.
    pub fn with_lipschitz_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound >= 0.0 && bound.is_finite()) {
            return Err(Error::invalid(format!("lipschitz bound must be >= 0, got {bound}")));
        }
        self.lipschitz_bound = Some(bound);
        Ok(self)
    }

    pub fn kind(&self) -> &CostKind {
        &self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lipschitz_bound(&self) -> Option<f64> {
        self.lipschitz_bound
    }

    /// Same cost family at a different regularization.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut out = Self::new(self.kind.clone(), epsilon)?;
        out.lipschitz_bound = self.lipschitz_bound;
        Ok(out)
    }

    #[inline]
    pub fn raw(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            CostKind::SquaredEuclidean => squared_distance(x, y),
            CostKind::Euclidean => squared_distance(x, y).sqrt(),
            CostKind::Custom { cost, .. } => cost(x, y),
        }
    }

    /// `C(x, y) / ε`
    #[inline]
    pub fn scaled(&self, x: &[f64], y: &[f64]) -> f64 {
        self.raw(x, y) / self.epsilon
    }

    /// Gradient in `x` of the scaled cost, accumulated as `out += weight * ∇`.
    pub(crate) fn accumulate_scaled_grad(
        &self,
        x: &[f64],
        y: &[f64],
        weight: f64,
        out: &mut [f64],
    ) -> std::result::Result<(), ()> {
        match &self.kind {
            CostKind::SquaredEuclidean => {
                let k = 2.0 * weight / self.epsilon;
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += k * (a - b);
                }
                Ok(())
            }
            CostKind::Euclidean => {
                let r = squared_distance(x, y).sqrt();
                if r == 0.0 {
                    return Err(());
                }
                let k = weight / (self.epsilon * r);
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += k * (a - b);
                }
                Ok(())
            }
            CostKind::Custom { .. } => Err(()),
        }
    }

    /// Lipschitz constant (in either argument) of `C / ε` over a set of the
    /// given diameter.
    pub fn scaled_lipschitz(&self, diameter: f64) -> Option<f64> {
        if let Some(bound) = self.lipschitz_bound {
            return Some(bound);
        }
        match self.kind {
            // |C(x,y) - C(x',y)| = |x - x'| |x + x' - 2y| <= 2 diam |x - x'|
            CostKind::SquaredEuclidean => Some(2.0 * diameter / self.epsilon),
            CostKind::Euclidean => Some(1.0 / self.epsilon),
            CostKind::Custom { .. } => None,
        }
    }

    /// Uniform contraction factor `κ = 1 - exp(-L diam)` of the soft
    /// C-transform in variation norm.
    pub fn contraction_factor(&self, diameter: f64) -> Option<f64> {
        self.scaled_lipschitz(diameter)
            .map(|l| -(-l * diameter).exp_m1())
    }
}

#[inline]
pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Dense `n × m` matrix of scaled costs `C(x_i, y_j) / ε`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> CostMatrix {
        let mut values = vec![0.0; self.values.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                values[j * self.rows + i] = self.values[i * self.cols + j];
            }
        }
        CostMatrix {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }

    /// `max - min` over all entries.
    pub fn variation(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo > hi {
            0.0
        } else {
            hi - lo
        }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }
}

/// Scaled pairwise costs between two nonempty point sets of equal dimension.
///
/// The evaluation costs `n·m·d` multiplications in the harness accounting;
/// callers that track work record it as a cost block.
pub fn pairwise_cost(xs: &PointSet, ys: &PointSet, cost: &CostOracle) -> Result<CostMatrix> {
    if xs.is_empty() {
        return Err(Error::Empty("row point set"));
    }
    if ys.is_empty() {
        return Err(Error::Empty("column point set"));
    }
    xs.check_same_dim(ys)?;
    let (n, m) = (xs.len(), ys.len());
    let mut values = vec![0.0; n * m];
    values
        .par_chunks_mut(m)
        .with_min_len(PAR_MIN_ROWS)
        .enumerate()
        .for_each(|(i, row)| {
            let x = xs.point(i);
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = cost.scaled(x, ys.point(j));
            }
        });
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(CostMatrix::from_raw(n, m, values))
}

/// `log Σ exp(term_i)` with max-shift, summed in index order.
///
/// Returns `-∞` when every term is `-∞`; rejects `+∞` and NaN.
pub fn log_sum_exp(log_terms: &[f64]) -> Result<f64> {
    if log_terms.is_empty() {
        return Err(Error::Empty("log_sum_exp terms"));
    }
    if let Some(index) = log_terms
        .iter()
        .position(|t| t.is_nan() || *t == f64::INFINITY)
    {
        return Err(Error::NonFinite { index });
    }
    Ok(lse(log_terms))
}

/// Unchecked two-pass log-sum-exp.
#[inline]
pub(crate) fn lse(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Streaming log-sum-exp accumulator: merges tiles in a fixed order.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LseAcc {
    max: f64,
    sum: f64,
}

impl LseAcc {
    pub(crate) const fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    /// Fold a tile of log-terms into the accumulator.
    #[inline]
    pub(crate) fn push_tile(&mut self, terms: &[f64]) {
        let tile_max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if tile_max == f64::NEG_INFINITY {
            return;
        }
        let tile_sum: f64 = terms.iter().map(|t| (t - tile_max).exp()).sum();
        if tile_max > self.max {
            self.sum = self.sum * (self.max - tile_max).exp() + tile_sum;
            self.max = tile_max;
        } else {
            self.sum += tile_sum * (tile_max - self.max).exp();
        }
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `max(f) - min(f)`; zero exactly when `f` is constant.
pub fn variation_norm(f: &[f64]) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::Empty("variation_norm input"));
    }
    if let Some(index) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(range(f.iter().copied()))
}

/// Variation norm of `f - g`, so insensitive to constants added to either side.
pub fn variation_distance(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    if f.is_empty() {
        return Err(Error::Empty("variation_distance input"));
    }
    if let Some(index) = f
        .iter()
        .zip(g)
        .position(|(a, b)| !a.is_finite() || !b.is_finite())
    {
        return Err(Error::NonFinite { index });
    }
    Ok(range(f.iter().zip(g).map(|(a, b)| a - b)))
}

#[inline]
pub(crate) fn range(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        0.0
    } else {
        hi - lo
    }
}

/// Diameter of the union of the given point sets.
///
/// Exact (all pairs) for up to a few thousand points; beyond that the
/// bounding-box diagonal is returned, which is an upper bound.
pub fn diameter(sets: &[&PointSet]) -> Result<f64> {
    let mut all: Option<PointSet> = None;
    for set in sets {
        match &mut all {
            None => all = Some((*set).clone()),
            Some(acc) => acc.extend(set)?,
        }
    }
    let all = match all {
        Some(all) if !all.is_empty() => all,
        _ => return Err(Error::Empty("diameter point sets")),
    };
    let n = all.len();
    if n <= EXACT_DIAMETER_LIMIT {
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = all.point(i);
                (i + 1..n)
                    .map(|j| squared_distance(x, all.point(j)))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        return Ok(best.sqrt());
    }
    let d = all.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in all.iter() {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    Ok(lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt())
}

/// `out[i] = -log Σ_j exp(w[j] - values[i, j])` over a dense row-major matrix.
pub(crate) fn neg_lse_rows(values: &[f64], cols: usize, w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(w.len(), cols);
    let rows = if cols == 0 { 0 } else { values.len() / cols };
    let mut out = vec![0.0; rows];
    out.par_iter_mut()
        .with_min_len(PAR_MIN_ROWS)
        .enumerate()
        .for_each_init(
            || vec![0.0; cols],
            |buf, (i, slot)| {
                let row = &values[i * cols..(i + 1) * cols];
                for ((b, wj), c) in buf.iter_mut().zip(w).zip(row) {
                    *b = wj - c;
                }
                *slot = -lse(buf);
            },
        );
    out
}

/// `out[i] = -log Σ_j exp(w[j] - C(eval_i, anchor_j)/ε)` with costs computed
/// on the fly, anchors processed in tiles of `tile` entries.
pub(crate) fn neg_lse_points(
    eval: &PointSet,
    anchors: &PointSet,
    w: &[f64],
    cost: &CostOracle,
    tile: usize,
) -> Vec<f64> {
    debug_assert_eq!(w.len(), anchors.len());
    let tile = tile.max(1);
    let m = anchors.len();
    let mut out = vec![0.0; eval.len()];
    out.par_iter_mut()
        .with_min_len(PAR_MIN_ROWS)
        .enumerate()
        .for_each_init(
            || vec![0.0; tile.min(m.max(1))],
            |buf, (i, slot)| {
                let x = eval.point(i);
                let mut acc = LseAcc::new();
                let mut start = 0;
                while start < m {
                    let end = (start + tile).min(m);
                    let chunk = &mut buf[..end - start];
                    for (k, b) in chunk.iter_mut().enumerate() {
                        let j = start + k;
                        *b = w[j] - cost.scaled(x, anchors.point(j));
                    }
                    acc.push_tile(chunk);
                    start = end;
                }
                *slot = -acc.value();
            },
        );
    out
}

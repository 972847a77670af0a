//! Row/column log-sum-exp reductions over a cost matrix, either cached or
//! recomputed from points.

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{neg_lse_points, neg_lse_rows, pairwise_cost, CostMatrix, CostOracle, PointSet};
use crate::potentials::DEFAULT_TILE;

/// `reduce_rows(w)[i] = -log Σ_j exp(w_j - C_ij)`,
/// `reduce_cols(w)[j] = -log Σ_i exp(w_i - C_ij)`.
pub(crate) trait Kernel: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn reduce_rows(&self, w: &[f64]) -> Vec<f64>;
    fn reduce_cols(&self, w: &[f64]) -> Vec<f64>;
    /// Dimension charged for cost evaluation on each reduction; 0 when cached.
    fn cost_dim_per_reduction(&self) -> usize;
}

/// Cached scaled costs and their transpose.
pub(crate) struct DenseKernel {
    c: CostMatrix,
    ct: CostMatrix,
}

impl DenseKernel {
    pub(crate) fn new(xs: &PointSet, ys: &PointSet, cost: &CostOracle) -> Result<Self> {
        Ok(Self::from_matrix(pairwise_cost(xs, ys, cost)?))
    }

    pub(crate) fn from_matrix(c: CostMatrix) -> Self {
        let ct = c.transpose();
        Self { c, ct }
    }
}

impl Kernel for DenseKernel {
    fn rows(&self) -> usize {
        self.c.rows()
    }

    fn cols(&self) -> usize {
        self.c.cols()
    }

    fn reduce_rows(&self, w: &[f64]) -> Vec<f64> {
        neg_lse_rows(self.c.values(), self.c.cols(), w)
    }

    fn reduce_cols(&self, w: &[f64]) -> Vec<f64> {
        neg_lse_rows(self.ct.values(), self.ct.cols(), w)
    }

    fn cost_dim_per_reduction(&self) -> usize {
        0
    }
}

/// Costs recomputed on every reduction; memory stays linear in the supports.
pub(crate) struct PointKernel<'a> {
    pub(crate) xs: &'a PointSet,
    pub(crate) ys: &'a PointSet,
    pub(crate) cost: &'a CostOracle,
}

impl Kernel for PointKernel<'_> {
    fn rows(&self) -> usize {
        self.xs.len()
    }

    fn cols(&self) -> usize {
        self.ys.len()
    }

    fn reduce_rows(&self, w: &[f64]) -> Vec<f64> {
        neg_lse_points(self.xs, self.ys, w, self.cost, DEFAULT_TILE)
    }

    fn reduce_cols(&self, w: &[f64]) -> Vec<f64> {
        neg_lse_points(self.ys, self.xs, w, self.cost, DEFAULT_TILE)
    }

    fn cost_dim_per_reduction(&self) -> usize {
        self.xs.dim()
    }
}

/// Variation of all entries `C_ij` over the full product, `max - min`.
pub(crate) fn cost_variation(xs: &PointSet, ys: &PointSet, cost: &CostOracle) -> f64 {
    let (lo, hi) = (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let x = xs.point(i);
            ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                let c = cost.scaled(x, y);
                (lo.min(c), hi.max(c))
            })
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        );
    if lo > hi {
        0.0
    } else {
        hi - lo
    }
}

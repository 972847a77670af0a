//! Non-parametric dual potentials and soft C-transforms.
//!
//! A potential is stored through its exp-form
//! `e^{-f(x)} = Σ_i exp(q_i - C(x, y_i)/ε)`, i.e. a finite kernel mixture over
//! anchor points `y_i` with log-weights `q_i`. Everything here is log-domain.

use crate::error::{Error, Result};
use crate::geometry::{lse, neg_lse_points, CostOracle, PointSet};

/// Default number of anchors reduced per tile during evaluation.
pub const DEFAULT_TILE: usize = 4096;

/// Tolerance on `log Σ mass = 0` for weighted samples.
const MASS_TOLERANCE: f64 = 1e-9;

/// Discrete probability measure with explicit log-masses.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSamples {
    points: PointSet,
    log_masses: Vec<f64>,
}

impl WeightedSamples {
    pub fn new(points: PointSet, log_masses: Vec<f64>) -> Result<Self> {
        if points.len() != log_masses.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: log_masses.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::Empty("weighted samples"));
        }
        if let Some(index) = log_masses
            .iter()
            .position(|m| m.is_nan() || *m == f64::INFINITY)
        {
            return Err(Error::NonFinite { index });
        }
        let total = lse(&log_masses);
        if !(total.abs() <= MASS_TOLERANCE) {
            return Err(Error::invalid(format!(
                "log-masses must normalize to 0, got log-sum {total}"
            )));
        }
        Ok(Self { points, log_masses })
    }

    /// Empirical measure `(1/n) Σ δ_{x_i}`.
    pub fn uniform(points: PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("weighted samples"));
        }
        let lm = -(points.len() as f64).ln();
        let log_masses = vec![lm; points.len()];
        Ok(Self { points, log_masses })
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn log_masses(&self) -> &[f64] {
        &self.log_masses
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }
}

/// `T(h | μ)(x) = -log Σ_j μ_j exp(h(y_j) - C(x, y_j)/ε)` at every evaluation point.
pub fn soft_ctransform(
    h_values: &[f64],
    mu: &WeightedSamples,
    eval_points: &PointSet,
    cost: &CostOracle,
) -> Result<Vec<f64>> {
    if h_values.len() != mu.len() {
        return Err(Error::LengthMismatch {
            left: h_values.len(),
            right: mu.len(),
        });
    }
    if let Some(index) = h_values.iter().position(|h| !h.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    mu.points().check_same_dim(eval_points)?;
    let w: Vec<f64> = mu
        .log_masses()
        .iter()
        .zip(h_values)
        .map(|(m, h)| m + h)
        .collect();
    Ok(neg_lse_points(eval_points, mu.points(), &w, cost, DEFAULT_TILE))
}

/// Dual potential `f(x) = -log Σ_i exp(q_i - C(x, y_i)/ε)`.
#[derive(Clone, Debug)]
pub struct PotentialExpansion {
    support: PointSet,
    log_weights: Vec<f64>,
    cost: CostOracle,
    tile: usize,
}

impl PotentialExpansion {
    pub fn new(support: PointSet, log_weights: Vec<f64>, cost: CostOracle) -> Result<Self> {
        if support.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                left: support.len(),
                right: log_weights.len(),
            });
        }
        check_log_weights(&log_weights, 0)?;
        Ok(Self {
            support,
            log_weights,
            cost,
            tile: DEFAULT_TILE,
        })
    }

    pub fn empty(dim: usize, cost: CostOracle) -> Self {
        Self {
            support: PointSet::empty(dim),
            log_weights: Vec::new(),
            cost,
            tile: DEFAULT_TILE,
        }
    }

    /// Anchors reduced per tile when evaluating.
    pub fn with_tile(mut self, tile: usize) -> Self {
        self.tile = tile.max(1);
        self
    }

    pub fn support(&self) -> &PointSet {
        &self.support
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn cost(&self) -> &CostOracle {
        &self.cost
    }

    pub fn tile(&self) -> usize {
        self.tile
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    /// Values of the potential at each evaluation point.
    pub fn eval(&self, points: &PointSet) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Empty("potential expansion"));
        }
        self.support.check_same_dim(points)?;
        let out = neg_lse_points(points, &self.support, &self.log_weights, &self.cost, self.tile);
        if let Some(index) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(out)
    }

    /// Like [`eval`](Self::eval), but an empty expansion is the zero potential.
    pub(crate) fn eval_or_zero(&self, points: &PointSet) -> Result<Vec<f64>> {
        if self.is_empty() {
            self.support.check_same_dim(points)?;
            return Ok(vec![0.0; points.len()]);
        }
        self.eval(points)
    }

    /// Multiply the exp-potential by `1 - eta`: every log-weight moves by
    /// `log(1 - eta)`, so the potential moves by `-log(1 - eta)`.
    pub fn scale(&mut self, eta: f64) -> Result<()> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(format!("step size must lie in (0, 1), got {eta}")));
        }
        let shift = (-eta).ln_1p();
        for q in &mut self.log_weights {
            *q += shift;
        }
        Ok(())
    }

    pub fn append(&mut self, points: &PointSet, log_weights: &[f64]) -> Result<()> {
        if points.len() != log_weights.len() {
            return Err(Error::LengthMismatch {
                left: points.len(),
                right: log_weights.len(),
            });
        }
        check_log_weights(log_weights, self.len())?;
        self.support.extend(points)?;
        self.log_weights.extend_from_slice(log_weights);
        Ok(())
    }

    /// Drop every anchor; used when a unit step wipes out all prior mass.
    pub(crate) fn clear(&mut self) {
        self.support = PointSet::empty(self.support.dim());
        self.log_weights.clear();
    }

    pub(crate) fn replace(&mut self, support: PointSet, log_weights: Vec<f64>) -> Result<()> {
        let fresh = PotentialExpansion::new(support, log_weights, self.cost.clone())?;
        self.support = fresh.support;
        self.log_weights = fresh.log_weights;
        Ok(())
    }

    /// `∇f(x) = Σ_i w_i(x) ∇_x C(x, y_i)/ε` with `w = softmax(q_i - C(x, y_i)/ε)`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::Empty("potential expansion"));
        }
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let logits: Vec<f64> = self
            .support
            .iter()
            .zip(&self.log_weights)
            .map(|(y, q)| q - self.cost.scaled(x, y))
            .collect();
        let norm = lse(&logits);
        let mut out = vec![0.0; x.len()];
        for (i, (y, l)) in self.support.iter().zip(&logits).enumerate() {
            let w = (l - norm).exp();
            if w == 0.0 {
                continue;
            }
            self.cost
                .accumulate_scaled_grad(x, y, w, &mut out)
                .map_err(|_| Error::NonDifferentiable { anchor: i })?;
        }
        Ok(out)
    }
}

fn check_log_weights(log_weights: &[f64], offset: usize) -> Result<()> {
    match log_weights
        .iter()
        .position(|q| q.is_nan() || *q == f64::INFINITY)
    {
        Some(i) => Err(Error::NonFinite { index: offset + i }),
        None => Ok(()),
    }
}

pub fn eval_expansion(exp: &PotentialExpansion, eval_points: &PointSet) -> Result<Vec<f64>> {
    exp.eval(eval_points)
}

pub fn scale_expansion(mut exp: PotentialExpansion, eta: f64) -> Result<PotentialExpansion> {
    exp.scale(eta)?;
    Ok(exp)
}

pub fn append_expansion(
    mut exp: PotentialExpansion,
    new_points: &PointSet,
    new_log_weights: &[f64],
) -> Result<PotentialExpansion> {
    exp.append(new_points, new_log_weights)?;
    Ok(exp)
}

pub fn grad_expansion(exp: &PotentialExpansion, x: &[f64]) -> Result<Vec<f64>> {
    exp.grad(x)
}

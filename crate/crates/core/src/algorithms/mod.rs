//! Solvers: batch, randomized, online, fully-corrective and discrete online
//! Sinkhorn, the warmup scheme, and the distance estimator.
//!
//! Solvers work in scaled units (cost `C/ε`, unit regularization). Potential
//! values stored in reports are scaled; traces, distances and errors are
//! reported in cost units, i.e. multiplied back by `ε`.

pub mod batch;
pub mod discrete;
pub(crate) mod kernel;
pub mod online;
pub mod randomized;
pub mod warmup;

pub use batch::{batch_sinkhorn, BatchSinkhorn, SweepMode};
pub use discrete::{discrete_online_step, DiscretePotentialPair, DiscreteProblem};
pub use online::{online_sinkhorn, OnlineSinkhorn, OnlineState};
pub use randomized::{randomized_sinkhorn, RandomizedSinkhorn};
pub use warmup::{warmup_sinkhorn, WarmupConfig};

use crate::error::{Error, Result};
use crate::geometry::CostOracle;
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::ConvergenceTrace;
use crate::potentials::{soft_ctransform, PotentialExpansion, WeightedSamples};

/// Potentials known only on the supports of two weighted samples.
#[derive(Clone, Debug)]
pub struct SupportPotentials {
    pub alpha: WeightedSamples,
    pub beta: WeightedSamples,
    /// Scaled `f` on the support of `alpha`.
    pub f: Vec<f64>,
    /// Scaled `g` on the support of `beta`.
    pub g: Vec<f64>,
    pub cost: CostOracle,
}

impl SupportPotentials {
    /// `T(g|β)` as an expansion over `β`, defined everywhere.
    pub fn f_expansion(&self) -> Result<PotentialExpansion> {
        let w = self
            .beta
            .log_masses()
            .iter()
            .zip(&self.g)
            .map(|(m, g)| m + g)
            .collect();
        PotentialExpansion::new(self.beta.points().clone(), w, self.cost.clone())
    }

    /// `T(f|α)` as an expansion over `α`.
    pub fn g_expansion(&self) -> Result<PotentialExpansion> {
        let w = self
            .alpha
            .log_masses()
            .iter()
            .zip(&self.f)
            .map(|(m, f)| m + f)
            .collect();
        PotentialExpansion::new(self.alpha.points().clone(), w, self.cost.clone())
    }
}

#[derive(Clone, Debug)]
pub enum Potentials {
    Support(SupportPotentials),
    Expansions {
        f: PotentialExpansion,
        g: PotentialExpansion,
    },
    Discrete(DiscretePotentialPair),
}

#[derive(Clone, Debug)]
pub struct SolverReport {
    pub potentials: Potentials,
    pub trace: ConvergenceTrace,
    /// Sinkhorn cost estimate in cost units.
    pub w_hat: Option<f64>,
    /// Whether a requested error target was reached; `None` without a target.
    pub converged: Option<bool>,
    pub counter: MultiplicationCounter,
}

/// `ε · ½[⟨α, f + T(g|β)⟩ + ⟨β, g + T(f|α)⟩]` from precomputed transforms.
pub(crate) fn estimate_distance_values(
    f: &[f64],
    g: &[f64],
    t_g: &[f64],
    t_f: &[f64],
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    epsilon: f64,
) -> f64 {
    let side = |mu: &WeightedSamples, h: &[f64], th: &[f64]| -> f64 {
        mu.log_masses()
            .iter()
            .zip(h.iter().zip(th))
            .map(|(m, (a, b))| m.exp() * (a + b))
            .sum()
    };
    epsilon * 0.5 * (side(alpha, f, t_g) + side(beta, g, t_f))
}

/// Sinkhorn cost estimate `Ŵ` (cost units) for scaled potential values on
/// the supports of `alpha` and `beta`.
pub fn estimate_distance_supports(
    f: &[f64],
    g: &[f64],
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    cost: &CostOracle,
) -> Result<f64> {
    let mut counter = MultiplicationCounter::new();
    estimate_distance_supports_counted(f, g, alpha, beta, cost, &mut counter)
}

pub(crate) fn estimate_distance_supports_counted(
    f: &[f64],
    g: &[f64],
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    cost: &CostOracle,
    counter: &mut MultiplicationCounter,
) -> Result<f64> {
    if f.len() != alpha.len() || g.len() != beta.len() {
        return Err(Error::LengthMismatch {
            left: alpha.len() + beta.len(),
            right: f.len() + g.len(),
        });
    }
    let t_g = soft_ctransform(g, beta, alpha.points(), cost)?;
    let t_f = soft_ctransform(f, alpha, beta.points(), cost)?;
    counter.metric_block(alpha.len(), beta.len(), alpha.dim());
    counter.metric_block(beta.len(), alpha.len(), alpha.dim());
    Ok(estimate_distance_values(f, g, &t_g, &t_f, alpha, beta, cost.epsilon()))
}

/// Sinkhorn cost estimate `Ŵ` (cost units) for expansion potentials against
/// the samples seen so far.
pub fn estimate_distance(
    f: &PotentialExpansion,
    g: &PotentialExpansion,
    alpha_bar: &WeightedSamples,
    beta_bar: &WeightedSamples,
) -> Result<f64> {
    let mut counter = MultiplicationCounter::new();
    estimate_distance_counted(f, g, alpha_bar, beta_bar, &mut counter)
}

pub(crate) fn estimate_distance_counted(
    f: &PotentialExpansion,
    g: &PotentialExpansion,
    alpha_bar: &WeightedSamples,
    beta_bar: &WeightedSamples,
    counter: &mut MultiplicationCounter,
) -> Result<f64> {
    let d = alpha_bar.dim();
    let fv = f.eval_or_zero(alpha_bar.points())?;
    let gv = g.eval_or_zero(beta_bar.points())?;
    counter.metric_block(alpha_bar.len(), f.len(), d);
    counter.metric_block(beta_bar.len(), g.len(), d);
    estimate_distance_supports_counted(&fv, &gv, alpha_bar, beta_bar, f.cost(), counter)
}

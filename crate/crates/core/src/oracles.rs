//! Ground truth for error metrics: closed-form Gaussian potentials, converged
//! reference grids, and the `δ` / marginal-violation metrics.
//!
//! Everything in this module speaks cost units: potentials are the scaled
//! solver potentials multiplied by `ε`.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::algorithms::batch::{run_sweeps, RowContext, SweepLimits, SweepMode};
use crate::algorithms::kernel::{cost_variation, DenseKernel, Kernel, PointKernel};
use crate::distributions::{covariance_matrix, GaussianSpec, SampleStream};
use crate::error::{Error, Result};
use crate::geometry::{variation_distance, CostKind, CostOracle, PointSet};
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::ConvergenceTrace;
use crate::potentials::{soft_ctransform, PotentialExpansion, WeightedSamples};
use crate::snapshot::{PayloadKind, Snapshot};

/// Closed-form entropic potentials between two Gaussians.
///
/// For `N(μ, A)` and `N(ν, B)` under the cost `½|x - y|²` at regularization
/// `ε`, with `C = (AB + ε²/4 I)^{1/2}`:
/// `U = B(C + ε/2 I)^{-1} - I`, `V = A(Cᵀ + ε/2 I)^{-1} - I`,
/// `f⋆(x) = -½(x-μ)ᵀU(x-μ) + xᵀ(μ-ν)` and symmetrically for `g⋆`.
///
/// `Cᵀ = (BA + ε²/4 I)^{1/2}` is the root that makes `g⋆ = T(f⋆|α)` hold when
/// `A` and `B` do not commute; for commuting covariances it equals `C`.
#[derive(Clone, Debug)]
pub struct GaussianOracle {
    mu: DVector<f64>,
    nu: DVector<f64>,
    epsilon: f64,
    scale: f64,
    c_mat: DMatrix<f64>,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    condition: f64,
}

fn sym_pow(m: &DMatrix<f64>, power: f64, what: &'static str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite(what));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(power)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl GaussianOracle {
    /// The formula as displayed, for the cost `½|x - y|²`.
    pub fn new(alpha: &GaussianSpec, beta: &GaussianSpec, epsilon: f64) -> Result<Self> {
        Self::build(alpha, beta, epsilon, 1.0)
    }

    /// Potentials for the squared Euclidean cost `|x - y|²` at `ε`, in cost
    /// units: twice the half-cost potentials at `ε/2`.
    pub fn squared_euclidean(alpha: &GaussianSpec, beta: &GaussianSpec, epsilon: f64) -> Result<Self> {
        Self::build(alpha, beta, epsilon / 2.0, 2.0)
    }

    fn build(alpha: &GaussianSpec, beta: &GaussianSpec, epsilon: f64, scale: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        let d = alpha.mean.len();
        if d == 0 {
            return Err(Error::invalid("gaussian dimension must be >= 1"));
        }
        if beta.mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: beta.mean.len(),
            });
        }
        let a = covariance_matrix(&alpha.covariance, d)?;
        let b = covariance_matrix(&beta.covariance, d)?;
        let id = DMatrix::<f64>::identity(d, d);
        let shift = epsilon * epsilon / 4.0;

        // AB is similar to the symmetric A^{1/2} B A^{1/2}, so
        // (AB + cI)^{1/2} = A^{1/2} (A^{1/2} B A^{1/2} + cI)^{1/2} A^{-1/2}.
        let a_half = sym_pow(&a, 0.5, "covariance A")?;
        let a_mhalf = sym_pow(&a, -0.5, "covariance A")?;
        sym_pow(&b, 1.0, "covariance B")?;
        let inner = symmetrize(&a_half * &b * &a_half) + &id * shift;
        let root = sym_pow(&inner, 0.5, "A^{1/2} B A^{1/2} + ε²/4 I")?;
        let c_mat = &a_half * root * &a_mhalf;

        let target = &a * &b + &id * shift;
        let recon = (&c_mat * &c_mat - &target).abs().max() / target.abs().max();
        if !(recon <= 1e-10) {
            return Err(Error::invalid(format!(
                "matrix square root failed to reconstruct AB + ε²/4 I (relative error {recon:e})"
            )));
        }
        let eig_a = SymmetricEigen::new(a.clone()).eigenvalues;
        let condition = eig_a.max() / eig_a.min();
        log::debug!("gaussian oracle: cond(A) = {condition:.3e}, sqrt residual = {recon:.1e}");

        let half = &id * (epsilon / 2.0);
        let inv_c = (&c_mat + &half)
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite("C + ε/2 I"))?;
        let inv_ct = (c_mat.transpose() + &half)
            .try_inverse()
            .ok_or(Error::NotPositiveDefinite("Cᵀ + ε/2 I"))?;
        let u = symmetrize(&b * inv_c - &id);
        let v = symmetrize(&a * inv_ct - &id);
        Ok(Self {
            mu: DVector::from_column_slice(&alpha.mean),
            nu: DVector::from_column_slice(&beta.mean),
            epsilon,
            scale,
            c_mat,
            u,
            v,
            condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Regularization at which the displayed formula is evaluated.
    pub fn formula_epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn c_mat(&self) -> &DMatrix<f64> {
        &self.c_mat
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    fn quad(&self, m: &DMatrix<f64>, center: &DVector<f64>, lin: &DVector<f64>, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let z = &x - center;
        self.scale * (-0.5 * z.dot(&(m * &z)) + x.dot(lin))
    }

    pub fn f(&self, x: &[f64]) -> f64 {
        self.quad(&self.u, &self.mu, &(&self.mu - &self.nu), x)
    }

    pub fn g(&self, y: &[f64]) -> f64 {
        self.quad(&self.v, &self.nu, &(&self.nu - &self.mu), y)
    }
}

/// `(f⋆ on xs, g⋆ on ys)` in cost units.
pub fn gaussian_potentials(
    oracle: &GaussianOracle,
    xs: &PointSet,
    ys: &PointSet,
) -> Result<(Vec<f64>, Vec<f64>)> {
    for pts in [xs, ys] {
        if pts.dim() != oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dim(),
                found: pts.dim(),
            });
        }
    }
    Ok((
        xs.iter().map(|x| oracle.f(x)).collect(),
        ys.iter().map(|y| oracle.g(y)).collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `"gaussian_closed_form"` or `"sinkhorn"`.
    pub kind: String,
    pub cost: String,
    pub epsilon: f64,
    pub n0: usize,
    pub seeds: Option<(u64, u64)>,
    pub sweeps: usize,
    pub max_sweeps: usize,
    /// Final marginal error, cost units.
    pub residual: Option<f64>,
    pub tolerance: Option<f64>,
    pub low_confidence: bool,
}

/// Reference potentials on fixed evaluation points, in cost units.
#[derive(Clone, Debug)]
pub struct ReferenceGrid {
    pub x: PointSet,
    pub y: PointSet,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub provenance: Provenance,
}

impl ReferenceGrid {
    pub fn from_gaussian(oracle: &GaussianOracle, xs: PointSet, ys: PointSet, cost: &CostOracle) -> Result<Self> {
        let (f, g) = gaussian_potentials(oracle, &xs, &ys)?;
        let n0 = xs.len();
        Ok(Self {
            x: xs,
            y: ys,
            f,
            g,
            provenance: Provenance {
                kind: "gaussian_closed_form".into(),
                cost: cost.kind().name().to_string(),
                epsilon: cost.epsilon(),
                n0,
                seeds: None,
                sweeps: 0,
                max_sweeps: 0,
                residual: None,
                tolerance: None,
                low_confidence: false,
            },
        })
    }

    /// `δ` for expansion potentials; evaluation is charged to the metric bucket.
    pub fn delta_of(
        &self,
        f: &PotentialExpansion,
        g: &PotentialExpansion,
        counter: &mut MultiplicationCounter,
    ) -> Result<f64> {
        let eps = f.cost().epsilon();
        let fv: Vec<f64> = f.eval_or_zero(&self.x)?.iter().map(|v| v * eps).collect();
        let gv: Vec<f64> = g.eval_or_zero(&self.y)?.iter().map(|v| v * eps).collect();
        counter.metric_block(self.x.len(), f.len(), self.x.dim());
        counter.metric_block(self.y.len(), g.len(), self.y.dim());
        delta_error(&fv, &gv, self)
    }

    /// Writes `<stem>.f.snap`, `<stem>.g.snap` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str, cost: &CostOracle) -> Result<()> {
        Snapshot::new(PayloadKind::PotentialValues, cost.clone(), self.x.clone(), self.f.clone())?
            .save(&dir.join(format!("{stem}.f.snap")))?;
        Snapshot::new(PayloadKind::PotentialValues, cost.clone(), self.y.clone(), self.g.clone())?
            .save(&dir.join(format!("{stem}.g.snap")))?;
        let path = dir.join(format!("{stem}.json"));
        let json = serde_json::to_string_pretty(&self.provenance)
            .map_err(|e| Error::Snapshot(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let f = Snapshot::load(&dir.join(format!("{stem}.f.snap")))?;
        let g = Snapshot::load(&dir.join(format!("{stem}.g.snap")))?;
        for s in [&f, &g] {
            if s.payload != PayloadKind::PotentialValues {
                return Err(Error::Snapshot("reference grids store potential values".into()));
            }
        }
        let path = dir.join(format!("{stem}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let provenance = serde_json::from_str(&text).map_err(|e| Error::Snapshot(e.to_string()))?;
        Ok(Self {
            x: f.points,
            y: g.points,
            f: f.values,
            g: g.values,
            provenance,
        })
    }
}

/// Above this many matrix entries the reference solve recomputes costs on the fly.
const DENSE_REFERENCE_LIMIT: usize = 1 << 22;

/// Draws `n0` points per side and solves with alternating sweeps until the
/// marginal error drops below `1e-9 · ‖C‖_var` or `max_sweeps` runs out, in
/// which case the grid is flagged low-confidence.
pub fn reference_potentials(
    alpha: &mut SampleStream,
    beta: &mut SampleStream,
    n0: usize,
    cost: &CostOracle,
    max_sweeps: usize,
) -> Result<ReferenceGrid> {
    if n0 == 0 {
        return Err(Error::invalid("reference grid size must be >= 1"));
    }
    let seeds = (alpha.seed(), beta.seed());
    let x = alpha.sample(n0)?;
    let y = beta.sample(n0)?;
    let mut grid = reference_on(x, y, cost, max_sweeps)?;
    grid.provenance.seeds = Some(seeds);
    Ok(grid)
}

/// Reference solve on given points (uniform weights).
pub fn reference_on(x: PointSet, y: PointSet, cost: &CostOracle, max_sweeps: usize) -> Result<ReferenceGrid> {
    let alpha = WeightedSamples::uniform(x)?;
    let beta = WeightedSamples::uniform(y)?;
    let eps = cost.epsilon();
    let tolerance = 1e-9 * cost_variation(alpha.points(), beta.points(), cost) * eps;
    let limits = SweepLimits {
        max_sweeps,
        max_core: None,
        target: Some(tolerance.max(f64::MIN_POSITIVE)),
    };
    let mut counter = MultiplicationCounter::new();
    let mut trace = ConvergenceTrace::new();
    let ctx = RowContext {
        t0: 0,
        n_t: alpha.len() as u64,
        clock: None,
        probe: None,
    };
    let zeros = (vec![0.0; alpha.len()], vec![0.0; beta.len()]);
    let out = if alpha.len() * beta.len() <= DENSE_REFERENCE_LIMIT {
        let kernel = DenseKernel::new(alpha.points(), beta.points(), cost)?;
        solve(&kernel, &alpha, &beta, eps, zeros, limits, &mut counter, &mut trace, &ctx)?
    } else {
        let kernel = PointKernel {
            xs: alpha.points(),
            ys: beta.points(),
            cost,
        };
        solve(&kernel, &alpha, &beta, eps, zeros, limits, &mut counter, &mut trace, &ctx)?
    };
    let residual = trace.last().and_then(|r| r.marginal);
    let n0 = alpha.len();
    Ok(ReferenceGrid {
        f: out.f.iter().map(|v| v * eps).collect(),
        g: out.g.iter().map(|v| v * eps).collect(),
        x: alpha.points().clone(),
        y: beta.points().clone(),
        provenance: Provenance {
            kind: "sinkhorn".into(),
            cost: cost.kind().name().to_string(),
            epsilon: eps,
            n0,
            seeds: None,
            sweeps: out.sweeps,
            max_sweeps,
            residual,
            tolerance: Some(tolerance),
            low_confidence: !out.converged,
        },
    })
}

#[allow(clippy::too_many_arguments)]
fn solve<K: Kernel>(
    kernel: &K,
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    eps: f64,
    (f, g): (Vec<f64>, Vec<f64>),
    limits: SweepLimits,
    counter: &mut MultiplicationCounter,
    trace: &mut ConvergenceTrace,
    ctx: &RowContext<'_>,
) -> Result<crate::algorithms::batch::SweepOutcome> {
    run_sweeps(
        kernel,
        alpha.log_masses(),
        beta.log_masses(),
        eps,
        SweepMode::Alternating,
        f,
        g,
        limits,
        counter,
        trace,
        ctx,
        false,
    )
}

/// `‖f̂ - f⋆‖_var + ‖ĝ - g⋆‖_var` on the grid.
pub fn delta_error(f_hat: &[f64], g_hat: &[f64], grid: &ReferenceGrid) -> Result<f64> {
    Ok(variation_distance(f_hat, &grid.f)? + variation_distance(g_hat, &grid.g)?)
}

/// `‖T(f|α) - g‖_var + ‖T(g|β) - f‖_var` for `f` on the support of `α` and
/// `g` on the support of `β`, all in cost units.
pub fn marginal_error(
    f: &[f64],
    g: &[f64],
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    cost: &CostOracle,
) -> Result<f64> {
    let eps = cost.epsilon();
    let fs: Vec<f64> = f.iter().map(|v| v / eps).collect();
    let gs: Vec<f64> = g.iter().map(|v| v / eps).collect();
    let t_f = soft_ctransform(&fs, alpha, beta.points(), cost)?;
    let t_g = soft_ctransform(&gs, beta, alpha.points(), cost)?;
    Ok(eps * (variation_distance(&t_f, &gs)? + variation_distance(&t_g, &fs)?))
}

/// The squared Euclidean cost is the only one paired with the closed form.
pub fn check_gaussian_cost(cost: &CostOracle) -> Result<()> {
    match cost.kind() {
        CostKind::SquaredEuclidean => Ok(()),
        other => Err(Error::Unsupported(format!(
            "the Gaussian closed form needs the squared Euclidean cost, got {}",
            other.name()
        ))),
    }
}

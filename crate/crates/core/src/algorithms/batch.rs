//! Batch Sinkhorn on fixed weighted supports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::kernel::{DenseKernel, Kernel};
use super::{estimate_distance_values, Potentials, SolverReport, SupportPotentials};
use crate::error::{Error, Result};
use crate::geometry::{range, CostOracle};
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::{ConvergenceTrace, TraceRow};
use crate::oracles::ReferenceGrid;
use crate::potentials::WeightedSamples;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// `f ← T(g|β)` and `g ← T(f|α)` from the same previous pair.
    #[default]
    Simultaneous,
    /// `f ← T(g|β)`, then `g ← T(f|α)` with the fresh `f`.
    Alternating,
}

/// Stopping rules for a run of sweeps.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SweepLimits {
    pub max_sweeps: usize,
    pub max_core: Option<u64>,
    /// Marginal error target, in cost units.
    pub target: Option<f64>,
}

pub(crate) struct SweepOutcome {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// `T(g|β)` on the row support for the final pair, when it was computed.
    pub t_g: Option<Vec<f64>>,
    /// `T(f|α)` on the column support for the final pair, when it was computed.
    pub t_f: Option<Vec<f64>>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Records `δ` for scaled `(f, g)` on the supports.
pub(crate) type Probe<'a> = &'a dyn Fn(&[f64], &[f64], &mut MultiplicationCounter) -> Result<f64>;

/// Per-row context for trace rows produced by [`run_sweeps`].
pub(crate) struct RowContext<'a> {
    pub t0: u64,
    pub n_t: u64,
    pub clock: Option<&'a Instant>,
    /// Called after every `k`-th sweep and after the last one before a budget or sweep limit.
    pub probe: Option<(Probe<'a>, u64)>,
}

impl RowContext<'_> {
    pub(crate) fn wall_ms(&self) -> Option<f64> {
        self.clock.map(|c| c.elapsed().as_secs_f64() * 1e3)
    }
}

fn charge<K: Kernel>(kernel: &K, counter: &mut MultiplicationCounter, metric: bool) {
    let (n, m, d) = (kernel.rows(), kernel.cols(), kernel.cost_dim_per_reduction());
    if metric {
        counter.metric_block(n, m, d);
    } else if d > 0 {
        counter.evaluate_block(n, m, d);
    } else {
        counter.transform_block(n, m);
    }
}

fn plus(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub(crate) fn var_diff(a: &[f64], b: &[f64]) -> f64 {
    range(a.iter().zip(b).map(|(x, y)| x - y))
}

/// Runs sweeps from `(f, g)` (scaled units) and appends one row per sweep.
///
/// The marginal error of each row is measured with the transforms of the
/// following sweep, so it costs nothing extra; only the final look-ahead is
/// charged to the metric bucket. When `initial_pending` is set, the last row
/// already in `trace` describes `(f, g)` and receives its error first.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_sweeps<K: Kernel>(
    kernel: &K,
    log_a: &[f64],
    log_b: &[f64],
    epsilon: f64,
    mode: SweepMode,
    mut f: Vec<f64>,
    mut g: Vec<f64>,
    limits: SweepLimits,
    counter: &mut MultiplicationCounter,
    trace: &mut ConvergenceTrace,
    ctx: &RowContext<'_>,
    initial_pending: bool,
) -> Result<SweepOutcome> {
    let mut pending = initial_pending;
    // Whether g == T(f|α) holds exactly, which alternating sweeps guarantee.
    let mut closed = false;
    let mut sweeps = 0usize;
    let mut converged = false;
    let mut t_g = None;
    let mut t_f = None;
    loop {
        let exhausted =
            sweeps >= limits.max_sweeps || limits.max_core.is_some_and(|b| counter.core() >= b);
        if exhausted && !pending {
            break;
        }
        let nf = kernel.reduce_rows(&plus(log_b, &g));
        let mut ng = match mode {
            SweepMode::Simultaneous => Some(kernel.reduce_cols(&plus(log_a, &f))),
            SweepMode::Alternating => None,
        };
        if pending {
            let mut residual = var_diff(&nf, &f);
            let mut extra_metric = false;
            match (&ng, closed) {
                (Some(ng), _) => residual += var_diff(ng, &g),
                (None, true) => {}
                (None, false) => {
                    let tf = kernel.reduce_cols(&plus(log_a, &f));
                    residual += var_diff(&tf, &g);
                    t_f = Some(tf);
                    extra_metric = true;
                }
            }
            let residual = residual * epsilon;
            if let Some(row) = trace.last_mut() {
                row.marginal = Some(residual);
            }
            if extra_metric {
                charge(kernel, counter, true);
            }
            let hit = limits.target.is_some_and(|target| residual < target);
            if hit || exhausted {
                converged = hit;
                charge(kernel, counter, true);
                if let Some(ng) = ng.take() {
                    charge(kernel, counter, true);
                    t_f = Some(ng);
                } else if closed {
                    t_f = Some(g.clone());
                }
                t_g = Some(nf);
                break;
            }
            t_f = None;
        }
        charge(kernel, counter, false);
        let ng = match ng {
            Some(ng) => ng,
            None => kernel.reduce_cols(&plus(log_a, &nf)),
        };
        charge(kernel, counter, false);
        closed = mode == SweepMode::Alternating;
        f = nf;
        g = ng;
        sweeps += 1;
        // The last sweep before a stop is always measured.
        let last = sweeps == limits.max_sweeps || limits.max_core.is_some_and(|b| counter.core() >= b);
        let delta = match ctx.probe {
            Some((probe, every)) if every > 0 && (sweeps as u64 % every == 0 || last) => {
                Some(probe(&f, &g, counter)?)
            }
            _ => None,
        };
        trace.push(TraceRow {
            t: ctx.t0 + sweeps as u64,
            n_t: ctx.n_t,
            core_mults: counter.core(),
            metric_mults: counter.metric(),
            delta,
            wall_ms: ctx.wall_ms(),
            ..TraceRow::default()
        })?;
        pending = true;
    }
    Ok(SweepOutcome {
        f,
        g,
        t_g,
        t_f,
        sweeps,
        converged,
    })
}

/// Options for [`BatchSinkhorn::solve`].
#[derive(Clone, Debug, Default)]
pub struct BatchSinkhorn {
    /// Record `δ` against this grid every `metric_every` sweeps, extending
    /// the support potentials by soft C-transforms.
    pub reference: Option<ReferenceGrid>,
    pub metric_every: u64,
    pub iterations: usize,
    pub mode: SweepMode,
    /// Stop once the marginal error (cost units) falls below this value.
    pub target: Option<f64>,
    pub max_core_mults: Option<u64>,
    /// Starting potentials `(f, g)` in scaled units; zero when absent.
    pub init: Option<(Vec<f64>, Vec<f64>)>,
    pub record_wall_time: bool,
}

impl BatchSinkhorn {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations,
            metric_every: 1,
            ..Self::default()
        }
    }

    pub fn mode(mut self, mode: SweepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    pub fn max_core_mults(mut self, budget: u64) -> Self {
        self.max_core_mults = Some(budget);
        self
    }

    pub fn init(mut self, f: Vec<f64>, g: Vec<f64>) -> Self {
        self.init = Some((f, g));
        self
    }

    pub fn reference(mut self, grid: ReferenceGrid, every: u64) -> Self {
        self.reference = Some(grid);
        self.metric_every = every;
        self
    }

    pub fn record_wall_time(mut self, on: bool) -> Self {
        self.record_wall_time = on;
        self
    }

    pub fn solve(
        &self,
        alpha: &WeightedSamples,
        beta: &WeightedSamples,
        cost: &CostOracle,
    ) -> Result<SolverReport> {
        let mut counter = MultiplicationCounter::new();
        self.solve_counted(alpha, beta, cost, &mut counter)
    }

    /// Like [`solve`](Self::solve), charging work to an existing counter.
    pub fn solve_counted(
        &self,
        alpha: &WeightedSamples,
        beta: &WeightedSamples,
        cost: &CostOracle,
        counter: &mut MultiplicationCounter,
    ) -> Result<SolverReport> {
        alpha.points().check_same_dim(beta.points())?;
        let (n, m) = (alpha.len(), beta.len());
        let (f0, g0) = match &self.init {
            Some((f, g)) => {
                if f.len() != n || g.len() != m {
                    return Err(Error::LengthMismatch {
                        left: n + m,
                        right: f.len() + g.len(),
                    });
                }
                if let Some(index) = f.iter().chain(g).position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                (f.clone(), g.clone())
            }
            None => (vec![0.0; n], vec![0.0; m]),
        };
        let clock = self.record_wall_time.then(Instant::now);
        let kernel = DenseKernel::new(alpha.points(), beta.points(), cost)?;
        counter.cost_block(n, m, alpha.dim());
        let mut trace = ConvergenceTrace::new();
        let probe = |f: &[f64], g: &[f64], counter: &mut MultiplicationCounter| -> Result<f64> {
            let grid = self.reference.as_ref().expect("probe without reference");
            let pot = SupportPotentials {
                alpha: alpha.clone(),
                beta: beta.clone(),
                f: f.to_vec(),
                g: g.to_vec(),
                cost: cost.clone(),
            };
            grid.delta_of(&pot.f_expansion()?, &pot.g_expansion()?, counter)
        };
        let out = run_sweeps(
            &kernel,
            alpha.log_masses(),
            beta.log_masses(),
            cost.epsilon(),
            self.mode,
            f0,
            g0,
            SweepLimits {
                max_sweeps: self.iterations,
                max_core: self.max_core_mults,
                target: self.target,
            },
            counter,
            &mut trace,
            &RowContext {
                t0: 0,
                n_t: n.max(m) as u64,
                clock: clock.as_ref(),
                probe: self.reference.as_ref().map(|_| (&probe as Probe<'_>, self.metric_every)),
            },
            false,
        )?;
        let w_hat = match (&out.t_g, &out.t_f) {
            (Some(t_g), Some(t_f)) if out.sweeps > 0 => Some(estimate_distance_values(
                &out.f,
                &out.g,
                t_g,
                t_f,
                alpha,
                beta,
                cost.epsilon(),
            )),
            _ => None,
        };
        let converged = self.target.map(|_| out.converged);
        if let (Some(w), Some(row)) = (w_hat, trace.last_mut()) {
            row.w_hat = Some(w);
        }
        Ok(SolverReport {
            potentials: Potentials::Support(SupportPotentials {
                alpha: alpha.clone(),
                beta: beta.clone(),
                f: out.f,
                g: out.g,
                cost: cost.clone(),
            }),
            trace,
            w_hat,
            converged,
            counter: counter.clone(),
        })
    }
}

/// Fixed number of batch sweeps from zero potentials.
pub fn batch_sinkhorn(
    alpha: &WeightedSamples,
    beta: &WeightedSamples,
    cost: &CostOracle,
    iterations: usize,
    mode: SweepMode,
) -> Result<SolverReport> {
    if iterations == 0 {
        return Err(Error::invalid("batch Sinkhorn needs at least one iteration"));
    }
    BatchSinkhorn::new(iterations).mode(mode).solve(alpha, beta, cost)
}

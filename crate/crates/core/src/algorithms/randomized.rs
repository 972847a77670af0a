//! Randomized Sinkhorn: soft C-transforms against a fresh batch each
//! iteration, keeping only the latest batch in memory.

use std::time::Instant;

use super::{Potentials, SolverReport};
use crate::distributions::SampleStream;
use crate::error::{Error, Result};
use crate::geometry::{CostOracle, PointSet};
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::{ConvergenceTrace, TraceRow};
use crate::oracles::ReferenceGrid;
use crate::potentials::PotentialExpansion;

/// Pair of expansions updated by noisy alternating transforms.
#[derive(Clone, Debug)]
pub struct RandomizedChain {
    pub f: PotentialExpansion,
    pub g: PotentialExpansion,
}

impl RandomizedChain {
    /// Start from `ĝ_0` (zero when `None`); `f̂_0` is zero.
    pub fn new(dim: usize, cost: CostOracle, g0: Option<PotentialExpansion>) -> Result<Self> {
        let g = match g0 {
            Some(g) => {
                if g.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: g.dim(),
                    });
                }
                g
            }
            None => PotentialExpansion::empty(dim, cost.clone()),
        };
        Ok(Self {
            f: PotentialExpansion::empty(dim, cost),
            g,
        })
    }

    /// `f̂ ← T(ĝ|β̂)`, then `ĝ ← T(f̂|α̂)` with the new `f̂`.
    pub fn step(&mut self, x: &PointSet, y: &PointSet, counter: &mut MultiplicationCounter) -> Result<()> {
        let n = y.len();
        if x.is_empty() || n == 0 {
            return Err(Error::Empty("randomized batch"));
        }
        let d = y.dim();
        let lw_y = -(n as f64).ln();
        let gy = self.g.eval_or_zero(y)?;
        counter.evaluate_block(n, self.g.len(), d);
        let f = PotentialExpansion::new(
            y.clone(),
            gy.iter().map(|g| lw_y + g).collect(),
            self.f.cost().clone(),
        )?
        .with_tile(self.f.tile());
        let fx = f.eval(x)?;
        counter.evaluate_block(x.len(), n, d);
        let lw_x = -(x.len() as f64).ln();
        self.g = PotentialExpansion::new(
            x.clone(),
            fx.iter().map(|v| lw_x + v).collect(),
            self.g.cost().clone(),
        )?
        .with_tile(self.g.tile());
        self.f = f;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RandomizedSinkhorn {
    pub batch_size: usize,
    pub iterations: u64,
    pub g0: Option<PotentialExpansion>,
    pub max_core_mults: Option<u64>,
    pub metric_every: u64,
    pub reference: Option<ReferenceGrid>,
    pub record_wall_time: bool,
}

impl RandomizedSinkhorn {
    pub fn new(batch_size: usize, iterations: u64) -> Self {
        Self {
            batch_size,
            iterations,
            g0: None,
            max_core_mults: None,
            metric_every: 1,
            reference: None,
            record_wall_time: false,
        }
    }

    pub fn run(
        &self,
        alpha: &mut SampleStream,
        beta: &mut SampleStream,
        cost: &CostOracle,
    ) -> Result<SolverReport> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if alpha.dim() != beta.dim() {
            return Err(Error::DimensionMismatch {
                expected: alpha.dim(),
                found: beta.dim(),
            });
        }
        let clock = self.record_wall_time.then(Instant::now);
        let mut chain = RandomizedChain::new(alpha.dim(), cost.clone(), self.g0.clone())?;
        let mut counter = MultiplicationCounter::new();
        let mut trace = ConvergenceTrace::new();
        for t in 1..=self.iterations {
            if self.max_core_mults.is_some_and(|b| counter.core() >= b) {
                break;
            }
            let x = alpha.sample(self.batch_size)?;
            let y = beta.sample(self.batch_size)?;
            chain.step(&x, &y, &mut counter)?;
            let finished = t == self.iterations
                || self.max_core_mults.is_some_and(|b| counter.core() >= b);
            let due = self.metric_every > 0 && (t % self.metric_every == 0 || finished);
            let delta = match (&self.reference, due) {
                (Some(grid), true) => Some(grid.delta_of(&chain.f, &chain.g, &mut counter)?),
                _ => None,
            };
            trace.push(TraceRow {
                t,
                n_t: self.batch_size as u64,
                core_mults: counter.core(),
                metric_mults: counter.metric(),
                delta,
                wall_ms: clock.map(|c| c.elapsed().as_secs_f64() * 1e3),
                ..TraceRow::default()
            })?;
        }
        Ok(SolverReport {
            potentials: Potentials::Expansions {
                f: chain.f,
                g: chain.g,
            },
            trace,
            w_hat: None,
            converged: None,
            counter,
        })
    }
}

pub fn randomized_sinkhorn(
    alpha: &mut SampleStream,
    beta: &mut SampleStream,
    cost: &CostOracle,
    batch_size: usize,
    iterations: u64,
) -> Result<SolverReport> {
    RandomizedSinkhorn::new(batch_size, iterations).run(alpha, beta, cost)
}

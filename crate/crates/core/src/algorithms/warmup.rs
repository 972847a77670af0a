//! Online Sinkhorn as a warmup for batch Sinkhorn on finite supports.
//!
//! Phase 1 runs discrete online steps on index batches drawn without
//! replacement, evaluating the cost matrix only where needed, until every
//! index of both supports has been seen. Phase 2 fills the rest of the matrix
//! and hands the warmed potentials to full Sinkhorn sweeps.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::{run_sweeps, var_diff, BatchSinkhorn, RowContext, SweepLimits, SweepMode};
use super::discrete::{discrete_online_step, DiscretePotentialPair, DiscreteProblem};
use super::kernel::{DenseKernel, Kernel};
use super::{Potentials, SolverReport};
use crate::distributions::{Replacement, SampleStream};
use crate::error::{Error, Result};
use crate::geometry::{CostOracle, PointSet};
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::{ConvergenceTrace, TraceRow};
use crate::potentials::WeightedSamples;
use crate::schedules::Schedule;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupConfig {
    /// Phase-1 schedule; `None` uses `n(t) = ⌈N/100 (1 + 0.1t)^{1/2}⌉` with
    /// step exponent [`DEFAULT_STEP_EXPONENT`].
    pub schedule: Option<Schedule>,
    /// Marginal error target in cost units.
    pub target: f64,
    pub max_core_mults: Option<u64>,
    pub max_sweeps: usize,
    pub phase2_mode: SweepMode,
    /// Evaluate the marginal error every `k`-th phase-1 step (0: never).
    /// Charged to the metric bucket.
    pub metric_every: u64,
    pub replacement: Replacement,
    pub record_wall_time: bool,
}

pub const DEFAULT_STEP_EXPONENT: f64 = 0.5;

impl Default for WarmupConfig {
    fn default() -> Self {
        Self {
            schedule: None,
            target: 1e-3,
            max_core_mults: None,
            max_sweeps: 100_000,
            phase2_mode: SweepMode::Simultaneous,
            metric_every: 0,
            replacement: Replacement::Without,
            record_wall_time: false,
        }
    }
}

impl WarmupConfig {
    pub fn schedule_for(&self, n: usize) -> Result<Schedule> {
        match self.schedule {
            Some(s) => {
                s.validate()?;
                Ok(s)
            }
            None => Schedule::new(DEFAULT_STEP_EXPONENT, 0.5, (n / 100).max(1), 0.1),
        }
    }

    /// Cold-start batch Sinkhorn with the same stopping rules and sweep mode.
    pub fn cold_baseline(&self) -> BatchSinkhorn {
        BatchSinkhorn {
            iterations: self.max_sweeps,
            mode: self.phase2_mode,
            target: Some(self.target),
            max_core_mults: self.max_core_mults,
            init: None,
            record_wall_time: self.record_wall_time,
            reference: None,
            metric_every: 0,
        }
    }
}

/// Draw up to `n` fresh indices, starting a new epoch when one runs dry.
fn draw(stream: &mut SampleStream, n: usize) -> Result<Vec<usize>> {
    match stream.remaining() {
        Some(0) => {
            stream.new_epoch();
            draw(stream, n)
        }
        Some(left) => stream.sample_indices(n.min(left)),
        None => stream.sample_indices(n),
    }
}

/// Phase-1 marginal error of a pair, using a metric-only copy of the matrix.
fn pair_error(
    pair: &DiscretePotentialPair,
    metric: &DenseKernel,
    log_a: &[f64],
    log_b: &[f64],
    eps: f64,
    counter: &mut MultiplicationCounter,
) -> f64 {
    let (f, g) = pair.potentials(metric, counter);
    let wf: Vec<f64> = log_a.iter().zip(&f).map(|(a, v)| a + v).collect();
    let wg: Vec<f64> = log_b.iter().zip(&g).map(|(b, v)| b + v).collect();
    let t_f = metric.reduce_cols(&wf);
    let t_g = metric.reduce_rows(&wg);
    counter.metric_block(metric.rows(), metric.cols(), 0);
    counter.metric_block(metric.cols(), metric.rows(), 0);
    eps * (var_diff(&t_f, &g) + var_diff(&t_g, &f))
}

/// Warm-started Sinkhorn between uniform measures on `x` and `y`.
pub fn warmup_sinkhorn(
    x: &PointSet,
    y: &PointSet,
    cost: &CostOracle,
    config: &WarmupConfig,
    seed: u64,
) -> Result<SolverReport> {
    let (n, m) = (x.len(), y.len());
    if n == 0 || m == 0 {
        return Err(Error::Empty("warmup support"));
    }
    let schedule = config.schedule_for(n.max(m))?;
    let eps = cost.epsilon();
    let clock = config.record_wall_time.then(Instant::now);
    let mut counter = MultiplicationCounter::new();
    let mut trace = ConvergenceTrace::new();
    let mut problem = DiscreteProblem::new(x.clone(), y.clone(), cost.clone())?;
    let mut pair = DiscretePotentialPair::new(&problem);
    let log_a = vec![problem.log_mass_x(); n];
    let log_b = vec![problem.log_mass_y(); m];

    let metric_kernel = if config.metric_every > 0 {
        counter.metric_block(n, m, x.dim());
        Some(DenseKernel::new(x, y, cost)?)
    } else {
        None
    };
    let mut xs = SampleStream::finite(x.clone(), config.replacement, seed)?;
    let mut ys = SampleStream::finite(y.clone(), config.replacement, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
    let mut seen_x = vec![false; n];
    let mut seen_y = vec![false; m];
    let (mut left_x, mut left_y) = (n, m);

    // Phase 1.
    let mut t = 0u64;
    let mut converged = false;
    let mut budget_hit = false;
    while left_x > 0 || left_y > 0 {
        t += 1;
        let size = schedule.batch_size(t)?;
        let i_t = draw(&mut xs, size)?;
        let j_t = draw(&mut ys, size)?;
        let eta = if t == 1 { 1.0 } else { schedule.step_size(t) };
        pair = discrete_online_step(&mut problem, &pair, &i_t, &j_t, eta, &mut counter)?;
        for &i in &i_t {
            if !std::mem::replace(&mut seen_x[i], true) {
                left_x -= 1;
            }
        }
        for &j in &j_t {
            if !std::mem::replace(&mut seen_y[j], true) {
                left_y -= 1;
            }
        }
        let marginal = match &metric_kernel {
            Some(k) if t % config.metric_every == 0 || (left_x == 0 && left_y == 0) => {
                Some(pair_error(&pair, k, &log_a, &log_b, eps, &mut counter))
            }
            _ => None,
        };
        // The first step of an empty pair reads no costs; skip rows with no new
        // work unless they carry the only measurement.
        if trace
            .last()
            .map_or(counter.core() > 0 || marginal.is_some(), |r| counter.core() > r.core_mults)
        {
            trace.push(TraceRow {
                t,
                n_t: (n - left_x).max(m - left_y) as u64,
                core_mults: counter.core(),
                metric_mults: counter.metric(),
                marginal,
                wall_ms: clock.map(|c| c.elapsed().as_secs_f64() * 1e3),
                ..TraceRow::default()
            })?;
        }
        if marginal.is_some_and(|e| e < config.target) {
            converged = true;
            break;
        }
        if config.max_core_mults.is_some_and(|b| counter.core() >= b) {
            budget_hit = true;
            break;
        }
    }

    // Phase 2.
    let mut potentials = Potentials::Discrete(pair.clone());
    if !converged && !budget_hit {
        problem.fill_remaining(&mut counter)?;
        let kernel = problem.dense_kernel()?;
        let f0 = kernel.reduce_rows(&pair.q);
        let g0 = kernel.reduce_cols(&pair.p);
        counter.transform_block(n, m).transform_block(m, n);
        t += 1;
        trace.push(TraceRow {
            t,
            n_t: n.max(m) as u64,
            core_mults: counter.core(),
            metric_mults: counter.metric(),
            wall_ms: clock.map(|c| c.elapsed().as_secs_f64() * 1e3),
            ..TraceRow::default()
        })?;
        let out = run_sweeps(
            &kernel,
            &log_a,
            &log_b,
            eps,
            config.phase2_mode,
            f0,
            g0,
            SweepLimits {
                max_sweeps: config.max_sweeps,
                max_core: config.max_core_mults,
                target: Some(config.target),
            },
            &mut counter,
            &mut trace,
            &RowContext {
                t0: t,
                n_t: n.max(m) as u64,
                clock: clock.as_ref(),
                probe: None,
            },
            true,
        )?;
        converged = out.converged;
        potentials = Potentials::Support(super::SupportPotentials {
            alpha: WeightedSamples::uniform(x.clone())?,
            beta: WeightedSamples::uniform(y.clone())?,
            f: out.f,
            g: out.g,
            cost: cost.clone(),
        });
    }
    Ok(SolverReport {
        potentials,
        trace,
        w_hat: None,
        converged: Some(converged),
        counter,
    })
}

/// Core multiplications to reach the target, cold versus warm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupMeasurement {
    pub cold_core: Option<u64>,
    pub warm_core: Option<u64>,
}

impl SpeedupMeasurement {
    /// `cold / warm`; `None` when either run missed the target.
    pub fn speedup(&self) -> Option<f64> {
        match (self.cold_core, self.warm_core) {
            (Some(c), Some(w)) if w > 0 => Some(c as f64 / w as f64),
            _ => None,
        }
    }
}

/// Run the cold baseline and the warmed solver on the same problem.
pub fn measure_speedup(
    x: &PointSet,
    y: &PointSet,
    cost: &CostOracle,
    config: &WarmupConfig,
    seed: u64,
) -> Result<(SpeedupMeasurement, SolverReport, SolverReport)> {
    let cold = config.cold_baseline().solve(
        &WeightedSamples::uniform(x.clone())?,
        &WeightedSamples::uniform(y.clone())?,
        cost,
    )?;
    let warm = warmup_sinkhorn(x, y, cost, config, seed)?;
    let at = |r: &SolverReport| r.trace.first_below(config.target).map(|row| row.core_mults);
    Ok((
        SpeedupMeasurement {
            cold_core: at(&cold),
            warm_core: at(&warm),
        },
        cold,
        warm,
    ))
}

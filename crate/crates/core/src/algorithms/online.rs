//! Online Sinkhorn with optional fully-corrective refits.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{estimate_distance_counted, Potentials, SolverReport};
use crate::distributions::{SampleStream, StreamPosition};
use crate::error::{Error, Result};
use crate::geometry::{CostOracle, PointSet};
use crate::harness::counter::MultiplicationCounter;
use crate::harness::trace::{ConvergenceTrace, TraceRow};
use crate::oracles::ReferenceGrid;
use crate::potentials::{PotentialExpansion, WeightedSamples};
use crate::schedules::{Regime, Schedule, ScheduleVariant};
use crate::snapshot::{PayloadKind, Snapshot};

/// Solver state: `f̂` anchored on seen `y` (weights `q`), `ĝ` anchored on
/// seen `x` (weights `p`). Empty expansions stand for the zero potential.
#[derive(Clone, Debug)]
pub struct OnlineState {
    f_exp: PotentialExpansion,
    g_exp: PotentialExpansion,
    t: u64,
    n_seen: u64,
    seen_x: PointSet,
    seen_y: PointSet,
    seed: u64,
}

impl OnlineState {
    pub fn new(dim: usize, cost: CostOracle, seed: u64) -> Self {
        Self {
            f_exp: PotentialExpansion::empty(dim, cost.clone()),
            g_exp: PotentialExpansion::empty(dim, cost),
            t: 0,
            n_seen: 0,
            seen_x: PointSet::empty(dim),
            seen_y: PointSet::empty(dim),
            seed,
        }
    }

    pub fn f(&self) -> &PotentialExpansion {
        &self.f_exp
    }

    pub fn g(&self) -> &PotentialExpansion {
        &self.g_exp
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn n_seen(&self) -> u64 {
        self.n_seen
    }

    pub fn seen_x(&self) -> &PointSet {
        &self.seen_x
    }

    pub fn seen_y(&self) -> &PointSet {
        &self.seen_y
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cost(&self) -> &CostOracle {
        self.f_exp.cost()
    }

    fn check_batch(&self, x: &PointSet, y: &PointSet) -> Result<()> {
        self.seen_x.check_same_dim(x)?;
        self.seen_y.check_same_dim(y)?;
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        Ok(())
    }

    /// One online update with fresh batches `x ~ α`, `y ~ β`:
    /// `e^{-f̂} ← (1-η) e^{-f̂} + (η/n) Σ_j e^{ĝ(y_j) - C(·, y_j)/ε}` and
    /// symmetrically for `ĝ`, both computed from the state before the call.
    pub fn online_step(
        &mut self,
        x: &PointSet,
        y: &PointSet,
        eta: f64,
        counter: &mut MultiplicationCounter,
    ) -> Result<()> {
        self.check_batch(x, y)?;
        let n = x.len();
        if n == 0 {
            return Err(Error::Empty("online batch"));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::invalid(format!("step size must lie in (0, 1], got {eta}")));
        }
        let d = x.dim();
        let fx = self.f_exp.eval_or_zero(x)?;
        let gy = self.g_exp.eval_or_zero(y)?;
        counter.evaluate_block(n, self.f_exp.len(), d);
        counter.evaluate_block(n, self.g_exp.len(), d);
        if eta == 1.0 {
            self.f_exp.clear();
            self.g_exp.clear();
        } else {
            self.f_exp.scale(eta)?;
            self.g_exp.scale(eta)?;
        }
        let lw = (eta / n as f64).ln();
        let q: Vec<f64> = gy.iter().map(|g| lw + g).collect();
        let p: Vec<f64> = fx.iter().map(|f| lw + f).collect();
        self.f_exp.append(y, &q)?;
        self.g_exp.append(x, &p)?;
        self.seen_x.extend(x)?;
        self.seen_y.extend(y)?;
        self.n_seen += n as u64;
        self.t += 1;
        Ok(())
    }

    /// Refit every weight against all seen samples, after adding the (possibly
    /// empty) batches: `f̂ ← T(ĝ|β̄)`, `ĝ ← T(f̂|ᾱ)`, simultaneously.
    pub fn fully_corrective_step(
        &mut self,
        x: &PointSet,
        y: &PointSet,
        counter: &mut MultiplicationCounter,
    ) -> Result<()> {
        self.check_batch(x, y)?;
        let seen_x = {
            let mut s = self.seen_x.clone();
            s.extend(x)?;
            s
        };
        let seen_y = {
            let mut s = self.seen_y.clone();
            s.extend(y)?;
            s
        };
        let total = seen_x.len();
        if total == 0 {
            return Err(Error::Empty("online state"));
        }
        let d = seen_x.dim();
        let fx = self.f_exp.eval_or_zero(&seen_x)?;
        let gy = self.g_exp.eval_or_zero(&seen_y)?;
        counter.evaluate_block(total, self.f_exp.len(), d);
        counter.evaluate_block(total, self.g_exp.len(), d);
        let lw = -(total as f64).ln();
        self.f_exp.replace(seen_y.clone(), gy.iter().map(|g| lw + g).collect())?;
        self.g_exp.replace(seen_x.clone(), fx.iter().map(|f| lw + f).collect())?;
        self.seen_x = seen_x;
        self.seen_y = seen_y;
        self.n_seen = total as u64;
        self.t += 1;
        Ok(())
    }

    /// Uniform measures over every sample seen so far.
    pub fn seen_measures(&self) -> Result<(WeightedSamples, WeightedSamples)> {
        Ok((
            WeightedSamples::uniform(self.seen_x.clone())?,
            WeightedSamples::uniform(self.seen_y.clone())?,
        ))
    }

    /// `Ŵ` over the seen samples, charged to the metric bucket.
    pub fn estimate_distance(&self, counter: &mut MultiplicationCounter) -> Result<f64> {
        let (a, b) = self.seen_measures()?;
        estimate_distance_counted(&self.f_exp, &self.g_exp, &a, &b, counter)
    }

    /// Write `f.snap`, `g.snap`, `seen_x.snap`, `seen_y.snap` and
    /// `state.json` into `dir`.
    pub fn save(&self, dir: &Path, meta: &SnapshotMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cost = self.cost().clone();
        Snapshot::from_expansion(&self.f_exp)?.save(&dir.join("f.snap"))?;
        Snapshot::from_expansion(&self.g_exp)?.save(&dir.join("g.snap"))?;
        Snapshot::new(PayloadKind::Points, cost.clone(), self.seen_x.clone(), vec![])?
            .save(&dir.join("seen_x.snap"))?;
        Snapshot::new(PayloadKind::Points, cost, self.seen_y.clone(), vec![])?
            .save(&dir.join("seen_y.snap"))?;
        let meta = SnapshotMeta {
            t: self.t,
            n_seen: self.n_seen,
            seed: self.seed,
            ..meta.clone()
        };
        let path = dir.join("state.json");
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Snapshot(e.to_string()))?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, SnapshotMeta)> {
        let path = dir.join("state.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|e| Error::Snapshot(e.to_string()))?;
        let f_exp = Snapshot::load(&dir.join("f.snap"))?.into_expansion()?;
        let g_exp = Snapshot::load(&dir.join("g.snap"))?.into_expansion()?;
        let seen_x = Snapshot::load(&dir.join("seen_x.snap"))?.points;
        let seen_y = Snapshot::load(&dir.join("seen_y.snap"))?.points;
        if seen_x.len() as u64 != meta.n_seen || seen_y.len() as u64 != meta.n_seen {
            return Err(Error::Snapshot(format!(
                "state.json records {} samples, stores hold {} and {}",
                meta.n_seen,
                seen_x.len(),
                seen_y.len()
            )));
        }
        let state = Self {
            f_exp,
            g_exp,
            t: meta.t,
            n_seen: meta.n_seen,
            seen_x,
            seen_y,
            seed: meta.seed,
        };
        Ok((state, meta))
    }
}

/// JSON sidecar of an online-state snapshot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub t: u64,
    pub n_seen: u64,
    pub seed: u64,
    pub schedule: Option<Schedule>,
    pub core_mults: u64,
    pub metric_mults: u64,
    pub alpha_stream: Option<StreamPosition>,
    pub beta_stream: Option<StreamPosition>,
}

/// Online Sinkhorn driver.
#[derive(Clone, Debug)]
pub struct OnlineSinkhorn {
    pub schedule: Schedule,
    /// Iterations to run (counted from the state's current `t`).
    pub iterations: u64,
    /// Refit every `k`-th iteration; the fully-corrective variant implies 1.
    pub full_correction_every: Option<u64>,
    pub max_core_mults: Option<u64>,
    /// Record `δ` / `Ŵ` every `k`-th iteration (0: never). The final
    /// iteration is always recorded when metrics are on.
    pub metric_every: u64,
    pub reference: Option<ReferenceGrid>,
    pub track_w_hat: bool,
    pub record_wall_time: bool,
}

impl OnlineSinkhorn {
    pub fn new(schedule: Schedule, iterations: u64) -> Self {
        Self {
            schedule,
            iterations,
            full_correction_every: None,
            max_core_mults: None,
            metric_every: 1,
            reference: None,
            track_w_hat: false,
            record_wall_time: false,
        }
    }

    fn correction_period(&self) -> Option<u64> {
        match self.schedule.variant {
            ScheduleVariant::FullyCorrective => Some(self.full_correction_every.unwrap_or(1)),
            ScheduleVariant::Plain => self.full_correction_every,
        }
    }

    pub fn run(
        &self,
        alpha: &mut SampleStream,
        beta: &mut SampleStream,
        cost: &CostOracle,
        seed: u64,
    ) -> Result<SolverReport> {
        if alpha.dim() != beta.dim() {
            return Err(Error::DimensionMismatch {
                expected: alpha.dim(),
                found: beta.dim(),
            });
        }
        let state = OnlineState::new(alpha.dim(), cost.clone(), seed);
        let mut counter = MultiplicationCounter::new();
        let (state, trace) = self.advance(state, alpha, beta, &mut counter)?;
        self.finish(state, trace, counter)
    }

    /// Continue from an existing state; the trace covers only the new iterations.
    pub fn resume(
        &self,
        state: OnlineState,
        alpha: &mut SampleStream,
        beta: &mut SampleStream,
        counter: &mut MultiplicationCounter,
    ) -> Result<(OnlineState, ConvergenceTrace)> {
        self.advance(state, alpha, beta, counter)
    }

    fn finish(
        &self,
        state: OnlineState,
        trace: ConvergenceTrace,
        mut counter: MultiplicationCounter,
    ) -> Result<SolverReport> {
        let w_hat = match trace.last().and_then(|r| r.w_hat) {
            Some(w) => Some(w),
            None if self.track_w_hat && state.n_seen > 0 => Some(state.estimate_distance(&mut counter)?),
            None => None,
        };
        Ok(SolverReport {
            potentials: Potentials::Expansions {
                f: state.f_exp,
                g: state.g_exp,
            },
            trace,
            w_hat,
            converged: None,
            counter,
        })
    }

    fn advance(
        &self,
        mut state: OnlineState,
        alpha: &mut SampleStream,
        beta: &mut SampleStream,
        counter: &mut MultiplicationCounter,
    ) -> Result<(OnlineState, ConvergenceTrace)> {
        self.schedule.validate()?;
        if self.schedule.classify() == Regime::NotGuaranteed {
            log::warn!(
                "schedule (a={}, b={}) has no convergence guarantee",
                self.schedule.a,
                self.schedule.b
            );
        }
        let clock = self.record_wall_time.then(Instant::now);
        let period = self.correction_period();
        let mut trace = ConvergenceTrace::new();
        let last = state.t + self.iterations;
        while state.t < last {
            if self.max_core_mults.is_some_and(|b| counter.core() >= b) {
                break;
            }
            let t = state.t + 1;
            let n = self.schedule.batch_size(t)?;
            let x = alpha.sample(n)?;
            let y = beta.sample(n)?;
            if period.is_some_and(|k| k > 0 && t % k == 0) {
                state.fully_corrective_step(&x, &y, counter)?;
            } else {
                // The first batch replaces the empty prior entirely.
                let eta = if t == 1 { 1.0 } else { self.schedule.step_size(t) };
                state.online_step(&x, &y, eta, counter)?;
            }
            let finished =
                state.t == last || self.max_core_mults.is_some_and(|b| counter.core() >= b);
            let due = self.metric_every > 0 && (t % self.metric_every == 0 || finished);
            let delta = match (&self.reference, due) {
                (Some(grid), true) => Some(grid.delta_of(&state.f_exp, &state.g_exp, counter)?),
                _ => None,
            };
            let w_hat = if due && self.track_w_hat {
                Some(state.estimate_distance(counter)?)
            } else {
                None
            };
            trace.push(TraceRow {
                t,
                n_t: state.n_seen,
                core_mults: counter.core(),
                metric_mults: counter.metric(),
                delta,
                marginal: None,
                w_hat,
                wall_ms: clock.map(|c| c.elapsed().as_secs_f64() * 1e3),
            })?;
        }
        Ok((state, trace))
    }
}

/// Online Sinkhorn with default metric settings (δ every iteration when a
/// reference is given).
#[allow(clippy::too_many_arguments)]
pub fn online_sinkhorn(
    alpha: &mut SampleStream,
    beta: &mut SampleStream,
    cost: &CostOracle,
    schedule: Schedule,
    total_iterations: u64,
    seed: u64,
    full_correction_every: Option<u64>,
    reference: Option<ReferenceGrid>,
) -> Result<SolverReport> {
    if total_iterations == 0 {
        return Err(Error::invalid("online Sinkhorn needs at least one iteration"));
    }
    let mut solver = OnlineSinkhorn::new(schedule, total_iterations);
    solver.full_correction_every = full_correction_every;
    solver.reference = reference;
    solver.run(alpha, beta, cost, seed)
}

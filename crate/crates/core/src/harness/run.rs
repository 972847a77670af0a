//! Experiment orchestration: per-seed runs, aggregation, comparison tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::warmup::{measure_speedup, SpeedupMeasurement};
use crate::algorithms::{BatchSinkhorn, OnlineSinkhorn, Potentials, RandomizedSinkhorn, SolverReport, WarmupConfig};
use crate::distributions::SampleStream;
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::harness::config::{Algorithm, ExperimentConfig, ReferenceKind};
use crate::harness::svg::{loglog_chart, trace_chart, Series};
use crate::harness::trace::{aggregate, AggregateTrace, ConvergenceTrace};
use crate::oracles::{check_gaussian_cost, delta_error, reference_on, reference_potentials, GaussianOracle, ReferenceGrid};
use crate::potentials::WeightedSamples;
use crate::snapshot::Snapshot;
use crate::schedules::ScheduleVariant;

/// Offset separating reference-grid streams from solver streams.
const REFERENCE_SEED_OFFSET: u64 = 0xa5a5_0000_0000_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The iteration budget was zero; traces hold only the header.
    Empty,
    TargetReached,
    TargetNotReached,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Csv,
    /// CSV plus log-log charts.
    Svg,
}

#[derive(Clone, Debug)]
pub struct SeedResult {
    pub seed: u64,
    pub trace: ConvergenceTrace,
    pub w_hat: Option<f64>,
    pub converged: Option<bool>,
    pub core_mults: u64,
    pub metric_mults: u64,
    /// Final potentials; `None` for empty runs.
    pub potentials: Option<Potentials>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub rows: usize,
    pub core_mults: u64,
    pub metric_mults: u64,
    pub final_error: Option<f64>,
    pub w_hat: Option<f64>,
    pub converged: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub seeds: Vec<SeedSummary>,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub name: String,
    pub algorithm: Algorithm,
    pub status: RunStatus,
    pub seeds: Vec<SeedResult>,
    pub aggregate: AggregateTrace,
}

impl RunOutput {
    pub fn summary(&self) -> RunSummary {
        RunSummary {
            name: self.name.clone(),
            algorithm: self.algorithm,
            status: self.status,
            seeds: self
                .seeds
                .iter()
                .map(|s| SeedSummary {
                    seed: s.seed,
                    rows: s.trace.len(),
                    core_mults: s.core_mults,
                    metric_mults: s.metric_mults,
                    final_error: s.trace.rows().iter().rev().find_map(|r| r.error()),
                    w_hat: s.w_hat,
                    converged: s.converged,
                })
                .collect(),
        }
    }

    /// Core multiplications (seed mean) at the first aggregate row whose
    /// mean error is below `target`.
    pub fn core_at_target(&self, target: f64) -> Option<f64> {
        self.aggregate
            .rows
            .iter()
            .find(|r| r.delta.or(r.marginal).is_some_and(|e| e.mean < target))
            .map(|r| r.core_mults.mean)
    }
}

/// Reference grid shared by every seed of a run, or `None`.
pub fn build_reference(config: &ExperimentConfig) -> Result<Option<ReferenceGrid>> {
    let spec = &config.reference;
    let cost = config.cost_oracle()?;
    let streams = || config.streams(spec.seed.wrapping_add(REFERENCE_SEED_OFFSET));
    match spec.kind {
        ReferenceKind::None => Ok(None),
        ReferenceKind::Gaussian => {
            check_gaussian_cost(&cost)?;
            let (a, b) = match (config.problem.alpha.gaussian(), config.problem.beta.gaussian()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Config("gaussian reference needs gaussian sources".into())),
            };
            let oracle = GaussianOracle::squared_euclidean(&a, &b, config.epsilon)?;
            let (mut sa, mut sb) = streams()?;
            let xs = sa.sample(spec.size)?;
            let ys = sb.sample(spec.size)?;
            ReferenceGrid::from_gaussian(&oracle, xs, ys, &cost).map(Some)
        }
        ReferenceKind::Sinkhorn => {
            let (mut sa, mut sb) = streams()?;
            let grid = reference_potentials(&mut sa, &mut sb, spec.size, &cost, spec.max_sweeps)?;
            if grid.provenance.low_confidence {
                log::warn!("reference grid did not reach its tolerance in {} sweeps", spec.max_sweeps);
            }
            Ok(Some(grid))
        }
        ReferenceKind::Grid => {
            let path = spec.path.as_ref().expect("validated");
            let path = if path.is_absolute() {
                path.clone()
            } else {
                config.base_dir.join(path)
            };
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let stem = path
                .file_name()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad grid path {}", path.display())))?;
            let grid = ReferenceGrid::load(&dir, stem)?;
            let p = &grid.provenance;
            if p.cost != cost.kind().name() || p.epsilon != config.epsilon {
                return Err(Error::Config(format!(
                    "grid was built for {} at epsilon {}, config asks for {} at {}",
                    p.cost,
                    p.epsilon,
                    cost.kind().name(),
                    config.epsilon
                )));
            }
            Ok(Some(grid))
        }
    }
}

/// A finite stream gives its whole support; otherwise draw `n` points.
fn finite_support(stream: &mut SampleStream, n: usize) -> Result<PointSet> {
    match stream.support() {
        Some(p) => Ok(p.clone()),
        None => stream.sample(n),
    }
}

fn warmup_config(config: &ExperimentConfig) -> WarmupConfig {
    let w = &config.warmup;
    WarmupConfig {
        schedule: config.schedule,
        target: w.target,
        max_core_mults: config.budget.core_mults(),
        max_sweeps: config.budget.max_iterations.map_or(100_000, |k| k as usize),
        phase2_mode: w.phase2_mode,
        metric_every: w.metric_every,
        replacement: w.replacement,
        record_wall_time: config.metrics.wall_time,
    }
}

/// One seed of an experiment.
pub fn run_seed(config: &ExperimentConfig, seed: u64, reference: Option<&ReferenceGrid>) -> Result<SeedResult> {
    let cost = config.cost_oracle()?;
    let (mut alpha, mut beta) = config.streams(seed)?;
    let iterations = config.budget.max_iterations;
    let budget = config.budget.core_mults();
    let metrics = &config.metrics;
    let report: SolverReport = match config.algorithm {
        Algorithm::Batch => {
            let x = finite_support(&mut alpha, config.batch.support_size)?;
            let y = finite_support(&mut beta, config.batch.support_size)?;
            BatchSinkhorn {
                iterations: iterations.map_or(usize::MAX, |k| k as usize),
                mode: config.batch.mode,
                target: None,
                max_core_mults: budget,
                init: None,
                record_wall_time: metrics.wall_time,
                reference: reference.cloned(),
                metric_every: metrics.every,
            }
            .solve(&WeightedSamples::uniform(x)?, &WeightedSamples::uniform(y)?, &cost)?
        }
        Algorithm::Randomized => {
            let mut solver = RandomizedSinkhorn::new(config.randomized.batch_size, iterations.unwrap_or(u64::MAX));
            solver.max_core_mults = budget;
            solver.metric_every = metrics.every;
            solver.reference = reference.cloned();
            solver.record_wall_time = metrics.wall_time;
            solver.run(&mut alpha, &mut beta, &cost)?
        }
        Algorithm::Online | Algorithm::FullyCorrective => {
            let mut schedule = config.schedule.expect("validated");
            if config.algorithm == Algorithm::FullyCorrective {
                schedule.variant = ScheduleVariant::FullyCorrective;
            }
            let mut solver = OnlineSinkhorn::new(schedule, iterations.unwrap_or(u64::MAX));
            solver.full_correction_every = config.online.full_correction_every;
            solver.max_core_mults = budget;
            solver.metric_every = metrics.every;
            solver.reference = reference.cloned();
            solver.track_w_hat = metrics.w_hat;
            solver.record_wall_time = metrics.wall_time;
            solver.run(&mut alpha, &mut beta, &cost, seed)?
        }
        Algorithm::Warmup => {
            let x = finite_support(&mut alpha, config.batch.support_size)?;
            let y = finite_support(&mut beta, config.batch.support_size)?;
            crate::algorithms::warmup_sinkhorn(&x, &y, &cost, &warmup_config(config), seed)?
        }
    };
    Ok(SeedResult {
        seed,
        w_hat: report.w_hat,
        converged: report.converged,
        core_mults: report.counter.core(),
        metric_mults: report.counter.metric(),
        trace: report.trace,
        potentials: Some(report.potentials),
    })
}

/// Runs every seed (in parallel) and aggregates in seed order.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let empty = config.budget.max_iterations == Some(0);
    let reference = if empty { None } else { build_reference(config)? };
    let seeds: Vec<SeedResult> = if empty {
        config
            .seeds
            .iter()
            .map(|&seed| SeedResult {
                seed,
                trace: ConvergenceTrace::new(),
                w_hat: None,
                converged: None,
                core_mults: 0,
                metric_mults: 0,
                potentials: None,
            })
            .collect()
    } else {
        config
            .seeds
            .par_iter()
            .map(|&seed| run_seed(config, seed, reference.as_ref()))
            .collect::<Result<_>>()?
    };
    let traces: Vec<ConvergenceTrace> = seeds.iter().map(|s| s.trace.clone()).collect();
    let status = if empty {
        RunStatus::Empty
    } else if config.algorithm == Algorithm::Warmup {
        if seeds.iter().all(|s| s.converged == Some(true)) {
            RunStatus::TargetReached
        } else {
            RunStatus::TargetNotReached
        }
    } else {
        RunStatus::Completed
    };
    Ok(RunOutput {
        name: config.name.clone(),
        algorithm: config.algorithm,
        status,
        seeds,
        aggregate: aggregate(&traces)?,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `trace_seed<k>.csv` per seed, `aggregate.csv` and `summary.json`;
/// with [`OutputFormat::Svg`] also one chart per nonempty trace and
/// `aggregate.svg`. Returns the written paths.
pub fn write_outputs(output: &RunOutput, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: &str| -> Result<()> {
        let path = dir.join(name);
        write(&path, text)?;
        written.push(path);
        Ok(())
    };
    for s in &output.seeds {
        put(format!("trace_seed{}.csv", s.seed), &s.trace.to_csv())?;
    }
    put("aggregate.csv".into(), &output.aggregate.to_csv())?;
    let summary =
        serde_json::to_string_pretty(&output.summary()).map_err(|e| Error::Config(e.to_string()))? + "\n";
    put("summary.json".into(), &summary)?;
    if format == OutputFormat::Svg {
        let mut series = Vec::new();
        for s in &output.seeds {
            let label = format!("{} seed {}", output.name, s.seed);
            match trace_chart(&label, &s.trace) {
                Ok(svg) => put(format!("trace_seed{}.svg", s.seed), &svg)?,
                Err(e) => log::warn!("no chart for seed {}: {e}", s.seed),
            }
            series.push(Series::from_trace(format!("seed {}", s.seed), &s.trace));
        }
        if let Ok(svg) = loglog_chart(&output.name, &series) {
            put("aggregate.svg".into(), &svg)?;
        }
    }
    Ok(written)
}

/// Saves each seed's final potentials as expansion snapshots
/// `potentials_seed<k>.f.snap` and `.g.snap`. Potentials still in discrete
/// form (a warmup that met its target before phase 2) are skipped.
pub fn write_potentials(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for s in &output.seeds {
        let (f, g) = match &s.potentials {
            Some(Potentials::Expansions { f, g }) => (f.clone(), g.clone()),
            Some(Potentials::Support(sp)) => (sp.f_expansion()?, sp.g_expansion()?),
            Some(Potentials::Discrete(_)) => {
                log::warn!("seed {}: discrete potentials have no expansion snapshot", s.seed);
                continue;
            }
            None => continue,
        };
        for (side, exp) in [("f", f), ("g", g)] {
            let path = dir.join(format!("potentials_seed{}.{side}.snap", s.seed));
            Snapshot::from_expansion(&exp)?.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Output directory of a config, relative paths resolved against its file.
pub fn out_dir(config: &ExperimentConfig) -> PathBuf {
    if config.out_dir.is_absolute() {
        config.out_dir.clone()
    } else {
        config.base_dir.join(&config.out_dir)
    }
}

/// [`execute`] followed by [`write_outputs`] into the configured directory.
pub fn run(config: &ExperimentConfig, format: OutputFormat) -> Result<RunOutput> {
    let output = execute(config)?;
    write_outputs(&output, &out_dir(config), format)?;
    Ok(output)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub algorithm: Algorithm,
    pub core_at_target: Option<f64>,
    /// First config's multiplications over this one's.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub target: f64,
    pub rows: Vec<ComparisonRow>,
}

const NOT_REACHED: &str = "not reached";

impl ComparisonReport {
    pub fn all_reached(&self) -> bool {
        self.rows.iter().all(|r| r.core_at_target.is_some())
    }

    pub fn to_table(&self) -> String {
        let cells: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    format!("{:?}", r.algorithm).to_lowercase(),
                    r.core_at_target.map_or(NOT_REACHED.into(), |c| format!("{c:.4e}")),
                    r.speedup.map_or(NOT_REACHED.into(), |s| format!("{s:.3}")),
                ]
            })
            .collect();
        let head = ["config", "algorithm", "core_mults_at_target", "speedup"];
        let width: Vec<usize> = (0..4)
            .map(|k| cells.iter().map(|c| c[k].len()).chain([head[k].len()]).max().unwrap_or(0))
            .collect();
        let mut out = format!("target error {:e}\n", self.target);
        let mut line = |c: &[&str]| {
            let padded: Vec<String> = c.iter().zip(&width).map(|(s, w)| format!("{s:<w$}")).collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&head);
        for c in &cells {
            line(&c.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("config,algorithm,core_mults_at_target,speedup\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:?},{},{}",
                r.name,
                r.algorithm,
                r.core_at_target.map_or(NOT_REACHED.into(), |c| format!("{c:?}")),
                r.speedup.map_or(NOT_REACHED.into(), |s| format!("{s:?}"))
            );
        }
        out
    }
}

/// Speedup of each config against the first at equal error `target`.
pub fn compare_outputs(outputs: &[RunOutput], target: f64) -> ComparisonReport {
    let base = outputs.first().and_then(|o| o.core_at_target(target));
    ComparisonReport {
        target,
        rows: outputs
            .iter()
            .map(|o| {
                let core = o.core_at_target(target);
                ComparisonRow {
                    name: o.name.clone(),
                    algorithm: o.algorithm,
                    core_at_target: core,
                    speedup: match (base, core) {
                        (Some(b), Some(c)) if c > 0.0 => Some(b / c),
                        _ => None,
                    },
                }
            })
            .collect(),
    }
}

/// Runs each config and compares them; all must share problem, cost and ε.
pub fn compare(configs: &[ExperimentConfig], target: f64) -> Result<(ComparisonReport, Vec<RunOutput>)> {
    if configs.len() < 2 {
        return Err(Error::Config("compare needs at least two configs".into()));
    }
    if !(target > 0.0) {
        return Err(Error::Config(format!("target error must be positive, got {target}")));
    }
    let first = &configs[0];
    for c in &configs[1..] {
        if c.problem != first.problem || c.epsilon != first.epsilon || c.cost != first.cost {
            return Err(Error::Config(format!(
                "config {:?} does not share the problem, cost and epsilon of {:?}",
                c.name, first.name
            )));
        }
    }
    let outputs = configs.iter().map(execute).collect::<Result<Vec<_>>>()?;
    Ok((compare_outputs(&outputs, target), outputs))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupRow {
    pub seed: u64,
    pub measurement: SpeedupMeasurement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupStudy {
    pub target: f64,
    pub rows: Vec<WarmupRow>,
}

impl WarmupStudy {
    pub fn all_reached(&self) -> bool {
        self.rows.iter().all(|r| r.measurement.speedup().is_some())
    }

    /// Mean of per-seed speedups; `None` if any seed missed the target.
    pub fn mean_speedup(&self) -> Option<f64> {
        let s: Option<Vec<f64>> = self.rows.iter().map(|r| r.measurement.speedup()).collect();
        s.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<u64>| v.map_or(NOT_REACHED.to_string(), |c| c.to_string());
        let mut out = format!("target marginal error {:e}\nseed  cold_core_mults  warm_core_mults  speedup\n", self.target);
        for r in &self.rows {
            let m = &r.measurement;
            let _ = writeln!(
                out,
                "{:<4}  {:<15}  {:<15}  {}",
                r.seed,
                fmt(m.cold_core),
                fmt(m.warm_core),
                m.speedup().map_or(NOT_REACHED.into(), |s| format!("{s:.3}"))
            );
        }
        let _ = writeln!(
            out,
            "mean speedup: {}",
            self.mean_speedup().map_or(NOT_REACHED.into(), |s| format!("{s:.3}"))
        );
        out
    }
}

/// Cold versus warmed Sinkhorn per seed on the config's finite problem.
pub fn warmup_study(config: &ExperimentConfig) -> Result<WarmupStudy> {
    config.validate()?;
    let cost = config.cost_oracle()?;
    let wc = warmup_config(config);
    let rows = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let (mut alpha, mut beta) = config.streams(seed)?;
            let x = finite_support(&mut alpha, config.batch.support_size)?;
            let y = finite_support(&mut beta, config.batch.support_size)?;
            let (measurement, _, _) = measure_speedup(&x, &y, &cost, &wc, seed)?;
            Ok(WarmupRow { seed, measurement })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WarmupStudy { target: wc.target, rows })
}

/// Closed-form Gaussian potentials against a Sinkhorn solve on the same points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub n0: usize,
    pub epsilon: f64,
    /// `δ` between the two sets of potentials, cost units.
    pub delta: f64,
    pub sinkhorn_sweeps: usize,
    pub low_confidence: bool,
}

pub fn oracle_check(config: &ExperimentConfig) -> Result<OracleCheck> {
    let cost = config.cost_oracle()?;
    check_gaussian_cost(&cost)?;
    let (a, b) = match (config.problem.alpha.gaussian(), config.problem.beta.gaussian()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Config("oracle-check needs gaussian sources on both sides".into())),
    };
    let oracle = GaussianOracle::squared_euclidean(&a, &b, config.epsilon)?;
    let (mut sa, mut sb) = config.streams(config.reference.seed.wrapping_add(REFERENCE_SEED_OFFSET))?;
    let xs = sa.sample(config.reference.size)?;
    let ys = sb.sample(config.reference.size)?;
    let closed = ReferenceGrid::from_gaussian(&oracle, xs.clone(), ys.clone(), &cost)?;
    let solved = reference_on(xs, ys, &cost, config.reference.max_sweeps)?;
    Ok(OracleCheck {
        n0: config.reference.size,
        epsilon: config.epsilon,
        delta: delta_error(&solved.f, &solved.g, &closed)?,
        sinkhorn_sweeps: solved.provenance.sweeps,
        low_confidence: solved.provenance.low_confidence,
    })
}

//! Entropic optimal transport between distributions seen only through
//! sample streams, estimated with online Sinkhorn and its relatives.
//!
//! ```no_run
//! use onsink_core::{online_sinkhorn, CostOracle, Schedule, SampleStream, gmm_preset};
//!
//! let mut alpha = SampleStream::gmm(&gmm_preset("1d-alpha")?, 0)?;
//! let mut beta = SampleStream::gmm(&gmm_preset("1d-beta")?, 1)?;
//! let cost = CostOracle::squared_euclidean(0.1)?;
//! let schedule = Schedule::new(0.5, 1.0, 100, 0.1)?;
//! let report = online_sinkhorn(&mut alpha, &mut beta, &cost, schedule, 50, 0, None, None)?;
//! println!("{}", report.trace.to_csv());
//! # Ok::<(), onsink_core::Error>(())
//! ```

pub mod algorithms;
pub mod distributions;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod oracles;
pub mod potentials;
pub mod schedules;
pub mod snapshot;

pub use algorithms::{
    batch_sinkhorn, discrete_online_step, estimate_distance, estimate_distance_supports, online_sinkhorn,
    randomized_sinkhorn, warmup_sinkhorn, BatchSinkhorn, DiscretePotentialPair, DiscreteProblem, OnlineSinkhorn,
    OnlineState, Potentials, RandomizedSinkhorn, SolverReport, SupportPotentials, SweepMode, WarmupConfig,
};
pub use distributions::{gmm_preset, Covariance, GaussianSpec, GmmSpec, Replacement, SampleStream};
pub use error::{Error, Result};
pub use geometry::{pairwise_cost, variation_distance, variation_norm, CostKind, CostMatrix, CostOracle, PointSet};
pub use harness::{ConvergenceTrace, ExperimentConfig, MultiplicationCounter, TraceRow};
pub use oracles::{delta_error, gaussian_potentials, marginal_error, GaussianOracle, ReferenceGrid};
pub use potentials::{soft_ctransform, PotentialExpansion, WeightedSamples};
pub use schedules::{Regime, Schedule, ScheduleVariant};
pub use snapshot::Snapshot;

pub use nalgebra;

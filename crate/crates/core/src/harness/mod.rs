//! Configuration, multiplication accounting, orchestration and output.

pub mod config;
pub mod counter;
pub mod run;
pub mod svg;
pub mod trace;

pub use config::ExperimentConfig;
pub use counter::{CountEvent, MultiplicationCounter};
pub use run::{compare, execute, run, OutputFormat, RunOutput, RunStatus};
pub use trace::{aggregate, ConvergenceTrace, TraceRow, CSV_HEADER};

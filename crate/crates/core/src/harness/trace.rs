//! Convergence traces: one row per recorded iteration, CSV round-tripping,
//! and seed aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "t,n_t,core_mults,metric_mults,delta,marginal,w_hat,wall_ms";

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub n_t: u64,
    pub core_mults: u64,
    pub metric_mults: u64,
    pub delta: Option<f64>,
    pub marginal: Option<f64>,
    pub w_hat: Option<f64>,
    /// Only recorded when wall-clock timing is switched on, so that default
    /// traces stay byte-identical across runs.
    pub wall_ms: Option<f64>,
}

impl TraceRow {
    /// The error used for plots and targets: `delta` when present, else `marginal`.
    pub fn error(&self) -> Option<f64> {
        self.delta.or(self.marginal)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub(crate) fn last_mut(&mut self) -> Option<&mut TraceRow> {
        self.rows.last_mut()
    }

    /// Append a row, enforcing strictly increasing core counts and
    /// non-decreasing `n_t`.
    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(prev) = self.rows.last() {
            if row.core_mults <= prev.core_mults {
                return Err(Error::invalid(format!(
                    "trace core multiplications must increase: {} after {}",
                    row.core_mults, prev.core_mults
                )));
            }
            if row.n_t < prev.n_t {
                return Err(Error::invalid(format!(
                    "trace n_t must not decrease: {} after {}",
                    row.n_t, prev.n_t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// First row whose error is below `target`.
    pub fn first_below(&self, target: f64) -> Option<&TraceRow> {
        self.rows.iter().find(|r| r.error().is_some_and(|e| e < target))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.n_t,
                r.core_mults,
                r.metric_mults,
                opt(r.delta),
                opt(r.marginal),
                opt(r.w_hat),
                opt(r.wall_ms)
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            format: "trace csv",
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == CSV_HEADER => {}
            _ => return Err(err(1, format!("expected header {CSV_HEADER:?}"))),
        }
        let mut trace = Self::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(err(i + 1, format!("expected 8 fields, found {}", fields.len())));
            }
            let int = |k: usize| {
                fields[k]
                    .parse::<u64>()
                    .map_err(|e| err(i + 1, format!("field {k}: {e}")))
            };
            let float = |k: usize| -> Result<Option<f64>> {
                if fields[k].is_empty() {
                    Ok(None)
                } else {
                    fields[k]
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| err(i + 1, format!("field {k}: {e}")))
                }
            };
            trace
                .push(TraceRow {
                    t: int(0)?,
                    n_t: int(1)?,
                    core_mults: int(2)?,
                    metric_mults: int(3)?,
                    delta: float(4)?,
                    marginal: float(5)?,
                    w_hat: float(6)?,
                    wall_ms: float(7)?,
                })
                .map_err(|e| err(i + 1, e.to_string()))?;
        }
        Ok(trace)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// Mean and standard error of one column across seeds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanStderr {
    /// `None` when no sample is present.
    pub fn of(values: &[f64]) -> Option<Self> {
        let k = values.len();
        if k == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let stderr = if k > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, stderr })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: u64,
    pub n_t: u64,
    pub core_mults: MeanStderr,
    pub delta: Option<MeanStderr>,
    pub marginal: Option<MeanStderr>,
    pub w_hat: Option<MeanStderr>,
}

pub const AGGREGATE_HEADER: &str = "t,n_t,core_mults_mean,core_mults_stderr,delta_mean,delta_stderr,marginal_mean,marginal_stderr,w_hat_mean,w_hat_stderr";

/// Row-wise aggregate over seeds, truncated to the shortest trace. Row `k`
/// reports the `t` and `n_t` of the first trace.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateTrace {
    pub seeds: usize,
    pub rows: Vec<AggregateRow>,
}

pub fn aggregate(traces: &[ConvergenceTrace]) -> Result<AggregateTrace> {
    let first = traces.first().ok_or(Error::Empty("traces to aggregate"))?;
    let len = traces.iter().map(ConvergenceTrace::len).min().unwrap_or(0);
    let column = |k: usize, get: &dyn Fn(&TraceRow) -> Option<f64>| -> Option<MeanStderr> {
        let vals: Vec<f64> = traces.iter().filter_map(|tr| get(&tr.rows[k])).collect();
        // Only aggregate a column that every seed reports.
        if vals.len() == traces.len() {
            MeanStderr::of(&vals)
        } else {
            None
        }
    };
    let rows = (0..len)
        .map(|k| AggregateRow {
            t: first.rows[k].t,
            n_t: first.rows[k].n_t,
            core_mults: column(k, &|r| Some(r.core_mults as f64)).unwrap_or_default(),
            delta: column(k, &|r| r.delta),
            marginal: column(k, &|r| r.marginal),
            w_hat: column(k, &|r| r.w_hat),
        })
        .collect();
    Ok(AggregateTrace {
        seeds: traces.len(),
        rows,
    })
}

impl AggregateTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_HEADER);
        out.push('\n');
        let pair = |m: Option<MeanStderr>| match m {
            Some(m) => format!("{:?},{:?}", m.mean, m.stderr),
            None => ",".to_string(),
        };
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t,
                r.n_t,
                pair(Some(r.core_mults)),
                pair(r.delta),
                pair(r.marginal),
                pair(r.w_hat)
            );
        }
        out
    }
}

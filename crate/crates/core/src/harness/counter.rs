use serde::{Deserialize, Serialize};

/// A unit of accounted work.
///
/// Cost evaluation of an `n × m` block in dimension `d` is `n·m·d`; applying a
/// log-domain kernel to an `n × m` block is `n·m` (exp/log count as one
/// multiply-equivalent). Metric blocks cover both for error evaluation and
/// never touch the core bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountEvent {
    CostBlock { n: usize, m: usize, d: usize },
    TransformBlock { n: usize, m: usize },
    /// `n·m·d` cost terms plus `n·m` kernel terms, charged to the metric bucket.
    /// Use `d = 0` when the costs are already cached.
    MetricBlock { n: usize, m: usize, d: usize },
}

impl CountEvent {
    pub fn multiplications(&self) -> u64 {
        match *self {
            CountEvent::CostBlock { n, m, d } => (n as u64) * (m as u64) * (d as u64),
            CountEvent::TransformBlock { n, m } => (n as u64) * (m as u64),
            CountEvent::MetricBlock { n, m, d } => (n as u64) * (m as u64) * (d as u64 + 1),
        }
    }

    pub fn is_metric(&self) -> bool {
        matches!(self, CountEvent::MetricBlock { .. })
    }
}

/// Core and metric multiplication tallies. Both only ever grow.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicationCounter {
    core: u64,
    metric: u64,
    #[serde(skip)]
    audit: Option<Vec<CountEvent>>,
}

impl MultiplicationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counter that also keeps every event, for conservation checks.
    pub fn audited() -> Self {
        Self {
            audit: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn core(&self) -> u64 {
        self.core
    }

    pub fn metric(&self) -> u64 {
        self.metric
    }

    pub fn events(&self) -> Option<&[CountEvent]> {
        self.audit.as_deref()
    }

    pub fn count(&mut self, event: CountEvent) -> &mut Self {
        let k = event.multiplications();
        if event.is_metric() {
            self.metric += k;
        } else {
            self.core += k;
        }
        if let Some(log) = &mut self.audit {
            log.push(event);
        }
        self
    }

    pub fn cost_block(&mut self, n: usize, m: usize, d: usize) -> &mut Self {
        self.count(CountEvent::CostBlock { n, m, d })
    }

    pub fn transform_block(&mut self, n: usize, m: usize) -> &mut Self {
        self.count(CountEvent::TransformBlock { n, m })
    }

    pub fn metric_block(&mut self, n: usize, m: usize, d: usize) -> &mut Self {
        self.count(CountEvent::MetricBlock { n, m, d })
    }

    /// Cost evaluation plus kernel application for an `n × m` block.
    pub(crate) fn evaluate_block(&mut self, n: usize, m: usize, d: usize) -> &mut Self {
        if n > 0 && m > 0 {
            self.cost_block(n, m, d).transform_block(n, m);
        }
        self
    }

    /// Counter resuming from saved totals, e.g. after loading a snapshot.
    pub fn restore(core: u64, metric: u64) -> Self {
        Self {
            core,
            metric,
            audit: None,
        }
    }
}

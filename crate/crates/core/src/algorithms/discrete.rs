//! Online Sinkhorn on fixed finite supports, with a cost matrix that is
//! filled only where the iterations need it.

use std::sync::Arc;

use rayon::prelude::*;

use super::kernel::DenseKernel;
use crate::error::{Error, Result};
use crate::geometry::{lse, CostMatrix, CostOracle, PointSet};
use crate::harness::counter::MultiplicationCounter;

/// Uniform measures on two fixed supports and a lazily evaluated cost matrix.
#[derive(Clone, Debug)]
pub struct DiscreteProblem {
    x: Arc<PointSet>,
    y: Arc<PointSet>,
    cost: CostOracle,
    /// Row-major `N × M` scaled costs; NaN marks entries not yet computed.
    c: Vec<f64>,
    /// Transposed copy, for column reductions.
    ct: Vec<f64>,
    filled: usize,
}

impl DiscreteProblem {
    pub fn new(x: PointSet, y: PointSet, cost: CostOracle) -> Result<Self> {
        if x.is_empty() || y.is_empty() {
            return Err(Error::Empty("discrete support"));
        }
        x.check_same_dim(&y)?;
        let nm = x.len() * y.len();
        Ok(Self {
            x: Arc::new(x),
            y: Arc::new(y),
            cost,
            c: vec![f64::NAN; nm],
            ct: vec![f64::NAN; nm],
            filled: 0,
        })
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &PointSet {
        &self.y
    }

    pub fn cost(&self) -> &CostOracle {
        &self.cost
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn m(&self) -> usize {
        self.y.len()
    }

    /// Number of cost entries evaluated so far.
    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn is_complete(&self) -> bool {
        self.filled == self.c.len()
    }

    fn ensure(&mut self, i: usize, j: usize) -> f64 {
        let (n, m) = (self.n(), self.m());
        let v = self.c[i * m + j];
        if !v.is_nan() {
            return v;
        }
        let v = self.cost.scaled(self.x.point(i), self.y.point(j));
        self.c[i * m + j] = v;
        self.ct[j * n + i] = v;
        self.filled += 1;
        v
    }

    /// Evaluate every missing entry, charging `k·d` for `k` new entries.
    pub fn fill_remaining(&mut self, counter: &mut MultiplicationCounter) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        let before = self.filled;
        for i in 0..n {
            for j in 0..m {
                self.ensure(i, j);
            }
        }
        counter.cost_block(self.filled - before, 1, self.x.dim());
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        match self.c.iter().position(|v| v.is_infinite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// The full matrix as a reduction kernel; every entry must be filled.
    pub(crate) fn dense_kernel(&self) -> Result<DenseKernel> {
        if !self.is_complete() {
            return Err(Error::invalid("cost matrix is not fully evaluated"));
        }
        Ok(DenseKernel::from_matrix(CostMatrix::from_raw(
            self.n(),
            self.m(),
            self.c.clone(),
        )))
    }

    pub fn log_mass_x(&self) -> f64 {
        -(self.n() as f64).ln()
    }

    pub fn log_mass_y(&self) -> f64 {
        -(self.m() as f64).ln()
    }
}

/// Log-weights `p` over the `x` support and `q` over the `y` support:
/// `f(x) = -log Σ_j exp(q_j - C(x, y_j)/ε)` and
/// `g(y) = -log Σ_i exp(p_i - C(x_i, y)/ε)`. Untouched entries hold `-∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePotentialPair {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    x: Arc<PointSet>,
    y: Arc<PointSet>,
}

impl DiscretePotentialPair {
    /// All-`-∞` weights: both potentials are zero until first touched.
    pub fn new(problem: &DiscreteProblem) -> Self {
        Self {
            p: vec![f64::NEG_INFINITY; problem.n()],
            q: vec![f64::NEG_INFINITY; problem.m()],
            x: problem.x.clone(),
            y: problem.y.clone(),
        }
    }

    pub fn x(&self) -> &PointSet {
        &self.x
    }

    pub fn y(&self) -> &PointSet {
        &self.y
    }

    /// Scaled `(f on x, g on y)` once the problem's cost matrix is complete.
    pub fn values(&self, problem: &DiscreteProblem) -> Result<(Vec<f64>, Vec<f64>)> {
        let kernel = problem.dense_kernel()?;
        Ok(self.potentials(&kernel, &mut MultiplicationCounter::new()))
    }

    /// Like [`values`](Self::values) on a prepared kernel. Counted as metric work.
    pub(crate) fn potentials(
        &self,
        kernel: &DenseKernel,
        counter: &mut MultiplicationCounter,
    ) -> (Vec<f64>, Vec<f64>) {
        use super::kernel::Kernel;
        let f = finite_or_zero(kernel.reduce_rows(&self.q));
        let g = finite_or_zero(kernel.reduce_cols(&self.p));
        counter.metric_block(self.p.len(), self.q.len(), 0);
        counter.metric_block(self.q.len(), self.p.len(), 0);
        (f, g)
    }
}

/// An all-`-∞` weight vector gives `+∞`; that potential is the zero function.
fn finite_or_zero(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        if *x == f64::INFINITY {
            *x = 0.0;
        }
    }
    v
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// `-log Σ_k exp(w_k - row_k)` over the active (finite-weight) entries.
/// Zero when no weight is finite.
fn reduce_finite(active: &[usize], w: &[f64], row: &[f64]) -> f64 {
    if active.is_empty() {
        return 0.0;
    }
    let terms: Vec<f64> = active.iter().map(|&k| w[k] - row[k]).collect();
    -lse(&terms)
}

/// One step of discrete online Sinkhorn.
///
/// Using the pair before the step, evaluates `g` at `y_j` for `j ∈ J` and `f`
/// at `x_i` for `i ∈ I`; decays every weight by `log(1 - η)`; then adds mass
/// `η/|J|·e^{g(y_j)}` to `q_j` and `η/|I|·e^{f(x_i)}` to `p_i`. Repeated
/// indices receive mass once per occurrence.
pub fn discrete_online_step(
    problem: &mut DiscreteProblem,
    pair: &DiscretePotentialPair,
    i_t: &[usize],
    j_t: &[usize],
    eta: f64,
    counter: &mut MultiplicationCounter,
) -> Result<DiscretePotentialPair> {
    let (n, m) = (problem.n(), problem.m());
    if pair.p.len() != n || pair.q.len() != m {
        return Err(Error::LengthMismatch {
            left: n + m,
            right: pair.p.len() + pair.q.len(),
        });
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid(format!("step size must lie in (0, 1], got {eta}")));
    }
    if let Some(&index) = i_t.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, len: n });
    }
    if let Some(&index) = j_t.iter().find(|&&j| j >= m) {
        return Err(Error::IndexOutOfRange { index, len: m });
    }
    let active_x: Vec<usize> = (0..n).filter(|&i| pair.p[i] > f64::NEG_INFINITY).collect();
    let active_y: Vec<usize> = (0..m).filter(|&j| pair.q[j] > f64::NEG_INFINITY).collect();

    // Fill the entries this step reads, then reduce in parallel.
    let before = problem.filled;
    for &j in j_t {
        for &i in &active_x {
            problem.ensure(i, j);
        }
    }
    for &i in i_t {
        for &j in &active_y {
            problem.ensure(i, j);
        }
    }
    counter.cost_block(problem.filled - before, 1, problem.x.dim());
    let g_new: Vec<f64> = j_t
        .par_iter()
        .map(|&j| reduce_finite(&active_x, &pair.p, &problem.ct[j * n..(j + 1) * n]))
        .collect();
    let f_new: Vec<f64> = i_t
        .par_iter()
        .map(|&i| reduce_finite(&active_y, &pair.q, &problem.c[i * m..(i + 1) * m]))
        .collect();
    counter.transform_block(j_t.len(), active_x.len());
    counter.transform_block(i_t.len(), active_y.len());

    let decay = if eta == 1.0 {
        f64::NEG_INFINITY
    } else {
        (-eta).ln_1p()
    };
    let mut p: Vec<f64> = pair.p.iter().map(|v| v + decay).collect();
    let mut q: Vec<f64> = pair.q.iter().map(|v| v + decay).collect();
    // -∞ + -∞ stays -∞; a finite weight under a unit step also becomes -∞.
    for v in p.iter_mut().chain(q.iter_mut()) {
        if v.is_nan() {
            *v = f64::NEG_INFINITY;
        }
    }
    if !j_t.is_empty() {
        let lw = (eta / j_t.len() as f64).ln();
        for (&j, g) in j_t.iter().zip(&g_new) {
            q[j] = logaddexp(q[j], lw + g);
        }
    }
    if !i_t.is_empty() {
        let lw = (eta / i_t.len() as f64).ln();
        for (&i, f) in i_t.iter().zip(&f_new) {
            p[i] = logaddexp(p[i], lw + f);
        }
    }
    Ok(DiscretePotentialPair {
        p,
        q,
        x: pair.x.clone(),
        y: pair.y.clone(),
    })
}

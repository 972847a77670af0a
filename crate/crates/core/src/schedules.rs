//! Step-size and batch-size laws `η_t = 1/(1 + r t)^a`, `n(t) = ⌈B (1 + r t)^b⌉`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    #[default]
    Plain,
    FullyCorrective,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    ExactConvergence,
    ApproximateBall,
    NotGuaranteed,
}

fn default_r() -> f64 {
    0.1
}

fn default_max_batch() -> usize {
    1 << 32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Step exponent.
    pub a: f64,
    /// Batch exponent.
    pub b: f64,
    /// Base batch size.
    #[serde(rename = "B")]
    pub base_batch: usize,
    /// Time dilation.
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub variant: ScheduleVariant,
    /// Largest batch the schedule may request.
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
}

impl Schedule {
    pub fn new(a: f64, b: f64, base_batch: usize, r: f64) -> Result<Self> {
        let s = Self {
            a,
            b,
            base_batch,
            r,
            variant: ScheduleVariant::Plain,
            max_batch: default_max_batch(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn fully_corrective(mut self) -> Self {
        self.variant = ScheduleVariant::FullyCorrective;
        self
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_batch < 1 {
            return Err(Error::invalid("schedule base batch B must be >= 1"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!("schedule r must be > 0, got {}", self.r)));
        }
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::invalid("schedule exponents must be finite"));
        }
        if self.a < 0.0 || self.b < 0.0 {
            return Err(Error::invalid("schedule exponents must be >= 0"));
        }
        Ok(())
    }

    /// `η_t = 1 / (1 + r t)^a` for `t >= 1`.
    pub fn step_size(&self, t: u64) -> f64 {
        (1.0 + self.r * t.max(1) as f64).powf(-self.a)
    }

    /// `n(t) = ⌈B (1 + r t)^b⌉`.
    pub fn batch_size(&self, t: u64) -> Result<usize> {
        let raw = self.base_batch as f64 * (1.0 + self.r * t.max(1) as f64).powf(self.b);
        // Guard against float noise pushing exact integers up by one.
        let rounded = raw.round();
        let n = if (raw - rounded).abs() <= 1e-9 * rounded.max(1.0) {
            rounded
        } else {
            raw.ceil()
        };
        if !n.is_finite() || n > self.max_batch as f64 {
            return Err(Error::BatchOverflow {
                t,
                requested: n,
                limit: self.max_batch,
            });
        }
        Ok(n as usize)
    }

    /// `w_t = sqrt(B / n(t))`.
    pub fn noise_weight(&self, t: u64) -> Result<f64> {
        Ok((self.base_batch as f64 / self.batch_size(t)? as f64).sqrt())
    }

    pub fn classify(&self) -> Regime {
        let (a, b) = (self.a, self.b);
        match self.variant {
            ScheduleVariant::Plain => {
                if b > 0.0 && a >= 1.0 - b / 2.0 && a <= 1.0 {
                    Regime::ExactConvergence
                } else if b == 0.0 && a > 0.5 && a <= 1.0 {
                    Regime::ApproximateBall
                } else {
                    Regime::NotGuaranteed
                }
            }
            ScheduleVariant::FullyCorrective => {
                if (b < 1.0 && a > 0.5 - b / 2.0) || (b >= 1.0 && a >= 0.0) {
                    Regime::ExactConvergence
                } else {
                    Regime::NotGuaranteed
                }
            }
        }
    }
}

pub fn step_size(sched: &Schedule, t: u64) -> f64 {
    sched.step_size(t)
}

pub fn batch_size(sched: &Schedule, t: u64) -> Result<usize> {
    sched.batch_size(t)
}

pub fn classify(sched: &Schedule) -> Regime {
    sched.classify()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(a: f64, b: f64, base: usize) -> Schedule {
        Schedule::new(a, b, base, 0.1).unwrap()
    }

    #[test]
    fn step_size_examples() {
        for t in [1, 5, 1000] {
            assert_eq!(s(0.0, 0.0, 1).step_size(t), 1.0);
        }
        assert!((s(1.0, 0.0, 1).step_size(10) - 0.5).abs() < 1e-15);
        assert!((s(0.5, 0.0, 1).step_size(990) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn batch_size_examples() {
        assert_eq!(s(0.0, 0.0, 100).batch_size(17).unwrap(), 100);
        assert_eq!(s(0.0, 1.0, 100).batch_size(10).unwrap(), 200);
        assert_eq!(s(0.0, 2.0, 100).batch_size(10).unwrap(), 400);
        assert_eq!(s(0.0, 0.5, 10).batch_size(1).unwrap(), 11); // 10·sqrt(1.1) = 10.49
        let capped = s(0.0, 2.0, 100).with_max_batch(300);
        assert!(matches!(capped.batch_size(10), Err(Error::BatchOverflow { .. })));
    }

    #[test]
    fn classification_table() {
        assert_eq!(s(0.5, 1.0, 1).classify(), Regime::ExactConvergence);
        assert_eq!(s(1.0, 0.0, 1).classify(), Regime::ApproximateBall);
        assert_eq!(s(0.75, 0.0, 1).fully_corrective().classify(), Regime::ExactConvergence);
        assert_eq!(s(0.0, 2.0, 1).classify(), Regime::ExactConvergence);
        assert_eq!(s(0.5, 0.0, 1).classify(), Regime::NotGuaranteed);
        assert_eq!(s(1.5, 1.0, 1).classify(), Regime::NotGuaranteed);
        assert_eq!(s(0.2, 0.5, 1).classify(), Regime::NotGuaranteed);
        assert_eq!(s(0.3, 0.5, 1).fully_corrective().classify(), Regime::ExactConvergence);
        assert_eq!(s(0.2, 0.5, 1).fully_corrective().classify(), Regime::NotGuaranteed);
        assert_eq!(s(0.0, 1.0, 1).fully_corrective().classify(), Regime::ExactConvergence);
    }

    #[test]
    fn invalid_schedules() {
        assert!(Schedule::new(0.5, 1.0, 0, 0.1).is_err());
        assert!(Schedule::new(0.5, 1.0, 1, 0.0).is_err());
        assert!(Schedule::new(f64::NAN, 1.0, 1, 0.1).is_err());
    }

    /// Sum of `term(t)` over `t in [lo, hi)`.
    fn partial(lo: u64, hi: u64, term: impl Fn(u64) -> f64) -> f64 {
        (lo..hi).map(term).sum()
    }

    /// Decade-increment heuristic: for a power-law tail `t^-p`, the increment
    /// of the partial sums over `[10^5, 10^6)` relative to `[10^4, 10^5)` is
    /// `10^{1-p}`, which is `>= 1` exactly when the series diverges.
    fn decade_ratio(term: impl Fn(u64) -> f64) -> f64 {
        partial(100_000, 1_000_000, &term) / partial(10_000, 100_000, &term)
    }

    #[test]
    fn exact_schedules_meet_summability_conditions() {
        // Interior of the exact region, where a + b/2 > 1 strictly.
        for (a, b) in [(0.75, 1.0), (1.0, 0.5), (0.6, 1.5), (0.9, 0.4), (0.5, 2.0)] {
            let sched = s(a, b, 100);
            assert_eq!(sched.classify(), Regime::ExactConvergence, "({a}, {b})");
            let eta_ratio = decade_ratio(|t| sched.step_size(t));
            assert!(eta_ratio >= 1.0, "Σ η_t should diverge for ({a}, {b})");
            let weighted = decade_ratio(|t| {
                let w = (1.0 + sched.r * t as f64).powf(-b / 2.0);
                sched.step_size(t) * w
            });
            assert!(weighted < 1.0, "Σ η_t w_t should converge for ({a}, {b})");
        }
        // On the boundary a + b/2 = 1 the table still reports exact convergence
        // while Σ η_t w_t diverges logarithmically.
        let boundary = s(0.5, 1.0, 100);
        let ratio = decade_ratio(|t| {
            boundary.step_size(t) * (1.0 + boundary.r * t as f64).powf(-0.5)
        });
        assert!((ratio - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn batch_size_non_decreasing(b in 0.0f64..3.0, base in 1usize..500, t in 1u64..10_000) {
            let sched = Schedule::new(0.5, b, base, 0.1).unwrap();
            // Once batches overflow the limit they stay overflowed.
            match (sched.batch_size(t), sched.batch_size(t + 1)) {
                (Ok(now), Ok(next)) => prop_assert!(next >= now),
                (Err(_), Ok(_)) => prop_assert!(false, "overflow is not monotone at t={}", t),
                _ => {}
            }
        }

        #[test]
        fn step_size_in_unit_interval(a in 0.0f64..3.0, t in 1u64..1_000_000) {
            let eta = Schedule::new(a, 0.0, 1, 0.1).unwrap().step_size(t);
            prop_assert!(eta > 0.0 && eta <= 1.0);
        }
    }
}

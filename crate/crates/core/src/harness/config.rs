//! Experiment configuration, read from TOML.
//!
//! ```toml
//! name = "gmm-1d"
//! algorithm = "online"        # batch | randomized | online | fully_corrective | warmup
//! cost = "squared_euclidean"  # or "euclidean"
//! epsilon = 0.1
//! seeds = [0, 1, 2, 3, 4]
//! out_dir = "out/gmm-1d"
//!
//! [problem.alpha]
//! kind = "gmm_preset"         # gmm_preset | gmm | gaussian | sphere | point_cloud
//! preset = "1d-alpha"
//!
//! [problem.beta]
//! kind = "gaussian"
//! mean = [0.5]
//! covariance = { diag = [0.01] }
//!
//! [schedule]                  # online, fully_corrective, warmup
//! a = 0.5
//! b = 1.0
//! B = 100
//! r = 0.1
//!
//! [budget]
//! max_core_mults = 1e9
//! max_iterations = 200
//!
//! [metrics]
//! every = 10                  # record δ / Ŵ every k-th iteration
//! w_hat = false
//! wall_time = false
//!
//! [reference]                 # none | gaussian | sinkhorn | grid
//! kind = "gaussian"
//! size = 2000
//! seed = 99
//! ```
//!
//! Algorithm-specific tables: `[batch]` (`support_size`, `mode`),
//! `[randomized]` (`batch_size`), `[online]` (`full_correction_every`),
//! `[warmup]` (`target`, `metric_every`, `replacement`, `phase2_mode`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::batch::SweepMode;
use crate::distributions::{
    downsample, gmm_preset, load_point_cloud, Covariance, GaussianSpec, GmmSpec, PointCloudFormat,
    Replacement, SampleStream,
};
use crate::error::{Error, Result};
use crate::geometry::{CostKind, CostOracle};
use crate::schedules::Schedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Batch,
    Randomized,
    Online,
    FullyCorrective,
    Warmup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostName {
    SquaredEuclidean,
    Euclidean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    GmmPreset {
        preset: String,
    },
    Gmm {
        means: Vec<Vec<f64>>,
        covariances: Vec<Covariance>,
        weights: Vec<f64>,
    },
    Gaussian {
        mean: Vec<f64>,
        covariance: Covariance,
    },
    Sphere {
        dim: usize,
    },
    PointCloud {
        path: PathBuf,
        format: Option<PointCloudFormat>,
        #[serde(default)]
        normalize: bool,
        downsample: Option<usize>,
        #[serde(default)]
        replacement: Replacement,
    },
}

impl SourceSpec {
    /// Seeded stream; relative point-cloud paths resolve against `base`.
    pub fn stream(&self, seed: u64, base: &Path) -> Result<SampleStream> {
        match self {
            SourceSpec::GmmPreset { preset } => SampleStream::gmm(&gmm_preset(preset)?, seed),
            SourceSpec::Gmm {
                means,
                covariances,
                weights,
            } => SampleStream::gmm(
                &GmmSpec {
                    means: means.clone(),
                    covariances: covariances.clone(),
                    weights: weights.clone(),
                },
                seed,
            ),
            SourceSpec::Gaussian { .. } => SampleStream::gaussian(&self.gaussian().expect("gaussian"), seed),
            SourceSpec::Sphere { dim } => SampleStream::sphere(*dim, seed),
            SourceSpec::PointCloud {
                path,
                format,
                normalize,
                downsample: keep,
                replacement,
            } => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let format = match format {
                    Some(f) => *f,
                    None => PointCloudFormat::from_path(&path).ok_or_else(|| {
                        Error::Config(format!("cannot infer point-cloud format of {}", path.display()))
                    })?,
                };
                let mut pts = load_point_cloud(&path, format, *normalize)?;
                if let Some(k) = keep {
                    pts = downsample(&pts, *k, seed)?;
                }
                SampleStream::finite(pts, *replacement, seed)
            }
        }
    }

    pub fn gaussian(&self) -> Option<GaussianSpec> {
        match self {
            SourceSpec::Gaussian { mean, covariance } => Some(GaussianSpec {
                mean: mean.clone(),
                covariance: covariance.clone(),
            }),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub alpha: SourceSpec,
    pub beta: SourceSpec,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    /// Accepts integers or floats such as `1e9`.
    pub max_core_mults: Option<f64>,
    pub max_iterations: Option<u64>,
}

impl Budget {
    pub fn core_mults(&self) -> Option<u64> {
        self.max_core_mults.map(|v| v as u64)
    }
}

fn default_every() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    #[serde(default = "default_every")]
    pub every: u64,
    #[serde(default)]
    pub w_hat: bool,
    #[serde(default)]
    pub wall_time: bool,
}

impl Default for Metrics {
    fn default() -> Self {
        Self {
            every: 1,
            w_hat: false,
            wall_time: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    None,
    Gaussian,
    Sinkhorn,
    Grid,
}

fn default_reference_size() -> usize {
    2000
}

fn default_reference_sweeps() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    #[serde(default)]
    pub kind: ReferenceKind,
    #[serde(default = "default_reference_size")]
    pub size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reference_sweeps")]
    pub max_sweeps: usize,
    /// Directory and stem of a saved grid (`kind = "grid"`).
    pub path: Option<PathBuf>,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            kind: ReferenceKind::None,
            size: default_reference_size(),
            seed: 0,
            max_sweeps: default_reference_sweeps(),
            path: None,
        }
    }
}

fn default_support() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    /// Points drawn per side to build the finite problem.
    #[serde(default = "default_support")]
    pub support_size: usize,
    #[serde(default)]
    pub mode: SweepMode,
}

impl Default for BatchSection {
    fn default() -> Self {
        Self {
            support_size: default_support(),
            mode: SweepMode::Simultaneous,
        }
    }
}

fn default_randomized_batch() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedSection {
    #[serde(default = "default_randomized_batch")]
    pub batch_size: usize,
}

impl Default for RandomizedSection {
    fn default() -> Self {
        Self {
            batch_size: default_randomized_batch(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineSection {
    pub full_correction_every: Option<u64>,
}

fn default_target() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmupSection {
    #[serde(default = "default_target")]
    pub target: f64,
    #[serde(default)]
    pub metric_every: u64,
    #[serde(default = "default_replacement")]
    pub replacement: Replacement,
    #[serde(default)]
    pub phase2_mode: SweepMode,
}

fn default_replacement() -> Replacement {
    Replacement::Without
}

impl Default for WarmupSection {
    fn default() -> Self {
        Self {
            target: default_target(),
            metric_every: 0,
            replacement: Replacement::Without,
            phase2_mode: SweepMode::Simultaneous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub algorithm: Algorithm,
    pub cost: CostName,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub problem: Problem,
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub metrics: Metrics,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub batch: BatchSection,
    #[serde(default)]
    pub randomized: RandomizedSection,
    #[serde(default)]
    pub online: OnlineSection,
    #[serde(default)]
    pub warmup: WarmupSection,
    /// Directory used to resolve relative paths; set by [`ExperimentConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if let Some(b) = self.budget.max_core_mults {
            if !(b > 0.0) {
                return bad(format!("budget.max_core_mults must be positive, got {b}"));
            }
        }
        if self.budget.max_core_mults.is_none() && self.budget.max_iterations.is_none() {
            return bad("budget needs max_core_mults and/or max_iterations".into());
        }
        if let Some(s) = &self.schedule {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if matches!(self.algorithm, Algorithm::Online | Algorithm::FullyCorrective) && self.schedule.is_none() {
            return bad("online algorithms need a [schedule] table".into());
        }
        if self.reference.kind == ReferenceKind::Gaussian
            && (self.problem.alpha.gaussian().is_none() || self.problem.beta.gaussian().is_none())
        {
            return bad("a gaussian reference needs gaussian sources on both sides".into());
        }
        if self.reference.kind == ReferenceKind::Gaussian && self.cost != CostName::SquaredEuclidean {
            return bad("a gaussian reference needs the squared Euclidean cost".into());
        }
        if self.reference.kind == ReferenceKind::Grid && self.reference.path.is_none() {
            return bad("reference.path is required for kind = \"grid\"".into());
        }
        if self.warmup.target <= 0.0 {
            return bad("warmup.target must be positive".into());
        }
        Ok(())
    }

    pub fn cost_oracle(&self) -> Result<CostOracle> {
        let kind = match self.cost {
            CostName::SquaredEuclidean => CostKind::SquaredEuclidean,
            CostName::Euclidean => CostKind::Euclidean,
        };
        CostOracle::new(kind, self.epsilon)
    }

    /// Independent stream seeds for the two sides of a run.
    pub fn stream_seeds(seed: u64) -> (u64, u64) {
        (seed.wrapping_mul(2), seed.wrapping_mul(2).wrapping_add(1))
    }

    pub fn streams(&self, seed: u64) -> Result<(SampleStream, SampleStream)> {
        let (sa, sb) = Self::stream_seeds(seed);
        let a = self.problem.alpha.stream(sa, &self.base_dir)?;
        let b = self.problem.beta.stream(sb, &self.base_dir)?;
        if a.dim() != b.dim() {
            return Err(Error::Config(format!(
                "alpha has dimension {}, beta has dimension {}",
                a.dim(),
                b.dim()
            )));
        }
        Ok((a, b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "gauss"
algorithm = "online"
cost = "squared_euclidean"
epsilon = 0.1
seeds = [0, 1]

[problem.alpha]
kind = "gaussian"
mean = [0.0]
covariance = { diag = [1.0] }

[problem.beta]
kind = "gmm_preset"
preset = "1d-beta"

[schedule]
a = 0.5
b = 1.0
B = 100

[budget]
max_core_mults = 1e9
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.algorithm, Algorithm::Online);
        assert_eq!(cfg.schedule.unwrap().r, 0.1);
        assert_eq!(cfg.budget.core_mults(), Some(1_000_000_000));
        assert_eq!(cfg.metrics.every, 1);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        let (mut a, mut b) = cfg.streams(3).unwrap();
        assert_eq!(a.sample(2).unwrap().dim(), 1);
        assert_eq!(b.sample(2).unwrap().dim(), 1);
    }

    #[test]
    fn rejects_invalid_configs() {
        for (from, to) in [
            ("seeds = [0, 1]", "seeds = []"),
            ("epsilon = 0.1", "epsilon = -1.0"),
            ("max_core_mults = 1e9", "max_core_mults = 0"),
            ("algorithm = \"online\"", "algorithm = \"magic\""),
            ("B = 100", "B = 0"),
            ("[budget]\nmax_core_mults = 1e9", ""),
        ] {
            let text = EXAMPLE.replace(from, to);
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{to}");
        }
        let gaussian_ref = format!("{EXAMPLE}\n[reference]\nkind = \"gaussian\"\n");
        assert!(ExperimentConfig::from_toml(&gaussian_ref).is_err());
    }
}

//! Seeded sample streams and point-cloud ingestion.
//!
//! Every stream owns a `ChaCha8Rng`, which is portable across platforms, and
//! draws standard normals with the ziggurat method from `rand_distr`. Given a
//! seed, the sequence of batches is fully reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointSet;

const PRESETS_V1: &str = include_str!("../presets/gmm_v1.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Per-axis variances.
    Diag(Vec<f64>),
    /// Full `d × d` covariance, row by row.
    Full(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Covariance>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub covariance: Covariance,
}

/// A validated mixture with precomputed Cholesky factors.
#[derive(Clone, Debug)]
struct Mixture {
    dim: usize,
    means: Vec<DVector<f64>>,
    factors: Vec<DMatrix<f64>>,
    picker: Option<WeightedIndex<f64>>,
}

impl Mixture {
    fn from_spec(spec: &GmmSpec) -> Result<Self> {
        let k = spec.means.len();
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        if spec.covariances.len() != k || spec.weights.len() != k {
            return Err(Error::invalid(format!(
                "mixture has {k} means, {} covariances and {} weights",
                spec.covariances.len(),
                spec.weights.len()
            )));
        }
        let dim = spec.means[0].len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be >= 1"));
        }
        let total: f64 = spec.weights.iter().sum();
        if spec.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights must be a probability vector, sum is {total}"
            )));
        }
        let mut means = Vec::with_capacity(k);
        let mut factors = Vec::with_capacity(k);
        for (mean, cov) in spec.means.iter().zip(&spec.covariances) {
            if mean.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: mean.len(),
                });
            }
            means.push(DVector::from_column_slice(mean));
            factors.push(cholesky_factor(cov, dim)?);
        }
        let picker = if k > 1 {
            Some(WeightedIndex::new(&spec.weights).map_err(|e| Error::invalid(e.to_string()))?)
        } else {
            None
        };
        Ok(Self {
            dim,
            means,
            factors,
            picker,
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        let c = match &self.picker {
            Some(p) => p.sample(rng),
            None => 0,
        };
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &self.means[c] + &self.factors[c] * z;
        out.extend(x.iter());
    }
}

pub(crate) fn covariance_matrix(cov: &Covariance, dim: usize) -> Result<DMatrix<f64>> {
    match cov {
        Covariance::Diag(v) => {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return Err(Error::NotPositiveDefinite("diagonal covariance"));
            }
            Ok(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
        }
        Covariance::Full(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(Error::invalid("full covariance must be d × d"));
            }
            let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
            if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
                return Err(Error::invalid("full covariance must be symmetric"));
            }
            Ok(m)
        }
    }
}

fn cholesky_factor(cov: &Covariance, dim: usize) -> Result<DMatrix<f64>> {
    let m = covariance_matrix(cov, dim)?;
    m.cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite("covariance"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    #[default]
    With,
    Without,
}

#[derive(Clone, Debug)]
enum Source {
    Mixture(Mixture),
    Sphere { dim: usize },
    Finite {
        points: PointSet,
        replacement: Replacement,
        order: Vec<usize>,
        cursor: usize,
        epoch: u64,
    },
}

/// Position of a stream, enough to resume it from its seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub word_pos: u128,
    pub cursor: usize,
    pub epoch: u64,
}

/// Reproducible source of i.i.d. (or without-replacement) samples.
#[derive(Clone, Debug)]
pub struct SampleStream {
    source: Source,
    dim: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl SampleStream {
    pub fn gmm(spec: &GmmSpec, seed: u64) -> Result<Self> {
        let mixture = Mixture::from_spec(spec)?;
        Ok(Self::from_source(mixture.dim, Source::Mixture(mixture), seed))
    }

    pub fn gaussian(spec: &GaussianSpec, seed: u64) -> Result<Self> {
        Self::gmm(
            &GmmSpec {
                means: vec![spec.mean.clone()],
                covariances: vec![spec.covariance.clone()],
                weights: vec![1.0],
            },
            seed,
        )
    }

    /// Uniform distribution on the unit sphere of `R^dim`.
    pub fn sphere(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("sphere dimension must be >= 1"));
        }
        Ok(Self::from_source(dim, Source::Sphere { dim }, seed))
    }

    /// Uniform draws from a fixed support. Without replacement, each epoch is a
    /// fresh random permutation and exhaustion is reported as an error.
    pub fn finite(points: PointSet, replacement: Replacement, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("finite support"));
        }
        let dim = points.dim();
        let n = points.len();
        let mut stream = Self::from_source(
            dim,
            Source::Finite {
                points,
                replacement,
                order: (0..n).collect(),
                cursor: 0,
                epoch: 0,
            },
            seed,
        );
        stream.shuffle_epoch();
        Ok(stream)
    }

    fn from_source(dim: usize, source: Source, seed: u64) -> Self {
        Self {
            source,
            dim,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn shuffle_epoch(&mut self) {
        if let Source::Finite {
            replacement: Replacement::Without,
            order,
            cursor,
            ..
        } = &mut self.source
        {
            order.shuffle(&mut self.rng);
            *cursor = 0;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Size of the support for finite streams.
    pub fn support_size(&self) -> Option<usize> {
        match &self.source {
            Source::Finite { points, .. } => Some(points.len()),
            _ => None,
        }
    }

    pub fn support(&self) -> Option<&PointSet> {
        match &self.source {
            Source::Finite { points, .. } => Some(points),
            _ => None,
        }
    }

    /// Samples left in the current epoch of a without-replacement stream.
    pub fn remaining(&self) -> Option<usize> {
        match &self.source {
            Source::Finite {
                replacement: Replacement::Without,
                order,
                cursor,
                ..
            } => Some(order.len() - cursor),
            _ => None,
        }
    }

    /// Start a new epoch of a without-replacement stream.
    pub fn new_epoch(&mut self) {
        if let Source::Finite { epoch, .. } = &mut self.source {
            *epoch += 1;
        }
        self.shuffle_epoch();
    }

    /// Indices into the support of a finite stream.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        match &mut self.source {
            Source::Finite {
                points,
                replacement,
                order,
                cursor,
                ..
            } => match replacement {
                Replacement::With => {
                    let len = points.len();
                    Ok((0..n).map(|_| self.rng.random_range(0..len)).collect())
                }
                Replacement::Without => {
                    let remaining = order.len() - *cursor;
                    if n > remaining {
                        return Err(Error::StreamExhausted {
                            requested: n,
                            remaining,
                        });
                    }
                    let out = order[*cursor..*cursor + n].to_vec();
                    *cursor += n;
                    Ok(out)
                }
            },
            _ => Err(Error::invalid("index sampling needs a finite stream")),
        }
    }

    pub fn sample(&mut self, n: usize) -> Result<PointSet> {
        if n == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        let mut coords = Vec::with_capacity(n * self.dim);
        match &self.source {
            Source::Mixture(m) => {
                for _ in 0..n {
                    m.draw(&mut self.rng, &mut coords);
                }
            }
            Source::Sphere { dim } => {
                let dim = *dim;
                for _ in 0..n {
                    draw_sphere(&mut self.rng, dim, &mut coords);
                }
            }
            Source::Finite { .. } => {
                let idx = self.sample_indices(n)?;
                return self.support().expect("finite source").select(&idx);
            }
        }
        PointSet::new(self.dim, coords)
    }

    pub fn position(&self) -> StreamPosition {
        let (cursor, epoch) = match &self.source {
            Source::Finite { cursor, epoch, .. } => (*cursor, *epoch),
            _ => (0, 0),
        };
        StreamPosition {
            word_pos: self.rng.get_word_pos(),
            cursor,
            epoch,
        }
    }

    /// Restore a position recorded from a stream built with the same seed.
    pub fn restore(&mut self, pos: StreamPosition) {
        for _ in 0..pos.epoch {
            self.new_epoch();
        }
        if let Source::Finite { cursor, .. } = &mut self.source {
            *cursor = pos.cursor;
        }
        self.rng.set_word_pos(pos.word_pos);
    }
}

fn draw_sphere(rng: &mut ChaCha8Rng, dim: usize, out: &mut Vec<f64>) {
    loop {
        let z: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.extend(z.iter().map(|v| v / norm));
            return;
        }
    }
}

pub fn sample(stream: &mut SampleStream, n: usize) -> Result<PointSet> {
    stream.sample(n)
}

/// `n` points uniform on the unit sphere of `R^d`.
pub fn sample_sphere(n: usize, d: usize, seed: u64) -> Result<PointSet> {
    SampleStream::sphere(d, seed)?.sample(n)
}

#[derive(Deserialize)]
struct PresetFile {
    version: u32,
    mixtures: BTreeMap<String, GmmSpec>,
}

/// Named benchmark mixture, e.g. `"2d-alpha"`.
pub fn gmm_preset(name: &str) -> Result<GmmSpec> {
    let file: PresetFile =
        toml::from_str(PRESETS_V1).map_err(|e| Error::Config(format!("gmm presets: {e}")))?;
    debug_assert_eq!(file.version, 1);
    file.mixtures
        .get(name)
        .cloned()
        .ok_or_else(|| Error::Config(format!("unknown gmm preset {name:?}")))
}

pub fn gmm_preset_names() -> Vec<String> {
    toml::from_str::<PresetFile>(PRESETS_V1)
        .map(|f| f.mixtures.into_keys().collect())
        .unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointCloudFormat {
    Csv,
    PlyAscii,
}

impl PointCloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "ply" => Some(Self::PlyAscii),
            _ => None,
        }
    }
}

/// Read a point cloud; optionally rescale each axis into `[0, 1]`.
pub fn load_point_cloud(path: &Path, format: PointCloudFormat, normalize: bool) -> Result<PointSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut points = match format {
        PointCloudFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::Unsupported("csv must be utf-8 text".into()))?;
            parse_csv(&text)?
        }
        PointCloudFormat::PlyAscii => parse_ply(&bytes)?,
    };
    if normalize {
        normalize_unit_cube(&mut points);
    }
    Ok(points)
}

/// One point per line, comma-separated decimals. Blank lines are skipped.
pub fn parse_csv(text: &str) -> Result<PointSet> {
    let mut dim = None;
    let mut coords = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                format: "csv",
                line: lineno + 1,
                message: e.to_string(),
            })?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Parse {
                    format: "csv",
                    line: lineno + 1,
                    message: format!("expected {d} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        coords.extend(row);
    }
    let dim = dim.ok_or(Error::Empty("csv point cloud"))?;
    PointSet::new(dim, coords)
}

/// ASCII PLY: reads the `x y z` properties of the `vertex` element and
/// ignores every other property and element.
pub fn parse_ply(bytes: &[u8]) -> Result<PointSet> {
    let err = |line: usize, message: String| Error::Parse {
        format: "ply",
        line,
        message,
    };
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Unsupported("binary PLY is not supported".into()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(err(1, "missing 'ply' magic".into())),
    }
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_vertex = false;
    // Elements declared before `vertex` and their line counts.
    let mut skip_before = 0usize;
    let mut props: Vec<String> = Vec::new();
    let mut header_done = false;
    for (lineno, raw) in lines.by_ref() {
        let line = raw.trim();
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => match toks.next() {
                Some("ascii") => {}
                Some(other) => {
                    return Err(Error::Unsupported(format!(
                        "PLY format {other} is not supported; only ascii"
                    )))
                }
                None => return Err(err(lineno + 1, "incomplete format line".into())),
            },
            Some("element") => {
                let name = toks.next().unwrap_or_default();
                let count: usize = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(lineno + 1, "bad element count".into()))?;
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(count);
                    seen_vertex = true;
                } else if !seen_vertex {
                    skip_before += count;
                }
            }
            Some("property") if in_vertex => {
                let name = toks.last().unwrap_or_default();
                props.push(name.to_string());
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            _ => {}
        }
    }
    if !header_done {
        return Err(err(0, "missing end_header".into()));
    }
    let count = vertex_count.ok_or_else(|| err(0, "no vertex element".into()))?;
    let axes: Vec<usize> = ["x", "y", "z"]
        .iter()
        .filter_map(|a| props.iter().position(|p| p == a))
        .collect();
    if axes.is_empty() {
        return Err(err(0, "vertex element has no x/y/z properties".into()));
    }
    let mut body = lines.filter(|(_, l)| !l.trim().is_empty());
    for _ in 0..skip_before {
        body.next();
    }
    let mut coords = Vec::with_capacity(count * axes.len());
    for k in 0..count {
        let (lineno, line) = body
            .next()
            .ok_or_else(|| err(0, format!("expected {count} vertices, found {k}")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != props.len() {
            return Err(err(
                lineno + 1,
                format!("expected {} values, found {}", props.len(), toks.len()),
            ));
        }
        for &a in &axes {
            let v: f64 = toks[a]
                .parse()
                .map_err(|e: std::num::ParseFloatError| err(lineno + 1, e.to_string()))?;
            coords.push(v);
        }
    }
    if count == 0 {
        return Err(Error::Empty("ply vertices"));
    }
    PointSet::new(axes.len(), coords)
}

/// Per-axis affine map of the bounding box onto `[0, 1]^d`; flat axes map to 0.
pub fn normalize_unit_cube(points: &mut PointSet) {
    let d = points.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points.iter() {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let coords: Vec<f64> = points
        .coords()
        .chunks_exact(d)
        .flat_map(|p| {
            p.iter().enumerate().map(|(k, v)| {
                let span = hi[k] - lo[k];
                if span > 0.0 {
                    (v - lo[k]) / span
                } else {
                    0.0
                }
            })
        })
        .collect::<Vec<_>>();
    *points = PointSet::new(d, coords).expect("normalized coordinates are finite");
}

/// Uniform random subset of size `n` (the whole set if it is smaller).
pub fn downsample(points: &PointSet, n: usize, seed: u64) -> Result<PointSet> {
    if n >= points.len() {
        return Ok(points.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, points.len(), n).into_vec();
    idx.sort_unstable();
    points.select(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn normal_1d(mean: f64, var: f64) -> GaussianSpec {
        GaussianSpec {
            mean: vec![mean],
            covariance: Covariance::Diag(vec![var]),
        }
    }

    #[test]
    fn gaussian_mean_within_clt_bound() {
        let n = 100_000;
        let pts = SampleStream::gaussian(&normal_1d(0.0, 1.0), 7).unwrap().sample(n).unwrap();
        let mean = pts.coords().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn same_seed_same_batches() {
        let spec = gmm_preset("2d-alpha").unwrap();
        let a = SampleStream::gmm(&spec, 42).unwrap().sample(50).unwrap();
        let b = SampleStream::gmm(&spec, 42).unwrap().sample(50).unwrap();
        let c = SampleStream::gmm(&spec, 43).unwrap().sample(50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn without_replacement_is_a_permutation() {
        let pts = PointSet::from_scalars(&[0.0, 1.0, 2.0]).unwrap();
        let mut s = SampleStream::finite(pts, Replacement::Without, 1).unwrap();
        let batch = s.sample(3).unwrap();
        let mut v = batch.coords().to_vec();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![0.0, 1.0, 2.0]);
        assert!(matches!(s.sample(1), Err(Error::StreamExhausted { .. })));
        s.new_epoch();
        assert_eq!(s.remaining(), Some(3));
    }

    #[test]
    fn epochs_visit_each_index_once() {
        let pts = PointSet::from_scalars(&(0..97).map(f64::from).collect::<Vec<_>>()).unwrap();
        let mut s = SampleStream::finite(pts, Replacement::Without, 9).unwrap();
        for _ in 0..3 {
            let mut seen = vec![0usize; 97];
            for n in [10, 40, 47] {
                for i in s.sample_indices(n).unwrap() {
                    seen[i] += 1;
                }
            }
            assert!(seen.iter().all(|&c| c == 1));
            s.new_epoch();
        }
    }

    #[test]
    fn gmm_component_frequencies() {
        // Components are far apart, so each sample's nearest mean identifies it.
        let spec = GmmSpec {
            means: vec![vec![-100.0], vec![0.0], vec![100.0]],
            covariances: vec![Covariance::Diag(vec![1.0]); 3],
            weights: vec![0.2, 0.5, 0.3],
        };
        let n = 100_000;
        let pts = SampleStream::gmm(&spec, 5).unwrap().sample(n).unwrap();
        let mut counts = [0usize; 3];
        for &x in pts.coords() {
            counts[if x < -50.0 { 0 } else if x < 50.0 { 1 } else { 2 }] += 1;
        }
        for (c, w) in counts.iter().zip(&spec.weights) {
            let sigma = (n as f64 * w * (1.0 - w)).sqrt();
            assert!((*c as f64 - n as f64 * w).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn gmm_validation() {
        let mut spec = gmm_preset("1d-alpha").unwrap();
        spec.weights[0] += 1e-6;
        assert!(SampleStream::gmm(&spec, 0).is_err());
        let bad = GmmSpec {
            means: vec![vec![0.0, 0.0]],
            covariances: vec![Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]])],
            weights: vec![1.0],
        };
        assert!(matches!(
            SampleStream::gmm(&bad, 0),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn presets_cover_benchmark_dimensions() {
        for (name, dim, modes) in [
            ("1d-alpha", 1, 3),
            ("1d-beta", 1, 3),
            ("2d-alpha", 2, 3),
            ("2d-beta", 2, 3),
            ("10d-alpha", 10, 5),
            ("10d-beta", 10, 5),
        ] {
            let spec = gmm_preset(name).unwrap();
            assert_eq!(spec.means.len(), modes);
            assert_eq!(SampleStream::gmm(&spec, 0).unwrap().dim(), dim);
        }
        assert!(gmm_preset("3d-alpha").is_err());
    }

    #[test]
    fn sphere_points_have_unit_norm() {
        let pts = sample_sphere(1000, 3, 4).unwrap();
        for p in pts.iter() {
            let r = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert_eq!(pts, sample_sphere(1000, 3, 4).unwrap());
    }

    #[test]
    fn sphere_mean_near_origin() {
        let n = 100_000;
        let pts = sample_sphere(n, 3, 8).unwrap();
        for k in 0..3 {
            let mean = pts.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 4.0 / (n as f64).sqrt());
        }
    }

    #[test]
    fn stream_position_round_trip() {
        let spec = gmm_preset("1d-beta").unwrap();
        let mut s = SampleStream::gmm(&spec, 3).unwrap();
        s.sample(17).unwrap();
        let pos = s.position();
        let next = s.sample(5).unwrap();
        let mut resumed = SampleStream::gmm(&spec, 3).unwrap();
        resumed.restore(pos);
        assert_eq!(resumed.sample(5).unwrap(), next);

        let pts = PointSet::from_scalars(&(0..10).map(f64::from).collect::<Vec<_>>()).unwrap();
        let mut f = SampleStream::finite(pts.clone(), Replacement::Without, 2).unwrap();
        f.sample(10).unwrap();
        f.new_epoch();
        f.sample(4).unwrap();
        let pos = f.position();
        let next = f.sample(6).unwrap();
        let mut g = SampleStream::finite(pts, Replacement::Without, 2).unwrap();
        g.restore(pos);
        assert_eq!(g.sample(6).unwrap(), next);
    }

    #[test]
    fn csv_parsing() {
        let pts = parse_csv("0,0\n1,1\n").unwrap();
        assert_eq!((pts.len(), pts.dim()), (2, 2));
        assert!(matches!(parse_csv("0,0\n1\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_csv("0,a\n"), Err(Error::Parse { .. })));
        assert!(parse_csv("\n").is_err());
    }

    #[test]
    fn ply_parsing() {
        let text = "ply\nformat ascii 1.0\ncomment toy\nelement vertex 3\nproperty float x\n\
                    property float y\nproperty float z\nproperty uchar red\nelement face 1\n\
                    property list uchar int vertex_indices\nend_header\n\
                    0 0 0 255\n1 0 0 255\n0 1 0.5 255\n3 0 1 2\n";
        let pts = parse_ply(text.as_bytes()).unwrap();
        assert_eq!((pts.len(), pts.dim()), (3, 3));
        assert_eq!(pts.point(2), &[0.0, 1.0, 0.5]);

        let binary = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n";
        assert!(matches!(parse_ply(binary.as_bytes()), Err(Error::Unsupported(_))));
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nend_header\n1\n";
        assert!(matches!(parse_ply(short.as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn normalization_maps_bounding_box() {
        let mut pts = PointSet::from_rows(&[[0.0, 0.0], [2.0, 4.0]]).unwrap();
        normalize_unit_cube(&mut pts);
        assert_eq!(pts.coords(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn load_and_downsample() {
        let mut file = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        for i in 0..20 {
            writeln!(file, "{},{}", i, 2 * i).unwrap();
        }
        let path = file.path();
        let fmt = PointCloudFormat::from_path(path).unwrap();
        let pts = load_point_cloud(path, fmt, true).unwrap();
        assert_eq!(pts.len(), 20);
        assert!(pts.coords().iter().all(|v| (0.0..=1.0).contains(v)));
        let sub = downsample(&pts, 5, 1).unwrap();
        assert_eq!(sub.len(), 5);
        assert_eq!(sub, downsample(&pts, 5, 1).unwrap());
        assert!(load_point_cloud(Path::new("/nonexistent.csv"), fmt, false).is_err());
    }
}

//! Versioned little-endian binary snapshots of point sets with per-point values.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes      | field                                                   |
//! |------------|---------------------------------------------------------|
//! | 8          | magic `b"ONSKSNAP"`                                     |
//! | 4 (u32)    | format version, currently 1                             |
//! | 1 (u8)     | payload: 0 expansion log-weights, 1 potential values, 2 bare points |
//! | 1 (u8)     | cost: 0 squared Euclidean, 1 Euclidean                  |
//! | 2          | reserved, zero                                          |
//! | 8 (f64)    | ε                                                       |
//! | 4 (u32)    | dimension d                                             |
//! | 8 (u64)    | count                                                   |
//! | 8·count·d  | points, row-major                                       |
//! | 8·count    | values (absent for bare points)                         |
//!
//! Custom costs cannot be serialized, since the callable has no portable form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CostKind, CostOracle, PointSet};
use crate::potentials::PotentialExpansion;

pub const MAGIC: &[u8; 8] = b"ONSKSNAP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadKind {
    LogWeights,
    PotentialValues,
    Points,
}

impl PayloadKind {
    fn tag(self) -> u8 {
        match self {
            PayloadKind::LogWeights => 0,
            PayloadKind::PotentialValues => 1,
            PayloadKind::Points => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(PayloadKind::LogWeights),
            1 => Ok(PayloadKind::PotentialValues),
            2 => Ok(PayloadKind::Points),
            other => Err(Error::Snapshot(format!("unknown payload kind {other}"))),
        }
    }
}

/// Decoded snapshot contents.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub payload: PayloadKind,
    pub cost: CostOracle,
    pub points: PointSet,
    /// Empty for bare point payloads.
    pub values: Vec<f64>,
}

fn cost_tag(cost: &CostOracle) -> Result<u8> {
    match cost.kind() {
        CostKind::SquaredEuclidean => Ok(0),
        CostKind::Euclidean => Ok(1),
        CostKind::Custom { name, .. } => Err(Error::Unsupported(format!(
            "custom cost {name:?} cannot be written to a snapshot"
        ))),
    }
}

impl Snapshot {
    pub fn new(payload: PayloadKind, cost: CostOracle, points: PointSet, values: Vec<f64>) -> Result<Self> {
        let expected = if payload == PayloadKind::Points { 0 } else { points.len() };
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                left: expected,
                right: values.len(),
            });
        }
        cost_tag(&cost)?;
        Ok(Self {
            payload,
            cost,
            points,
            values,
        })
    }

    pub fn from_expansion(exp: &PotentialExpansion) -> Result<Self> {
        Self::new(
            PayloadKind::LogWeights,
            exp.cost().clone(),
            exp.support().clone(),
            exp.log_weights().to_vec(),
        )
    }

    pub fn into_expansion(self) -> Result<PotentialExpansion> {
        if self.payload != PayloadKind::LogWeights {
            return Err(Error::Snapshot(format!(
                "expected an expansion snapshot, found {:?}",
                self.payload
            )));
        }
        if self.points.is_empty() {
            return Ok(PotentialExpansion::empty(self.points.dim(), self.cost));
        }
        PotentialExpansion::new(self.points, self.values, self.cost)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let io = |e| Error::Snapshot(format!("write failed: {e}"));
        let mut buf = Vec::with_capacity(36 + 8 * (self.points.coords().len() + self.values.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.push(self.payload.tag());
        buf.push(cost_tag(&self.cost)?);
        buf.extend_from_slice(&[0, 0]);
        buf.extend_from_slice(&self.cost.epsilon().to_le_bytes());
        buf.extend_from_slice(&(self.points.dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.points.len() as u64).to_le_bytes());
        for v in self.points.coords().iter().chain(&self.values) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Snapshot(format!("read failed: {e}")))?;
        Self::decode(&bytes)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = u32::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let payload = PayloadKind::from_tag(cur.take(1)?[0])?;
        let kind = match cur.take(1)?[0] {
            0 => CostKind::SquaredEuclidean,
            1 => CostKind::Euclidean,
            other => return Err(Error::Snapshot(format!("unknown cost kind {other}"))),
        };
        cur.take(2)?;
        let epsilon = f64::from_le_bytes(cur.array()?);
        let cost = CostOracle::new(kind, epsilon)?;
        let dim = u32::from_le_bytes(cur.array()?) as usize;
        let count = u64::from_le_bytes(cur.array()?);
        let count = usize::try_from(count).map_err(|_| Error::Snapshot("count too large".into()))?;
        let n_values = if payload == PayloadKind::Points { 0 } else { count };
        let total = count
            .checked_mul(dim)
            .and_then(|c| c.checked_add(n_values))
            .ok_or_else(|| Error::Snapshot("size overflow".into()))?;
        if bytes.len() - cur.pos != total * 8 {
            return Err(Error::Snapshot(format!(
                "expected {} payload bytes, found {}",
                total * 8,
                bytes.len() - cur.pos
            )));
        }
        let mut floats = cur.bytes[cur.pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let coords: Vec<f64> = floats.by_ref().take(count * dim).collect();
        let values: Vec<f64> = floats.collect();
        let points = PointSet::new(dim, coords)?;
        Self::new(payload, cost, points, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(&mut file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Snapshot("truncated header".into()));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

pub fn save_expansion(exp: &PotentialExpansion, path: &Path) -> Result<()> {
    Snapshot::from_expansion(exp)?.save(path)
}

pub fn load_expansion(path: &Path) -> Result<PotentialExpansion> {
    Snapshot::load(path)?.into_expansion()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PotentialExpansion {
        let pts = PointSet::from_rows(&[[0.0, 1.0], [2.5, -3.0], [1e-300, 7.0]]).unwrap();
        PotentialExpansion::new(
            pts,
            vec![0.1, f64::NEG_INFINITY, -2.0],
            CostOracle::euclidean(0.3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn expansion_round_trip_is_exact() {
        let exp = sample();
        let mut buf = Vec::new();
        Snapshot::from_expansion(&exp).unwrap().write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 36 + 8 * (6 + 3));
        let back = Snapshot::decode(&buf).unwrap().into_expansion().unwrap();
        assert_eq!(back.support(), exp.support());
        assert_eq!(back.log_weights(), exp.log_weights());
        assert_eq!(back.cost().epsilon(), 0.3);
        assert_eq!(back.cost().kind().name(), exp.cost().kind().name());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut buf = Vec::new();
        Snapshot::from_expansion(&sample()).unwrap().write_to(&mut buf).unwrap();
        assert!(Snapshot::decode(&buf[..buf.len() - 1]).is_err());
        assert!(Snapshot::decode(&buf[..10]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Snapshot::decode(&bad).is_err());
        let mut bad = buf;
        bad[8] = 9;
        assert!(Snapshot::decode(&bad).is_err());
    }

    #[test]
    fn custom_costs_are_refused() {
        let cost = CostOracle::new(
            CostKind::Custom {
                name: "l1".into(),
                cost: std::sync::Arc::new(|x: &[f64], y: &[f64]| (x[0] - y[0]).abs()),
            },
            1.0,
        )
        .unwrap();
        let exp = PotentialExpansion::new(PointSet::from_scalars(&[0.0]).unwrap(), vec![0.0], cost).unwrap();
        assert!(matches!(Snapshot::from_expansion(&exp), Err(Error::Unsupported(_))));
    }

    #[test]
    fn bare_points_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pts.bin");
        let pts = PointSet::from_scalars(&[1.0, 2.0]).unwrap();
        let snap = Snapshot::new(
            PayloadKind::Points,
            CostOracle::squared_euclidean(1.0).unwrap(),
            pts.clone(),
            vec![],
        )
        .unwrap();
        snap.save(&path).unwrap();
        let back = Snapshot::load(&path).unwrap();
        assert_eq!(back.payload, PayloadKind::Points);
        assert_eq!(back.points, pts);
        assert!(back.into_expansion().is_err());
    }
}

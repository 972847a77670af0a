//! Benchmark fixtures.

use onsink_core::{gmm_preset, CostOracle, PointSet, Result, SampleStream};

/// `n` points from each of the named presets, with fixed seeds.
pub fn preset_pair(alpha: &str, beta: &str, n: usize) -> Result<(PointSet, PointSet)> {
    let x = SampleStream::gmm(&gmm_preset(alpha)?, 11)?.sample(n)?;
    let y = SampleStream::gmm(&gmm_preset(beta)?, 12)?.sample(n)?;
    Ok((x, y))
}

pub fn cost(epsilon: f64) -> CostOracle {
    CostOracle::squared_euclidean(epsilon).expect("positive epsilon")
}

use onsink_core::{
    delta_error, soft_ctransform, variation_distance, variation_norm, CostOracle, PointSet, PotentialExpansion,
    WeightedSamples,
};
use onsink_core::oracles::ReferenceGrid;
use proptest::prelude::*;

fn point_set(d: usize, max: usize) -> impl Strategy<Value = PointSet> {
    (1..=max).prop_flat_map(move |n| {
        prop::collection::vec(-2.0f64..2.0, n * d).prop_map(move |c| PointSet::new(d, c).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_is_shift_equivariant(
        support in point_set(2, 12),
        at in point_set(2, 8),
        c in -50.0f64..50.0,
        eps in 0.05f64..2.0,
        seed in prop::collection::vec(-3.0f64..3.0, 12),
    ) {
        let cost = CostOracle::squared_euclidean(eps).unwrap();
        let mu = WeightedSamples::uniform(support).unwrap();
        let h: Vec<f64> = seed[..mu.len()].to_vec();
        let shifted: Vec<f64> = h.iter().map(|v| v + c).collect();
        let a = soft_ctransform(&h, &mu, &at, &cost).unwrap();
        let b = soft_ctransform(&shifted, &mu, &at, &cost).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - c - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn variation_ignores_constants(f in prop::collection::vec(-10.0f64..10.0, 1..30), c in -5.0f64..5.0) {
        let g: Vec<f64> = f.iter().map(|v| v + c).collect();
        prop_assert!(variation_distance(&f, &g).unwrap() < 1e-12);
        prop_assert!((variation_norm(&f).unwrap() - variation_norm(&g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn delta_error_is_brute_force_max_minus_min(
        f in prop::collection::vec(-3.0f64..3.0, 5),
        g in prop::collection::vec(-3.0f64..3.0, 5),
        df in prop::collection::vec(-1.0f64..1.0, 5),
        dg in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let pts = PointSet::from_scalars(&[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let cost = CostOracle::squared_euclidean(1.0).unwrap();
        let mut grid = onsink_core::oracles::reference_on(pts.clone(), pts.clone(), &cost, 1).unwrap();
        grid.f = f.clone();
        grid.g = g.clone();
        let grid: ReferenceGrid = grid;
        let fh: Vec<f64> = f.iter().zip(&df).map(|(a, b)| a + b).collect();
        let gh: Vec<f64> = g.iter().zip(&dg).map(|(a, b)| a + b).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
        prop_assert!((delta_error(&fh, &gh, &grid).unwrap() - span(&df) - span(&dg)).abs() < 1e-12);
    }

    #[test]
    fn expansion_evaluation_is_tile_independent(
        support in point_set(3, 40),
        at in point_set(3, 10),
        tile in 1usize..9,
    ) {
        let cost = CostOracle::squared_euclidean(0.3).unwrap();
        let w: Vec<f64> = (0..support.len()).map(|i| -(i as f64) * 0.1).collect();
        let exp = PotentialExpansion::new(support, w, cost).unwrap();
        let a = exp.eval(&at).unwrap();
        let b = exp.clone().with_tile(tile).eval(&at).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-13 * x.abs().max(1.0));
        }
    }
}

use onsink_core::oracles::{reference_on, reference_potentials};
use onsink_core::{
    delta_error, gaussian_potentials, CostOracle, Covariance, GaussianOracle, GaussianSpec, PointSet, SampleStream,
};

fn gaussian(mean: f64, var: f64) -> GaussianSpec {
    GaussianSpec {
        mean: vec![mean],
        covariance: Covariance::Diag(vec![var]),
    }
}

#[test]
fn one_point_reference_is_exact_after_one_sweep() {
    let cost = CostOracle::squared_euclidean(0.7).unwrap();
    let grid = reference_on(
        PointSet::from_rows(&[[0.0, 0.0]]).unwrap(),
        PointSet::from_rows(&[[1.0, 2.0]]).unwrap(),
        &cost,
        50,
    )
    .unwrap();
    assert_eq!((grid.x.len(), grid.y.len()), (1, 1));
    assert_eq!(grid.provenance.sweeps, 1);
    assert!(!grid.provenance.low_confidence);
    assert!((grid.f[0] + grid.g[0] - 5.0).abs() < 1e-12);
}

#[test]
fn same_seed_same_grid() {
    let cost = CostOracle::squared_euclidean(0.3).unwrap();
    let make = || {
        reference_potentials(
            &mut SampleStream::gaussian(&gaussian(0.0, 0.2), 4).unwrap(),
            &mut SampleStream::gaussian(&gaussian(1.0, 0.1), 5).unwrap(),
            300,
            &cost,
            5000,
        )
        .unwrap()
    };
    let (a, b) = (make(), make());
    assert_eq!(a.x, b.x);
    assert_eq!(a.f, b.f);
    assert_eq!(a.g, b.g);
    assert_eq!(a.provenance.seeds, Some((4, 5)));
}

#[test]
fn tight_budgets_mark_the_grid_low_confidence() {
    let cost = CostOracle::squared_euclidean(0.01).unwrap();
    let grid = reference_potentials(
        &mut SampleStream::gaussian(&gaussian(0.0, 1.0), 0).unwrap(),
        &mut SampleStream::gaussian(&gaussian(1.0, 1.0), 1).unwrap(),
        100,
        &cost,
        2,
    )
    .unwrap();
    assert!(grid.provenance.low_confidence);
    assert_eq!(grid.provenance.sweeps, 2);
}

#[test]
fn sinkhorn_grid_agrees_with_the_closed_form() {
    let cost = CostOracle::squared_euclidean(1.0).unwrap();
    let (a, b) = (gaussian(0.0, 0.2), gaussian(1.0, 0.1));
    let grid = reference_potentials(
        &mut SampleStream::gaussian(&a, 5).unwrap(),
        &mut SampleStream::gaussian(&b, 6).unwrap(),
        10_000,
        &cost,
        1000,
    )
    .unwrap();
    assert!(!grid.provenance.low_confidence);
    let oracle = GaussianOracle::squared_euclidean(&a, &b, 1.0).unwrap();
    let (f, g) = gaussian_potentials(&oracle, &grid.x, &grid.y).unwrap();
    let delta = delta_error(&f, &g, &grid).unwrap();
    assert!(delta <= 0.05, "{delta}");
}

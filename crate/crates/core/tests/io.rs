use std::path::Path;

use csef::bench::io::{export_grid, export_trajectory, load_grid, load_trajectory};
use csef::bench::scenario::Scenario;
use csef::field::ErgoSpec;
use csef::grid::{FieldGrid, GridBounds};
use csef::kinematics::{ChainModel, KinematicChain};
use csef::trajectory::{Space, Trajectory};
use csef::tsef::sample_tsef_grid;
use nalgebra::DVector;
use proptest::prelude::*;

#[test]
fn sampled_grid_survives_a_file_round_trip() {
    let chain = KinematicChain::planar_default();
    let spec = ErgoSpec::planar_default();
    let grid =
        sample_tsef_grid(&spec, &chain, GridBounds::around(&[0.0, 0.0], chain.reach()).unwrap(), &[40, 30]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.grid");
    export_grid(&grid, &path).unwrap();
    assert_eq!(load_grid(&path).unwrap(), grid);
}

#[test]
fn trajectory_survives_a_file_round_trip() {
    let pts = (0..20).map(|k| DVector::from_vec(vec![(k as f64 * 0.37).sin(), 1.0 / (k as f64 + 3.0)])).collect();
    let t = Trajectory::uniform(Space::Joint, pts, 0.01).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.traj");
    export_trajectory(&t, Some(ChainModel::Planar2), &path).unwrap();
    assert_eq!(load_trajectory(&path).unwrap(), (t, Some(ChainModel::Planar2)));
}

#[test]
fn shipped_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn arbitrary_grids_round_trip(
        cells in proptest::collection::vec((0.0f64..50.0, any::<bool>()), 12),
        lower in -5.0f64..0.0,
        width in 0.1f64..10.0,
    ) {
        let penalty = 123.456;
        let values = cells.iter().map(|&(v, r)| if r { v } else { penalty }).collect();
        let reachable = cells.iter().map(|&(_, r)| r).collect();
        let bounds = GridBounds::new(vec![lower, lower], vec![lower + width, lower + width / 3.0]).unwrap();
        let grid = FieldGrid::from_parts(bounds, vec![4, 3], penalty, values, reachable).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g");
        export_grid(&grid, &path).unwrap();
        prop_assert_eq!(load_grid(&path).unwrap(), grid);
    }
}

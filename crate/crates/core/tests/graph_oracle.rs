mod common;

use common::{knn_oracle, oracle_grid};
use pcdeid::data::FrameGrid;
use pcdeid::graph::{build_graph, build_temporal_graph, GraphMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn edge_sets_match_brute_force_on_500_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for case in 0..500 {
        let (grid, coords) = oracle_grid(&mut rng);
        let k = [1, 2, 4][case % 3];
        let g = build_temporal_graph(&grid, k);
        assert_eq!(g.edges, knn_oracle(&coords, grid.points_per_frame(), k), "case {case}");
    }
}

#[test]
fn structural_invariants_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    for _ in 0..200 {
        let (grid, _) = oracle_grid(&mut rng);
        let k = rng.random_range(1..=5);
        let g = build_temporal_graph(&grid, k);
        assert!(g.edges.len() <= k * grid.len());
        for &(src, dst) in &g.edges {
            assert_ne!(src, dst);
            let (fs, fd) = (g.node_frame[src], g.node_frame[dst]);
            if fd == 1 {
                assert_eq!(fs, 1);
            } else {
                assert_eq!(fs, fd - 1);
            }
        }
    }
}

#[test]
fn rebuilding_is_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(502);
    for mode in [GraphMode::Temporal, GraphMode::WithinFrame, GraphMode::Spatial] {
        let (grid, _) = oracle_grid(&mut rng);
        assert_eq!(build_graph(&grid, 3, mode), build_graph(&grid, 3, mode));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    // Lattice coordinates and integer shifts keep every distance exact, so
    // the comparison can be strict even when ties occur.
    #[test]
    fn translation_leaves_edges_unchanged(
        frames in 1usize..6,
        points in 1usize..9,
        k in 1usize..5,
        cells in proptest::collection::vec(-8i32..8, 8 * 6 * 3),
        shift in proptest::array::uniform3(-1000i32..1000),
    ) {
        let n = frames * points * 3;
        let coords: Vec<f64> = cells[..n].iter().map(|&c| c as f64 * 0.25).collect();
        let moved: Vec<f64> = coords.iter().enumerate().map(|(i, &c)| c + shift[i % 3] as f64).collect();
        let a = FrameGrid::new("a", 0, 0, frames, points, coords).unwrap();
        let b = FrameGrid::new("b", 0, 0, frames, points, moved).unwrap();
        prop_assert_eq!(build_temporal_graph(&a, k).edges, build_temporal_graph(&b, k).edges);
    }
}

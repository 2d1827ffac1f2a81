//! Brute-force reference implementations shared by the test targets.
#![allow(dead_code)]

use pcdeid::data::FrameGrid;
use rand::{Rng, RngCore};

/// Temporal KNN edges by full sort of every candidate on
/// `(squared distance, index)`, returned sorted by `(dst, src)`.
pub fn knn_oracle(coords: &[[f64; 3]], points: usize, k: usize) -> Vec<(usize, usize)> {
    let n = coords.len();
    let frame = |i: usize| i / points + 1;
    let mut edges = Vec::new();
    for i in 0..n {
        let mut cands: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .filter(|&j| if frame(i) == 1 { frame(j) == 1 } else { frame(j) == frame(i) - 1 })
            .map(|j| {
                let d: f64 = (0..3).map(|a| (coords[i][a] - coords[j][a]).powi(2)).sum();
                (d, j)
            })
            .collect();
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut chosen: Vec<usize> = cands.iter().take(k).map(|c| c.1).collect();
        chosen.sort();
        edges.extend(chosen.into_iter().map(|j| (j, i)));
    }
    edges
}

/// Random grid with F <= 8 and P <= 16; half sit on a coarse lattice so
/// distance ties are common.
pub fn oracle_grid(rng: &mut impl RngCore) -> (FrameGrid, Vec<[f64; 3]>) {
    let frames = rng.random_range(1..=8);
    let points = rng.random_range(1..=16);
    let lattice = rng.random_bool(0.5);
    let coords: Vec<[f64; 3]> = (0..frames * points)
        .map(|_| {
            let mut c = [0.0; 3];
            for v in &mut c {
                *v = if lattice { rng.random_range(0..4) as f64 } else { rng.random_range(-1.0..1.0) };
            }
            c
        })
        .collect();
    let flat = coords.iter().flat_map(|c| c.iter().copied()).collect();
    (FrameGrid::new("g", 0, 0, frames, points, flat).unwrap(), coords)
}

/// Chamfer distance by exhaustive nearest-neighbor search.
pub fn chamfer_oracle(p: &[[f64; 3]], q: &[[f64; 3]]) -> f64 {
    let d = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let one_way = |a: &[[f64; 3]], b: &[[f64; 3]]| -> f64 {
        a.iter().map(|x| b.iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min)).sum()
    };
    one_way(p, q) + one_way(q, p)
}

/// Cloud of 1 to 64 points in `[-1, 1)^3`.
pub fn cloud(rng: &mut impl RngCore) -> Vec<[f64; 3]> {
    let n = rng.random_range(1..=64);
    (0..n).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect()
}

pub fn flat(c: &[[f64; 3]]) -> Vec<f64> {
    c.iter().flatten().copied().collect()
}

//! Temporal Graph KNN: every point receives directed edges from its `k`
//! nearest points of the preceding frame (first-frame points look within
//! their own frame). Topology depends only on coordinates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::Result;

/// Which points are eligible as neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GraphMode {
    /// Previous frame, or own frame for frame 1.
    #[default]
    Temporal,
    /// Own frame only (no temporal edges).
    WithinFrame,
    /// Any other point regardless of frame (KNN without temporal structure).
    Spatial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalGraph {
    pub node_coords: Vec<[f64; 3]>,
    /// 1-based frame of each node.
    pub node_frame: Vec<usize>,
    /// `(src, dst)`: a directed edge from neighbor `src` into `dst`,
    /// sorted by `(dst, src)`.
    pub edges: Vec<(usize, usize)>,
    pub k: usize,
    /// `edges[dst_offsets[i]..dst_offsets[i + 1]]` are the edges into node `i`.
    pub dst_offsets: Vec<usize>,
}

impl TemporalGraph {
    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.dst_offsets[node + 1] - self.dst_offsets[node]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "dst,src,distance")?;
        for &(src, dst) in &self.edges {
            let d = sq_dist(&self.node_coords[src], &self.node_coords[dst]).sqrt();
            writeln!(out, "{dst},{src},{d}")?;
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Eligible neighbor set of node `i` under the temporal rule.
pub fn candidate_set(grid: &FrameGrid, i: usize) -> Vec<usize> {
    candidates(grid, i, GraphMode::Temporal).collect()
}

fn candidates(grid: &FrameGrid, i: usize, mode: GraphMode) -> impl Iterator<Item = usize> {
    let p = grid.points_per_frame();
    let frame = grid.frame_of(i);
    let range = match mode {
        GraphMode::Temporal if frame > 1 => (frame - 2) * p..(frame - 1) * p,
        GraphMode::Temporal | GraphMode::WithinFrame => (frame - 1) * p..frame * p,
        GraphMode::Spatial => 0..grid.len(),
    };
    range.filter(move |&j| j != i)
}

pub fn build_temporal_graph(grid: &FrameGrid, k: usize) -> TemporalGraph {
    build_graph(grid, k, GraphMode::Temporal)
}

/// Builds the directed KNN graph. Each node takes the `min(k, |C|)` nearest
/// candidates as sources; distance ties go to the lower source index.
pub fn build_graph(grid: &FrameGrid, k: usize, mode: GraphMode) -> TemporalGraph {
    assert!(k >= 1, "k must be positive");
    let n = grid.len();
    let coords: Vec<[f64; 3]> = (0..n).map(|i| grid.point(i)).collect();
    let mut edges = Vec::with_capacity(n * k);
    let mut dst_offsets = Vec::with_capacity(n + 1);
    let mut scratch: Vec<(f64, usize)> = Vec::new();
    for i in 0..n {
        dst_offsets.push(edges.len());
        scratch.clear();
        scratch.extend(candidates(grid, i, mode).map(|j| (sq_dist(&coords[i], &coords[j]), j)));
        let take = k.min(scratch.len());
        if take == 0 {
            continue;
        }
        let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if take < scratch.len() {
            scratch.select_nth_unstable_by(take - 1, by_dist);
        }
        let mut chosen: Vec<usize> = scratch[..take].iter().map(|&(_, j)| j).collect();
        chosen.sort_unstable();
        edges.extend(chosen.into_iter().map(|j| (j, i)));
    }
    dst_offsets.push(edges.len());
    TemporalGraph {
        node_frame: (0..n).map(|i| grid.frame_of(i)).collect(),
        node_coords: coords,
        edges,
        k,
        dst_offsets,
    }
}

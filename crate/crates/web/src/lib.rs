//! Browser bindings: generate a synthetic gesture, inspect its temporal
//! KNN graph, and compare anonymizers by Chamfer distance.

use pcdeid::baselines::{perturb, BaselineParams, BaselineSpec, Method};
use pcdeid::data::{sequence_to_grid, FrameGrid};
use pcdeid::graph::build_temporal_graph;
use pcdeid::loss::chamfer;
use pcdeid::synth::{generate_sequence, SubjectProfile, SynthSpec};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// One preprocessed gesture recording held on the Rust side.
#[wasm_bindgen]
pub struct Gesture {
    grid: FrameGrid,
}

#[wasm_bindgen]
impl Gesture {
    /// Synthesizes one recording of `gesture` by `subject` and resamples it
    /// to `frames x points`.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, subject: usize, gesture: usize, frames: usize, points: usize) -> Result<Gesture, JsError> {
        let spec = SynthSpec { seed, subjects: subject + 1, gestures: gesture + 1, ..SynthSpec::default() };
        spec.validate().map_err(js)?;
        let profile = SubjectProfile::for_subject(seed, subject);
        let seq = generate_sequence(&spec, &profile, subject, gesture, 0, format!("s{subject}-g{gesture}"));
        let grid = sequence_to_grid(&seq, frames, points, seed).map_err(js)?;
        Ok(Gesture { grid })
    }

    pub fn frames(&self) -> usize {
        self.grid.frames()
    }

    pub fn points(&self) -> usize {
        self.grid.points_per_frame()
    }

    /// Flat `x, y, z` coordinates, frame-major.
    pub fn coords(&self) -> Vec<f64> {
        self.grid.coords().to_vec()
    }

    /// Directed edges of the temporal KNN graph as flat `src, dst` pairs.
    pub fn edges(&self, k: usize) -> Vec<u32> {
        build_temporal_graph(&self.grid, k.max(1))
            .edges
            .iter()
            .flat_map(|&(s, d)| [s as u32, d as u32])
            .collect()
    }

    /// Coordinates after one of the comparison anonymizers at its default
    /// parameters.
    pub fn anonymize(&self, method: &str, seed: u64) -> Result<Vec<f64>, JsError> {
        let method: Method = method.parse().map_err(js)?;
        let spec = BaselineSpec { method, params: BaselineParams::default(), seed };
        Ok(perturb(&self.grid, &spec).map_err(js)?.coords().to_vec())
    }

    /// Chamfer distance between this recording and `coords`.
    pub fn chamfer_to(&self, coords: &[f64]) -> Result<f64, JsError> {
        chamfer(self.grid.coords(), coords).map_err(js)
    }
}

/// Names accepted by [`Gesture::anonymize`].
#[wasm_bindgen]
pub fn methods() -> Vec<String> {
    Method::ALL.iter().map(|m| m.name().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_agree_with_the_core_library() {
        let g = Gesture::new(7, 2, 3, 8, 6).unwrap();
        assert_eq!(g.coords().len(), 8 * 6 * 3);
        let edges = g.edges(2);
        assert_eq!(edges.len(), 2 * 2 * 8 * 6);
        assert_eq!(g.chamfer_to(&g.coords()).unwrap(), 0.0);
        let moved = g.anonymize("gaussian", 1).unwrap();
        assert!(g.chamfer_to(&moved).unwrap() > 0.0);
        assert_eq!(methods().len(), Method::ALL.len());
    }
}

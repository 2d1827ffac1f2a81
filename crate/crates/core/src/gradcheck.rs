//! Central finite-difference check of every analytic gradient.
//!
//! The error of a tensor is `max_i |analytic_i - numeric_i|` divided by the
//! larger of the two gradients' max-norms, so it is relative to the tensor's
//! own gradient scale. That scale is floored at `NOISE_FLOOR` times the largest
//! gradient entry of the same loss, and at `ABS_FLOOR`: below those, central
//! differences with step `FD_STEP` only measure rounding error (about 1e-12).

use rand::Rng;
use serde::Serialize;

use crate::data::FrameGrid;
use crate::error::Result;
use crate::loss::LossWeights;
use crate::model::{ModelConfig, ModelKind, ModelParams};
use crate::objective::{autoencoder_objective, classifier_objective, Frozen, LossSelector, Task};
use crate::rng::rng_for;

pub const FD_STEP: f64 = 1e-4;
pub const MAX_REL_ERROR: f64 = 1e-4;
pub const NOISE_FLOOR: f64 = 1e-6;
pub const ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub loss: String,
    pub tensor: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    /// Parameter gradients are bit-identical for two different `delta`s.
    pub delta_gradient_free: bool,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.delta_gradient_free && self.rows.iter().all(|r| r.max_rel_error < self.threshold)
    }

    pub fn worst(&self) -> Option<&GradCheckRow> {
        self.rows.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// A small random problem: autoencoder, two frozen classifiers and a batch.
pub struct Instance {
    pub autoencoder: ModelParams,
    pub gesture: ModelParams,
    pub identity: ModelParams,
    pub batch: Vec<FrameGrid>,
    pub weights: LossWeights,
}

/// Default gradient-check model: `d_h = d_m = 4`, two heads.
pub fn small_config(seed: u64) -> ModelConfig {
    // Non-trivial standardization so its chain-rule factor is checked too.
    ModelConfig {
        d_h: 4,
        d_m: 4,
        d_k: 2,
        d_v: 2,
        heads: 2,
        d_z: 4,
        k: 2,
        seed,
        input_center: [0.1, -0.2, 0.3],
        input_scale: [0.5, 2.0, 1.5],
        ..ModelConfig::default()
    }
}

/// Random grids of `frames x points` with coordinates in `[-1, 1)`.
pub fn random_grids(count: usize, frames: usize, points: usize, gestures: usize, subjects: usize, seed: u64) -> Vec<FrameGrid> {
    let mut rng = rng_for(seed, 31);
    (0..count)
        .map(|i| {
            let coords = (0..frames * points * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
            FrameGrid::new(format!("rand-{i}"), i % subjects, i % gestures, frames, points, coords)
                .expect("valid random grid")
        })
        .collect()
}

impl Instance {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let (gestures, subjects) = (3, 4);
        let sharpen = |mut p: ModelParams| {
            // Default init leaves attention nearly uniform; sharpen it so the
            // query and key gradients are well above rounding noise.
            p.attn_query.data.iter_mut().chain(p.attn_key.data.iter_mut()).for_each(|w| *w *= 8.0);
            p
        };
        let autoencoder = sharpen(ModelParams::init(config, ModelKind::Autoencoder)?);
        let gesture = sharpen(ModelParams::init(
            &ModelConfig { seed: seed ^ 0x6e, ..config.clone() },
            ModelKind::Classifier { classes: gestures },
        )?);
        let identity = sharpen(ModelParams::init(
            &ModelConfig { seed: seed ^ 0x1d, ..config.clone() },
            ModelKind::Classifier { classes: subjects },
        )?);
        // N = 8 nodes per grid.
        let batch = random_grids(2, 2, 4, gestures, subjects, seed);
        Ok(Self { autoencoder, gesture, identity, batch, weights: LossWeights::for_subjects(subjects) })
    }

    fn frozen(&self) -> Frozen<'_> {
        Frozen { gesture: &self.gesture, identity: &self.identity }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn compare(loss: &str, analytic: &ModelParams, numeric: &ModelParams) -> Vec<GradCheckRow> {
    let global = analytic.tensors().iter().map(|t| max_abs(&t.data)).fold(0.0f64, f64::max);
    let floor = (NOISE_FLOOR * global).max(ABS_FLOOR);
    analytic
        .tensors()
        .into_iter()
        .zip(numeric.tensors())
        .map(|(a, n)| {
            let scale = max_abs(&a.data).max(max_abs(&n.data)).max(floor);
            let err = a.data.iter().zip(&n.data).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            GradCheckRow { loss: loss.into(), tensor: a.name.clone(), max_rel_error: err / scale }
        })
        .collect()
}

/// Central differences of `f` with respect to every entry of `params`.
fn numeric_grad(params: &ModelParams, mut f: impl FnMut(&ModelParams) -> Result<f64>) -> Result<ModelParams> {
    let mut out = params.zeros_like();
    let mut probe = params.clone();
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &size) in sizes.iter().enumerate() {
        for i in 0..size {
            let orig = probe.tensors()[ti].data[i];
            probe.tensors_mut()[ti].data[i] = orig + FD_STEP;
            let up = f(&probe)?;
            probe.tensors_mut()[ti].data[i] = orig - FD_STEP;
            let down = f(&probe)?;
            probe.tensors_mut()[ti].data[i] = orig;
            out.tensors_mut()[ti].data[i] = (up - down) / (2.0 * FD_STEP);
        }
    }
    Ok(out)
}

/// Runs every check. `corrupt` perturbs each analytic gradient before
/// comparison (used as a negative control).
pub fn run_with(instance: &Instance, corrupt: Option<&dyn Fn(&mut ModelParams)>) -> Result<GradCheckReport> {
    let mut rows = Vec::new();
    let frozen = instance.frozen();
    for selector in LossSelector::ALL {
        let (_, analytic) = autoencoder_objective(
            &instance.autoencoder, frozen, &instance.batch, &instance.weights, selector, true, true,
        )?;
        let mut analytic = analytic.expect("gradient requested");
        if let Some(c) = corrupt {
            c(&mut analytic);
        }
        let numeric = numeric_grad(&instance.autoencoder, |p| {
            autoencoder_objective(p, frozen, &instance.batch, &instance.weights, selector, true, false)
                .map(|(l, _)| l.total)
        })?;
        rows.extend(compare(selector.name(), &analytic, &numeric));
    }

    for (task, params) in [(Task::Gesture, &instance.gesture), (Task::Identity, &instance.identity)] {
        let (_, _, analytic) = classifier_objective(params, &instance.batch, task, true)?;
        let mut analytic = analytic.expect("gradient requested");
        if let Some(c) = corrupt {
            c(&mut analytic);
        }
        let numeric = numeric_grad(params, |p| classifier_objective(p, &instance.batch, task, false).map(|r| r.0))?;
        rows.extend(compare(&format!("classifier-{}", task.name()), &analytic, &numeric));
    }

    let delta_gradient_free = {
        let grad_at = |delta: f64| {
            let w = LossWeights { delta, ..instance.weights };
            autoencoder_objective(&instance.autoencoder, frozen, &instance.batch, &w, LossSelector::Combined, true, true)
                .map(|(_, g)| g.expect("gradient requested"))
        };
        let a = grad_at(instance.weights.delta)?;
        let b = grad_at(instance.weights.delta + 3.5)?;
        a.tensors()
            .iter()
            .zip(b.tensors())
            .all(|(x, y)| x.data.iter().zip(&y.data).all(|(u, v)| u.to_bits() == v.to_bits()))
    };

    Ok(GradCheckReport { rows, delta_gradient_free, threshold: MAX_REL_ERROR })
}

pub fn run(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    run_with(&Instance::new(config, seed)?, None)
}

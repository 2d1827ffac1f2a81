//! Batch losses and exact parameter gradients for the autoencoder against
//! frozen classifiers, and for classifier training.
//!
//! Per-sample work fans out over rayon; gradients are then summed in batch
//! order so the result does not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::loss::{chamfer_with_grad, deid_stabilized, deid_stabilized_slope, LossWeights, PROB_FLOOR};
use crate::model::{
    autoencoder_forward, backward_autoencoder, backward_classifier, classifier_forward, AutoencoderCache,
    ClassifierCache, ModelParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossSelector {
    Chamfer,
    Gesture,
    Deid,
    Combined,
}

impl LossSelector {
    pub const ALL: [LossSelector; 4] =
        [LossSelector::Chamfer, LossSelector::Gesture, LossSelector::Deid, LossSelector::Combined];

    pub fn name(&self) -> &'static str {
        match self {
            LossSelector::Chamfer => "chamfer",
            LossSelector::Gesture => "gesture",
            LossSelector::Deid => "deid",
            LossSelector::Combined => "combined",
        }
    }
}

/// The two pretrained networks the autoencoder is trained against.
#[derive(Clone, Copy)]
pub struct Frozen<'a> {
    pub gesture: &'a ModelParams,
    pub identity: &'a ModelParams,
}

/// Batch-level loss terms. Terms that were not evaluated are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BatchLoss {
    /// Mean per-sample Chamfer distance.
    pub l_point: Option<f64>,
    pub l_ges: Option<f64>,
    pub nll_id: Option<f64>,
    pub l_id_stab: Option<f64>,
    pub total: f64,
    /// Correct gesture predictions on the reconstructions (when evaluated).
    pub gesture_correct: usize,
    pub identity_correct: usize,
}

struct SampleForward {
    ae: AutoencoderCache,
    chamfer: f64,
    chamfer_grad: Vec<f64>,
    gesture: Option<ClassifierCache>,
    identity: Option<ClassifierCache>,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `d(-ln max(p_label, floor)) / d logits`, scaled.
fn nll_logit_grad(probs: &[f64], label: usize, scale: f64) -> Vec<f64> {
    if probs[label] < PROB_FLOOR {
        return vec![0.0; probs.len()];
    }
    probs.iter().enumerate().map(|(c, &p)| scale * (p - if c == label { 1.0 } else { 0.0 })).collect()
}

/// Loss (and optionally gradient) of the autoencoder on a batch.
///
/// `identity_on` is the already-resolved gate `gamma != 0 && H(A_id - tau)`;
/// for [`LossSelector::Combined`] the identity classifier is not run at all
/// when it is false.
pub fn autoencoder_objective(
    ae: &ModelParams,
    frozen: Frozen<'_>,
    batch: &[FrameGrid],
    weights: &LossWeights,
    selector: LossSelector,
    identity_on: bool,
    want_grad: bool,
) -> Result<(BatchLoss, Option<ModelParams>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let need_point = matches!(selector, LossSelector::Chamfer | LossSelector::Combined);
    let need_ges = matches!(selector, LossSelector::Gesture | LossSelector::Combined);
    let need_id = match selector {
        LossSelector::Deid => true,
        LossSelector::Combined => identity_on,
        _ => false,
    };
    let m = batch.len() as f64;

    let forwards: Vec<SampleForward> = batch
        .par_iter()
        .map(|grid| -> Result<SampleForward> {
            let ae_cache = autoencoder_forward(grid, ae)?;
            let (chamfer, chamfer_grad) = if need_point {
                chamfer_with_grad(grid.coords(), ae_cache.output.coords())?
            } else {
                (0.0, Vec::new())
            };
            let gesture = need_ges.then(|| classifier_forward(&ae_cache.output, frozen.gesture)).transpose()?;
            let identity = need_id.then(|| classifier_forward(&ae_cache.output, frozen.identity)).transpose()?;
            Ok(SampleForward { ae: ae_cache, chamfer, chamfer_grad, gesture, identity })
        })
        .collect::<Result<_>>()?;

    let mut loss = BatchLoss::default();
    if need_point {
        loss.l_point = Some(forwards.iter().map(|f| f.chamfer).sum::<f64>() / m);
    }
    if need_ges {
        let mut total = 0.0;
        for (f, grid) in forwards.iter().zip(batch) {
            let probs = &f.gesture.as_ref().expect("gesture forward").probs;
            total -= probs[grid.gesture].max(PROB_FLOOR).ln();
            loss.gesture_correct += (argmax(probs) == grid.gesture) as usize;
        }
        loss.l_ges = Some(total / m);
    }
    if need_id {
        let mut total = 0.0;
        for (f, grid) in forwards.iter().zip(batch) {
            let probs = &f.identity.as_ref().expect("identity forward").probs;
            total -= probs[grid.subject].max(PROB_FLOOR).ln();
            loss.identity_correct += (argmax(probs) == grid.subject) as usize;
        }
        let nll = total / m;
        loss.nll_id = Some(nll);
        loss.l_id_stab = Some(deid_stabilized(nll, weights.delta));
    }

    // Upstream scalar factors on each term.
    let (w_point, w_ges, w_id) = match selector {
        LossSelector::Chamfer => (1.0, 0.0, 0.0),
        LossSelector::Gesture => (0.0, 1.0, 0.0),
        LossSelector::Deid => (0.0, 0.0, 1.0),
        LossSelector::Combined => (weights.alpha, weights.beta, if need_id { weights.gamma } else { 0.0 }),
    };
    loss.total = match selector {
        LossSelector::Chamfer => loss.l_point.expect("evaluated"),
        LossSelector::Gesture => loss.l_ges.expect("evaluated"),
        LossSelector::Deid => loss.l_id_stab.expect("evaluated"),
        LossSelector::Combined => {
            let base = weights.alpha * loss.l_point.expect("evaluated") + weights.beta * loss.l_ges.expect("evaluated");
            match loss.l_id_stab {
                Some(l) if need_id => base + weights.gamma * l,
                _ => base,
            }
        }
    };
    if !loss.total.is_finite() {
        return Err(Error::Gradient(format!("non-finite {} loss", selector.name())));
    }
    if !want_grad {
        return Ok((loss, None));
    }

    let id_slope = loss.nll_id.map(deid_stabilized_slope).unwrap_or(0.0);
    let grads: Vec<ModelParams> = forwards
        .par_iter()
        .zip(batch.par_iter())
        .map(|(f, grid)| {
            let n = grid.len();
            let mut d_out = Mat::zeros(n, 3);
            if need_point {
                let s = w_point / m;
                for (o, g) in d_out.data.iter_mut().zip(&f.chamfer_grad) {
                    *o += s * g;
                }
            }
            if need_ges {
                let cache = f.gesture.as_ref().expect("gesture forward");
                let d_logits = nll_logit_grad(&cache.probs, grid.gesture, w_ges / m);
                let mut scratch = frozen.gesture.zeros_like();
                let d_in = backward_classifier(cache, frozen.gesture, &d_logits, &mut scratch, true)
                    .expect("input gradient requested");
                for (o, g) in d_out.data.iter_mut().zip(&d_in.data) {
                    *o += g;
                }
            }
            if need_id {
                let cache = f.identity.as_ref().expect("identity forward");
                let d_logits = nll_logit_grad(&cache.probs, grid.subject, w_id * id_slope / m);
                let mut scratch = frozen.identity.zeros_like();
                let d_in = backward_classifier(cache, frozen.identity, &d_logits, &mut scratch, true)
                    .expect("input gradient requested");
                for (o, g) in d_out.data.iter_mut().zip(&d_in.data) {
                    *o += g;
                }
            }
            let mut grad = ae.zeros_like();
            backward_autoencoder(&f.ae, ae, &d_out, &mut grad);
            grad
        })
        .collect();

    let mut total = ae.zeros_like();
    for g in &grads {
        total.add_assign(g);
    }
    if !total.all_finite() {
        return Err(Error::Gradient("non-finite autoencoder gradient".into()));
    }
    Ok((loss, Some(total)))
}

/// Which label a classifier predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Gesture,
    Identity,
}

impl Task {
    pub fn label(&self, grid: &FrameGrid) -> usize {
        match self {
            Task::Gesture => grid.gesture,
            Task::Identity => grid.subject,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Gesture => "gesture",
            Task::Identity => "identity",
        }
    }
}

/// Mean NLL of a classifier on a batch, accuracy count, and optionally the
/// parameter gradient.
pub fn classifier_objective(
    params: &ModelParams,
    batch: &[FrameGrid],
    task: Task,
    want_grad: bool,
) -> Result<(f64, usize, Option<ModelParams>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let m = batch.len() as f64;
    let per: Vec<(f64, bool, Option<ModelParams>)> = batch
        .par_iter()
        .map(|grid| -> Result<_> {
            let cache = classifier_forward(grid, params)?;
            let label = task.label(grid);
            if label >= cache.probs.len() {
                return Err(Error::Config(format!(
                    "{} label {label} outside classifier's {} classes",
                    task.name(),
                    cache.probs.len()
                )));
            }
            let nll = -cache.probs[label].max(PROB_FLOOR).ln();
            let correct = argmax(&cache.probs) == label;
            let grad = want_grad.then(|| {
                let mut g = params.zeros_like();
                backward_classifier(&cache, params, &nll_logit_grad(&cache.probs, label, 1.0 / m), &mut g, false);
                g
            });
            Ok((nll, correct, grad))
        })
        .collect::<Result<_>>()?;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / m;
    let correct = per.iter().filter(|p| p.1).count();
    let grad = want_grad.then(|| {
        let mut total = params.zeros_like();
        for (_, _, g) in &per {
            total.add_assign(g.as_ref().expect("gradient computed"));
        }
        total
    });
    if !loss.is_finite() {
        return Err(Error::Gradient("non-finite classifier loss".into()));
    }
    Ok((loss, correct, grad))
}

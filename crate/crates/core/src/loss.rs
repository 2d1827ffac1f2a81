//! Reconstruction, gesture, de-identification and combined objectives.
//!
//! The identity term works on the positive NLL of the frozen identity
//! classifier: `L'_id = -ln(1 + NLL) + delta`. Minimizing it pushes the
//! true-identity probability down while the `ln(1 + x)` damping keeps the
//! gradient bounded by 1 in magnitude.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::for_subjects(8)
    }
}

impl LossWeights {
    /// Defaults with `tau` at twice chance for `subjects` identities.
    pub fn for_subjects(subjects: usize) -> Self {
        Self { alpha: 1.0, beta: 2.0, gamma: 1.0, delta: 2.0, tau: 2.0 / subjects.max(1) as f64 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::Config("alpha, beta and gamma must be >= 0".into()));
        }
        if !self.delta.is_finite() {
            return Err(Error::Config("delta must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("tau must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Whether the identity term takes part: `gamma > 0` and the gate is open.
    pub fn identity_active(&self, a_id: f64) -> bool {
        self.gamma != 0.0 && heaviside(a_id - self.tau) == 1.0
    }
}

/// `H(x) = 1` for `x >= 0`, else 0.
pub fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Nearest-neighbor matches between two flat `x,y,z` clouds.
struct Matches {
    /// For each point of `p`: (squared distance, index in `q`).
    p_to_q: Vec<(f64, usize)>,
    q_to_p: Vec<(f64, usize)>,
}

fn nearest(p: &[f64], q: &[f64]) -> Matches {
    let (n, m) = (p.len() / 3, q.len() / 3);
    let mut p_to_q = vec![(f64::INFINITY, 0); n];
    let mut q_to_p = vec![(f64::INFINITY, 0); m];
    for i in 0..n {
        let a = &p[i * 3..i * 3 + 3];
        let best = &mut p_to_q[i];
        for (j, back) in q_to_p.iter_mut().enumerate() {
            let d = sq(a, &q[j * 3..j * 3 + 3]);
            if d < best.0 {
                *best = (d, j);
            }
            if d < back.0 {
                *back = (d, i);
            }
        }
    }
    Matches { p_to_q, q_to_p }
}

/// Order-independent sum: values are sorted first so any permutation of the
/// inputs yields the same bits.
fn canonical_sum(mut vals: Vec<f64>) -> f64 {
    vals.sort_by(f64::total_cmp);
    vals.iter().sum()
}

fn check_cloud(c: &[f64], which: &str) -> Result<()> {
    if c.is_empty() || c.len() % 3 != 0 {
        return Err(Error::Domain(format!("{which} cloud must be a non-empty list of 3D points")));
    }
    Ok(())
}

/// Symmetric squared Chamfer distance between flat `x,y,z` clouds.
pub fn chamfer(p: &[f64], q: &[f64]) -> Result<f64> {
    check_cloud(p, "first")?;
    check_cloud(q, "second")?;
    let m = nearest(p, q);
    let a = canonical_sum(m.p_to_q.iter().map(|x| x.0).collect());
    let b = canonical_sum(m.q_to_p.iter().map(|x| x.0).collect());
    Ok(a + b)
}

/// Chamfer distance and its gradient with respect to `q` (the
/// reconstruction). Each min routes to its argmin partner.
pub fn chamfer_with_grad(p: &[f64], q: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_cloud(p, "first")?;
    check_cloud(q, "second")?;
    let m = nearest(p, q);
    let mut grad = vec![0.0; q.len()];
    for (i, &(_, j)) in m.p_to_q.iter().enumerate() {
        for d in 0..3 {
            grad[j * 3 + d] += 2.0 * (q[j * 3 + d] - p[i * 3 + d]);
        }
    }
    for (j, &(_, i)) in m.q_to_p.iter().enumerate() {
        for d in 0..3 {
            grad[j * 3 + d] += 2.0 * (q[j * 3 + d] - p[i * 3 + d]);
        }
    }
    let a = canonical_sum(m.p_to_q.iter().map(|x| x.0).collect());
    let b = canonical_sum(m.q_to_p.iter().map(|x| x.0).collect());
    Ok((a + b, grad))
}

/// Mean negative log-likelihood of the true labels, with the probability
/// floor applied. Returns the loss and how many samples hit the floor.
pub fn mean_nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<(f64, usize)> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::Domain("NLL needs a non-empty batch with one label per row".into()));
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (row, &label) in probs.iter().zip(labels) {
        let p = *row
            .get(label)
            .ok_or_else(|| Error::Domain(format!("label {label} outside {} classes", row.len())))?;
        if p < PROB_FLOOR {
            clamped += 1;
        }
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok((total / probs.len() as f64, clamped))
}

/// Gesture preservation loss `-(1/M) Σ log P(g | p)`.
pub fn gesture_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let (value, clamped) = mean_nll(probs, labels)?;
    if clamped > 0 {
        log::warn!("gesture loss: {clamped} true-label probabilities clamped to {PROB_FLOOR}");
    }
    Ok(value)
}

/// Positive identity NLL `-(1/M) Σ log P(u | p)`.
pub fn deid_nll(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let (value, clamped) = mean_nll(probs, labels)?;
    if clamped > 0 {
        log::warn!("identity NLL: {clamped} true-label probabilities clamped to {PROB_FLOOR}");
    }
    Ok(value)
}

/// `-ln(1 + nll) + delta`.
pub fn deid_stabilized(nll: f64, delta: f64) -> f64 {
    -nll.ln_1p() + delta
}

/// `d/d(nll)` of [`deid_stabilized`]; independent of `delta`.
pub fn deid_stabilized_slope(nll: f64) -> f64 {
    -1.0 / (1.0 + nll)
}

/// `alpha * l_point + beta * l_ges + gamma * H(a_id - tau) * l_id_stab`.
///
/// `l_id_stab` is only called when the identity term is active.
pub fn combined_loss(
    l_point: f64,
    l_ges: f64,
    weights: &LossWeights,
    a_id: f64,
    l_id_stab: impl FnOnce() -> f64,
) -> f64 {
    let base = weights.alpha * l_point + weights.beta * l_ges;
    if weights.identity_active(a_id) {
        base + weights.gamma * l_id_stab()
    } else {
        base
    }
}

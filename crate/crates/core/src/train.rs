//! Training loops for the frozen classifiers and for the autoencoder.
//!
//! Both share one driver: Adam with the step-decay schedule, per-epoch
//! shuffling seeded from `(seed, epoch)`, patience-based early stopping on a
//! validation loss, and optional checkpointing into a directory. A directory
//! holding a `state.json` is resumed from where it stopped, bit-identically.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::loss::{deid_stabilized, LossWeights};
use crate::model::{load_params, save_params, ModelConfig, ModelKind, ModelParams};
use crate::objective::{autoencoder_objective, classifier_objective, Frozen, LossSelector, Task};
use crate::optim::{lr_at, Adam, EarlyStopping, TrainConfig};
use crate::rng::rng_for;

const SHUFFLE_STREAM: u64 = 2_000_000;
const STATE_FILE: &str = "state.json";

/// One line of a history file.
pub trait HistoryRow: Serialize + DeserializeOwned + Clone {
    const HEADER: &'static str;
    fn csv(&self) -> String;
}

pub fn write_history<R: HistoryRow, W: Write>(mut out: W, rows: &[R]) -> Result<()> {
    writeln!(out, "{}", R::HEADER)?;
    for r in rows {
        writeln!(out, "{}", r.csv())?;
    }
    Ok(())
}

pub fn save_history<R: HistoryRow>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write_history(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

impl HistoryRow for ClassifierEpoch {
    const HEADER: &'static str = "epoch,train_loss,val_loss,val_acc,lr";
    fn csv(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.train_loss, self.val_loss, self.val_acc, self.lr)
    }
}

/// Per-epoch autoencoder record. `a_id` and `gate` are the values fixed at
/// the start of the epoch; `val_gesture_acc` is measured after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderEpoch {
    pub epoch: usize,
    pub l_point: f64,
    pub l_ges: f64,
    /// Mean over the batches where the identity term was evaluated.
    pub l_id_stab: Option<f64>,
    pub a_id: f64,
    pub gate: bool,
    pub lr: f64,
    pub val_gesture_acc: f64,
    pub val_loss: f64,
}

impl HistoryRow for AutoencoderEpoch {
    const HEADER: &'static str = "epoch,l_point,l_ges,l_id_stab,a_id,gate,lr,val_gesture_acc";
    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.l_point,
            self.l_ges,
            self.l_id_stab.map(|v| v.to_string()).unwrap_or_default(),
            self.a_id,
            self.gate as u8,
            self.lr,
            self.val_gesture_acc
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun<R> {
    /// Parameters of the best validation epoch.
    pub params: ModelParams,
    /// Parameters after the final epoch.
    pub last: ModelParams,
    pub history: Vec<R>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Serialize, Deserialize)]
struct LoopState<R> {
    next_epoch: usize,
    best_loss: Option<f64>,
    best_epoch: usize,
    stopped_early: bool,
    last_file: String,
    best_file: String,
    history: Vec<R>,
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn shuffled_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, SHUFFLE_STREAM + epoch as u64));
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

/// Generic epoch driver. `epoch_fn(epoch, lr, params, adam)` trains one
/// epoch and returns its history row and the validation loss after it.
fn optimize<R: HistoryRow>(
    init: ModelParams,
    cfg: &TrainConfig,
    dir: Option<&Path>,
    mut epoch_fn: impl FnMut(usize, f64, &mut ModelParams, &mut Adam) -> Result<(R, f64)>,
) -> Result<TrainRun<R>> {
    cfg.validate()?;
    let mut params = init;
    let mut adam = Adam::new(&params, cfg);
    let mut best = params.clone();
    let mut stopping = EarlyStopping::new(cfg.patience);
    let mut history = Vec::new();
    let mut start = 0;
    let mut stopped_early = false;

    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        let state_path = dir.join(STATE_FILE);
        if state_path.exists() {
            let state: LoopState<R> = serde_json::from_slice(&fs::read(&state_path)?)
                .map_err(|e| Error::Format(format!("bad training state: {e}")))?;
            let (p, opt) = load_params(dir.join(&state.last_file))?;
            let opt = opt.ok_or_else(|| Error::Format("checkpoint lacks optimizer state".into()))?;
            if p.config != params.config || p.kind != params.kind {
                return Err(Error::Config("checkpoint was written for a different model".into()));
            }
            params = p;
            adam = Adam::with_state(cfg, opt);
            best = load_params(dir.join(&state.best_file))?.0;
            stopping.best = state.best_loss.unwrap_or(f64::INFINITY);
            stopping.best_epoch = state.best_epoch;
            history = state.history;
            start = state.next_epoch;
            stopped_early = state.stopped_early;
        }
    }

    let mut epoch = start;
    while epoch < cfg.max_epochs && !stopped_early {
        let lr = lr_at(epoch, cfg);
        let (row, val_loss) = epoch_fn(epoch, lr, &mut params, &mut adam)?;
        if !val_loss.is_finite() {
            return Err(Error::Gradient(format!("non-finite validation loss at epoch {epoch}")));
        }
        history.push(row);
        let (improved, stop) = stopping.observe(epoch, val_loss);
        if improved {
            best = params.clone();
        }
        stopped_early = stop;
        epoch += 1;

        if let Some(dir) = dir {
            let last_file = format!("epoch-{epoch:05}.ckpt");
            let best_file = format!("best-{:05}.params", stopping.best_epoch);
            save_params(dir.join(&last_file), &params, Some(&adam.state))?;
            if improved || !dir.join(&best_file).exists() {
                save_params(dir.join(&best_file), &best, None)?;
            }
            let state = LoopState {
                next_epoch: epoch,
                best_loss: stopping.best.is_finite().then_some(stopping.best),
                best_epoch: stopping.best_epoch,
                stopped_early,
                last_file: last_file.clone(),
                best_file: best_file.clone(),
                history: history.clone(),
            };
            write_json_atomic(&dir.join(STATE_FILE), &state)?;
            for entry in fs::read_dir(dir)? {
                let name = entry?.file_name().to_string_lossy().into_owned();
                let stale = (name.starts_with("epoch-") && name != last_file)
                    || (name.starts_with("best-") && name != best_file);
                if stale {
                    fs::remove_file(dir.join(&name))?;
                }
            }
            save_history(dir.join("history.csv"), &history)?;
        }
    }

    Ok(TrainRun { params: best, last: params, history, best_epoch: stopping.best_epoch, stopped_early })
}

fn require_nonempty(train: &[FrameGrid], val: &[FrameGrid]) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training and validation splits must be non-empty".into()));
    }
    Ok(())
}

fn gather(grids: &[FrameGrid], idx: &[usize]) -> Vec<FrameGrid> {
    idx.iter().map(|&i| grids[i].clone()).collect()
}

/// Number of classes implied by the labels of `task` in `grids`.
pub fn class_count(grids: &[FrameGrid], task: Task) -> usize {
    grids.iter().map(|g| task.label(g) + 1).max().unwrap_or(0)
}

/// Mean NLL and accuracy of a classifier over `grids`, evaluated in chunks.
pub fn classifier_loss(params: &ModelParams, grids: &[FrameGrid], task: Task, chunk: usize) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0);
    for c in grids.chunks(chunk.max(1)) {
        let (l, k, _) = classifier_objective(params, c, task, false)?;
        loss += l * c.len() as f64;
        correct += k;
    }
    let n = grids.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains a gesture or identity classifier; input standardization is
/// fitted on `train`.
pub fn train_classifier(
    train: &[FrameGrid],
    val: &[FrameGrid],
    task: Task,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dir: Option<&Path>,
) -> Result<TrainRun<ClassifierEpoch>> {
    require_nonempty(train, val)?;
    let classes = class_count(train, task).max(class_count(val, task));
    let init = ModelParams::init(&model_cfg.standardized_on(train), ModelKind::Classifier { classes })?;
    optimize(init, train_cfg, dir, |epoch, lr, params, adam| {
        let mut total = 0.0;
        for idx in shuffled_batches(train.len(), train_cfg.batch_size, train_cfg.seed, epoch) {
            let batch = gather(train, &idx);
            let (loss, _, grad) = classifier_objective(params, &batch, task, true)?;
            adam.step(params, &grad.expect("gradient requested"), lr);
            total += loss * batch.len() as f64;
        }
        let (val_loss, val_acc) = classifier_loss(params, val, task, train_cfg.batch_size)?;
        let row = ClassifierEpoch { epoch, train_loss: total / train.len() as f64, val_loss, val_acc, lr };
        Ok((row, val_loss))
    })
}

/// Validation statistics of an autoencoder against the frozen classifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoencoderEval {
    pub l_point: f64,
    pub l_ges: f64,
    pub l_id_stab: f64,
    /// `alpha L_point + beta L_ges + gamma L'_id` with the gate open.
    pub combined: f64,
    /// Frozen-U accuracy on the reconstructions.
    pub a_id: f64,
    pub gesture_acc: f64,
}

pub fn evaluate_autoencoder(
    ae: &ModelParams,
    frozen: Frozen<'_>,
    grids: &[FrameGrid],
    weights: &LossWeights,
    chunk: usize,
) -> Result<AutoencoderEval> {
    if grids.is_empty() {
        return Err(Error::Domain("empty evaluation set".into()));
    }
    let (mut point, mut ges, mut nll, mut id_ok, mut ges_ok) = (0.0, 0.0, 0.0, 0, 0);
    for c in grids.chunks(chunk.max(1)) {
        let (l, _) = autoencoder_objective(ae, frozen, c, weights, LossSelector::Combined, true, false)?;
        let m = c.len() as f64;
        point += l.l_point.expect("evaluated") * m;
        ges += l.l_ges.expect("evaluated") * m;
        nll += l.nll_id.expect("evaluated") * m;
        id_ok += l.identity_correct;
        ges_ok += l.gesture_correct;
    }
    let n = grids.len() as f64;
    let (l_point, l_ges) = (point / n, ges / n);
    let l_id_stab = deid_stabilized(nll / n, weights.delta);
    Ok(AutoencoderEval {
        l_point,
        l_ges,
        l_id_stab,
        combined: weights.alpha * l_point + weights.beta * l_ges + weights.gamma * l_id_stab,
        a_id: id_ok as f64 / n,
        gesture_acc: ges_ok as f64 / n,
    })
}

fn check_frozen(frozen: Frozen<'_>, sums: (u64, u64)) -> Result<()> {
    if frozen.gesture.checksum() != sums.0 {
        return Err(Error::FrozenDrift { which: "gesture" });
    }
    if frozen.identity.checksum() != sums.1 {
        return Err(Error::FrozenDrift { which: "identity" });
    }
    Ok(())
}

/// Trains the autoencoder against frozen `gesture` and `identity`
/// classifiers. The identity gate is recomputed from validation `A_id` at
/// the start of each epoch and held fixed within it. Input standardization
/// is fitted on `train`.
#[allow(clippy::too_many_arguments)]
pub fn train_autoencoder(
    train: &[FrameGrid],
    val: &[FrameGrid],
    gesture: &ModelParams,
    identity: &ModelParams,
    weights: &LossWeights,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    dir: Option<&Path>,
) -> Result<TrainRun<AutoencoderEpoch>> {
    require_nonempty(train, val)?;
    weights.validate()?;
    if gesture.head.is_none() || identity.head.is_none() {
        return Err(Error::Config("frozen networks must be trained classifiers".into()));
    }
    let frozen = Frozen { gesture, identity };
    let sums = (gesture.checksum(), identity.checksum());
    let init = ModelParams::init(&model_cfg.standardized_on(train), ModelKind::Autoencoder)?;
    let chunk = train_cfg.batch_size;
    // Validation state of the current parameters; computed lazily so a
    // resumed run re-derives it from the restored checkpoint.
    let mut current: Option<AutoencoderEval> = None;

    optimize(init, train_cfg, dir, |epoch, lr, params, adam| {
        let start = match current {
            Some(e) => e,
            None => evaluate_autoencoder(params, frozen, val, weights, chunk)?,
        };
        let gate = weights.identity_active(start.a_id);
        let (mut point, mut ges, mut stab, mut stab_n) = (0.0, 0.0, 0.0, 0.0);
        for idx in shuffled_batches(train.len(), train_cfg.batch_size, train_cfg.seed, epoch) {
            let batch = gather(train, &idx);
            let (loss, grad) =
                autoencoder_objective(params, frozen, &batch, weights, LossSelector::Combined, gate, true)?;
            adam.step(params, &grad.expect("gradient requested"), lr);
            let m = batch.len() as f64;
            point += loss.l_point.expect("evaluated") * m;
            ges += loss.l_ges.expect("evaluated") * m;
            if let Some(s) = loss.l_id_stab {
                stab += s * m;
                stab_n += m;
            }
        }
        check_frozen(frozen, sums)?;
        let after = evaluate_autoencoder(params, frozen, val, weights, chunk)?;
        current = Some(after);
        let n = train.len() as f64;
        let row = AutoencoderEpoch {
            epoch,
            l_point: point / n,
            l_ges: ges / n,
            l_id_stab: (stab_n > 0.0).then(|| stab / stab_n),
            a_id: start.a_id,
            gate,
            lr,
            val_gesture_acc: after.gesture_acc,
            val_loss: after.combined,
        };
        Ok((row, after.combined))
    })
}

//! End-to-end pipeline on the synthetic dataset: generate, preprocess,
//! split, pretrain both classifiers, train an autoencoder and score it.

use std::path::Path;

use rayon::prelude::*;

use crate::baselines::{perturb_all, BaselineSpec, Method};
use crate::config::{RunConfig, Stream};
use crate::data::{sequence_to_grid, split_grids, FrameGrid};
use crate::error::Result;
use crate::eval::{privacy_utility_report, scorecard_for, Scorecard};
use crate::model::ModelParams;
use crate::objective::Task;
use crate::rng::derive_seed;
use crate::synth::generate_dataset;
use crate::train::{train_autoencoder, train_classifier, AutoencoderEpoch, ClassifierEpoch, TrainRun};

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<FrameGrid>,
    pub val: Vec<FrameGrid>,
    pub test: Vec<FrameGrid>,
    pub warnings: Vec<String>,
}

/// Resamples every sequence to the configured `frames x points` grid.
pub fn preprocess(cfg: &RunConfig, seqs: &[crate::data::Sequence]) -> Result<Vec<FrameGrid>> {
    let base = cfg.stream_seed(Stream::Preprocess);
    seqs.par_iter()
        .enumerate()
        .map(|(i, s)| sequence_to_grid(s, cfg.frames, cfg.points, derive_seed(base, i as u64)))
        .collect()
}

/// Train/test split, then a validation split carved out of train.
pub fn split(cfg: &RunConfig, grids: &[FrameGrid]) -> Result<Splits> {
    let outer = split_grids(grids, cfg.train_fraction, cfg.stream_seed(Stream::TestSplit))?;
    let inner = split_grids(&outer.train, 1.0 - cfg.val_fraction, cfg.stream_seed(Stream::ValSplit))?;
    let mut warnings = outer.warnings;
    warnings.extend(inner.warnings);
    Ok(Splits { train: inner.train, val: inner.test, test: outer.test, warnings })
}

/// Synthetic dataset, preprocessed and split.
pub fn prepare(cfg: &RunConfig) -> Result<Splits> {
    cfg.validate()?;
    let seqs = generate_dataset(&cfg.synth_spec())?;
    split(cfg, &preprocess(cfg, &seqs)?)
}

pub fn pretrain(cfg: &RunConfig, data: &Splits, task: Task, dir: Option<&Path>) -> Result<TrainRun<ClassifierEpoch>> {
    train_classifier(
        &data.train,
        &data.val,
        task,
        &cfg.classifier_model_config(task),
        &cfg.classifier_train_config(task),
        dir,
    )
}

#[derive(Debug, Clone)]
pub struct AutoencoderOutcome {
    pub run: TrainRun<AutoencoderEpoch>,
    pub scorecard: Scorecard,
}

/// Trains the autoencoder described by `cfg` and scores it on the test split.
pub fn autoencoder_variant(
    cfg: &RunConfig,
    data: &Splits,
    gesture: &ModelParams,
    identity: &ModelParams,
    dir: Option<&Path>,
) -> Result<AutoencoderOutcome> {
    let run = train_autoencoder(
        &data.train,
        &data.val,
        gesture,
        identity,
        &cfg.weights(),
        &cfg.model_config(Stream::AutoencoderModel),
        &cfg.autoencoder_train_config(),
        dir,
    )?;
    let scorecard = privacy_utility_report(gesture, identity, &run.params, &data.test)?;
    Ok(AutoencoderOutcome { run, scorecard })
}

/// Scores one baseline on the test split.
pub fn baseline_scorecard(
    cfg: &RunConfig,
    data: &Splits,
    method: Method,
    gesture: &ModelParams,
    identity: &ModelParams,
) -> Result<Scorecard> {
    let spec = BaselineSpec { method, params: cfg.baseline, seed: cfg.stream_seed(Stream::Baseline) };
    let perturbed = perturb_all(&data.test, &spec)?;
    scorecard_for(gesture, identity, &data.test, method.name(), &perturbed)
}

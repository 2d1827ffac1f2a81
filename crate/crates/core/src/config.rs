//! Flat run configuration.
//!
//! Files hold one `key = value` per line; `#` starts a comment. Every key
//! can also be set from the command line. [`RunConfig::resolved`] writes the
//! complete configuration back out in the same format, so a run can be
//! repeated from its output directory.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{BaselineParams, Method};
use crate::error::{Error, Result};
use crate::graph::GraphMode;
use crate::loss::LossWeights;
use crate::model::{DecoderInput, ModelConfig};
use crate::objective::Task;
use crate::optim::TrainConfig;
use crate::rng::derive_seed;
use crate::synth::SynthSpec;

/// Random streams derived from the single run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Preprocess = 10,
    TestSplit = 11,
    ValSplit = 12,
    GestureModel = 21,
    IdentityModel = 22,
    AutoencoderModel = 23,
    GestureTrain = 31,
    IdentityTrain = 32,
    AutoencoderTrain = 33,
    Baseline = 40,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthSpec,
    pub frames: usize,
    pub points: usize,
    pub train_fraction: f64,
    /// Share of the training split held out for validation.
    pub val_fraction: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub classifier_max_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    /// `None` means twice chance, `2 / subjects`.
    pub tau: Option<f64>,
    pub baseline: BaselineParams,
    pub method: Option<Method>,
    pub task: Option<Task>,
    pub input: Option<PathBuf>,
    pub train_set: Option<PathBuf>,
    pub val_set: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    pub gesture_params: Option<PathBuf>,
    pub identity_params: Option<PathBuf>,
    pub autoencoder_params: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    pub out_root: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            synth: SynthSpec::default(),
            frames: 32,
            points: 32,
            train_fraction: 0.7,
            val_fraction: 0.15,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            classifier_max_epochs: TrainConfig::default().max_epochs,
            alpha: 1.0,
            beta: 2.0,
            gamma: 1.0,
            delta: 2.0,
            tau: None,
            baseline: BaselineParams::default(),
            method: None,
            task: None,
            input: None,
            train_set: None,
            val_set: None,
            test_set: None,
            gesture_params: None,
            identity_params: None,
            autoencoder_params: None,
            resume: None,
            sweep_param: None,
            sweep_values: Vec::new(),
            out_root: PathBuf::from("runs"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Config(format!("bad value `{value}` for {key}: {e}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

pub fn parse_task(value: &str) -> Result<Task> {
    match value {
        "gesture" => Ok(Task::Gesture),
        "identity" => Ok(Task::Identity),
        _ => Err(Error::Config(format!("unknown task `{value}` (expected gesture or identity)"))),
    }
}

fn graph_mode_name(m: GraphMode) -> &'static str {
    match m {
        GraphMode::Temporal => "temporal",
        GraphMode::WithinFrame => "within_frame",
        GraphMode::Spatial => "spatial",
    }
}

fn decoder_input_name(d: DecoderInput) -> &'static str {
    match d {
        DecoderInput::Global => "global",
        DecoderInput::NodeFeatures => "node",
        DecoderInput::GlobalAndNode => "global_and_node",
    }
}

impl RunConfig {
    /// Sets one key. Unknown keys are configuration errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "subjects" => self.synth.subjects = parse(key, v)?,
            "gestures" => self.synth.gestures = parse(key, v)?,
            "sequences_per_cell" => self.synth.sequences_per_cell = parse(key, v)?,
            "raw_frames" => self.synth.frames = parse(key, v)?,
            "raw_points" => self.synth.points_per_frame = parse(key, v)?,
            "noise_sigma" => self.synth.noise_sigma = parse(key, v)?,
            "frames" => self.frames = parse(key, v)?,
            "points" => self.points = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "d_h" => self.model.d_h = parse(key, v)?,
            "d_m" => self.model.d_m = parse(key, v)?,
            "d_k" => self.model.d_k = parse(key, v)?,
            "d_v" => self.model.d_v = parse(key, v)?,
            "heads" => self.model.heads = parse(key, v)?,
            "d_z" => self.model.d_z = parse(key, v)?,
            "k" => self.model.k = parse(key, v)?,
            "graph_mode" => {
                self.model.graph_mode = match v {
                    "temporal" => GraphMode::Temporal,
                    "within_frame" => GraphMode::WithinFrame,
                    "spatial" => GraphMode::Spatial,
                    _ => return Err(Error::Config(format!("unknown graph_mode `{v}`"))),
                }
            }
            "decoder_input" => {
                self.model.decoder_input = match v {
                    "global" => DecoderInput::Global,
                    "node" => DecoderInput::NodeFeatures,
                    "global_and_node" => DecoderInput::GlobalAndNode,
                    _ => return Err(Error::Config(format!("unknown decoder_input `{v}`"))),
                }
            }
            "eta0" => self.train.eta0 = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "decay_period" => self.train.decay_period = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "max_epochs" => self.train.max_epochs = parse(key, v)?,
            "classifier_max_epochs" => self.classifier_max_epochs = parse(key, v)?,
            "adam_beta1" => self.train.beta1 = parse(key, v)?,
            "adam_beta2" => self.train.beta2 = parse(key, v)?,
            "adam_epsilon" => self.train.epsilon = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "tau" => self.tau = if v == "auto" { None } else { Some(parse(key, v)?) },
            "sigma" => self.baseline.sigma = parse(key, v)?,
            "uniform_a" => self.baseline.uniform_a = parse(key, v)?,
            "radius" => self.baseline.radius = parse(key, v)?,
            "scale_s" => self.baseline.scale_s = parse(key, v)?,
            "theta_deg" => self.baseline.theta_deg = parse(key, v)?,
            "rho" => self.baseline.rho = parse(key, v)?,
            "q" => self.baseline.q = parse(key, v)?,
            "laplace_b" => self.baseline.laplace_b = parse(key, v)?,
            "kappa" => self.baseline.kappa = parse(key, v)?,
            "method" => self.method = if v.is_empty() { None } else { Some(v.parse()?) },
            "task" => self.task = if v.is_empty() { None } else { Some(parse_task(v)?) },
            "input" => self.input = opt_path(v),
            "train" => self.train_set = opt_path(v),
            "val" => self.val_set = opt_path(v),
            "test" => self.test_set = opt_path(v),
            "gesture" => self.gesture_params = opt_path(v),
            "identity" => self.identity_params = opt_path(v),
            "autoencoder" => self.autoencoder_params = opt_path(v),
            "resume" => self.resume = opt_path(v),
            "sweep_param" => self.sweep_param = (!v.is_empty()).then(|| v.to_string()),
            "sweep_values" => {
                self.sweep_values = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|x| parse(key, x.trim())).collect::<Result<_>>()?
                }
            }
            "out" => self.out_root = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file body. Errors carry 1-based line numbers.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
            self.set(key, value).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Every key with its current value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let m = &self.model;
        let t = &self.train;
        let b = &self.baseline;
        vec![
            ("seed", self.seed.to_string()),
            ("subjects", self.synth.subjects.to_string()),
            ("gestures", self.synth.gestures.to_string()),
            ("sequences_per_cell", self.synth.sequences_per_cell.to_string()),
            ("raw_frames", self.synth.frames.to_string()),
            ("raw_points", self.synth.points_per_frame.to_string()),
            ("noise_sigma", self.synth.noise_sigma.to_string()),
            ("frames", self.frames.to_string()),
            ("points", self.points.to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("d_h", m.d_h.to_string()),
            ("d_m", m.d_m.to_string()),
            ("d_k", m.d_k.to_string()),
            ("d_v", m.d_v.to_string()),
            ("heads", m.heads.to_string()),
            ("d_z", m.d_z.to_string()),
            ("k", m.k.to_string()),
            ("graph_mode", graph_mode_name(m.graph_mode).into()),
            ("decoder_input", decoder_input_name(m.decoder_input).into()),
            ("eta0", t.eta0.to_string()),
            ("lambda", t.lambda.to_string()),
            ("decay_period", t.decay_period.to_string()),
            ("patience", t.patience.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("classifier_max_epochs", self.classifier_max_epochs.to_string()),
            ("adam_beta1", t.beta1.to_string()),
            ("adam_beta2", t.beta2.to_string()),
            ("adam_epsilon", t.epsilon.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("gamma", self.gamma.to_string()),
            ("delta", self.delta.to_string()),
            ("tau", self.tau.map(|v| v.to_string()).unwrap_or_else(|| "auto".into())),
            ("sigma", b.sigma.to_string()),
            ("uniform_a", b.uniform_a.to_string()),
            ("radius", b.radius.to_string()),
            ("scale_s", b.scale_s.to_string()),
            ("theta_deg", b.theta_deg.to_string()),
            ("rho", b.rho.to_string()),
            ("q", b.q.to_string()),
            ("laplace_b", b.laplace_b.to_string()),
            ("kappa", b.kappa.to_string()),
            ("method", self.method.map(|m| m.name().to_string()).unwrap_or_default()),
            ("task", self.task.map(|t| t.name().to_string()).unwrap_or_default()),
            ("input", show_path(&self.input)),
            ("train", show_path(&self.train_set)),
            ("val", show_path(&self.val_set)),
            ("test", show_path(&self.test_set)),
            ("gesture", show_path(&self.gesture_params)),
            ("identity", show_path(&self.identity_params)),
            ("autoencoder", show_path(&self.autoencoder_params)),
            ("resume", show_path(&self.resume)),
            ("sweep_param", self.sweep_param.clone().unwrap_or_default()),
            (
                "sweep_values",
                self.sweep_values.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("out", self.out_root.display().to_string()),
        ]
    }

    /// The `config.resolved` text.
    pub fn resolved(&self) -> String {
        let mut s = String::from("# fully resolved run configuration\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn stream_seed(&self, stream: Stream) -> u64 {
        derive_seed(self.seed, stream as u64)
    }

    /// Synthetic dataset spec; its seed is the run seed.
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec { seed: self.seed, ..self.synth.clone() }
    }

    pub fn weights(&self) -> LossWeights {
        let base = LossWeights::for_subjects(self.synth.subjects);
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            tau: self.tau.unwrap_or(base.tau),
        }
    }

    pub fn model_config(&self, stream: Stream) -> ModelConfig {
        ModelConfig { seed: self.stream_seed(stream), ..self.model.clone() }
    }

    /// Classifier models keep the temporal graph and global pooling: the
    /// ablation switches only concern the autoencoder.
    pub fn classifier_model_config(&self, task: Task) -> ModelConfig {
        let stream = match task {
            Task::Gesture => Stream::GestureModel,
            Task::Identity => Stream::IdentityModel,
        };
        ModelConfig {
            graph_mode: GraphMode::Temporal,
            decoder_input: DecoderInput::Global,
            ..self.model_config(stream)
        }
    }

    pub fn classifier_train_config(&self, task: Task) -> TrainConfig {
        let stream = match task {
            Task::Gesture => Stream::GestureTrain,
            Task::Identity => Stream::IdentityTrain,
        };
        TrainConfig { max_epochs: self.classifier_max_epochs, seed: self.stream_seed(stream), ..self.train.clone() }
    }

    pub fn autoencoder_train_config(&self) -> TrainConfig {
        TrainConfig { seed: self.stream_seed(Stream::AutoencoderTrain), ..self.train.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_spec().validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.weights().validate()?;
        if self.frames == 0 || self.points == 0 {
            return Err(Error::Config("frames and points must be >= 1".into()));
        }
        for (name, f) in [("train_fraction", self.train_fraction), ("val_fraction", self.val_fraction)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

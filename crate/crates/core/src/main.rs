use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use time::format_description::well_known::Rfc3339;
use time::macros::format_description;
use time::OffsetDateTime;

use pcdeid::baselines::{perturb_all, BaselineSpec, Method};
use pcdeid::config::{RunConfig, Stream};
use pcdeid::data::{load_grids, load_sequences, save_grids, save_sequences, FrameGrid};
use pcdeid::eval::{compute_metrics, deidentify, predict, save_scorecard, scorecard_for, write_curves};
use pcdeid::experiment::{self, Splits};
use pcdeid::gradcheck;
use pcdeid::model::{load_params, save_params, ModelParams};
use pcdeid::objective::Task;
use pcdeid::synth::generate_dataset;
use pcdeid::train::{save_history, train_autoencoder, train_classifier};

const PRECEDENCE: &str = "Configuration precedence, lowest to highest: built-in defaults, \
--config file, --set KEY=VALUE overrides, then dedicated flags such as --seed or --beta. \
Every run writes config.resolved, run.log and its artifacts to a new timestamped directory under --out.";

#[derive(Parser)]
#[command(name = "pcdeid", version, about = "De-identify temporal point-cloud gestures with a graph autoencoder", after_help = PRECEDENCE)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Configuration file of `key = value` lines
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Seed for every random stream of the run
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct AutoencoderFlags {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Identity-accuracy threshold of the gate (default 2 / subjects)
    #[arg(long)]
    tau: Option<f64>,
    /// Neighbours per node
    #[arg(long)]
    k: Option<usize>,
    /// Build the graph within each frame only
    #[arg(long)]
    no_temporal_edges: bool,
    /// Pick neighbours by spatial distance over all frames
    #[arg(long)]
    no_temporal_knn: bool,
    /// Feed the decoder node features instead of the pooled feature
    #[arg(long)]
    no_max_pool: bool,
    /// Drop the de-identification term (gamma = 0)
    #[arg(long)]
    no_deid_loss: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic sequence dataset
    Synth {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        gestures: Option<usize>,
        #[arg(long)]
        sequences_per_cell: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Resample sequences into fixed frame grids
    Preprocess {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Stratified train / validation / test split of a grid file
    Split {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        train_fraction: Option<f64>,
        #[arg(long)]
        val_fraction: Option<f64>,
    },
    /// Train the gesture or identity classifier
    TrainClassifier {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Checkpoint directory of an interrupted run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the autoencoder against frozen classifiers
    TrainAutoencoder {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        gesture: Option<PathBuf>,
        #[arg(long)]
        identity: Option<PathBuf>,
        #[command(flatten)]
        flags: AutoencoderFlags,
        /// Checkpoint directory of an interrupted run
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Pass grids through a trained autoencoder
    Deidentify {
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Metrics of one classifier on a grid file
    Evaluate {
        #[arg(long)]
        task: Option<String>,
        /// Classifier parameters (defaults to the task's configured model)
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Apply a comparison anonymizer, optionally scoring it
    Baseline {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        gesture: Option<PathBuf>,
        #[arg(long)]
        identity: Option<PathBuf>,
    },
    /// Privacy-utility scorecard of an autoencoder on a test set
    Report {
        #[arg(long)]
        gesture: Option<PathBuf>,
        #[arg(long)]
        identity: Option<PathBuf>,
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Retrain the autoencoder for each value of beta or k
    Sweep {
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        gesture: Option<PathBuf>,
        #[arg(long)]
        identity: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Finite-difference check of every analytic gradient
    Gradcheck,
    /// Whole pipeline on synthetic data: synth to scorecard
    Experiment {
        #[command(flatten)]
        flags: AutoencoderFlags,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Synth { .. } => "synth",
            Cmd::Preprocess { .. } => "preprocess",
            Cmd::Split { .. } => "split",
            Cmd::TrainClassifier { .. } => "train-classifier",
            Cmd::TrainAutoencoder { .. } => "train-autoencoder",
            Cmd::Deidentify { .. } => "deidentify",
            Cmd::Evaluate { .. } => "evaluate",
            Cmd::Baseline { .. } => "baseline",
            Cmd::Report { .. } => "report",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Gradcheck => "gradcheck",
            Cmd::Experiment { .. } => "experiment",
        }
    }
}

/// Collects dedicated-flag overrides as configuration keys.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn opt<T: ToString>(&mut self, key: &'static str, v: &Option<T>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.to_string()));
        }
        self
    }

    fn path(&mut self, key: &'static str, v: &Option<PathBuf>) -> &mut Self {
        if let Some(v) = v {
            self.0.push((key, v.display().to_string()));
        }
        self
    }

    fn flag(&mut self, on: bool, key: &'static str, value: &str) -> &mut Self {
        if on {
            self.0.push((key, value.to_string()));
        }
        self
    }

    fn autoencoder(&mut self, f: &AutoencoderFlags) -> &mut Self {
        self.opt("alpha", &f.alpha)
            .opt("beta", &f.beta)
            .opt("gamma", &f.gamma)
            .opt("delta", &f.delta)
            .opt("tau", &f.tau)
            .opt("k", &f.k)
            .opt("max_epochs", &f.max_epochs)
            .flag(f.no_temporal_edges, "graph_mode", "within_frame")
            .flag(f.no_temporal_knn, "graph_mode", "spatial")
            .flag(f.no_max_pool, "decoder_input", "node")
            .flag(f.no_deid_loss, "gamma", "0")
    }
}

fn overrides(cmd: &Cmd) -> Overrides {
    let mut o = Overrides::default();
    match cmd {
        Cmd::Synth { subjects, gestures, sequences_per_cell, noise_sigma } => {
            o.opt("subjects", subjects)
                .opt("gestures", gestures)
                .opt("sequences_per_cell", sequences_per_cell)
                .opt("noise_sigma", noise_sigma);
        }
        Cmd::Preprocess { input, frames, points } => {
            o.path("input", input).opt("frames", frames).opt("points", points);
        }
        Cmd::Split { input, train_fraction, val_fraction } => {
            o.path("input", input).opt("train_fraction", train_fraction).opt("val_fraction", val_fraction);
        }
        Cmd::TrainClassifier { task, train, val, max_epochs, resume } => {
            o.opt("task", task)
                .path("train", train)
                .path("val", val)
                .opt("classifier_max_epochs", max_epochs)
                .path("resume", resume);
        }
        Cmd::TrainAutoencoder { train, val, gesture, identity, flags, resume } => {
            o.path("train", train)
                .path("val", val)
                .path("gesture", gesture)
                .path("identity", identity)
                .path("resume", resume)
                .autoencoder(flags);
        }
        Cmd::Deidentify { autoencoder, input } => {
            o.path("autoencoder", autoencoder).path("input", input);
        }
        Cmd::Evaluate { task, model, input } => {
            o.opt("task", task).path("input", input);
            let key = match task.as_deref() {
                Some("identity") => "identity",
                _ => "gesture",
            };
            o.path(key, model);
        }
        Cmd::Baseline { method, input, gesture, identity } => {
            o.opt("method", method).path("input", input).path("gesture", gesture).path("identity", identity);
        }
        Cmd::Report { gesture, identity, autoencoder, test } => {
            o.path("gesture", gesture).path("identity", identity).path("autoencoder", autoencoder).path("test", test);
        }
        Cmd::Sweep { param, values, train, val, test, gesture, identity, max_epochs } => {
            o.opt("sweep_param", param)
                .opt("sweep_values", values)
                .path("train", train)
                .path("val", val)
                .path("test", test)
                .path("gesture", gesture)
                .path("identity", identity)
                .opt("max_epochs", max_epochs);
        }
        Cmd::Gradcheck => {}
        Cmd::Experiment { flags } => {
            o.autoencoder(flags);
        }
    }
    o
}

fn resolve(common: &Common, cmd: &Cmd) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_root = out.clone();
    }
    for (k, v) in overrides(cmd).0 {
        cfg.set(k, &v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Timestamped output directory with its log.
struct Run {
    dir: PathBuf,
    log: Mutex<BufWriter<File>>,
}

impl Run {
    fn create(cfg: &RunConfig, command: &str) -> Result<Self> {
        let stamp = OffsetDateTime::now_utc()
            .format(format_description!("[year][month][day]T[hour][minute][second]Z"))
            .expect("static format");
        fs::create_dir_all(&cfg.out_root)
            .with_context(|| format!("cannot create output root {}", cfg.out_root.display()))?;
        let mut dir = cfg.out_root.join(format!("{stamp}-{command}"));
        let mut n = 2;
        while dir.exists() {
            dir = cfg.out_root.join(format!("{stamp}-{command}-{n}"));
            n += 1;
        }
        fs::create_dir(&dir)?;
        fs::write(dir.join("config.resolved"), cfg.resolved())?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join("run.log"))?;
        let run = Self { dir, log: Mutex::new(BufWriter::new(log)) };
        run.log(&format!("{command} started in {}", run.dir.display()));
        Ok(run)
    }

    fn log(&self, msg: &str) {
        let now = OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default();
        eprintln!("{msg}");
        let mut log = self.log.lock().expect("log lock");
        let _ = writeln!(log, "{now} {msg}");
        let _ = log.flush();
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn required<'a>(v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    v.as_deref().ok_or_else(|| anyhow!("missing input: set `{key}` (flag --{key} or config key)"))
}

fn grids_from(path: &Path) -> Result<Vec<FrameGrid>> {
    load_grids(path).with_context(|| format!("cannot read grid file {}", path.display()))
}

fn params_from(path: &Path) -> Result<ModelParams> {
    Ok(load_params(path).with_context(|| format!("cannot read parameter file {}", path.display()))?.0)
}

fn task_of(cfg: &RunConfig) -> Result<Task> {
    cfg.task.ok_or_else(|| anyhow!("missing --task (gesture or identity)"))
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common, &cli.cmd)?;
    let run = Run::create(&cfg, cli.cmd.name())?;
    let result = dispatch(&cli.cmd, &cfg, &run);
    match &result {
        Ok(()) => run.log("finished"),
        Err(e) => run.log(&format!("failed: {e:#}")),
    }
    result
}

fn dispatch(cmd: &Cmd, cfg: &RunConfig, run: &Run) -> Result<()> {
    match cmd {
        Cmd::Synth { .. } => {
            let spec = cfg.synth_spec();
            let seqs = generate_dataset(&spec)?;
            save_sequences(run.path("sequences.jsonl"), &spec.header(), &seqs)?;
            run.log(&format!("wrote {} sequences", seqs.len()));
        }
        Cmd::Preprocess { .. } => {
            let input = required(&cfg.input, "input")?;
            let (_, seqs) =
                load_sequences(input).with_context(|| format!("cannot read sequences {}", input.display()))?;
            let grids = experiment::preprocess(cfg, &seqs)?;
            save_grids(run.path("grids.bin"), &grids)?;
            run.log(&format!("wrote {} grids of {}x{}", grids.len(), cfg.frames, cfg.points));
        }
        Cmd::Split { .. } => {
            let grids = grids_from(required(&cfg.input, "input")?)?;
            let s = experiment::split(cfg, &grids)?;
            for w in &s.warnings {
                run.log(&format!("warning: {w}"));
            }
            save_grids(run.path("train.bin"), &s.train)?;
            save_grids(run.path("val.bin"), &s.val)?;
            save_grids(run.path("test.bin"), &s.test)?;
            run.log(&format!("split into {} train / {} val / {} test", s.train.len(), s.val.len(), s.test.len()));
        }
        Cmd::TrainClassifier { .. } => {
            let task = task_of(cfg)?;
            let train = grids_from(required(&cfg.train_set, "train")?)?;
            let val = grids_from(required(&cfg.val_set, "val")?)?;
            let ckpt = cfg.resume.clone().unwrap_or_else(|| run.path("checkpoints"));
            let out = train_classifier(
                &train,
                &val,
                task,
                &cfg.classifier_model_config(task),
                &cfg.classifier_train_config(task),
                Some(&ckpt),
            )?;
            save_params(run.path(format!("{}.params", task.name()).as_str()), &out.params, None)?;
            save_history(run.path("history.csv"), &out.history)?;
            let best = &out.history[out.best_epoch.min(out.history.len() - 1)];
            run.log(&format!("best epoch {} val acc {:.4}", out.best_epoch, best.val_acc));
        }
        Cmd::TrainAutoencoder { .. } => {
            let train = grids_from(required(&cfg.train_set, "train")?)?;
            let val = grids_from(required(&cfg.val_set, "val")?)?;
            let g = params_from(required(&cfg.gesture_params, "gesture")?)?;
            let u = params_from(required(&cfg.identity_params, "identity")?)?;
            let ckpt = cfg.resume.clone().unwrap_or_else(|| run.path("checkpoints"));
            let out = train_autoencoder(
                &train,
                &val,
                &g,
                &u,
                &cfg.weights(),
                &cfg.model_config(Stream::AutoencoderModel),
                &cfg.autoencoder_train_config(),
                Some(&ckpt),
            )?;
            save_params(run.path("autoencoder.params"), &out.params, None)?;
            save_history(run.path("history.csv"), &out.history)?;
            run.log(&format!("best epoch {} of {}", out.best_epoch, out.history.len()));
        }
        Cmd::Deidentify { .. } => {
            let ae = params_from(required(&cfg.autoencoder_params, "autoencoder")?)?;
            let grids = grids_from(required(&cfg.input, "input")?)?;
            let out = deidentify(&ae, &grids)?;
            save_grids(run.path("deidentified.bin"), &out)?;
            run.log(&format!("de-identified {} grids", out.len()));
        }
        Cmd::Evaluate { .. } => {
            let task = task_of(cfg)?;
            let model = match task {
                Task::Gesture => required(&cfg.gesture_params, "gesture")?,
                Task::Identity => required(&cfg.identity_params, "identity")?,
            };
            let params = params_from(model)?;
            let grids = grids_from(required(&cfg.input, "input")?)?;
            let probs = predict(&params, &grids)?;
            let labels: Vec<usize> = grids.iter().map(|g| task.label(g)).collect();
            let m = compute_metrics(&probs, &labels)?;
            fs::write(run.path("metrics.json"), serde_json::to_vec_pretty(&m)?)?;
            write_curves(BufWriter::new(File::create(run.path("curves.csv"))?), &probs, &labels)?;
            run.log(&format!(
                "{} accuracy {:.4} f1 {:.4} auc {:.4}",
                task.name(),
                m.accuracy,
                m.f1_macro,
                m.auc_macro
            ));
        }
        Cmd::Baseline { .. } => {
            let method = cfg.method.ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(Method::name).collect();
                anyhow!("missing --method (one of {})", names.join(", "))
            })?;
            let grids = grids_from(required(&cfg.input, "input")?)?;
            let spec = BaselineSpec { method, params: cfg.baseline, seed: cfg.stream_seed(Stream::Baseline) };
            let out = perturb_all(&grids, &spec)?;
            save_grids(run.path(&format!("{}.bin", method.name())), &out)?;
            run.log(&format!("applied {} to {} grids", method.name(), out.len()));
            if let (Some(g), Some(u)) = (&cfg.gesture_params, &cfg.identity_params) {
                let card = scorecard_for(&params_from(g)?, &params_from(u)?, &grids, method.name(), &out)?;
                save_scorecard(run.path("scorecard"), &card)?;
                log_card(run, &card);
            }
        }
        Cmd::Report { .. } => {
            let g = params_from(required(&cfg.gesture_params, "gesture")?)?;
            let u = params_from(required(&cfg.identity_params, "identity")?)?;
            let ae = params_from(required(&cfg.autoencoder_params, "autoencoder")?)?;
            let test = grids_from(required(&cfg.test_set, "test")?)?;
            let card = pcdeid::eval::privacy_utility_report(&g, &u, &ae, &test)?;
            save_scorecard(run.path("scorecard"), &card)?;
            let deid = deidentify(&ae, &test)?;
            let labels: Vec<usize> = test.iter().map(|g| g.subject).collect();
            write_curves(BufWriter::new(File::create(run.path("identity-curves.csv"))?), &predict(&u, &deid)?, &labels)?;
            log_card(run, &card);
        }
        Cmd::Sweep { .. } => sweep(cfg, run)?,
        Cmd::Gradcheck => {
            let report = gradcheck::run(&gradcheck::small_config(cfg.seed), cfg.seed)?;
            fs::write(run.path("gradcheck.json"), serde_json::to_vec_pretty(&report)?)?;
            for r in &report.rows {
                run.log(&format!("{:<20} {:<14} {:.3e}", r.loss, r.tensor, r.max_rel_error));
            }
            run.log(&format!("delta leaves gradients unchanged: {}", report.delta_gradient_free));
            if !report.passed() {
                bail!("gradient check failed (threshold {:e})", report.threshold);
            }
        }
        Cmd::Experiment { .. } => {
            let data = experiment::prepare(cfg)?;
            write_splits(run, &data)?;
            let g = classifier_stage(cfg, &data, Task::Gesture, run)?;
            let u = classifier_stage(cfg, &data, Task::Identity, run)?;
            let out = experiment::autoencoder_variant(cfg, &data, &g, &u, Some(&run.path("autoencoder-checkpoints")))?;
            save_params(run.path("autoencoder.params"), &out.run.params, None)?;
            save_history(run.path("autoencoder-history.csv"), &out.run.history)?;
            save_scorecard(run.path("scorecard"), &out.scorecard)?;
            log_card(run, &out.scorecard);
        }
    }
    Ok(())
}

fn write_splits(run: &Run, data: &Splits) -> Result<()> {
    save_grids(run.path("train.bin"), &data.train)?;
    save_grids(run.path("val.bin"), &data.val)?;
    save_grids(run.path("test.bin"), &data.test)?;
    run.log(&format!("split {} train / {} val / {} test", data.train.len(), data.val.len(), data.test.len()));
    Ok(())
}

fn classifier_stage(cfg: &RunConfig, data: &Splits, task: Task, run: &Run) -> Result<ModelParams> {
    let out = experiment::pretrain(cfg, data, task, Some(&run.path(&format!("{}-checkpoints", task.name()))))?;
    save_params(run.path(&format!("{}.params", task.name())), &out.params, None)?;
    save_history(run.path(&format!("{}-history.csv", task.name())), &out.history)?;
    run.log(&format!("{} classifier: best epoch {}", task.name(), out.best_epoch));
    Ok(out.params)
}

fn log_card(run: &Run, card: &pcdeid::eval::Scorecard) {
    for r in &card.rows {
        run.log(&format!(
            "{:<8} {:<20} acc {:.4} f1 {:.4} auc {:.4} chamfer {:.4}",
            r.task, r.variant, r.accuracy, r.f1_macro, r.auc_macro, r.mean_chamfer
        ));
    }
}

fn sweep(cfg: &RunConfig, run: &Run) -> Result<()> {
    let param = cfg.sweep_param.as_deref().ok_or_else(|| anyhow!("missing --param (beta or k)"))?;
    if param != "beta" && param != "k" {
        bail!("--param must be beta or k, got `{param}`");
    }
    if cfg.sweep_values.is_empty() {
        bail!("missing --values");
    }
    let data = Splits {
        train: grids_from(required(&cfg.train_set, "train")?)?,
        val: grids_from(required(&cfg.val_set, "val")?)?,
        test: grids_from(required(&cfg.test_set, "test")?)?,
        warnings: Vec::new(),
    };
    let g = params_from(required(&cfg.gesture_params, "gesture")?)?;
    let u = params_from(required(&cfg.identity_params, "identity")?)?;
    let mut summary = String::from("param,value,gesture_acc,identity_acc,mean_chamfer\n");
    for &v in &cfg.sweep_values {
        let mut c = cfg.clone();
        if param == "beta" {
            c.alpha = 1.0;
            c.gamma = 1.0;
            c.beta = v;
        } else {
            if v < 1.0 || v.fract() != 0.0 {
                bail!("k must be a positive integer, got {v}");
            }
            c.model.k = v as usize;
        }
        let sub = run.path(&format!("{param}-{v}"));
        fs::create_dir_all(&sub)?;
        fs::write(sub.join("config.resolved"), c.resolved())?;
        run.log(&format!("sweep {param} = {v}"));
        let out = experiment::autoencoder_variant(&c, &data, &g, &u, Some(&sub.join("checkpoints")))?;
        save_params(sub.join("autoencoder.params"), &out.run.params, None)?;
        save_history(sub.join("history.csv"), &out.run.history)?;
        save_scorecard(sub.join("scorecard"), &out.scorecard)?;
        let acc = |task| out.scorecard.row(task, "deidentified").map(|r| r.accuracy).unwrap_or(f64::NAN);
        let chamfer = out.scorecard.row("gesture", "deidentified").map(|r| r.mean_chamfer).unwrap_or(f64::NAN);
        summary.push_str(&format!("{param},{v},{},{},{chamfer}\n", acc("gesture"), acc("identity")));
        log_card(run, &out.scorecard);
    }
    fs::write(run.path("sweep.csv"), summary)?;
    Ok(())
}

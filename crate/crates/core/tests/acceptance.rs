//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 7-10 train real models on the desk-scale configuration in
//! `configs/desk.conf`; expect roughly twenty minutes on one core.
//!
//! The printed lines are the verdict. The process fails on a FAIL line only
//! when `ACCEPTANCE_STRICT` is set, so an honest miss does not break the
//! rest of the test run.

mod common;

use std::time::Instant;

use common::{chamfer_oracle, cloud, flat, knn_oracle, oracle_grid};
use pcdeid::baselines::Method;
use pcdeid::config::RunConfig;
use pcdeid::data::{read_grids, write_grids};
use pcdeid::eval::{mean_chamfer, mean_inter_gesture_chamfer, deidentify, Scorecard};
use pcdeid::experiment::{self, Splits};
use pcdeid::gradcheck::{self, small_config};
use pcdeid::graph::build_temporal_graph;
use pcdeid::linalg::Mat;
use pcdeid::loss::{chamfer, LossWeights};
use pcdeid::model::{
    aggregate_attention, encode_nodes, generate_messages, read_params, write_params, ModelConfig, ModelKind,
    ModelParams,
};
use pcdeid::objective::{autoencoder_objective, Frozen, LossSelector, Task};
use pcdeid::optim::{lr_at, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DESK: &str = include_str!("../../../configs/desk.conf");

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, n: usize, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("criterion {n:>2} {}: {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn c1_graph_oracle() -> (bool, String) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for case in 0..500 {
        let (grid, coords) = oracle_grid(&mut rng);
        let k = [1, 2, 4][case % 3];
        if build_temporal_graph(&grid, k).edges != knn_oracle(&coords, grid.points_per_frame(), k) {
            mismatches += 1;
        }
    }
    let s = secs(t);
    (mismatches == 0 && s < 10.0, format!("500 grids, {mismatches} mismatches, {s:.2}s (limit 10s)"))
}

fn c2_chamfer_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut asym, mut perm) = (0.0f64, 0, 0);
    for _ in 0..500 {
        let (p, q) = (cloud(&mut rng), cloud(&mut rng));
        let fast = chamfer(&flat(&p), &flat(&q)).unwrap();
        let slow = chamfer_oracle(&p, &q);
        worst = worst.max((fast - slow).abs() / slow.abs().max(f64::MIN_POSITIVE));
        asym += (chamfer(&flat(&q), &flat(&p)).unwrap().to_bits() != fast.to_bits()) as usize;
        let (mut p2, mut q2) = (p.clone(), q.clone());
        p2.shuffle(&mut rng);
        q2.shuffle(&mut rng);
        perm += (chamfer(&flat(&p2), &flat(&q2)).unwrap().to_bits() != fast.to_bits()) as usize;
    }
    (
        worst <= 1e-9 && asym == 0 && perm == 0,
        format!("500 pairs, max rel error {worst:.1e} (limit 1e-9), {asym} asymmetric, {perm} permutation-sensitive"),
    )
}

fn c3_gradcheck() -> (bool, String) {
    let t = Instant::now();
    let report = gradcheck::run(&small_config(3), 3).unwrap();
    let s = secs(t);
    let worst = report.worst().map(|r| (r.max_rel_error, format!("{}/{}", r.loss, r.tensor)));
    let (err, at) = worst.unwrap_or((0.0, "none".into()));
    (
        report.passed() && report.delta_gradient_free && s < 60.0,
        format!(
            "{} rows, worst {err:.2e} at {at} (limit 1e-4), delta-free {}, {s:.1}s (limit 60s)",
            report.rows.len(),
            report.delta_gradient_free
        ),
    )
}

fn c4_attention() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst, mut single, mut single_exact) = (0.0f64, 0, 0);
    for case in 0..100 {
        let (grid, _) = oracle_grid(&mut rng);
        let k = rng.random_range(1..=4);
        let cfg = ModelConfig { d_h: 8, d_m: 8, d_k: 4, d_v: 3, heads: 3, d_z: 6, k, seed: case, ..ModelConfig::default() };
        let p = ModelParams::init(&cfg, ModelKind::Autoencoder).unwrap();
        let graph = build_temporal_graph(&grid, k);
        let h = encode_nodes(&Mat::from_vec(grid.len(), 3, grid.coords().to_vec()), &p);
        let msg = generate_messages(&graph, &h, &p);
        let attn = aggregate_attention(&graph, &h, &msg.messages, &p);
        for node in 0..grid.len() {
            let r = graph.dst_offsets[node]..graph.dst_offsets[node + 1];
            for head in 0..cfg.heads {
                if r.is_empty() {
                    continue;
                }
                let s: f64 = r.clone().map(|e| attn.alpha.row(e)[head]).sum();
                worst = worst.max((s - 1.0).abs());
                if r.len() == 1 {
                    single += 1;
                    single_exact += (attn.alpha.row(r.start)[head] == 1.0) as usize;
                }
            }
        }
    }
    (
        worst <= 1e-6 && single == single_exact && single > 0,
        format!("100 graphs, max |sum - 1| {worst:.1e} (limit 1e-6), single-edge alpha exactly 1 in {single_exact}/{single}"),
    )
}

fn c5_gating() -> (bool, String) {
    let mut identical = 0;
    let cases = 20;
    for seed in 0..cases {
        let cfg = small_config(seed);
        let ae = ModelParams::init(&cfg, ModelKind::Autoencoder).unwrap();
        let g = ModelParams::init(&cfg, ModelKind::Classifier { classes: 3 }).unwrap();
        let u = ModelParams::init(&ModelConfig { seed: seed + 99, ..cfg.clone() }, ModelKind::Classifier { classes: 4 })
            .unwrap();
        let frozen = Frozen { gesture: &g, identity: &u };
        let batch = gradcheck::random_grids(2 + seed as usize % 3, 2, 4, 3, 4, seed);
        let w = LossWeights { gamma: 1.0 + seed as f64, tau: 0.9, ..LossWeights::for_subjects(4) };
        let a_id = 0.25;
        let active = w.identity_active(a_id);
        let (l1, g1) = autoencoder_objective(&ae, frozen, &batch, &w, LossSelector::Combined, active, true).unwrap();
        let w0 = LossWeights { gamma: 0.0, ..w };
        let (l0, g0) =
            autoencoder_objective(&ae, frozen, &batch, &w0, LossSelector::Combined, w0.identity_active(a_id), true)
                .unwrap();
        let bits = |p: &ModelParams| p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
        if !active && l1.total.to_bits() == l0.total.to_bits() && bits(&g1.unwrap()) == bits(&g0.unwrap()) {
            identical += 1;
        }
    }
    (identical == cases, format!("{identical}/{cases} batches bit-identical in loss and gradient"))
}

fn c6_schedule() -> (bool, String) {
    let cfg = TrainConfig { eta0: 0.001, lambda: 0.5, decay_period: 20, ..TrainConfig::default() };
    let bad = (0..200).filter(|&e| lr_at(e, &cfg).to_bits() != (0.001 * 0.5f64.powi((e / 20) as i32)).to_bits()).count();
    (bad == 0, format!("epochs 0..200, {bad} mismatches"))
}

/// Everything criterion 7 produces, kept for the later criteria.
struct Experiment {
    data: Splits,
    gesture: ModelParams,
    identity: ModelParams,
    autoencoder: ModelParams,
    card: Scorecard,
    inter_chamfer: f64,
    seconds: f64,
}

fn run_experiment(cfg: &RunConfig) -> Experiment {
    let t = Instant::now();
    let data = experiment::prepare(cfg).unwrap();
    let gesture = experiment::pretrain(cfg, &data, Task::Gesture, None).unwrap().params;
    let identity = experiment::pretrain(cfg, &data, Task::Identity, None).unwrap().params;
    let out = experiment::autoencoder_variant(cfg, &data, &gesture, &identity, None).unwrap();
    let inter_chamfer = mean_inter_gesture_chamfer(&data.test).unwrap();
    Experiment {
        data,
        gesture,
        identity,
        autoencoder: out.run.params,
        card: out.scorecard,
        inter_chamfer,
        seconds: secs(t),
    }
}

fn acc(card: &Scorecard, task: &str, variant: &str) -> f64 {
    card.row(task, variant).map(|r| r.accuracy).unwrap_or(f64::NAN)
}

fn c7(e: &Experiment) -> (bool, String) {
    let id_orig = acc(&e.card, "identity", "original");
    let id_deid = acc(&e.card, "identity", "deidentified");
    let g_orig = acc(&e.card, "gesture", "original");
    let g_deid = acc(&e.card, "gesture", "deidentified");
    let ch = e.card.row("gesture", "deidentified").unwrap().mean_chamfer;
    let a = id_orig >= 0.70;
    let b = id_deid <= 0.25;
    let c = (g_orig - g_deid).abs() <= 0.10;
    let d = ch < e.inter_chamfer;
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    (
        a && b && c && d,
        format!(
            "(a) identity on originals {:.1}% >= 70% {}; (b) identity on de-identified {:.1}% <= 25% {}; \
             (c) gesture {:.1}% -> {:.1}% within 10 points {}; (d) Chamfer {ch:.3} < inter-gesture {:.3} {}; \
             {} test grids, {:.0}s",
            100.0 * id_orig,
            mark(a),
            100.0 * id_deid,
            mark(b),
            100.0 * g_orig,
            100.0 * g_deid,
            mark(c),
            e.inter_chamfer,
            mark(d),
            e.data.test.len(),
            e.seconds
        ),
    )
}

fn c8(cfg: &RunConfig, e: &Experiment) -> (bool, String) {
    let ae_id = acc(&e.card, "identity", "deidentified");
    let mut parts = Vec::new();
    let mut pass = true;
    for m in Method::POINT_LEVEL {
        let card = experiment::baseline_scorecard(cfg, &e.data, m, &e.gesture, &e.identity).unwrap();
        let id = acc(&card, "identity", m.name());
        pass &= ae_id < id;
        parts.push(format!("{} {:.1}%", m.name(), 100.0 * id));
    }
    (pass, format!("autoencoder identity {:.1}% vs {}", 100.0 * ae_id, parts.join(", ")))
}

fn c9(cfg: &RunConfig, e: &Experiment) -> (bool, String) {
    let full_id = acc(&e.card, "identity", "deidentified");
    let full_g = acc(&e.card, "gesture", "deidentified");

    let mut no_deid = cfg.clone();
    no_deid.gamma = 0.0;
    let card = experiment::autoencoder_variant(&no_deid, &e.data, &e.gesture, &e.identity, None).unwrap().scorecard;
    let id0 = acc(&card, "identity", "deidentified");

    let mut no_temporal = cfg.clone();
    no_temporal.model.graph_mode = pcdeid::graph::GraphMode::WithinFrame;
    let card = experiment::autoencoder_variant(&no_temporal, &e.data, &e.gesture, &e.identity, None).unwrap().scorecard;
    let g_nt = acc(&card, "gesture", "deidentified");
    let id_nt = acc(&card, "identity", "deidentified");

    let a = id0 > full_id;
    let b = g_nt < full_g;
    (
        a && b,
        format!(
            "gamma=0 identity {:.1}% > full {:.1}% {}; no temporal edges gesture {:.1}% < full {:.1}% {} \
             (its identity {:.1}%)",
            100.0 * id0,
            100.0 * full_id,
            if a { "ok" } else { "FAIL" },
            100.0 * g_nt,
            100.0 * full_g,
            if b { "ok" } else { "FAIL" },
            100.0 * id_nt
        ),
    )
}

fn bits(p: &ModelParams) -> Vec<u64> {
    p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect()
}

fn c10(cfg: &RunConfig, e: &Experiment) -> (bool, String) {
    let again = run_experiment(cfg);
    let card_same = serde_json::to_string(&again.card).unwrap() == serde_json::to_string(&e.card).unwrap()
        && again.card.rows.iter().zip(&e.card.rows).all(|(a, b)| {
            a.accuracy.to_bits() == b.accuracy.to_bits()
                && a.f1_macro.to_bits() == b.f1_macro.to_bits()
                && a.auc_macro.to_bits() == b.auc_macro.to_bits()
                && a.mean_chamfer.to_bits() == b.mean_chamfer.to_bits()
        });
    let params_same = bits(&again.gesture) == bits(&e.gesture)
        && bits(&again.identity) == bits(&e.identity)
        && bits(&again.autoencoder) == bits(&e.autoencoder);

    let deid = deidentify(&e.autoencoder, &e.data.test).unwrap();
    let mut buf = Vec::new();
    write_grids(&mut buf, &deid).unwrap();
    let back = read_grids(buf.as_slice()).unwrap();
    let grids_same = back.len() == deid.len()
        && back.iter().zip(&deid).all(|(a, b)| {
            a.subject == b.subject
                && a.gesture == b.gesture
                && a.coords().iter().map(|v| v.to_bits()).eq(b.coords().iter().map(|v| v.to_bits()))
        })
        && mean_chamfer(&back, &deid).unwrap() == 0.0;

    let mut param_files_same = true;
    for p in [&e.gesture, &e.identity, &e.autoencoder] {
        let mut buf = Vec::new();
        write_params(&mut buf, p).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        param_files_same &= bits(&back) == bits(p) && back.config == p.config && back.kind == p.kind;
    }
    (
        card_same && params_same && grids_same && param_files_same,
        format!(
            "rerun metrics identical {card_same}, parameters identical {params_same}, \
             grid file round-trip exact {grids_same}, parameter files round-trip exact {param_files_same}"
        ),
    )
}

fn main() {
    let mut report = Report { failures: 0 };
    let fast: [(&str, fn() -> (bool, String)); 6] = [
        ("temporal KNN graph oracle", c1_graph_oracle),
        ("Chamfer oracle", c2_chamfer_oracle),
        ("gradient check", c3_gradcheck),
        ("attention normalization", c4_attention),
        ("gating bit-exactness", c5_gating),
        ("schedule exactness", c6_schedule),
    ];
    for (i, (name, f)) in fast.iter().enumerate() {
        let (pass, detail) = f();
        report.line(i + 1, name, pass, detail);
    }

    let mut cfg = RunConfig::default();
    cfg.apply_text(DESK).expect("desk configuration parses");
    let e = run_experiment(&cfg);
    let (pass, detail) = c7(&e);
    report.line(7, "end-to-end synthetic experiment", pass, detail);
    let (pass, detail) = c8(&cfg, &e);
    report.line(8, "baseline trend", pass, detail);
    let (pass, detail) = c9(&cfg, &e);
    report.line(9, "ablation direction", pass, detail);
    let (pass, detail) = c10(&cfg, &e);
    report.line(10, "determinism", pass, detail);

    println!("{} of 10 criteria passed", 10 - report.failures);
    if report.failures > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

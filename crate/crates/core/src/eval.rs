//! Classification metrics and the privacy-utility scorecard.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FrameGrid;
use crate::error::{Error, Result};
use crate::loss::chamfer;
use crate::model::{autoencoder_forward, classify, ModelKind, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub auc_macro: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Ranks starting at 1, with tied values sharing their mean rank.
fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Area under the ROC curve via the rank statistic. `None` when either
/// class is absent.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// ROC points `(fpr, tpr)` from the highest threshold down; tied scores
/// form one step, so the trapezoid area equals [`binary_auc`].
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = positive.iter().filter(|&&p| p).count().max(1) as f64;
    let n_neg = (positive.len() - positive.iter().filter(|&&p| p).count()).max(1) as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        curve.push((fp / n_neg, tp / n_pos));
    }
    curve
}

fn validate_batch(probs: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::Domain("metrics of an empty batch".into()));
    }
    if probs.len() != labels.len() {
        return Err(Error::Validation(format!("{} score rows but {} labels", probs.len(), labels.len())));
    }
    let classes = probs[0].len();
    if classes == 0 || probs.iter().any(|r| r.len() != classes) {
        return Err(Error::Validation("score rows must share a non-zero class count".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Validation(format!("label {l} outside {classes} classes")));
    }
    Ok(classes)
}

/// Accuracy, macro F1, macro one-vs-rest AUC and the confusion matrix.
///
/// A class whose F1 is undefined counts as 0. Classes with no positive or
/// no negative sample are left out of the AUC mean; if none remain the AUC
/// is 0.5.
pub fn compute_metrics(probs: &[Vec<f64>], labels: &[usize]) -> Result<Metrics> {
    let classes = validate_batch(probs, labels)?;
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (row, &l) in probs.iter().zip(labels) {
        confusion[l][argmax(row)] += 1;
    }
    let total = labels.len();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();

    let mut f1_sum = 0.0;
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let fn_ = confusion[c].iter().sum::<usize>() as f64 - tp;
        let fp = (0..classes).map(|r| confusion[r][c]).sum::<usize>() as f64 - tp;
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }

    let aucs: Vec<f64> = (0..classes)
        .filter_map(|c| {
            let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            binary_auc(&scores, &pos)
        })
        .collect();
    let auc_macro = if aucs.is_empty() { 0.5 } else { aucs.iter().sum::<f64>() / aucs.len() as f64 };

    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        f1_macro: f1_sum / classes as f64,
        auc_macro,
        confusion,
    })
}

/// Class probabilities for every grid.
pub fn predict(params: &ModelParams, grids: &[FrameGrid]) -> Result<Vec<Vec<f64>>> {
    grids.par_iter().map(|g| classify(g, params)).collect()
}

/// Autoencoder reconstructions rounded to `f32` like every stored grid; ids
/// and labels are carried over.
pub fn deidentify(ae: &ModelParams, grids: &[FrameGrid]) -> Result<Vec<FrameGrid>> {
    grids
        .par_iter()
        .map(|g| {
            let mut out = autoencoder_forward(g, ae)?.output;
            out.round_to_f32();
            Ok(out)
        })
        .collect()
}

/// Mean per-sequence Chamfer distance between paired grids.
pub fn mean_chamfer(a: &[FrameGrid], b: &[FrameGrid]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Domain("mean Chamfer needs two equally long, non-empty lists".into()));
    }
    let d: Vec<f64> = a.par_iter().zip(b).map(|(x, y)| chamfer(x.coords(), y.coords())).collect::<Result<_>>()?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean Chamfer distance between sequences of different gestures: the
/// scale a reconstruction must stay well below to keep gesture structure.
pub fn mean_inter_gesture_chamfer(grids: &[FrameGrid]) -> Result<f64> {
    let pairs: Vec<(usize, usize)> = (0..grids.len())
        .flat_map(|i| (i + 1..grids.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| grids[i].gesture != grids[j].gesture)
        .collect();
    if pairs.is_empty() {
        return Err(Error::Domain("need sequences of at least two gestures".into()));
    }
    let d: Vec<f64> =
        pairs.par_iter().map(|&(i, j)| chamfer(grids[i].coords(), grids[j].coords())).collect::<Result<_>>()?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub task: String,
    pub variant: String,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub auc_macro: f64,
    pub confusion: Vec<Vec<usize>>,
    /// Mean Chamfer distance between the evaluated grids and the originals.
    pub mean_chamfer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub f1_averaging: String,
    pub auc_averaging: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub metadata: ScoreMeta,
    pub rows: Vec<ScoreRow>,
}

impl Scorecard {
    pub fn row(&self, task: &str, variant: &str) -> Option<&ScoreRow> {
        self.rows.iter().find(|r| r.task == task && r.variant == variant)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "task,variant,accuracy,f1_macro,auc_macro,mean_chamfer,confusion")?;
        for r in &self.rows {
            let conf: Vec<String> =
                r.confusion.iter().map(|row| row.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")).collect();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.task,
                r.variant,
                r.accuracy,
                r.f1_macro,
                r.auc_macro,
                r.mean_chamfer,
                conf.join(";")
            )?;
        }
        Ok(())
    }
}

fn score_row(task: &str, variant: &str, m: Metrics, mean_chamfer: f64) -> ScoreRow {
    ScoreRow {
        task: task.into(),
        variant: variant.into(),
        accuracy: m.accuracy,
        f1_macro: m.f1_macro,
        auc_macro: m.auc_macro,
        confusion: m.confusion,
        mean_chamfer,
    }
}

fn check_classifier(p: &ModelParams, labels: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    let ModelKind::Classifier { classes } = p.kind else {
        return Err(Error::Config(format!("{what} checkpoint is not a classifier")));
    };
    if let Some(l) = labels.max() {
        if l >= classes {
            return Err(Error::Config(format!("{what} classifier has {classes} classes but data has label {l}")));
        }
    }
    Ok(())
}

/// Scores `grids` (original) and `variant_grids` under both classifiers.
pub fn scorecard_for(
    gesture: &ModelParams,
    identity: &ModelParams,
    original: &[FrameGrid],
    variant_name: &str,
    variant: &[FrameGrid],
) -> Result<Scorecard> {
    check_classifier(gesture, original.iter().map(|g| g.gesture), "gesture")?;
    check_classifier(identity, original.iter().map(|g| g.subject), "identity")?;
    let ges_labels: Vec<usize> = original.iter().map(|g| g.gesture).collect();
    let id_labels: Vec<usize> = original.iter().map(|g| g.subject).collect();
    let chamfer_v = mean_chamfer(original, variant)?;
    let mut rows = Vec::new();
    for (task, params, labels) in [("gesture", gesture, &ges_labels), ("identity", identity, &id_labels)] {
        rows.push(score_row(task, "original", compute_metrics(&predict(params, original)?, labels)?, 0.0));
        rows.push(score_row(task, variant_name, compute_metrics(&predict(params, variant)?, labels)?, chamfer_v));
    }
    Ok(Scorecard {
        metadata: ScoreMeta {
            f1_averaging: "macro".into(),
            auc_averaging: "macro one-vs-rest".into(),
            samples: original.len(),
        },
        rows,
    })
}

/// Four-row scorecard: {gesture, identity} x {original, deidentified}.
pub fn privacy_utility_report(
    gesture: &ModelParams,
    identity: &ModelParams,
    ae: &ModelParams,
    test: &[FrameGrid],
) -> Result<Scorecard> {
    if ae.kind != ModelKind::Autoencoder {
        return Err(Error::Config("autoencoder checkpoint has no decoder".into()));
    }
    let deid = deidentify(ae, test)?;
    scorecard_for(gesture, identity, test, "deidentified", &deid)
}

/// Writes `<stem>.json` and `<stem>.csv`.
pub fn save_scorecard(stem: impl AsRef<Path>, card: &Scorecard) -> Result<()> {
    let stem = stem.as_ref();
    let json = serde_json::to_vec_pretty(card).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(stem.with_extension("json"), json)?;
    let mut csv = Vec::new();
    card.write_csv(&mut csv)?;
    fs::write(stem.with_extension("csv"), csv)?;
    Ok(())
}

/// Per-class one-vs-rest ROC curves as `class,fpr,tpr` lines.
pub fn write_curves<W: Write>(mut out: W, probs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    let classes = validate_batch(probs, labels)?;
    writeln!(out, "class,fpr,tpr")?;
    for c in 0..classes {
        let scores: Vec<f64> = probs.iter().map(|r| r[c]).collect();
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        for (fpr, tpr) in roc_curve(&scores, &pos) {
            writeln!(out, "{c},{fpr},{tpr}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::synth::{generate_dataset, SynthSpec};
    use proptest::prelude::*;

    fn auc_bruteforce(scores: &[f64], pos: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (i, &pi) in pos.iter().enumerate() {
            for (j, &pj) in pos.iter().enumerate() {
                if pi && !pj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn perfect_predictions() {
        let probs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let m = compute_metrics(&probs, &[0, 1, 2, 0]).unwrap();
        assert_eq!((m.accuracy, m.f1_macro, m.auc_macro), (1.0, 1.0, 1.0));
        assert_eq!(m.confusion, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn two_sample_rank_example() {
        let m = compute_metrics(&[vec![0.9, 0.1], vec![0.8, 0.2]], &[0, 1]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.auc_macro, 1.0);
    }

    #[test]
    fn all_predicted_class_zero() {
        let probs = vec![vec![0.6, 0.2, 0.2]; 6];
        let labels = [0, 0, 1, 1, 2, 2];
        let m = compute_metrics(&probs, &labels).unwrap();
        assert_eq!(m.accuracy, 2.0 / 6.0);
        // F1 of class 0: tp 2, fp 4, fn 0 -> 4 / 8.
        assert!((m.f1_macro - 0.5 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_domain_error() {
        assert!(matches!(compute_metrics(&[], &[]), Err(Error::Domain(_))));
    }

    #[test]
    fn anti_ranked_auc_is_zero() {
        let scores = [0.1, 0.2, 0.8, 0.9];
        assert_eq!(binary_auc(&scores, &[true, true, false, false]), Some(0.0));
    }

    #[test]
    fn random_scores_give_half_auc() {
        use rand::Rng;
        let mut rng = crate::rng::rng_for(3, 0);
        let scores: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
        let pos: Vec<bool> = (0..4000).map(|i| i % 2 == 0).collect();
        let auc = binary_auc(&scores, &pos).unwrap();
        assert!((auc - 0.5).abs() < 0.05, "{auc}");
    }

    #[test]
    fn roc_area_equals_rank_auc() {
        let scores = [0.3, 0.3, 0.7, 0.1, 0.7, 0.5];
        let pos = [true, false, true, false, false, true];
        let curve = roc_curve(&scores, &pos);
        let area: f64 = curve.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
        assert!((area - binary_auc(&scores, &pos).unwrap()).abs() < 1e-12);
        assert_eq!(*curve.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn copy_through_autoencoder_gives_identical_rows() {
        let spec = SynthSpec { sequences_per_cell: 1, subjects: 3, gestures: 2, frames: 4, points_per_frame: 8, ..SynthSpec::default() };
        let grids: Vec<FrameGrid> = generate_dataset(&spec)
            .unwrap()
            .iter()
            .map(|s| crate::data::sequence_to_grid(s, 4, 8, 1).unwrap())
            .collect();
        let cfg = ModelConfig { d_h: 8, d_m: 8, d_k: 4, d_v: 4, heads: 2, d_z: 8, ..ModelConfig::default() };
        let g = ModelParams::init(&cfg, ModelKind::Classifier { classes: 2 }).unwrap();
        let u = ModelParams::init(&cfg, ModelKind::Classifier { classes: 3 }).unwrap();
        let ae = ModelParams::copy_through(&cfg).unwrap();
        let card = privacy_utility_report(&g, &u, &ae, &grids).unwrap();
        assert_eq!(card.rows.len(), 4);
        for task in ["gesture", "identity"] {
            let (a, b) = (card.row(task, "original").unwrap(), card.row(task, "deidentified").unwrap());
            assert_eq!((a.accuracy, a.f1_macro, a.auc_macro), (b.accuracy, b.f1_macro, b.auc_macro));
            assert_eq!(a.confusion, b.confusion);
            assert_eq!(b.mean_chamfer, 0.0);
        }
        let json: serde_json::Value = serde_json::to_value(&card).unwrap();
        for key in ["task", "variant", "accuracy", "f1_macro", "auc_macro", "confusion", "mean_chamfer"] {
            assert!(json["rows"][0].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn mismatched_classifier_is_config_error() {
        let grids = crate::gradcheck::random_grids(4, 2, 4, 3, 4, 1);
        let cfg = crate::gradcheck::small_config(1);
        let g = ModelParams::init(&cfg, ModelKind::Classifier { classes: 2 }).unwrap();
        let u = ModelParams::init(&cfg, ModelKind::Classifier { classes: 4 }).unwrap();
        let r = scorecard_for(&g, &u, &grids, "x", &grids);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    fn batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..5, 2usize..40).prop_flat_map(|(c, n)| {
            (
                prop::collection::vec(prop::collection::vec(0u8..6, c), n),
                prop::collection::vec(0..c, n),
            )
                .prop_map(|(raw, labels)| {
                    let probs = raw
                        .into_iter()
                        .map(|r| {
                            let s: f64 = r.iter().map(|&x| x as f64 + 1.0).sum();
                            r.iter().map(|&x| (x as f64 + 1.0) / s).collect()
                        })
                        .collect();
                    (probs, labels)
                })
        })
    }

    proptest! {
        #[test]
        fn metrics_invariant_under_row_permutation((probs, labels) in batch(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut idx: Vec<usize> = (0..labels.len()).collect();
            idx.shuffle(&mut crate::rng::rng_for(seed, 0));
            let p2: Vec<Vec<f64>> = idx.iter().map(|&i| probs[i].clone()).collect();
            let l2: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let a = compute_metrics(&probs, &labels).unwrap();
            let b = compute_metrics(&p2, &l2).unwrap();
            prop_assert_eq!(&a.confusion, &b.confusion);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(a.f1_macro, b.f1_macro);
            prop_assert!((a.auc_macro - b.auc_macro).abs() < 1e-12);
            let total: usize = a.confusion.iter().flatten().sum();
            prop_assert_eq!(total, labels.len());
        }

        #[test]
        fn rank_auc_matches_pairwise_oracle((probs, labels) in batch()) {
            for c in 0..probs[0].len() {
                let s: Vec<f64> = probs.iter().map(|r| r[c]).collect();
                let p: Vec<bool> = labels.iter().map(|&l| l == c).collect();
                if let Some(auc) = binary_auc(&s, &p) {
                    prop_assert!((auc - auc_bruteforce(&s, &p)).abs() < 1e-12);
                }
            }
        }
    }
}

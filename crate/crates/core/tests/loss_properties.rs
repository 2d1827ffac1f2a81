mod common;

use common::{chamfer_oracle, cloud, flat};
use pcdeid::gradcheck::{random_grids, small_config};
use pcdeid::loss::{chamfer, chamfer_with_grad, combined_loss, deid_stabilized, LossWeights};
use pcdeid::model::{ModelKind, ModelParams};
use pcdeid::objective::{autoencoder_objective, Frozen, LossSelector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn chamfer_matches_brute_force_on_500_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    for case in 0..500 {
        let (p, q) = (cloud(&mut rng), cloud(&mut rng));
        let fast = chamfer(&flat(&p), &flat(&q)).unwrap();
        let slow = chamfer_oracle(&p, &q);
        assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(f64::MIN_POSITIVE), "case {case}: {fast} vs {slow}");

        assert_eq!(fast.to_bits(), chamfer(&flat(&q), &flat(&p)).unwrap().to_bits(), "symmetry, case {case}");
        let (mut p2, mut q2) = (p.clone(), q.clone());
        p2.shuffle(&mut rng);
        q2.shuffle(&mut rng);
        assert_eq!(fast.to_bits(), chamfer(&flat(&p2), &flat(&q2)).unwrap().to_bits(), "permutation, case {case}");
    }
}

#[test]
fn chamfer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    for _ in 0..20 {
        let (p, q) = (flat(&cloud(&mut rng)), flat(&cloud(&mut rng)));
        let (_, grad) = chamfer_with_grad(&p, &q).unwrap();
        for i in 0..q.len() {
            let h = 1e-6;
            let (mut up, mut dn) = (q.clone(), q.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = (chamfer(&p, &up).unwrap() - chamfer(&p, &dn).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-5, "coordinate {i}: {fd} vs {}", grad[i]);
        }
    }
}

proptest! {
    #[test]
    fn stabilized_loss_is_decreasing_and_bounded(a in 0.0f64..1e6, b in 0.0f64..1e6, delta in -10.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(deid_stabilized(hi, delta) <= deid_stabilized(lo, delta));
        prop_assert!(deid_stabilized(a, delta) <= delta);
    }

    #[test]
    fn closed_gate_equals_zero_gamma(lp in 0.0f64..10.0, lg in 0.0f64..10.0, gamma in 0.0f64..5.0, a_id in 0.0f64..1.0) {
        let w = LossWeights { gamma, tau: 1.0, ..LossWeights::default() };
        let w0 = LossWeights { gamma: 0.0, ..w };
        if a_id < 1.0 {
            let gated = combined_loss(lp, lg, &w, a_id, || panic!("identity term evaluated while gated"));
            prop_assert_eq!(gated.to_bits(), combined_loss(lp, lg, &w0, a_id, || 0.0).to_bits());
        }
    }
}

/// A closed gate must give loss and gradients bit-identical to gamma = 0.
#[test]
fn closed_gate_is_bit_identical_to_zero_gamma_in_training_objective() {
    for seed in 0..4 {
        let cfg = small_config(seed);
        let ae = ModelParams::init(&cfg, ModelKind::Autoencoder).unwrap();
        let g = ModelParams::init(&cfg, ModelKind::Classifier { classes: 3 }).unwrap();
        let u = ModelParams::init(&pcdeid::model::ModelConfig { seed: seed + 100, ..cfg.clone() }, ModelKind::Classifier { classes: 4 }).unwrap();
        let batch = random_grids(3, 2, 4, 3, 4, seed);
        let frozen = Frozen { gesture: &g, identity: &u };
        let w = LossWeights { tau: 1.0, ..LossWeights::for_subjects(4) };
        let a_id = 0.5;
        let gate = w.identity_active(a_id);
        assert!(!gate);
        let (l1, g1) = autoencoder_objective(&ae, frozen, &batch, &w, LossSelector::Combined, gate, true).unwrap();
        let w0 = LossWeights { gamma: 0.0, ..w };
        let (l0, g0) =
            autoencoder_objective(&ae, frozen, &batch, &w0, LossSelector::Combined, w0.identity_active(a_id), true).unwrap();
        assert_eq!(l1.total.to_bits(), l0.total.to_bits());
        let bits = |p: &ModelParams| p.tensors().iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
        assert_eq!(bits(&g1.unwrap()), bits(&g0.unwrap()));
    }
}

mod common;

use altbi::baselines::{fit_gmm1d, w2_gaussians};
use altbi::metrics::{pr_auc, roc_auc};
use altbi::optim::{clip_bundle, dp_aggregate, global_norm, AdamState, DpConfig};
use altbi::tensor::Tensor;
use altbi::trainer::{quantile_threshold, truncated_loss};
use common::{brute_ap, brute_auc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundle_strategy() -> impl Strategy<Value = Vec<Tensor>> {
    prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 1..12), 1..4)
        .prop_map(|ts| ts.into_iter().map(|v| Tensor::from_vec(1, v.len(), v)).collect())
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    prop::collection::vec((0i32..16, 0u8..2), 2..60).prop_filter_map("both classes", |v| {
        let scores: Vec<f64> = v.iter().map(|(s, _)| f64::from(*s) / 8.0 - 1.0).collect();
        let labels: Vec<u8> = v.iter().map(|(_, y)| *y).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        (pos > 0 && pos < labels.len()).then_some((scores, labels))
    })
}

proptest! {
    #[test]
    fn clipped_norm_never_exceeds_bound(mut b in bundle_strategy(), c in 0.01f64..20.0) {
        clip_bundle(&mut b, c);
        prop_assert!(global_norm(&b) <= c);
    }

    #[test]
    fn noiseless_unclipped_aggregate_is_the_plain_mean(
        grads in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20)
    ) {
        let per_sample: Vec<Vec<Tensor>> =
            grads.iter().map(|g| vec![Tensor::from_vec(1, 3, g.clone())]).collect();
        let cfg = DpConfig { enabled: true, clip_norm: 10.0, noise_multiplier: 0.0, shift_threshold: false };
        let out = dp_aggregate(per_sample, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for j in 0..3 {
            let mut sum = 0.0;
            for g in &grads {
                sum += g[j];
            }
            let expect = sum / grads.len() as f64;
            prop_assert_eq!(out[0].as_slice()[j].to_bits(), expect.to_bits());
        }
    }

    #[test]
    fn adam_is_independent_of_tensor_order(a in bundle_strategy()) {
        let params: Vec<Tensor> = a.iter().map(|t| t.map(|v| v * 0.1)).collect();
        let mut p1 = params.clone();
        let mut s1 = AdamState::new(&p1, 1e-3);
        s1.step(&mut p1, &a).unwrap();

        let mut p2: Vec<Tensor> = params.iter().rev().cloned().collect();
        let g2: Vec<Tensor> = a.iter().rev().cloned().collect();
        let mut s2 = AdamState::new(&p2, 1e-3);
        s2.step(&mut p2, &g2).unwrap();
        p2.reverse();
        prop_assert_eq!(p1, p2);
    }

    #[test]
    fn auc_ignores_strictly_increasing_maps((s, l) in labelled_scores()) {
        let base = roc_auc(&s, &l).unwrap();
        let exp: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        let affine: Vec<f64> = s.iter().map(|v| 2.0 * v + 3.0).collect();
        prop_assert_eq!(roc_auc(&exp, &l).unwrap(), base);
        prop_assert_eq!(roc_auc(&affine, &l).unwrap(), base);
        prop_assert_eq!(pr_auc(&affine, &l).unwrap(), pr_auc(&s, &l).unwrap());
    }

    #[test]
    fn auc_and_ap_match_brute_force((s, l) in labelled_scores()) {
        prop_assert_eq!(roc_auc(&s, &l).unwrap(), brute_auc(&s, &l));
        let ap = pr_auc(&s, &l).unwrap();
        prop_assert_eq!(ap, brute_ap(&s, &l));
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn negated_scores_complement_auc(
        raw in prop::collection::hash_set(-100_000i64..100_000, 2..60),
        seed in any::<u64>()
    ) {
        let s: Vec<f64> = raw.into_iter().map(|v| v as f64 / 7.0).collect();
        let mut l: Vec<u8> = (0..s.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        l[0] = 0;
        l[1] = 1;
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let total = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn w2_is_a_metric_on_sampled_triples(
        a in (-10.0f64..10.0, 0.0f64..5.0),
        b in (-10.0f64..10.0, 0.0f64..5.0),
        c in (-10.0f64..10.0, 0.0f64..5.0),
    ) {
        prop_assert_eq!(w2_gaussians(a, b), w2_gaussians(b, a));
        prop_assert!(w2_gaussians(a, c) <= w2_gaussians(a, b) + w2_gaussians(b, c) + 1e-12);
        prop_assert_eq!(w2_gaussians(a, a), 0.0);
    }

    #[test]
    fn em_log_likelihood_never_decreases(values in prop::collection::vec(-20.0f64..20.0, 4..200)) {
        prop_assume!(values.iter().any(|&v| v != values[0]));
        let g = fit_gmm1d(&values, 200, 1e-10).unwrap();
        for w in g.log_likelihoods.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!((g.weights[0] + g.weights[1] - 1.0).abs() < 1e-12);
        prop_assert!(g.means[0] <= g.means[1]);
    }

    #[test]
    fn distinct_losses_keep_ceil_rho_n(
        raw in prop::collection::hash_set(-1_000_000i64..1_000_000, 1..300),
        rho in 0.05f64..=1.0
    ) {
        let losses: Vec<f64> = raw.into_iter().map(|v| v as f64 / 1000.0).collect();
        let tau = quantile_threshold(&losses, rho).unwrap();
        let (_, mask) = truncated_loss(&losses, tau).unwrap();
        let x = rho * losses.len() as f64;
        let expect = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() } as usize;
        prop_assert_eq!(mask.iter().filter(|&&m| m).count(), expect.max(1));
    }

    #[test]
    fn shifting_scores_keeps_auc((s, l) in labelled_scores(), c in -1000i32..1000) {
        let shifted: Vec<f64> = s.iter().map(|v| v + f64::from(c)).collect();
        prop_assert_eq!(roc_auc(&shifted, &l).unwrap(), roc_auc(&s, &l).unwrap());
    }
}

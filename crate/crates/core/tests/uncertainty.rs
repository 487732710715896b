mod common;

use cfu_core::nn::{mlp_classifier, Network};
use cfu_core::uncertainty::{
    mc_dropout, mc_dropout_for, softmax_confidence, DistType, LofConfig, LofModel, McDropoutConfig,
    TrustScoreConfig, TrustScoreModel,
};
use common::{blobs_2d, brute_trust, brute_trust_kept, rng, uniform_points, BruteLof};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_net(seed: u64, dropout: f64) -> Network {
    mlp_classifier(5, &[12, 8], 4, dropout, seed).unwrap()
}

#[test]
fn decomposition_identity_holds() {
    let mut r = rng(10);
    for seed in 0..100 {
        let net = random_net(seed, 0.2);
        let x = uniform_points(&mut r, 1, 5).iter().map(|v| 3.0 * v).collect::<Vec<_>>();
        let s = mc_dropout(&net, &x, &McDropoutConfig { passes: 100, seed }).unwrap();
        for c in &s.classes {
            let lhs = c.epistemic + c.aleatoric;
            let rhs = c.mc_mean * (1.0 - c.mc_mean);
            assert!((lhs - rhs).abs() < 1e-9);
            assert!(c.epistemic >= 0.0 && c.aleatoric >= 0.0);
            assert!((c.mc_std * c.mc_std - c.epistemic).abs() < 1e-12);
        }
    }
}

#[test]
fn rate_zero_dropout_has_no_spread() {
    let net = random_net(3, 0.0);
    let s = mc_dropout(&net, &[0.1, 0.2, -0.3, 0.0, 0.5], &McDropoutConfig::default()).unwrap();
    for c in &s.classes {
        assert_eq!(c.mc_std, 0.0);
        assert_eq!(c.epistemic, 0.0);
        assert!((c.mc_mean - c.softmax).abs() < 1e-15);
    }
}

#[test]
fn mc_statistics_match_straight_line_recomputation() {
    use cfu_core::nn::Mode;
    use cfu_core::rng::substream;
    use cfu_core::tensor::Tensor;
    let mut net = random_net(8, 0.3);
    let x = [0.4, -0.2, 0.1, 0.3, -0.5];
    let cfg = McDropoutConfig { passes: 50, seed: 77 };
    let s = mc_dropout(&net, &x, &cfg).unwrap();
    net.set_mode(Mode::McDropout);
    let samples: Vec<Vec<f64>> = (0..50)
        .map(|t| {
            net.forward(&Tensor::from_slice(&x), Some(&mut substream(77, t)))
                .unwrap()
                .into_data()
        })
        .collect();
    for c in 0..4 {
        let mean = samples.iter().map(|p| p[c]).sum::<f64>() / 50.0;
        let var = samples.iter().map(|p| (p[c] - mean).powi(2)).sum::<f64>() / 50.0;
        let alea = samples.iter().map(|p| p[c] * (1.0 - p[c])).sum::<f64>() / 50.0;
        assert!((s.classes[c].mc_mean - mean).abs() < 1e-12);
        assert!((s.classes[c].epistemic - var).abs() < 1e-12);
        assert!((s.classes[c].aleatoric - alea).abs() < 1e-12);
    }
    let again = mc_dropout(&random_net(8, 0.3), &x, &cfg).unwrap();
    assert_eq!(s, again);
    let designated = mc_dropout_for(&random_net(8, 0.3), &x, &cfg, Some(2)).unwrap();
    assert_eq!(designated.mc_mean, s.classes[2].mc_mean);
    assert!(mc_dropout(&net, &x, &McDropoutConfig { passes: 1, seed: 0 }).is_err());
}

#[test]
fn softmax_confidence_is_at_least_uniform() {
    for seed in 0..20 {
        let net = random_net(seed, 0.2);
        let (class, p) = softmax_confidence(&net, &[1.0, -1.0, 0.5, 0.0, 2.0]).unwrap();
        assert!(class < 4);
        assert!(p >= 0.25 - 1e-15 && p <= 1.0);
    }
}

fn three_class_set(seed: u64, n: usize) -> (Vec<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let f = uniform_points(&mut r, n, 2);
    let l = (0..n).map(|_| r.random_range(0..3)).collect();
    (f, l)
}

#[test]
fn trust_scores_match_brute_force() {
    let (f, l) = three_class_set(4, 300);
    let mut r = rng(5);
    for &(alpha, dist_type) in &[(0.0, DistType::Point), (0.1, DistType::Point), (0.25, DistType::Mean)] {
        let cfg = TrustScoreConfig {
            k: 10,
            alpha,
            dist_type,
            ..TrustScoreConfig::default()
        };
        let model = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
        for c in 0..3 {
            let mut kept = model.kept(c).unwrap().to_vec();
            kept.sort_unstable();
            assert_eq!(kept, brute_trust_kept(&f, 2, &l, c, 10, alpha));
        }
        for _ in 0..50 {
            let q = uniform_points(&mut r, 1, 2);
            let pred = r.random_range(0..3);
            let got = model.score(&q, pred).unwrap();
            let want = brute_trust(&f, 2, &l, 10, alpha, dist_type == DistType::Mean, 1e-12, &q, pred);
            assert!((got - want).abs() < 1e-9 * want.max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn alpha_half_keeps_the_five_densest() {
    // 10 points: 5 packed near the origin, 5 spread far out
    let mut f = Vec::new();
    for i in 0..5 {
        f.extend_from_slice(&[0.01 * i as f64, 0.0]);
    }
    for i in 0..5 {
        f.extend_from_slice(&[10.0 + 7.0 * i as f64, 3.0 * i as f64]);
    }
    let mut l = vec![0; 10];
    f.extend_from_slice(&[100.0, 100.0, 101.0, 100.0]);
    l.extend_from_slice(&[1, 1]);
    let cfg = TrustScoreConfig {
        k: 2,
        alpha: 0.5,
        ..TrustScoreConfig::default()
    };
    let model = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
    let mut kept = model.kept(0).unwrap().to_vec();
    kept.sort_unstable();
    assert_eq!(kept, vec![0, 1, 2, 3, 4]);
    let no_filter = TrustScoreModel::fit(&f, 2, &l, &TrustScoreConfig::default()).unwrap();
    assert_eq!(no_filter.kept(0).unwrap().len(), 10);
}

#[test]
fn trust_is_invariant_to_row_order_and_scale() {
    let (f, l) = three_class_set(6, 200);
    let cfg = TrustScoreConfig::default();
    let model = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
    let mut order: Vec<usize> = (0..200).collect();
    order.shuffle(&mut rng(7));
    let f2: Vec<f64> = order.iter().flat_map(|&i| f[2 * i..2 * i + 2].to_vec()).collect();
    let l2: Vec<usize> = order.iter().map(|&i| l[i]).collect();
    let shuffled = TrustScoreModel::fit(&f2, 2, &l2, &cfg).unwrap();
    let scaled_f: Vec<f64> = f.iter().map(|v| v * 7.5).collect();
    let scaled = TrustScoreModel::fit(&scaled_f, 2, &l, &cfg).unwrap();
    let mut r = rng(8);
    for _ in 0..50 {
        let q = uniform_points(&mut r, 1, 2);
        let a = model.score(&q, 1).unwrap();
        assert_eq!(a, shuffled.score(&q, 1).unwrap());
        let qs: Vec<f64> = q.iter().map(|v| v * 7.5).collect();
        assert!((a - scaled.score(&qs, 1).unwrap()).abs() < 1e-9 * a.max(1.0));
    }
}

#[test]
fn trust_on_a_training_point_with_k1_is_huge() {
    let (f, l) = three_class_set(9, 60);
    let cfg = TrustScoreConfig {
        k: 1,
        ..TrustScoreConfig::default()
    };
    let model = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
    assert!(model.score(&f[0..2], l[0]).unwrap() > 1e6);
}

#[test]
fn trust_of_far_cluster_is_lower() {
    let (f, l) = blobs_2d(11, 100);
    let model = TrustScoreModel::fit(&f, 2, &l, &TrustScoreConfig::default()).unwrap();
    let mut r = rng(12);
    let mut inside = 0.0;
    let mut far = 0.0;
    for _ in 0..50 {
        let dx: f64 = r.random_range(-0.3..0.3);
        let dy: f64 = r.random_range(-0.3..0.3);
        inside += model.score(&[-2.0 + dx, dy], 0).unwrap();
        far += model.score(&[0.0 + dx, 6.0 + dy], 0).unwrap();
    }
    assert!(inside > far);
}

#[test]
fn trust_requires_two_classes() {
    let f = [0.0, 1.0, 2.0];
    assert!(matches!(
        TrustScoreModel::fit(&f, 1, &[0, 0, 0], &TrustScoreConfig::default()),
        Err(cfu_core::Error::SingleClass(1))
    ));
}

#[test]
fn small_class_shrinks_k_with_warning() {
    let f = [0.0, 0.1, 0.2, 5.0, 5.1];
    let model = TrustScoreModel::fit(&f, 1, &[0, 0, 0, 1, 1], &TrustScoreConfig::default()).unwrap();
    assert_eq!(model.warnings().len(), 2);
    // k shrinks to 2 for class 1 and 3 for class 0
    let d = model.detail(&[0.0], 0).unwrap();
    assert!((d.predicted_distance - 0.2).abs() < 1e-12);
    assert!((d.other_distance - 5.1).abs() < 1e-12);
}

#[test]
fn lof_matches_brute_force() {
    let mut r = rng(13);
    let points = uniform_points(&mut r, 400, 4);
    let model = LofModel::fit(&points, 4, &LofConfig::default()).unwrap();
    let brute = BruteLof::fit(&points, 4, 10);
    for (a, b) in model.lrd().iter().zip(&brute.lrd) {
        assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
    }
    for _ in 0..50 {
        let q: Vec<f64> = uniform_points(&mut r, 1, 4).iter().map(|v| 1.5 * v).collect();
        let got = model.score(&q).unwrap().lof;
        let want = brute.score(&q);
        assert!((got - want).abs() < 1e-9 * want.max(1.0));
    }
}

#[test]
fn lof_on_dense_duplicate_and_far_point() {
    let (f, _) = blobs_2d(14, 150);
    let model = LofModel::fit(&f, 2, &LofConfig::default()).unwrap();
    // the training point with the smallest k-distance sits in the densest spot
    let densest = (0..300)
        .min_by(|&a, &b| model.k_distances()[a].total_cmp(&model.k_distances()[b]))
        .unwrap();
    let s = model.score(&f[2 * densest..2 * densest + 2]).unwrap();
    assert!((s.lof - 1.0).abs() < 0.5, "lof {}", s.lof);
    assert!(!s.is_outlier);
    let radius = f.chunks(2).map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let far = model.score(&[100.0 * radius, 0.0]).unwrap();
    assert!(far.lof > 1.5 && far.is_outlier);
}

#[test]
fn lof_is_scale_free() {
    let mut r = rng(15);
    let points = uniform_points(&mut r, 200, 3);
    let scaled: Vec<f64> = points.iter().map(|v| v * 4.0).collect();
    let a = LofModel::fit(&points, 3, &LofConfig::default()).unwrap();
    let b = LofModel::fit(&scaled, 3, &LofConfig::default()).unwrap();
    for _ in 0..20 {
        let q = uniform_points(&mut r, 1, 3);
        let qs: Vec<f64> = q.iter().map(|v| v * 4.0).collect();
        let (la, lb) = (a.score(&q).unwrap().lof, b.score(&qs).unwrap().lof);
        assert!((la - lb).abs() < 1e-6 * la, "{la} vs {lb}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trust_scores_are_positive_and_match_oracle(seed in 0u64..5000, k in 1usize..6) {
        let (f, l) = three_class_set(seed, 45);
        let cfg = TrustScoreConfig { k, ..TrustScoreConfig::default() };
        let model = TrustScoreModel::fit(&f, 2, &l, &cfg).unwrap();
        let mut r = rng(seed + 1);
        let q = uniform_points(&mut r, 1, 2);
        let got = model.score(&q, 0).unwrap();
        prop_assert!(got > 0.0);
        let want = brute_trust(&f, 2, &l, k, 0.0, false, 1e-12, &q, 0);
        prop_assert!((got - want).abs() < 1e-9 * want.max(1.0));
    }

    #[test]
    fn mc_decomposition_any_pass_count(seed in 0u64..1000, passes in 2usize..40) {
        let net = random_net(seed, 0.5);
        let s = mc_dropout(&net, &[0.3, -0.3, 1.0, 0.2, -1.0], &McDropoutConfig { passes, seed }).unwrap();
        for c in &s.classes {
            prop_assert!((c.epistemic + c.aleatoric - c.mc_mean * (1.0 - c.mc_mean)).abs() < 1e-9);
        }
    }
}

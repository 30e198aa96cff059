#![allow(dead_code)]

use altbi::data::{gen_synthetic, minmax_scale, Dataset, OutlierMode, SynthSpec};
use altbi::iwae::{Architecture, IwaeModel};
use altbi::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outliers uniform over a widened box, at least 3 std-devs from every inlier mean.
pub fn separable(n: usize, alpha: f64, seed: u64) -> Dataset {
    let (ds, _) = gen_synthetic(&SynthSpec::new(n, 10, alpha, seed)).unwrap();
    minmax_scale(&ds)
}

/// Outliers from one Gaussian cluster a moderate distance from the inliers.
pub fn clustered(n: usize, alpha: f64, seed: u64) -> Dataset {
    let mut spec = SynthSpec::new(n, 10, alpha, seed);
    spec.outliers = OutlierMode::ShiftedGaussian { shift: 5.0, scale: 1.5 };
    let (ds, _) = gen_synthetic(&spec).unwrap();
    minmax_scale(&ds)
}

/// Small random IWAE with a random input row and fixed noise.
///
/// Biases are drawn too: with zero biases a fully inactive hidden layer puts
/// the next pre-activation exactly on the ReLU kink, where central
/// differences see half a slope and no derivative exists.
pub fn tiny_case(seed: u64) -> (IwaeModel, Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=8);
    let arch = Architecture {
        input_dim: d,
        latent_dim: rng.random_range(1..=4),
        encoder_hidden: vec![6, 5],
        decoder_hidden: vec![5, 6],
        k: rng.random_range(1..=3),
    };
    let mut model = IwaeModel::new(arch, &mut rng).unwrap();
    for (i, p) in model.params_mut().iter_mut().enumerate() {
        if i % 2 == 1 {
            p.as_mut_slice().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    let x = Tensor::from_vec(1, d, (0..d).map(|_| rng.random::<f64>()).collect());
    let eps = model.draw_noise(1, &mut rng);
    (model, x, eps)
}

/// Worst violation of `|a - f| <= 1e-4 * max(|a|, |f|)` (or `<= 1e-8`) over
/// every parameter entry, comparing tape gradients with central differences.
/// Returns `(violations, checked)`.
pub fn fd_gradient_check(model: &IwaeModel, x: &Tensor, eps: &Tensor) -> (usize, usize) {
    let mut g = model.loss_graph(x, eps).unwrap();
    let root = g.tape.sum(g.losses);
    let grads = g.tape.backward(root).unwrap();
    let analytic: Vec<Tensor> = g.params.iter().map(|&p| grads.wrt(p)).collect();

    let h = 1e-5;
    let loss = |m: &IwaeModel| m.losses_with_noise(x, eps).unwrap().iter().sum::<f64>();
    let mut violations = 0;
    let mut checked = 0;
    for (pi, a) in analytic.iter().enumerate() {
        for j in 0..a.len() {
            let mut plus = model.clone();
            plus.params_mut()[pi].as_mut_slice()[j] += h;
            let mut minus = model.clone();
            minus.params_mut()[pi].as_mut_slice()[j] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let an = a.as_slice()[j];
            let diff = (an - fd).abs();
            if diff > 1e-4 * an.abs().max(fd.abs()) && diff > 1e-8 {
                violations += 1;
            }
            checked += 1;
        }
    }
    (violations, checked)
}

/// O(n^2) pair count: concordant + half of tied pairs.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Threshold sweep over distinct scores, highest first.
pub fn brute_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(labels).filter(|(s, &y)| **s >= t && y == 1).count() as f64;
        let predicted = scores.iter().filter(|s| **s >= t).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Random scores on a coarse grid (so ties occur) with both classes present.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> (Vec<f64>, Vec<u8>) {
    let n = rng.random_range(2..=max_n);
    let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
    labels[0] = 1;
    labels[1] = 0;
    let scores = (0..n).map(|_| f64::from(rng.random_range(0..8)) / 4.0).collect();
    (scores, labels)
}

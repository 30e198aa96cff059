mod common;

use altbi::iwae::{Architecture, IwaeModel};
use altbi::optim::global_norm;
use altbi::tensor::Tensor;
use common::{fd_gradient_check, tiny_case};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn tape_gradients_match_finite_differences() {
    for seed in 0..20 {
        let (model, x, eps) = tiny_case(seed);
        let (bad, n) = fd_gradient_check(&model, &x, &eps);
        assert_eq!(bad, 0, "seed {seed}: {bad} of {n} entries off");
    }
}

#[test]
fn more_importance_samples_tighten_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let arch = Architecture::for_input(6);
    let m1 = IwaeModel::new(Architecture { k: 1, ..arch }, &mut rng).unwrap();
    let m5 = m1.with_k(5).unwrap();
    let x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
    let xt = Tensor::from_vec(1, 6, x);
    let reps = 10_000;
    let stats = |m: &IwaeModel, rng: &mut ChaCha8Rng| {
        let rows = Tensor::from_rows(&vec![xt.row(0).to_vec(); reps]);
        let l = m.batch_losses(&rows, rng).unwrap();
        let mean = l.iter().sum::<f64>() / reps as f64;
        let var = l.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (mean, (var / reps as f64).sqrt())
    };
    let (mean1, se1) = stats(&m1, &mut rng);
    let (mean5, _) = stats(&m5, &mut rng);
    assert!(mean5 <= mean1 + 3.0 * se1, "K=5 {mean5} vs K=1 {mean1} (se {se1})");
}

fn loss_and_grad(model: &IwaeModel, x: &Tensor, eps: &Tensor) -> (f64, Vec<Tensor>) {
    let mut g = model.loss_graph(x, eps).unwrap();
    let root = g.tape.sum(g.losses);
    let value = g.tape.value(root).as_slice()[0];
    let grads = g.tape.backward(root).unwrap();
    (value, g.params.iter().map(|&p| grads.wrt(p)).collect())
}

#[test]
fn gradient_norms_are_bounded_on_the_unit_cube() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sup: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..=12);
        let model = IwaeModel::new(Architecture::for_input(d), &mut rng).unwrap();
        let x = Tensor::from_vec(1, d, (0..d).map(|_| rng.random::<f64>()).collect());
        let eps = model.draw_noise(1, &mut rng);
        let (_, g) = loss_and_grad(&model, &x, &eps);
        let norm = global_norm(&g);
        assert!(norm.is_finite());
        sup = sup.max(norm);
    }
    println!("empirical sup of per-sample gradient norm over 100 models: {sup:.3}");
}

#[test]
fn loss_changes_at_most_linearly_in_small_parameter_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let model = IwaeModel::new(Architecture::for_input(5), &mut rng).unwrap();
        let x = Tensor::from_vec(1, 5, (0..5).map(|_| rng.random::<f64>()).collect());
        let eps = model.draw_noise(1, &mut rng);
        let (l0, g) = loss_and_grad(&model, &x, &eps);
        let g_norm = global_norm(&g);

        let mut moved = model.clone();
        let mut step_sq = 0.0;
        for p in moved.params_mut() {
            for v in p.as_mut_slice() {
                let dv = 1e-6 * (rng.random::<f64>() - 0.5);
                *v += dv;
                step_sq += dv * dv;
            }
        }
        let l1 = moved.losses_with_noise(&x, &eps).unwrap()[0];
        // first-order bound with a factor 2 for curvature over the tiny step
        assert!((l1 - l0).abs() <= 2.0 * g_norm * step_sq.sqrt() + 1e-12);
    }
}

#[test]
fn fixed_noise_losses_are_deterministic() {
    let (model, x, eps) = tiny_case(77);
    let a = model.losses_with_noise(&x, &eps).unwrap();
    let b = model.losses_with_noise(&x, &eps).unwrap();
    assert_eq!(a[0].to_bits(), b[0].to_bits());
}

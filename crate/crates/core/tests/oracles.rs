//! Independent checks of the network substrate: a second forward-pass
//! implementation, finite-difference gradients, the exact Hessian diagonal
//! and a separable fitting run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use shortcut_unlearn::data::{BiasedSample, DatasetSplit, SplitRole};
use shortcut_unlearn::eval::subset_accuracy;
use shortcut_unlearn::nn::{
    forward, grad, hessian_diag, loss, sgd_train, Activation, Batch, HessianEstimator, MlpSpec,
    Params, TrainConfig,
};

fn gaussian_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Plain nested-loop forward pass over the documented layout
/// (each layer: row-major `out x in` weights, then `out` biases).
fn reference_logits(theta: &[f64], dims: &[usize], act: Activation, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &theta[off..off + n_in * n_out];
        let b = &theta[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut z = vec![0.0; n_out];
        for o in 0..n_out {
            let mut s = b[o];
            for i in 0..n_in {
                s += w[o * n_in + i] * a[i];
            }
            z[o] = s;
        }
        if l + 2 < dims.len() {
            for v in z.iter_mut() {
                *v = match act {
                    Activation::Tanh => v.tanh(),
                    Activation::Relu => v.max(0.0),
                };
            }
        }
        a = z;
    }
    assert_eq!(off, theta.len());
    a
}

#[test]
fn forward_matches_reference_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (case, act) in [Activation::Tanh, Activation::Relu].into_iter().enumerate() {
        let dims = [7, 9, 5, 3];
        let spec = MlpSpec::new(7, vec![9, 5], 3, act).unwrap();
        let params = Params::<f64>::init(&spec, 40 + case as u64);
        for x in gaussian_inputs(&mut rng, 25, 7) {
            let got = forward(&params, &x).unwrap().logits;
            let want = reference_logits(params.values(), &dims, act, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
            }
        }
    }
}

fn central_difference(params: &Params<f64>, batch: &Batch<'_, f64>, h: f64) -> Vec<f64> {
    let mut theta = params.values().to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + h;
            let up = loss(&params.with_values(theta.clone()).unwrap(), batch).unwrap();
            theta[i] = orig - h;
            let down = loss(&params.with_values(theta.clone()).unwrap(), batch).unwrap();
            theta[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for case in 0..24u64 {
        let input = rng.random_range(2..12);
        let hidden: Vec<usize> = (0..rng.random_range(0..3))
            .map(|_| rng.random_range(1..16))
            .collect();
        let k = rng.random_range(2..6);
        let act = if case % 3 == 2 {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let spec = MlpSpec::new(input, hidden, k, act).unwrap();
        assert!(spec.param_count() <= 1000);
        let params = Params::<f64>::init(&spec, case);
        let n = rng.random_range(1..=16);
        let xs = gaussian_inputs(&mut rng, n, input);
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();
        let g = grad(&params, &batch).unwrap();
        let fd = central_difference(&params, &batch, 1e-5);
        worst = worst.max(max_relative_error(&g.values, &fd));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn hutchinson_agrees_with_exact_diagonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spec = MlpSpec::new(8, vec![16], 4, Activation::Tanh).unwrap();
    assert!(spec.param_count() <= 300);
    let params = Params::<f64>::init(&spec, 9);
    let xs = gaussian_inputs(&mut rng, 16, 8);
    let ys: Vec<usize> = (0..16).map(|i| i % 4).collect();
    let batch = Batch::new(xs.iter().map(Vec::as_slice).collect(), ys).unwrap();

    let exact = hessian_diag(&params, &batch, HessianEstimator::ExactFd, 1e-3, 0).unwrap();
    let est = hessian_diag(
        &params,
        &batch,
        HessianEstimator::Hutchinson { probes: 512 },
        1e-3,
        17,
    )
    .unwrap();
    let rms = (exact.values.iter().map(|v| v * v).sum::<f64>() / exact.values.len() as f64).sqrt();
    let mut rel: Vec<f64> = exact
        .values
        .iter()
        .zip(&est.values)
        .filter(|(e, _)| e.abs() >= 0.01 * rms)
        .map(|(e, h)| (h - e).abs() / e.abs())
        .collect();
    assert!(rel.len() > 10);
    rel.sort_by(f64::total_cmp);
    let median = rel[rel.len() / 2];
    assert!(median <= 0.2, "median relative error {median}");
}

#[test]
fn separable_two_class_data_is_fitted() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let samples: Vec<BiasedSample<f64>> = (0..200)
        .map(|i| {
            let y = i % 2;
            let sign = if y == 0 { -1.0 } else { 1.0 };
            let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            x[0] = sign * rng.random_range(0.2..1.5);
            BiasedSample {
                x,
                y,
                b: y,
                aligned: true,
            }
        })
        .collect();
    let data = DatasetSplit::new(samples, SplitRole::Train, 2, 2, 2).unwrap();
    let spec = MlpSpec::new(4, vec![8], 2, Activation::Tanh).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        lr: 0.1,
        batch_size: 16,
        seed: 1,
    };
    let (fit, _) = sgd_train(&Params::init(&spec, 2), &data, &cfg, &[]).unwrap();
    assert!(subset_accuracy(&fit, &data).unwrap() >= 99.0);
}

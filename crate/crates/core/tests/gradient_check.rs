//! Backpropagation against a central finite-difference oracle with
//! quantization off.

use ibq_core::linalg::Matrix;
use ibq_core::qnet::{init_network, Activation, LayerSpec, Network, NetworkSpec, QuantState, Shape};
use ibq_core::rng;

const STEP: f64 = 1e-5;

fn batch_loss(net: &mut Network, batch: &Matrix, labels: &[usize]) -> f64 {
    let mut quant = QuantState::new(&net.spec);
    let f = net.forward_train(batch, &mut quant).unwrap();
    let out = f.output();
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        total -= out.get(i, l).ln();
    }
    total / labels.len() as f64
}

/// Central finite difference for every parameter of every layer.
fn numeric_gradients(net: &mut Network, batch: &Matrix, labels: &[usize]) -> Vec<(usize, Vec<f64>)> {
    let mut grads = Vec::new();
    for layer in 0..net.spec.layers.len() {
        let Some(p) = net.params(layer) else { continue };
        let n_weights = p.weights.rows() * p.weights.cols();
        let n_bias = p.bias.len();
        let mut layer_grads = Vec::with_capacity(n_weights + n_bias);
        for idx in 0..n_weights + n_bias {
            let read = |net: &Network| {
                let p = net.params(layer).unwrap();
                if idx < n_weights {
                    p.weights.as_slice()[idx]
                } else {
                    p.bias[idx - n_weights]
                }
            };
            let write = |net: &mut Network, v: f64| {
                let p = net.params_mut(layer).unwrap();
                if idx < n_weights {
                    p.weights.as_mut_slice()[idx] = v;
                } else {
                    p.bias[idx - n_weights] = v;
                }
            };
            let original = read(net);
            write(net, original + STEP);
            let plus = batch_loss(net, batch, labels);
            write(net, original - STEP);
            let minus = batch_loss(net, batch, labels);
            write(net, original);
            layer_grads.push((plus - minus) / (2.0 * STEP));
        }
        grads.push((layer, layer_grads));
    }
    grads
}

fn max_relative_error(net: &mut Network, batch: &Matrix, labels: &[usize]) -> f64 {
    let mut quant = QuantState::new(&net.spec);
    let forward = net.forward_train(batch, &mut quant).unwrap();
    let analytic = net.backward(&forward, labels).unwrap();
    let numeric = numeric_gradients(net, batch, labels);

    let mut worst = 0.0f64;
    for (layer, nums) in numeric {
        let a = analytic[layer].as_ref().unwrap();
        let flat: Vec<f64> = a
            .weights
            .as_slice()
            .iter()
            .chain(&a.bias)
            .copied()
            .collect();
        assert_eq!(flat.len(), nums.len());
        for (&g_bp, &g_fd) in flat.iter().zip(&nums) {
            let rel = (g_bp - g_fd).abs() / g_bp.abs().max(g_fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::rng_from_seed(seed);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng::uniform_unit(&mut r).round();
    }
    m
}

#[test]
fn backprop_matches_finite_differences_tanh() {
    let spec = NetworkSpec::dense(12, &[4], Activation::Tanh, 2, ibq_core::QuantBits::Off, 0);
    let mut net = init_network(&spec, 11).unwrap();
    let batch = random_batch(16, 12, 5);
    let labels: Vec<usize> = (0..16).map(|i| i % 2).collect();
    let err = max_relative_error(&mut net, &batch, &labels);
    println!("tanh 12-4-2 max relative error: {err:.3e}");
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn backprop_matches_finite_differences_relu() {
    let spec = NetworkSpec::dense(12, &[4], Activation::Relu, 2, ibq_core::QuantBits::Off, 0);
    let mut net = init_network(&spec, 13).unwrap();
    let batch = random_batch(16, 12, 7);
    let labels: Vec<usize> = (0..16).map(|i| (i / 2) % 2).collect();

    // The finite-difference oracle is only valid away from the ReLU kink:
    // check every hidden pre-activation has margin well above the step.
    let p = net.params(0).unwrap();
    let mut pre = batch.matmul(&p.weights);
    pre.add_row_vector(&p.bias);
    let margin = pre
        .as_slice()
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    assert!(margin > 1e-3, "pre-activation margin {margin} too small for the oracle");

    let err = max_relative_error(&mut net, &batch, &labels);
    println!("relu 12-4-2 max relative error: {err:.3e}");
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn backprop_matches_finite_differences_conv() {
    let spec = NetworkSpec {
        input_shape: Shape::Image { h: 6, w: 6, c: 1 },
        layers: vec![
            LayerSpec::Conv {
                kernel_h: 3,
                kernel_w: 3,
                channels: 2,
                activation: Activation::Relu,
            },
            LayerSpec::MaxPool { h: 2, w: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                width: 3,
                activation: Activation::Tanh,
            },
            LayerSpec::Dense {
                width: 2,
                activation: Activation::Softmax,
            },
        ],
        quant_bits: ibq_core::QuantBits::Off,
        seed: 0,
    };
    let mut net = init_network(&spec, 17).unwrap();
    // Continuous inputs keep pooling argmaxes and ReLU signs stable under
    // the probe step.
    let mut r = rng::rng_from_seed(23);
    let mut batch = Matrix::zeros(8, 36);
    for v in batch.as_mut_slice() {
        *v = rng::uniform_unit(&mut r);
    }
    let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
    let err = max_relative_error(&mut net, &batch, &labels);
    println!("conv net max relative error: {err:.3e}");
    assert!(err < 1e-4, "max relative error {err}");
}

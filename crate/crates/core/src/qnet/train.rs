//! One training epoch: seeded mini-batch shuffle, quantized forward,
//! straight-through backward, Adam.

use super::network::{argmax_row, cross_entropy, Network};
use super::quantizer::QuantState;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Mean loss and accuracy accumulated over the epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
}

/// Run one epoch: reset the quantization ranges, visit the training set in a
/// deterministic shuffled order in batches of `batch_size` (the final batch
/// may be smaller), and apply one Adam step per batch.
pub fn train_epoch(
    net: &mut Network,
    quant: &mut QuantState,
    train: &Dataset,
    batch_size: usize,
    learning_rate: f64,
    shuffle_seed: u64,
) -> Result<EpochStats> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    quant.reset();
    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::rng_from_seed(shuffle_seed);
    rng::shuffle(&mut r, &mut order);

    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in order.chunks(batch_size) {
        let batch = train.inputs.select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
        let forward = net.forward_train(&batch, quant)?;
        let out = forward.output();
        loss_sum += cross_entropy(out, &labels) * labels.len() as f64;
        for (i, &label) in labels.iter().enumerate() {
            if argmax_row(out.row(i)) == label {
                correct += 1;
            }
        }
        let grads = net.backward(&forward, &labels)?;
        net.adam_step(&grads, learning_rate)?;
    }
    Ok(EpochStats {
        loss: loss_sum / n as f64,
        accuracy: correct as f64 / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;
    use crate::qnet::{init_network, Activation, NetworkSpec, QuantBits};

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = gen_synthetic(0);
        let spec = NetworkSpec::dense(12, &[5], Activation::Tanh, 2, QuantBits::Bits(8), 0);
        let mut net = init_network(&spec, 2).unwrap();
        let before = net.clone();
        let mut quant = QuantState::new(&spec);
        train_epoch(&mut net, &mut quant, &data, 256, 0.0, 7).unwrap();
        for i in 0..net.spec.layers.len() {
            assert_eq!(net.params(i), before.params(i));
        }
    }

    #[test]
    fn uniform_softmax_loss_is_ln2_on_balanced_binary_data() {
        let data = gen_synthetic(0);
        let spec = NetworkSpec::dense(12, &[5], Activation::Tanh, 2, QuantBits::Off, 0);
        let mut net = init_network(&spec, 2).unwrap();
        // Zero output-layer weights give an exactly uniform softmax.
        let last = net.spec.layers.len() - 1;
        net.params_mut(last).unwrap().weights.as_mut_slice().fill(0.0);
        let mut quant = QuantState::new(&spec);
        let stats = train_epoch(&mut net, &mut quant, &data, 256, 0.0, 7).unwrap();
        assert!(
            (stats.loss - std::f64::consts::LN_2).abs() < 1e-12,
            "loss {} not ln 2",
            stats.loss
        );
        assert_eq!(stats.accuracy, 0.5);
    }

    #[test]
    fn full_epoch_is_deterministic() {
        let data = gen_synthetic(0);
        let spec = NetworkSpec::dense(12, &[5, 3], Activation::Relu, 2, QuantBits::Bits(8), 0);
        let mut run = || {
            let mut net = init_network(&spec, 2).unwrap();
            let mut quant = QuantState::new(&spec);
            let mut stats = Vec::new();
            for epoch in 0..3u64 {
                stats.push(train_epoch(&mut net, &mut quant, &data, 256, 1e-3, epoch).unwrap());
            }
            (net, stats)
        };
        let (net_a, stats_a) = run();
        let (net_b, stats_b) = run();
        assert_eq!(net_a, net_b);
        assert_eq!(stats_a, stats_b);
    }

    #[test]
    fn training_fits_a_learnable_labeling() {
        // Label = first input bit: linearly separable, learned quickly.
        let mut data = gen_synthetic(0);
        data.labels = (0..data.len())
            .map(|i| usize::from(data.inputs.get(i, 0) != 0.0))
            .collect();
        let spec = NetworkSpec::dense(12, &[10, 7], Activation::Tanh, 2, QuantBits::Bits(8), 0);
        let mut net = init_network(&spec, 3).unwrap();
        let mut quant = QuantState::new(&spec);
        let first = train_epoch(&mut net, &mut quant, &data, 256, 1e-2, 0).unwrap();
        let mut last = first;
        for epoch in 1..30u64 {
            last = train_epoch(&mut net, &mut quant, &data, 256, 1e-2, epoch).unwrap();
        }
        assert!(last.loss < first.loss);
        assert!(last.accuracy > 0.95, "accuracy {}", last.accuracy);
    }
}

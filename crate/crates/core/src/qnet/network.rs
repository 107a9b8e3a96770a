//! Network state, fake-quantized forward passes, straight-through backward
//! passes, and the Adam update.

use serde::{Deserialize, Serialize};

use super::quantizer::{quantize, QuantState};
use super::record::CodeBlock;
use super::{Activation, LayerSpec, NetworkSpec, QuantBits, Shape};
use crate::data::stream;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

/// Weights and bias of one parametric layer.
///
/// Dense: `weights` is `in x out`. Conv: `weights` is `(kh*kw*cin) x cout`
/// with row index `(dy*kw + dx)*cin + ci`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AdamSlot {
    mw: Matrix,
    vw: Matrix,
    mb: Vec<f64>,
    vb: Vec<f64>,
}

/// A live network: spec, full-precision parameters, and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetworkSpec,
    params: Vec<Option<LayerParams>>,
    adam: Vec<Option<AdamSlot>>,
    /// Adam step counter.
    pub step: u64,
    #[serde(skip, default)]
    shapes: Vec<Shape>,
}

/// Adam hyperparameters fixed across all experiments.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Initialize a network: weights from a truncated normal (mean 0, standard
/// deviation `1/sqrt(d_T)` for a layer with `d_T` neurons, resampled beyond
/// two standard deviations), biases and Adam moments zero.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<Network> {
    let shapes = spec.layer_shapes()?;
    let mut r = rng::rng_from_seed(rng::derive_seed(seed, &[stream::INIT]));
    let mut params = Vec::with_capacity(spec.layers.len());
    let mut adam = Vec::with_capacity(spec.layers.len());
    let mut in_shape = spec.input_shape;
    for (layer, &out_shape) in spec.layers.iter().zip(&shapes) {
        let dims = match *layer {
            LayerSpec::Dense { width, .. } => Some((in_shape.units(), width, width)),
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                channels,
                ..
            } => {
                let Shape::Image { c: cin, .. } = in_shape else {
                    unreachable!("validated spec");
                };
                Some((kernel_h * kernel_w * cin, channels, channels))
            }
            LayerSpec::MaxPool { .. } | LayerSpec::Flatten => None,
        };
        match dims {
            Some((rows, cols, d_t)) => {
                let std_dev = 1.0 / (d_t as f64).sqrt();
                let mut weights = Matrix::zeros(rows, cols);
                for w in weights.as_mut_slice() {
                    *w = rng::truncated_normal(&mut r, std_dev);
                }
                params.push(Some(LayerParams {
                    weights,
                    bias: vec![0.0; cols],
                }));
                adam.push(Some(AdamSlot {
                    mw: Matrix::zeros(rows, cols),
                    vw: Matrix::zeros(rows, cols),
                    mb: vec![0.0; cols],
                    vb: vec![0.0; cols],
                }));
            }
            None => {
                params.push(None);
                adam.push(None);
            }
        }
        in_shape = out_shape;
    }
    Ok(Network {
        spec: spec.clone(),
        params,
        adam,
        step: 0,
        shapes,
    })
}

/// Output of one layer for one batch.
#[derive(Debug)]
pub struct LayerOutput {
    /// Post-activation values before quantization. Empty for pool/flatten.
    pub continuous: Matrix,
    /// What the next layer actually consumes: dequantized activations when
    /// quantization is on, `continuous` otherwise.
    pub observed: Matrix,
    /// Discrete activation codes (record mode with quantization on).
    pub codes: Option<CodeBlock>,
    /// Quantization range in effect when this layer was quantized.
    pub range: Option<(f64, f64)>,
    /// Flat argmax index per pooled output unit, for gradient routing.
    pool_argmax: Option<Vec<u32>>,
}

/// All per-layer outputs of one forward pass.
#[derive(Debug)]
pub struct Forward {
    pub input: Matrix,
    pub layers: Vec<LayerOutput>,
}

impl Forward {
    /// Continuous softmax output of the final layer.
    pub fn output(&self) -> &Matrix {
        &self.layers.last().expect("nonempty network").continuous
    }
}

enum QuantAccess<'a> {
    Train(&'a mut QuantState),
    Record(&'a QuantState),
}

/// Per-layer weight/bias gradients, aligned with `spec.layers`.
pub type Gradients = Vec<Option<LayerParams>>;

impl Network {
    fn ensure_shapes(&mut self) {
        if self.shapes.is_empty() {
            self.shapes = self.spec.layer_shapes().expect("checkpointed spec validates");
        }
    }

    pub fn params(&self, layer: usize) -> Option<&LayerParams> {
        self.params[layer].as_ref()
    }

    pub fn params_mut(&mut self, layer: usize) -> Option<&mut LayerParams> {
        self.params[layer].as_mut()
    }

    pub fn shapes(&mut self) -> &[Shape] {
        self.ensure_shapes();
        &self.shapes
    }

    /// Training-mode forward pass: ranges are widened with each batch before
    /// its activations are quantized.
    pub fn forward_train(&mut self, batch: &Matrix, quant: &mut QuantState) -> Result<Forward> {
        self.ensure_shapes();
        self.forward_impl(batch, QuantAccess::Train(quant), false)
    }

    /// Record-mode forward pass with frozen ranges; optionally collects the
    /// discrete activation codes.
    pub fn forward_record(
        &mut self,
        batch: &Matrix,
        quant: &QuantState,
        collect_codes: bool,
    ) -> Result<Forward> {
        self.ensure_shapes();
        self.forward_impl(batch, QuantAccess::Record(quant), collect_codes)
    }

    fn forward_impl(
        &self,
        batch: &Matrix,
        mut quant: QuantAccess,
        collect_codes: bool,
    ) -> Result<Forward> {
        let input_units = self.spec.input_shape.units();
        if batch.cols() != input_units {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} columns, network expects {input_units}",
                batch.cols()
            )));
        }
        let n = batch.rows();
        let bits = self.spec.quant_bits;
        let mut layers: Vec<LayerOutput> = Vec::with_capacity(self.spec.layers.len());
        let mut in_shape = self.spec.input_shape;

        for (i, layer) in self.spec.layers.iter().enumerate() {
            let prev: &Matrix = layers.last().map_or(batch, |l| &l.observed);
            let out = match *layer {
                LayerSpec::Dense { activation, .. } => {
                    let p = self.params[i].as_ref().expect("dense layer has params");
                    let mut pre = prev.matmul(&p.weights);
                    pre.add_row_vector(&p.bias);
                    apply_activation(&mut pre, activation);
                    self.quantize_layer(i, pre, &mut quant, bits, collect_codes)?
                }
                LayerSpec::Conv { activation, .. } => {
                    let p = self.params[i].as_ref().expect("conv layer has params");
                    let mut pre = conv_forward(prev, in_shape, self.shapes[i], *layer, p);
                    apply_activation(&mut pre, activation);
                    self.quantize_layer(i, pre, &mut quant, bits, collect_codes)?
                }
                LayerSpec::MaxPool { h, w } => {
                    let (observed, argmax) = maxpool_forward(prev, in_shape, self.shapes[i], h, w);
                    let codes = match (collect_codes, layers.last().and_then(|l| l.codes.as_ref()))
                    {
                        (true, Some(prev_codes)) => {
                            Some(maxpool_codes(prev_codes, &argmax, observed.cols()))
                        }
                        _ => None,
                    };
                    let range = layers.last().and_then(|l| l.range);
                    LayerOutput {
                        continuous: Matrix::zeros(0, 0),
                        observed,
                        codes,
                        range,
                        pool_argmax: Some(argmax),
                    }
                }
                LayerSpec::Flatten => LayerOutput {
                    continuous: Matrix::zeros(0, 0),
                    observed: prev.clone(),
                    codes: layers.last().and_then(|l| l.codes.clone()),
                    range: layers.last().and_then(|l| l.range),
                    pool_argmax: None,
                },
            };
            debug_assert_eq!(out.observed.rows(), n);
            in_shape = self.shapes[i];
            layers.push(out);
        }
        Ok(Forward {
            input: batch.clone(),
            layers,
        })
    }

    fn quantize_layer(
        &self,
        i: usize,
        continuous: Matrix,
        quant: &mut QuantAccess,
        bits: QuantBits,
        collect_codes: bool,
    ) -> Result<LayerOutput> {
        let QuantBits::Bits(k) = bits else {
            return Ok(LayerOutput {
                observed: continuous.clone(),
                continuous,
                codes: None,
                range: None,
                pool_argmax: None,
            });
        };
        let range = match quant {
            QuantAccess::Train(q) => {
                if let Some((lo, hi)) = continuous.min_max() {
                    q.observe(i, lo, hi);
                }
                q.range(i)
            }
            QuantAccess::Record(q) => q.range(i),
        };
        let Some((lo, hi)) = range else {
            return Err(Error::InvalidArgument(format!(
                "record-mode forward at layer {i} without a tracked quantization range"
            )));
        };
        let mut observed = continuous.clone();
        let mut codes = collect_codes.then(|| CodeBlock::new(observed.cols(), k));
        match &mut codes {
            Some(block) => quantize(&mut observed, k, lo, hi, |c| block.push(c)),
            None => quantize(&mut observed, k, lo, hi, |_| {}),
        }
        Ok(LayerOutput {
            continuous,
            observed,
            codes,
            range: Some((lo, hi)),
            pool_argmax: None,
        })
    }

    /// Gradients of the mean cross-entropy loss for one forward pass.
    ///
    /// The quantizer back-propagates as the identity inside the tracked
    /// range and zero outside (straight-through); activation derivatives use
    /// the continuous activations, and weight gradients use the dequantized
    /// inputs each layer actually consumed.
    pub fn backward(&mut self, forward: &Forward, labels: &[usize]) -> Result<Gradients> {
        self.ensure_shapes();
        let n = forward.input.rows();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} batch rows vs {} labels",
                labels.len()
            )));
        }
        let classes = self.spec.num_classes();
        let last = self.spec.layers.len() - 1;

        // Softmax + cross-entropy: delta at the output pre-activation.
        let softmax = &forward.layers[last].continuous;
        let mut delta = softmax.clone();
        let inv_n = 1.0 / n as f64;
        for (row, &label) in labels.iter().enumerate() {
            debug_assert!(label < classes);
            let r = delta.row_mut(row);
            r[label] -= 1.0;
            for v in r.iter_mut() {
                *v *= inv_n;
            }
        }

        let mut grads: Gradients = vec![None; self.spec.layers.len()];
        for i in (0..=last).rev() {
            let prev_obs: &Matrix = if i == 0 {
                &forward.input
            } else {
                &forward.layers[i - 1].observed
            };
            let in_shape = if i == 0 {
                self.spec.input_shape
            } else {
                self.shapes[i - 1]
            };
            // Gradient w.r.t. this layer's input (the previous observed
            // activations); None once we reach layer 0.
            let d_prev: Option<Matrix> = match self.spec.layers[i] {
                LayerSpec::Dense { .. } => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let dw = prev_obs.matmul_transpose_self(&delta);
                    let db = delta.column_sums();
                    let d = (i > 0).then(|| delta.matmul_transpose_rhs(&p.weights));
                    grads[i] = Some(LayerParams {
                        weights: dw,
                        bias: db,
                    });
                    d
                }
                LayerSpec::Conv { .. } => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let (dw, db, d) = conv_backward(
                        &delta,
                        prev_obs,
                        in_shape,
                        self.shapes[i],
                        self.spec.layers[i],
                        p,
                        i > 0,
                    );
                    grads[i] = Some(LayerParams {
                        weights: dw,
                        bias: db,
                    });
                    d
                }
                LayerSpec::MaxPool { .. } => {
                    let argmax = forward.layers[i]
                        .pool_argmax
                        .as_ref()
                        .expect("pool argmax recorded");
                    (i > 0).then(|| maxpool_backward(&delta, argmax, in_shape.units()))
                }
                LayerSpec::Flatten => (i > 0).then(|| delta.clone()),
            };

            let Some(mut d) = d_prev else { break };
            // Straight-through through the previous layer's quantizer, then
            // its activation derivative.
            let prev_layer = &forward.layers[i - 1];
            match self.spec.layers[i - 1] {
                LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => {
                    if let Some((lo, hi)) = prev_layer.range {
                        for (g, &a) in d
                            .as_mut_slice()
                            .iter_mut()
                            .zip(prev_layer.continuous.as_slice())
                        {
                            if a < lo || a > hi {
                                *g = 0.0;
                            }
                        }
                    }
                    apply_activation_gradient(&mut d, &prev_layer.continuous, activation);
                }
                // Pool/flatten layers: the gradient passes straight through
                // to the layer before them on the next loop iteration.
                LayerSpec::MaxPool { .. } | LayerSpec::Flatten => {}
            }
            delta = d;
        }
        Ok(grads)
    }

    /// One Adam step with bias correction; increments the step counter.
    pub fn adam_step(&mut self, grads: &Gradients, learning_rate: f64) -> Result<()> {
        if grads.len() != self.spec.layers.len() {
            return Err(Error::ShapeMismatch(
                "gradient count does not match layer count".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        for (i, grad) in grads.iter().enumerate() {
            let (Some(g), Some(p), Some(slot)) =
                (grad.as_ref(), self.params[i].as_mut(), self.adam[i].as_mut())
            else {
                continue;
            };
            if g.weights.rows() != p.weights.rows()
                || g.weights.cols() != p.weights.cols()
                || g.bias.len() != p.bias.len()
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: gradient shape does not mirror parameters"
                )));
            }
            adam_update(
                p.weights.as_mut_slice(),
                g.weights.as_slice(),
                slot.mw.as_mut_slice(),
                slot.vw.as_mut_slice(),
                learning_rate,
                bias1,
                bias2,
            );
            adam_update(
                &mut p.bias,
                &g.bias,
                &mut slot.mb,
                &mut slot.vb,
                learning_rate,
                bias1,
                bias2,
            );
        }
        Ok(())
    }

    /// Bit-exact JSON checkpoint of spec, parameters, and optimizer state.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Network> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut net: Network = serde_json::from_str(&json)?;
        net.spec.validate()?;
        net.ensure_shapes();
        Ok(net)
    }
}

fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    bias1: f64,
    bias2: f64,
) {
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut().zip(v.iter_mut()))
    {
        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
    }
}

fn apply_activation(pre: &mut Matrix, activation: Activation) {
    match activation {
        Activation::Tanh => {
            for v in pre.as_mut_slice() {
                *v = v.tanh();
            }
        }
        Activation::Relu => {
            for v in pre.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Softmax => {
            for i in 0..pre.rows() {
                softmax_row(pre.row_mut(i));
            }
        }
    }
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Multiply `delta` in place by the activation derivative evaluated from the
/// post-activation values.
fn apply_activation_gradient(delta: &mut Matrix, activation_out: &Matrix, activation: Activation) {
    match activation {
        Activation::Tanh => {
            for (g, &a) in delta.as_mut_slice().iter_mut().zip(activation_out.as_slice()) {
                *g *= 1.0 - a * a;
            }
        }
        Activation::Relu => {
            for (g, &a) in delta.as_mut_slice().iter_mut().zip(activation_out.as_slice()) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Softmax => unreachable!("softmax gradient is fused with the loss"),
    }
}

fn conv_forward(
    input: &Matrix,
    in_shape: Shape,
    out_shape: Shape,
    layer: LayerSpec,
    p: &LayerParams,
) -> Matrix {
    let LayerSpec::Conv {
        kernel_h, kernel_w, ..
    } = layer
    else {
        unreachable!()
    };
    let Shape::Image { h, w, c: cin } = in_shape else {
        unreachable!()
    };
    let Shape::Image {
        h: oh,
        w: ow,
        c: cout,
    } = out_shape
    else {
        unreachable!()
    };
    let mut out = Matrix::zeros(input.rows(), oh * ow * cout);
    for s in 0..input.rows() {
        let in_row = input.row(s);
        let out_row = out.row_mut(s);
        for co in 0..cout {
            let plane = &mut out_row[co * oh * ow..(co + 1) * oh * ow];
            plane.fill(p.bias[co]);
            for ci in 0..cin {
                let in_plane = &in_row[ci * h * w..(ci + 1) * h * w];
                for dy in 0..kernel_h {
                    for dx in 0..kernel_w {
                        let wgt = p.weights.get((dy * kernel_w + dx) * cin + ci, co);
                        if wgt == 0.0 {
                            continue;
                        }
                        for y in 0..oh {
                            let src = &in_plane[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                            let dst = &mut plane[y * ow..y * ow + ow];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    delta: &Matrix,
    input: &Matrix,
    in_shape: Shape,
    out_shape: Shape,
    layer: LayerSpec,
    p: &LayerParams,
    want_input_grad: bool,
) -> (Matrix, Vec<f64>, Option<Matrix>) {
    let LayerSpec::Conv {
        kernel_h, kernel_w, ..
    } = layer
    else {
        unreachable!()
    };
    let Shape::Image { h, w, c: cin } = in_shape else {
        unreachable!()
    };
    let Shape::Image {
        h: oh,
        w: ow,
        c: cout,
    } = out_shape
    else {
        unreachable!()
    };
    let mut dw = Matrix::zeros(p.weights.rows(), p.weights.cols());
    let mut db = vec![0.0; cout];
    let mut din = want_input_grad.then(|| Matrix::zeros(input.rows(), h * w * cin));
    for s in 0..input.rows() {
        let in_row = input.row(s);
        let d_row = delta.row(s);
        for co in 0..cout {
            let d_plane = &d_row[co * oh * ow..(co + 1) * oh * ow];
            db[co] += d_plane.iter().sum::<f64>();
            for ci in 0..cin {
                let in_plane = &in_row[ci * h * w..(ci + 1) * h * w];
                for dy in 0..kernel_h {
                    for dx in 0..kernel_w {
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let src = &in_plane[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                            let dd = &d_plane[y * ow..y * ow + ow];
                            for (&a, &b) in src.iter().zip(dd) {
                                acc += a * b;
                            }
                        }
                        let idx = (dy * kernel_w + dx) * cin + ci;
                        dw.set(idx, co, dw.get(idx, co) + acc);
                    }
                }
            }
        }
        if let Some(din) = &mut din {
            let din_row = din.row_mut(s);
            for co in 0..cout {
                let d_plane = &d_row[co * oh * ow..(co + 1) * oh * ow];
                for ci in 0..cin {
                    let din_plane = &mut din_row[ci * h * w..(ci + 1) * h * w];
                    for dy in 0..kernel_h {
                        for dx in 0..kernel_w {
                            let wgt = p.weights.get((dy * kernel_w + dx) * cin + ci, co);
                            if wgt == 0.0 {
                                continue;
                            }
                            for y in 0..oh {
                                let dst =
                                    &mut din_plane[(y + dy) * w + dx..(y + dy) * w + dx + ow];
                                let dd = &d_plane[y * ow..y * ow + ow];
                                for (d, &g) in dst.iter_mut().zip(dd) {
                                    *d += wgt * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (dw, db, din)
}

fn maxpool_forward(
    input: &Matrix,
    in_shape: Shape,
    out_shape: Shape,
    ph: usize,
    pw: usize,
) -> (Matrix, Vec<u32>) {
    let Shape::Image { h, w, c } = in_shape else {
        unreachable!()
    };
    let Shape::Image { h: oh, w: ow, .. } = out_shape else {
        unreachable!()
    };
    let out_cols = oh * ow * c;
    let mut out = Matrix::zeros(input.rows(), out_cols);
    let mut argmax = vec![0u32; input.rows() * out_cols];
    for s in 0..input.rows() {
        let in_row = input.row(s);
        let out_row = out.row_mut(s);
        for ci in 0..c {
            let in_plane = &in_row[ci * h * w..(ci + 1) * h * w];
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for py in 0..ph {
                        for px in 0..pw {
                            let idx = (y * ph + py) * w + (x * pw + px);
                            if in_plane[idx] > best {
                                best = in_plane[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ci * oh * ow + y * ow + x;
                    out_row[o] = best;
                    argmax[s * out_cols + o] = (ci * h * w + best_idx) as u32;
                }
            }
        }
    }
    (out, argmax)
}

/// Pooled codes: the code at each window's argmax position. The code-to-
/// value map is monotone, so this is the maximal code of the window.
fn maxpool_codes(prev: &CodeBlock, argmax: &[u32], out_cols: usize) -> CodeBlock {
    let mut out = CodeBlock::new(out_cols, prev.bits());
    for &src in argmax {
        out.push(prev.flat_code(src as usize));
    }
    out
}

fn maxpool_backward(delta: &Matrix, argmax: &[u32], in_units: usize) -> Matrix {
    let mut din = Matrix::zeros(delta.rows(), in_units);
    let out_cols = delta.cols();
    for s in 0..delta.rows() {
        let d_row = delta.row(s);
        let din_row = din.row_mut(s);
        for (o, &g) in d_row.iter().enumerate() {
            din_row[argmax[s * out_cols + o] as usize] += g;
        }
    }
    din
}

/// Short descriptive name of a layer, e.g. `tanh10`, `conv3x3x2`, `maxpool2x2`.
pub fn short_name(layer: &LayerSpec) -> String {
    match *layer {
        LayerSpec::Dense { width, activation } => format!("{}{}", activation.label(), width),
        LayerSpec::Conv {
            kernel_h,
            kernel_w,
            channels,
            ..
        } => format!("conv{kernel_h}x{kernel_w}x{channels}"),
        LayerSpec::MaxPool { h, w } => format!("maxpool{h}x{w}"),
        LayerSpec::Flatten => "flatten".into(),
    }
}

/// Mean cross-entropy (natural log) of softmax rows against integer labels.
pub fn cross_entropy(softmax: &Matrix, labels: &[usize]) -> f64 {
    debug_assert_eq!(softmax.rows(), labels.len());
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        total -= softmax.get(i, label).max(1e-300).ln();
    }
    total / labels.len() as f64
}

/// Index of the row maximum, lowest index on ties.
pub fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

//! Full-dataset state recording: discrete activation codes per layer, plus
//! record-mode evaluation and dead-layer detection.

use super::network::{argmax_row, cross_entropy, short_name, Network};
use super::quantizer::QuantState;
use super::{Activation, LayerSpec, NetworkSpec};
use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::Matrix;

/// Packed matrix of activation codes, one row of `width` codes per sample.
///
/// Codes are stored little-endian at the smallest fixed byte width that
/// holds `2^bits - 1`, so a row's byte slice is an exact, collision-free
/// state key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    width: usize,
    bits: u32,
    bytes_per_code: usize,
    data: Vec<u8>,
}

impl CodeBlock {
    pub fn new(width: usize, bits: u32) -> CodeBlock {
        let bytes_per_code = match bits {
            0..=8 => 1,
            9..=16 => 2,
            17..=32 => 4,
            _ => 8,
        };
        CodeBlock {
            width,
            bits,
            bytes_per_code,
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, code: u64) {
        debug_assert!(self.bits >= 64 || code < (1u64 << self.bits));
        self.data
            .extend_from_slice(&code.to_le_bytes()[..self.bytes_per_code]);
    }

    pub fn rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / (self.width * self.bytes_per_code)
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Exact state key for sample `i`.
    pub fn row_bytes(&self, i: usize) -> &[u8] {
        let stride = self.width * self.bytes_per_code;
        &self.data[i * stride..(i + 1) * stride]
    }

    pub fn code(&self, row: usize, col: usize) -> u64 {
        self.flat_code(row * self.width + col)
    }

    pub(crate) fn flat_code(&self, flat: usize) -> u64 {
        let mut bytes = [0u8; 8];
        let at = flat * self.bytes_per_code;
        bytes[..self.bytes_per_code].copy_from_slice(&self.data[at..at + self.bytes_per_code]);
        u64::from_le_bytes(bytes)
    }

    pub fn iter_row(&self, row: usize) -> impl Iterator<Item = u64> + '_ {
        (0..self.width).map(move |c| self.code(row, c))
    }

    fn append(&mut self, other: &CodeBlock) {
        debug_assert_eq!(self.width, other.width);
        debug_assert_eq!(self.bytes_per_code, other.bytes_per_code);
        self.data.extend_from_slice(&other.data);
    }

    pub fn all_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }
}

/// One recorded layer: the discrete codes (when quantization is on) and the
/// observed activations (when requested, for post-hoc binning).
#[derive(Debug, Clone)]
pub struct RecordedLayer {
    pub name: String,
    /// Index into `spec.layers`.
    pub layer_index: usize,
    /// Number of neurons `d_T`.
    pub width: usize,
    /// Activation governing binning bounds; pool layers inherit the
    /// activation of the parametric layer whose grid they carry.
    pub activation: Activation,
    /// Whether this is a parametric hidden layer (dense/conv, not output).
    pub parametric_hidden: bool,
    /// Quantization range in effect during the recording pass.
    pub range: Option<(f64, f64)>,
    pub codes: Option<CodeBlock>,
    pub activations: Option<Matrix>,
}

/// Discrete state of every recorded layer for every sample of a dataset at
/// one point in training. Flatten layers are skipped: they reshape without
/// transforming.
#[derive(Debug, Clone)]
pub struct StateRecord {
    pub epoch: u64,
    pub n_samples: usize,
    pub layers: Vec<RecordedLayer>,
}

/// What a recording pass should retain.
#[derive(Debug, Clone, Copy)]
pub struct RecordOptions {
    /// Keep discrete codes (requires quantization on).
    pub keep_codes: bool,
    /// Keep observed activations for binning analysis.
    pub keep_activations: bool,
}

/// Rows per forward chunk during full-dataset passes.
const RECORD_CHUNK: usize = 1024;

/// Activation whose bounds govern layer `i`'s values (pool/flatten carry the
/// grid of the nearest parametric layer upstream).
fn effective_activation(spec: &NetworkSpec, mut i: usize) -> Activation {
    loop {
        match spec.layers[i] {
            LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => {
                return activation
            }
            LayerSpec::MaxPool { .. } | LayerSpec::Flatten => {
                i = i.checked_sub(1).expect("validated spec starts parametric");
            }
        }
    }
}

/// Names of the layers a [`StateRecord`] will contain, in order.
pub fn recorded_layer_names(spec: &NetworkSpec) -> Vec<String> {
    spec.layers
        .iter()
        .filter(|l| !matches!(l, LayerSpec::Flatten))
        .map(short_name)
        .collect()
}

/// One record-mode forward pass over the entire dataset with the frozen
/// end-of-epoch ranges, collecting each recorded layer's codes.
pub fn record_states(
    net: &mut Network,
    data: &Dataset,
    quant: &QuantState,
    epoch: u64,
    options: RecordOptions,
) -> Result<StateRecord> {
    let quant_on = net.spec.quant_bits.is_on();
    let collect_codes = options.keep_codes && quant_on;
    let spec = net.spec.clone();
    let shapes = net.shapes().to_vec();

    let mut layers: Vec<RecordedLayer> = spec
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| !matches!(l, LayerSpec::Flatten))
        .map(|(i, l)| RecordedLayer {
            name: short_name(l),
            layer_index: i,
            width: shapes[i].units(),
            activation: effective_activation(&spec, i),
            parametric_hidden: i + 1 < spec.layers.len()
                && matches!(l, LayerSpec::Dense { .. } | LayerSpec::Conv { .. }),
            range: None,
            codes: None,
            activations: None,
        })
        .collect();

    let n = data.len();
    let all: Vec<usize> = (0..n).collect();
    for chunk in all.chunks(RECORD_CHUNK) {
        let batch = data.inputs.select_rows(chunk);
        let f = net.forward_record(&batch, quant, collect_codes)?;
        for rec in layers.iter_mut() {
            let out = &f.layers[rec.layer_index];
            rec.range = out.range;
            if collect_codes {
                let block = out.codes.as_ref().expect("codes collected when quant on");
                match &mut rec.codes {
                    Some(acc) => acc.append(block),
                    None => rec.codes = Some(block.clone()),
                }
            }
            if options.keep_activations {
                match &mut rec.activations {
                    Some(acc) => {
                        let mut data = std::mem::replace(acc, Matrix::zeros(0, 0)).into_vec();
                        data.extend_from_slice(out.observed.as_slice());
                        *acc = Matrix::from_vec(
                            data.len() / out.observed.cols(),
                            out.observed.cols(),
                            data,
                        );
                    }
                    None => rec.activations = Some(out.observed.clone()),
                }
            }
        }
    }
    Ok(StateRecord {
        epoch,
        n_samples: n,
        layers,
    })
}

/// Record-mode accuracy (argmax of the softmax outputs vs labels) and mean
/// cross-entropy loss over a dataset.
pub fn evaluate(net: &mut Network, data: &Dataset, quant: &QuantState) -> Result<(f64, f64)> {
    let n = data.len();
    let all: Vec<usize> = (0..n).collect();
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    for chunk in all.chunks(RECORD_CHUNK) {
        let batch = data.inputs.select_rows(chunk);
        let labels: Vec<usize> = chunk.iter().map(|&i| data.labels[i]).collect();
        let f = net.forward_record(&batch, quant, false)?;
        let out = f.output();
        for (i, &label) in labels.iter().enumerate() {
            if argmax_row(out.row(i)) == label {
                correct += 1;
            }
        }
        loss_sum += cross_entropy(out, &labels) * labels.len() as f64;
    }
    Ok((correct as f64 / n as f64, loss_sum / n as f64))
}

/// Indices (into `spec.layers`) of hidden ReLU layers whose observed
/// activations are zero for every sample — the failure mode a stuck network
/// cannot recover from.
pub fn detect_dead_layer(record: &StateRecord) -> Vec<usize> {
    record
        .layers
        .iter()
        .filter(|l| l.parametric_hidden && l.activation == Activation::Relu)
        .filter(|l| {
            if let Some(acts) = &l.activations {
                return acts.as_slice().iter().all(|&v| v == 0.0);
            }
            if let (Some(codes), Some((lo, _))) = (&l.codes, l.range) {
                // All codes zero dequantize to the range minimum.
                return codes.all_zero() && lo == 0.0;
            }
            false
        })
        .map(|l| l.layer_index)
        .collect()
}

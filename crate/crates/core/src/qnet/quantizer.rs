//! Fake quantization onto a uniform grid and per-epoch range tracking.

use super::{Activation, LayerSpec, NetworkSpec, QuantBits};
use crate::linalg::Matrix;

/// Quantize one value onto `2^k` uniform levels in `[lo, hi]`.
///
/// Returns `(code, dequantized)` with
/// `code = round((clamp(x, lo, hi) - lo) / (hi - lo) * (2^k - 1))` and the
/// dequantized value back on the grid. A degenerate range (`lo == hi`) maps
/// everything to code 0 at value `lo`.
pub fn quantize_value(x: f64, k: u32, lo: f64, hi: f64) -> (u64, f64) {
    debug_assert!(lo <= hi, "invalid quantization range");
    if lo >= hi {
        return (0, lo);
    }
    let levels = (1u64 << k) - 1;
    let levels_f = levels as f64;
    let code = ((x.clamp(lo, hi) - lo) / (hi - lo) * levels_f).round() as u64;
    let value = if code == levels {
        hi
    } else {
        (lo + code as f64 * (hi - lo) / levels_f).clamp(lo, hi)
    };
    (code, value)
}

/// Quantize a whole activation matrix, writing dequantized values in place
/// and invoking `sink` with each code in row-major order.
pub fn quantize(values: &mut Matrix, k: u32, lo: f64, hi: f64, mut sink: impl FnMut(u64)) {
    for v in values.as_mut_slice() {
        let (code, deq) = quantize_value(*v, k, lo, hi);
        *v = deq;
        sink(code);
    }
}

/// Per-layer running activation ranges gathered across the current epoch.
///
/// Ranges are reset at every epoch boundary and widened batch by batch; a
/// recording pass then freezes them. Softmax layers pin the lower bound at
/// zero. Max-pool and flatten layers carry no range of their own: their
/// values stay on the grid of the nearest parametric layer upstream, whose
/// slot they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantState {
    pub bits: QuantBits,
    ranges: Vec<Option<(f64, f64)>>,
    /// For each layer, the index of the layer whose range applies to it.
    range_source: Vec<usize>,
    force_zero_lo: Vec<bool>,
}

impl QuantState {
    pub fn new(spec: &NetworkSpec) -> QuantState {
        let n = spec.layers.len();
        let mut range_source = Vec::with_capacity(n);
        let mut force_zero_lo = Vec::with_capacity(n);
        for (i, layer) in spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => {
                    range_source.push(i);
                    force_zero_lo.push(*activation == Activation::Softmax);
                }
                LayerSpec::MaxPool { .. } | LayerSpec::Flatten => {
                    range_source.push(i.checked_sub(1).map_or(i, |p| range_source[p]));
                    force_zero_lo.push(false);
                }
            }
        }
        QuantState {
            bits: spec.quant_bits,
            ranges: vec![None; n],
            range_source,
            force_zero_lo,
        }
    }

    /// Clear all ranges for a new epoch.
    pub fn reset(&mut self) {
        self.ranges.iter_mut().for_each(|r| *r = None);
    }

    /// Widen layer `i`'s range with a batch minimum and maximum.
    pub fn observe(&mut self, layer: usize, batch_lo: f64, batch_hi: f64) {
        let (mut lo, mut hi) = self.ranges[layer].unwrap_or((batch_lo, batch_hi));
        lo = lo.min(batch_lo);
        hi = hi.max(batch_hi);
        if self.force_zero_lo[layer] {
            lo = 0.0;
        }
        self.ranges[layer] = Some((lo, hi));
    }

    /// Effective quantization range for layer `i` (following pool/flatten
    /// layers back to their parametric source).
    pub fn range(&self, layer: usize) -> Option<(f64, f64)> {
        self.ranges[self.range_source[layer]]
    }

    /// Whether layer `i` quantizes its own output (pool/flatten do not).
    pub fn quantizes(&self, layer: usize) -> bool {
        self.range_source[layer] == layer
    }
}

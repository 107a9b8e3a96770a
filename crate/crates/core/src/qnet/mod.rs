//! Quantized feed-forward/convolutional network engine.
//!
//! Forward passes fake-quantize each layer's activations onto a uniform
//! `2^k`-level grid between the running minimum and maximum observed in the
//! current epoch; backward passes treat the quantizer as the identity within
//! the tracked range. Full-dataset state recording captures each layer's
//! discrete activation codes for exact information measurements.

mod network;
mod quantizer;
mod record;
mod train;

pub use network::{init_network, short_name, Forward, LayerParams, Network};
pub use quantizer::{quantize, quantize_value, QuantState};
pub use record::{
    detect_dead_layer, evaluate, record_states, recorded_layer_names, CodeBlock, RecordOptions,
    RecordedLayer, StateRecord,
};
pub use train::{train_epoch, EpochStats};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation function of a parametric layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Softmax,
}

impl Activation {
    fn label(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
        }
    }
}

/// One layer of a [`NetworkSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        width: usize,
        activation: Activation,
    },
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        channels: usize,
        activation: Activation,
    },
    MaxPool {
        h: usize,
        w: usize,
    },
    Flatten,
}

/// Logical shape of the values flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Flat(usize),
    Image { h: usize, w: usize, c: usize },
}

impl Shape {
    pub fn units(self) -> usize {
        match self {
            Shape::Flat(n) => n,
            Shape::Image { h, w, c } => h * w * c,
        }
    }
}

/// Activation bit width: `k`-bit fake quantization or none at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantBits {
    Off,
    Bits(u32),
}

impl QuantBits {
    pub fn is_on(self) -> bool {
        matches!(self, QuantBits::Bits(_))
    }

    pub fn bits(self) -> Option<u32> {
        match self {
            QuantBits::Off => None,
            QuantBits::Bits(k) => Some(k),
        }
    }
}

impl std::fmt::Display for QuantBits {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuantBits::Off => write!(f, "off"),
            QuantBits::Bits(k) => write!(f, "{k}"),
        }
    }
}

impl Serialize for QuantBits {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            QuantBits::Off => s.serialize_str("off"),
            QuantBits::Bits(k) => s.serialize_u32(*k),
        }
    }
}

impl<'de> Deserialize<'de> for QuantBits {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) if s == "off" => Ok(QuantBits::Off),
            serde_json::Value::Number(n) => n
                .as_u64()
                .filter(|&k| k >= 1)
                .map(|k| QuantBits::Bits(k as u32))
                .ok_or_else(|| D::Error::custom("quant_bits must be a positive integer")),
            other => Err(D::Error::custom(format!(
                "quant_bits must be a positive integer or \"off\", got {other}"
            ))),
        }
    }
}

/// Architecture description: layers, input shape, bit width, and the default
/// initialization seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub quant_bits: QuantBits,
    #[serde(default)]
    pub seed: u64,
}

/// Highest bit width whose codes stay exact under the f64 quantizer formula.
pub const MAX_QUANT_BITS: u32 = 52;

impl NetworkSpec {
    /// Dense-only network: hidden widths with one activation, then a softmax
    /// output of `classes` units.
    pub fn dense(
        input_units: usize,
        hidden: &[usize],
        activation: Activation,
        classes: usize,
        quant_bits: QuantBits,
        seed: u64,
    ) -> NetworkSpec {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec::Dense { width, activation })
            .collect();
        layers.push(LayerSpec::Dense {
            width: classes,
            activation: Activation::Softmax,
        });
        NetworkSpec {
            input_shape: Shape::Flat(input_units),
            layers,
            quant_bits,
            seed,
        }
    }

    /// Output shape of every layer, in order. Also performs full validation.
    pub fn layer_shapes(&self) -> Result<Vec<Shape>> {
        if self.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        if let QuantBits::Bits(k) = self.quant_bits {
            if k == 0 || k > MAX_QUANT_BITS {
                return Err(Error::InvalidSpec(format!(
                    "quant_bits must be in 1..={MAX_QUANT_BITS}, got {k}"
                )));
            }
        }
        if self.input_shape.units() == 0 {
            return Err(Error::InvalidSpec("input shape has zero units".into()));
        }
        let last = self.layers.len() - 1;
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut shape = self.input_shape;
        for (i, layer) in self.layers.iter().enumerate() {
            shape = match *layer {
                LayerSpec::Dense { width, activation } => {
                    if width == 0 {
                        return Err(Error::InvalidSpec(format!("layer {i}: zero width")));
                    }
                    if !matches!(shape, Shape::Flat(_)) {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: dense layer needs flat input (add a flatten layer)"
                        )));
                    }
                    match (i == last, activation) {
                        (true, Activation::Softmax) => {}
                        (true, a) => {
                            return Err(Error::InvalidSpec(format!(
                                "output layer must use softmax, got {}",
                                a.label()
                            )))
                        }
                        (false, Activation::Softmax) => {
                            return Err(Error::InvalidSpec(format!(
                                "layer {i}: softmax is only allowed on the output layer"
                            )))
                        }
                        (false, _) => {}
                    }
                    Shape::Flat(width)
                }
                LayerSpec::Conv {
                    kernel_h,
                    kernel_w,
                    channels,
                    activation,
                } => {
                    if i == last {
                        return Err(Error::InvalidSpec(
                            "final layer must be a dense softmax layer".into(),
                        ));
                    }
                    if activation == Activation::Softmax {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: softmax is only allowed on the output layer"
                        )));
                    }
                    if kernel_h == 0 || kernel_w == 0 || channels == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: conv kernel and channels must be positive"
                        )));
                    }
                    let Shape::Image { h, w, .. } = shape else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: conv layer needs image input"
                        )));
                    };
                    if h < kernel_h || w < kernel_w {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: kernel {kernel_h}x{kernel_w} larger than input {h}x{w}"
                        )));
                    }
                    Shape::Image {
                        h: h - kernel_h + 1,
                        w: w - kernel_w + 1,
                        c: channels,
                    }
                }
                LayerSpec::MaxPool { h: ph, w: pw } => {
                    if i == last {
                        return Err(Error::InvalidSpec(
                            "final layer must be a dense softmax layer".into(),
                        ));
                    }
                    if ph == 0 || pw == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: pool window must be positive"
                        )));
                    }
                    let Shape::Image { h, w, c } = shape else {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: max pool needs image input"
                        )));
                    };
                    if h < ph || w < pw {
                        return Err(Error::InvalidSpec(format!(
                            "layer {i}: pool window {ph}x{pw} larger than input {h}x{w}"
                        )));
                    }
                    // Stride equals the window; trailing rows/cols that do
                    // not fill a window are dropped.
                    Shape::Image {
                        h: (h - ph) / ph + 1,
                        w: (w - pw) / pw + 1,
                        c,
                    }
                }
                LayerSpec::Flatten => {
                    if i == last {
                        return Err(Error::InvalidSpec(
                            "final layer must be a dense softmax layer".into(),
                        ));
                    }
                    Shape::Flat(shape.units())
                }
            };
            shapes.push(shape);
        }
        match self.layers[last] {
            LayerSpec::Dense {
                activation: Activation::Softmax,
                ..
            } => {}
            _ => {
                return Err(Error::InvalidSpec(
                    "final layer must be a dense softmax layer".into(),
                ))
            }
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    /// Number of output classes (width of the softmax layer).
    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { width, .. }) => *width,
            _ => 0,
        }
    }

    /// Compact architecture string, e.g. `12-10t-7t-2s/8bit`.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("{}", self.input_shape.units()));
        for layer in &self.layers {
            match *layer {
                LayerSpec::Dense { width, activation } => {
                    s.push_str(&format!("-{}{}", width, &activation.label()[..1]))
                }
                LayerSpec::Conv {
                    kernel_h,
                    kernel_w,
                    channels,
                    ..
                } => s.push_str(&format!("-cv{kernel_h}x{kernel_w}x{channels}")),
                LayerSpec::MaxPool { h, w } => s.push_str(&format!("-mp{h}x{w}")),
                LayerSpec::Flatten => s.push_str("-fl"),
            }
        }
        s.push_str(&format!("/{}bit", self.quant_bits));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_spec_validates() {
        let spec = NetworkSpec::dense(
            12,
            &[10, 7, 5, 4, 3],
            Activation::Tanh,
            2,
            QuantBits::Bits(8),
            0,
        );
        let shapes = spec.layer_shapes().unwrap();
        assert_eq!(shapes.len(), 6);
        assert_eq!(shapes[0], Shape::Flat(10));
        assert_eq!(shapes[5], Shape::Flat(2));
        assert_eq!(spec.num_classes(), 2);
    }

    #[test]
    fn rejects_bad_output_activation() {
        let spec = NetworkSpec::dense(12, &[4], Activation::Tanh, 2, QuantBits::Off, 0);
        let mut bad = spec;
        *bad.layers.last_mut().unwrap() = LayerSpec::Dense {
            width: 2,
            activation: Activation::Tanh,
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn rejects_hidden_softmax_and_zero_bits() {
        let mut spec = NetworkSpec::dense(12, &[4], Activation::Tanh, 2, QuantBits::Bits(8), 0);
        spec.layers[0] = LayerSpec::Dense {
            width: 4,
            activation: Activation::Softmax,
        };
        assert!(spec.validate().is_err());

        let spec = NetworkSpec::dense(12, &[4], Activation::Tanh, 2, QuantBits::Bits(60), 0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn conv_shapes() {
        let spec = NetworkSpec {
            input_shape: Shape::Image { h: 28, w: 28, c: 1 },
            layers: vec![
                LayerSpec::Conv {
                    kernel_h: 3,
                    kernel_w: 3,
                    channels: 2,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool { h: 2, w: 2 },
                LayerSpec::Conv {
                    kernel_h: 3,
                    kernel_w: 3,
                    channels: 2,
                    activation: Activation::Relu,
                },
                LayerSpec::MaxPool { h: 2, w: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    width: 20,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    width: 10,
                    activation: Activation::Softmax,
                },
            ],
            quant_bits: QuantBits::Bits(8),
            seed: 0,
        };
        let shapes = spec.layer_shapes().unwrap();
        assert_eq!(shapes[0], Shape::Image { h: 26, w: 26, c: 2 });
        assert_eq!(shapes[1], Shape::Image { h: 13, w: 13, c: 2 });
        assert_eq!(shapes[2], Shape::Image { h: 11, w: 11, c: 2 });
        assert_eq!(shapes[3], Shape::Image { h: 5, w: 5, c: 2 });
        assert_eq!(shapes[4], Shape::Flat(50));
        assert_eq!(shapes[6], Shape::Flat(10));
    }

    #[test]
    fn quant_bits_serde() {
        #[derive(Serialize, Deserialize)]
        struct Wrap {
            q: QuantBits,
        }
        let on: Wrap = serde_json::from_str(r#"{"q": 8}"#).unwrap();
        assert_eq!(on.q, QuantBits::Bits(8));
        let off: Wrap = serde_json::from_str(r#"{"q": "off"}"#).unwrap();
        assert_eq!(off.q, QuantBits::Off);
        assert_eq!(serde_json::to_string(&on).unwrap(), r#"{"q":8}"#);
        assert_eq!(serde_json::to_string(&off).unwrap(), r#"{"q":"off"}"#);
        assert!(serde_json::from_str::<Wrap>(r#"{"q": 0}"#).is_err());
    }
}

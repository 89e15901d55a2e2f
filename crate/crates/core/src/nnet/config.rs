//! Network architecture description and shape planning.

use serde::{Deserialize, Serialize};

use super::NnetError;

fn default_true() -> bool {
    true
}

/// One layer of the stack. Conv and Full orderings are fixed: linear op,
/// then batch norm, then ReLU, then dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: usize,
        #[serde(default = "default_true")]
        relu: bool,
        #[serde(default = "default_true")]
        batch_norm: bool,
        #[serde(default)]
        dropout: f64,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        #[serde(default)]
        dropout: f64,
    },
    Flatten,
    Full {
        width: usize,
        #[serde(default = "default_true")]
        relu: bool,
        #[serde(default = "default_true")]
        batch_norm: bool,
        #[serde(default)]
        dropout: f64,
    },
}

impl LayerSpec {
    pub fn dropout(&self) -> f64 {
        match *self {
            LayerSpec::Conv { dropout, .. }
            | LayerSpec::MaxPool { dropout, .. }
            | LayerSpec::Full { dropout, .. } => dropout,
            LayerSpec::Flatten => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_h: usize,
    pub input_w: usize,
    #[serde(default = "default_one")]
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    /// Zero means the network has only the class head.
    #[serde(default)]
    pub num_superclasses: usize,
}

fn default_one() -> usize {
    1
}

/// Per-boundary shapes: `shapes[0]` is the input, `shapes[i + 1]` the output
/// of layer `i`. The classifier heads read the final shape flattened to
/// `feature_len` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapePlan {
    pub shapes: Vec<(usize, usize, usize)>,
    pub feature_len: usize,
}

fn conv_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    (input + 2 * pad).checked_sub(kernel).map(|d| d / stride + 1)
}

impl NetworkConfig {
    /// Walks the stack symbolically, validating every layer and recording the
    /// shape at each boundary.
    pub fn plan(&self) -> Result<ShapePlan, NnetError> {
        if self.num_classes < 2 {
            return Err(NnetError::BadConfig(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.input_h == 0 || self.input_w == 0 || self.input_channels == 0 {
            return Err(NnetError::BadConfig("input dimensions must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(NnetError::BadConfig("layer stack is empty".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let (mut c, mut h, mut w) = (self.input_channels, self.input_h, self.input_w);
        shapes.push((c, h, w));
        for (i, layer) in self.layers.iter().enumerate() {
            let p = layer.dropout();
            if !(0.0..1.0).contains(&p) {
                return Err(NnetError::BadConfig(format!(
                    "layer {i}: dropout {p} outside [0, 1)"
                )));
            }
            match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, pad, .. } => {
                    if out_channels == 0 || kernel.0 == 0 || kernel.1 == 0 || stride == 0 {
                        return Err(NnetError::BadConfig(format!(
                            "layer {i}: conv parameters must be positive"
                        )));
                    }
                    let oh = conv_extent(h, kernel.0, stride, pad);
                    let ow = conv_extent(w, kernel.1, stride, pad);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => {
                            c = out_channels;
                            h = oh;
                            w = ow;
                        }
                        _ => return Err(NnetError::SpatialCollapse { layer: i, h, w }),
                    }
                }
                LayerSpec::MaxPool { kernel, stride, .. } => {
                    if kernel == 0 || stride == 0 {
                        return Err(NnetError::BadConfig(format!(
                            "layer {i}: pool parameters must be positive"
                        )));
                    }
                    if h < kernel || w < kernel {
                        return Err(NnetError::SpatialCollapse { layer: i, h, w });
                    }
                    h = (h - kernel) / stride + 1;
                    w = (w - kernel) / stride + 1;
                }
                LayerSpec::Flatten => {
                    c *= h * w;
                    h = 1;
                    w = 1;
                }
                LayerSpec::Full { width, .. } => {
                    if width == 0 {
                        return Err(NnetError::BadConfig(format!(
                            "layer {i}: full width must be positive"
                        )));
                    }
                    if h != 1 || w != 1 {
                        return Err(NnetError::BadConfig(format!(
                            "layer {i}: full layer needs flattened input, has {h}x{w}"
                        )));
                    }
                    c = width;
                }
            }
            shapes.push((c, h, w));
        }
        let (fc, fh, fw) = *shapes.last().unwrap();
        Ok(ShapePlan { shapes, feature_len: fc * fh * fw })
    }
}

fn conv(out_channels: usize, k: usize, stride: usize, pad: usize, dropout: f64) -> LayerSpec {
    LayerSpec::Conv {
        out_channels,
        kernel: (k, k),
        stride,
        pad,
        relu: true,
        batch_norm: true,
        dropout,
    }
}

fn pool(dropout: f64) -> LayerSpec {
    LayerSpec::MaxPool { kernel: 2, stride: 2, dropout }
}

/// Full-size classification stack for 143x143 single-channel patches.
/// Eleven convolutions in four blocks; dropout 0.3 after each pool and 0.5
/// after the two wide late convolutions; every conv is batch-normalized.
/// The final 1x1 conv has one channel per class, leaving 49 values per class
/// for the heads.
pub fn table1(num_classes: usize) -> NetworkConfig {
    NetworkConfig {
        input_h: 143,
        input_w: 143,
        input_channels: 1,
        layers: vec![
            conv(32, 5, 2, 2, 0.0),
            conv(32, 3, 1, 1, 0.0),
            pool(0.3),
            conv(64, 3, 1, 1, 0.0),
            conv(64, 3, 1, 1, 0.0),
            pool(0.3),
            conv(128, 3, 1, 1, 0.0),
            conv(128, 3, 1, 1, 0.0),
            conv(128, 3, 1, 1, 0.0),
            conv(128, 3, 1, 1, 0.0),
            pool(0.3),
            conv(512, 3, 1, 0, 0.5),
            conv(512, 1, 1, 0, 0.5),
            conv(num_classes, 1, 1, 0, 0.0),
        ],
        num_classes,
        num_superclasses: 0,
    }
}

/// Quarter-width variant of [`table1`] for 64x64 patches. Same depth and
/// layer roles, four times fewer channels, 4 values per class at the top.
/// Small enough to train on a laptop core in seconds per epoch.
pub fn vgg_mini(num_classes: usize) -> NetworkConfig {
    NetworkConfig {
        input_h: 64,
        input_w: 64,
        input_channels: 1,
        layers: vec![
            conv(8, 5, 2, 2, 0.0),
            conv(8, 3, 1, 1, 0.0),
            pool(0.3),
            conv(16, 3, 1, 1, 0.0),
            conv(16, 3, 1, 1, 0.0),
            pool(0.3),
            conv(32, 3, 1, 1, 0.0),
            conv(32, 3, 1, 1, 0.0),
            conv(32, 3, 1, 1, 0.0),
            conv(32, 3, 1, 1, 0.0),
            pool(0.3),
            conv(128, 3, 1, 0, 0.5),
            conv(128, 1, 1, 0, 0.5),
            conv(num_classes, 1, 1, 0, 0.0),
        ],
        num_classes,
        num_superclasses: 0,
    }
}

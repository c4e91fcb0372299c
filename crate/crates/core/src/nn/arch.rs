use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One convolution: `filters` output channels, square `kernel`, stride 1,
/// same padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
}

/// `[CONV -> ReLU -> BN] x convs.len()`, then an optional square max-pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub convs: Vec<ConvSpec>,
    pub pool: Option<usize>,
}

impl ConvBlock {
    pub fn pair(first: usize, second: usize) -> Self {
        Self {
            convs: vec![
                ConvSpec {
                    filters: first,
                    kernel: 3,
                },
                ConvSpec {
                    filters: second,
                    kernel: 3,
                },
            ],
            pool: Some(2),
        }
    }
}

/// Image classifier topology: conv blocks, one hidden dense layer with ReLU,
/// and a softmax output over `class_count` classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    /// `(height, width, channels)`.
    pub input_shape: (usize, usize, usize),
    pub conv_blocks: Vec<ConvBlock>,
    pub dense_width: usize,
    pub class_count: usize,
}

impl Default for ArchitectureConfig {
    /// The 32x32x3, 10-class CIFAR topology (about 0.28M parameters).
    fn default() -> Self {
        Self {
            input_shape: (32, 32, 3),
            conv_blocks: vec![ConvBlock::pair(16, 16), ConvBlock::pair(32, 32)],
            dense_width: 128,
            class_count: 10,
        }
    }
}

impl ArchitectureConfig {
    /// Small variant used for synthetic desk-scale experiments.
    pub fn desk() -> Self {
        Self {
            input_shape: (8, 8, 3),
            conv_blocks: vec![ConvBlock::pair(8, 8), ConvBlock::pair(16, 16)],
            dense_width: 64,
            class_count: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidConfig("input shape must be positive".into()));
        }
        if self.dense_width == 0 {
            return Err(Error::InvalidConfig("dense_width must be positive".into()));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidConfig("class_count must be at least 2".into()));
        }
        let (mut h, mut w) = (h, w);
        for (b, block) in self.conv_blocks.iter().enumerate() {
            if block.convs.is_empty() {
                return Err(Error::InvalidConfig(format!("block {b} has no convolutions")));
            }
            for conv in &block.convs {
                if conv.filters == 0 || conv.kernel == 0 || conv.kernel % 2 == 0 {
                    return Err(Error::InvalidConfig(format!(
                        "block {b}: filters must be positive and kernel odd, got {conv:?}"
                    )));
                }
            }
            if let Some(p) = block.pool {
                if p == 0 || h < p || w < p {
                    return Err(Error::InvalidConfig(format!(
                        "block {b}: pool {p} does not fit a {h}x{w} feature map"
                    )));
                }
                h /= p;
                w /= p;
            }
        }
        Ok(())
    }

    /// Flattened width of the last conv block's output.
    pub fn flat_features(&self) -> usize {
        let (mut h, mut w, mut c) = self.input_shape;
        for block in &self.conv_blocks {
            c = block.convs.last().map_or(c, |conv| conv.filters);
            if let Some(p) = block.pool {
                h /= p;
                w /= p;
            }
        }
        h * w * c
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    /// Trainable parameter names and shapes, in checkpoint order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut channels = self.input_shape.2;
        for (b, block) in self.conv_blocks.iter().enumerate() {
            for (j, conv) in block.convs.iter().enumerate() {
                let k = conv.kernel;
                out.push((
                    format!("block{b}.conv{j}.kernel"),
                    vec![k, k, channels, conv.filters],
                ));
                out.push((format!("block{b}.conv{j}.bias"), vec![conv.filters]));
                out.push((format!("block{b}.bn{j}.gamma"), vec![conv.filters]));
                out.push((format!("block{b}.bn{j}.beta"), vec![conv.filters]));
                channels = conv.filters;
            }
        }
        let flat = self.flat_features();
        out.push(("dense.weight".into(), vec![flat, self.dense_width]));
        out.push(("dense.bias".into(), vec![self.dense_width]));
        out.push((
            "output.weight".into(),
            vec![self.dense_width, self.class_count],
        ));
        out.push(("output.bias".into(), vec![self.class_count]));
        out
    }

    /// Names and channel counts of every batch-norm layer, in order.
    pub fn batchnorm_layers(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (b, block) in self.conv_blocks.iter().enumerate() {
            for (j, conv) in block.convs.iter().enumerate() {
                out.push((format!("block{b}.bn{j}"), conv.filters));
            }
        }
        out
    }

    /// Layer sequence with indices into [`Self::param_shapes`].
    pub(crate) fn layer_plan(&self) -> Vec<LayerOp> {
        let mut ops = Vec::new();
        let (mut h, mut w, mut channels) = self.input_shape;
        let mut param = 0;
        let mut bn = 0;
        for block in &self.conv_blocks {
            for conv in &block.convs {
                ops.push(LayerOp::Conv {
                    kernel_param: param,
                    height: h,
                    width: w,
                    in_channels: channels,
                    out_channels: conv.filters,
                    kernel: conv.kernel,
                });
                ops.push(LayerOp::Relu);
                ops.push(LayerOp::BatchNorm {
                    gamma_param: param + 2,
                    stats: bn,
                    channels: conv.filters,
                });
                param += 4;
                bn += 1;
                channels = conv.filters;
            }
            if let Some(p) = block.pool {
                ops.push(LayerOp::MaxPool {
                    size: p,
                    height: h,
                    width: w,
                    channels,
                });
                h /= p;
                w /= p;
            }
        }
        ops.push(LayerOp::Dense {
            weight_param: param,
            inputs: h * w * channels,
            outputs: self.dense_width,
        });
        ops.push(LayerOp::Relu);
        ops.push(LayerOp::Dense {
            weight_param: param + 2,
            inputs: self.dense_width,
            outputs: self.class_count,
        });
        ops
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum LayerOp {
    Conv {
        kernel_param: usize,
        height: usize,
        width: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    BatchNorm {
        gamma_param: usize,
        stats: usize,
        channels: usize,
    },
    MaxPool {
        size: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    Dense {
        weight_param: usize,
        inputs: usize,
        outputs: usize,
    },
}

/// Total trainable scalars: conv kernels and biases, batch-norm scale and
/// shift, hidden dense and output layers.
pub fn count_params(arch: &ArchitectureConfig) -> usize {
    arch.param_shapes()
        .iter()
        .map(|(_, shape)| shape.iter().product::<usize>())
        .sum()
}

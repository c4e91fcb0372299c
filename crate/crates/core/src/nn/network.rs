use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureConfig, LayerOp};
use super::checkpoint::{Checkpoint, NamedTensor, RunningStats};
use super::layers::{self, BatchNormCache, BatchStats, ConvGeometry};
use super::tensor::TensorBuffer;
use crate::error::{Error, Result};

/// Batch-norm behaviour: batch statistics (`Train`) or running statistics
/// (`Eval`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Gradients aligned one-to-one with a checkpoint's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<NamedTensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&TensorBuffer> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.tensor)
    }
}

/// Fan-in scaled uniform initialization: conv and hidden layers draw from
/// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, the output layer from
/// `U(-sqrt(3/fan_in), sqrt(3/fan_in))`. Biases and shifts start at zero,
/// batch-norm scales at one.
pub fn init_params(arch: &ArchitectureConfig, seed: u64) -> (Vec<NamedTensor>, Vec<RunningStats>) {
    let mut rng = crate::seed::rng(seed);
    let params = arch
        .param_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let len: usize = shape.iter().product();
            let values = if name.ends_with(".kernel") || name.ends_with(".weight") {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let gain = if name.starts_with("output") { 3.0 } else { 6.0 };
                let limit = (gain / fan_in as f64).sqrt();
                (0..len).map(|_| rng.random_range(-limit..limit)).collect()
            } else if name.ends_with(".gamma") {
                vec![1.0; len]
            } else {
                vec![0.0; len]
            };
            NamedTensor {
                name,
                tensor: TensorBuffer::new(shape, values).expect("shape from architecture"),
            }
        })
        .collect();
    let running = arch
        .batchnorm_layers()
        .into_iter()
        .map(|(name, channels)| RunningStats {
            name,
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        })
        .collect();
    (params, running)
}

enum Cache {
    Conv { input: Vec<f64> },
    Relu { input: Vec<f64> },
    BatchNorm(BatchNormCache),
    Pool { argmax: Vec<usize>, input_len: usize },
    Dense { input: Vec<f64> },
    None,
}

pub(crate) struct ForwardPass {
    pub logits: Vec<f64>,
    pub batch_stats: Vec<BatchStats>,
    caches: Vec<Cache>,
    batch: usize,
}

fn check_batch(arch: &ArchitectureConfig, batch: &TensorBuffer) -> Result<usize> {
    let (h, w, c) = arch.input_shape;
    let shape = batch.shape();
    if shape.len() != 4 || shape[1..] != [h, w, c] {
        return Err(Error::ShapeMismatch {
            context: "network input (batch, height, width, channels)".into(),
            expected: vec![shape.first().copied().unwrap_or(0), h, w, c],
            found: shape.to_vec(),
        });
    }
    Ok(shape[0])
}

pub(crate) fn run_forward(
    ckpt: &Checkpoint,
    input: &[f64],
    batch: usize,
    mode: Mode,
    keep_cache: bool,
) -> ForwardPass {
    let params = &ckpt.params;
    let mut act = input.to_vec();
    let mut caches = Vec::new();
    let mut batch_stats = Vec::new();
    for op in ckpt.architecture.layer_plan() {
        let (next, cache) = match op {
            LayerOp::Conv {
                kernel_param,
                height,
                width,
                in_channels,
                out_channels,
                kernel,
            } => {
                let geo = ConvGeometry {
                    height,
                    width,
                    in_channels,
                    out_channels,
                    kernel,
                };
                let out = layers::conv_forward(
                    &geo,
                    &act,
                    batch,
                    params[kernel_param].tensor.values(),
                    params[kernel_param + 1].tensor.values(),
                );
                (out, Cache::Conv { input: act })
            }
            LayerOp::Relu => (layers::relu_forward(&act), Cache::Relu { input: act }),
            LayerOp::BatchNorm {
                gamma_param,
                stats,
                channels,
            } => {
                let gamma = params[gamma_param].tensor.values();
                let beta = params[gamma_param + 1].tensor.values();
                match mode {
                    Mode::Train => {
                        let (out, st, cache) =
                            layers::batchnorm_train_forward(&act, channels, gamma, beta);
                        batch_stats.push(st);
                        (out, Cache::BatchNorm(cache))
                    }
                    Mode::Eval => {
                        let rs = &ckpt.running[stats];
                        let out = layers::batchnorm_eval_forward(
                            &act, channels, gamma, beta, &rs.mean, &rs.var,
                        );
                        (out, Cache::None)
                    }
                }
            }
            LayerOp::MaxPool {
                size,
                height,
                width,
                channels,
            } => {
                let (out, argmax) =
                    layers::maxpool_forward(&act, batch, height, width, channels, size);
                (
                    out,
                    Cache::Pool {
                        argmax,
                        input_len: act.len(),
                    },
                )
            }
            LayerOp::Dense {
                weight_param,
                inputs,
                outputs,
            } => {
                let out = layers::dense_forward(
                    &act,
                    batch,
                    params[weight_param].tensor.values(),
                    params[weight_param + 1].tensor.values(),
                    inputs,
                    outputs,
                );
                (out, Cache::Dense { input: act })
            }
        };
        if keep_cache {
            caches.push(cache);
        }
        act = next;
    }
    ForwardPass {
        logits: act,
        batch_stats,
        caches,
        batch,
    }
}

fn run_backward(ckpt: &Checkpoint, pass: ForwardPass, grad_logits: Vec<f64>) -> Gradients {
    let params = &ckpt.params;
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; params.len()];
    let mut grad = grad_logits;
    let plan = ckpt.architecture.layer_plan();
    let batch = pass.batch;
    for (op, cache) in plan.into_iter().zip(pass.caches).rev() {
        grad = match (op, cache) {
            (
                LayerOp::Conv {
                    kernel_param,
                    height,
                    width,
                    in_channels,
                    out_channels,
                    kernel,
                },
                Cache::Conv { input },
            ) => {
                let geo = ConvGeometry {
                    height,
                    width,
                    in_channels,
                    out_channels,
                    kernel,
                };
                let g = layers::conv_backward(
                    &geo,
                    &input,
                    batch,
                    params[kernel_param].tensor.values(),
                    &grad,
                );
                grads[kernel_param] = Some(g.kernel);
                grads[kernel_param + 1] = Some(g.bias);
                g.input
            }
            (LayerOp::Relu, Cache::Relu { input }) => layers::relu_backward(&input, &grad),
            (
                LayerOp::BatchNorm {
                    gamma_param,
                    channels,
                    ..
                },
                Cache::BatchNorm(cache),
            ) => {
                let g = layers::batchnorm_backward(
                    &cache,
                    channels,
                    params[gamma_param].tensor.values(),
                    &grad,
                );
                grads[gamma_param] = Some(g.gamma);
                grads[gamma_param + 1] = Some(g.beta);
                g.input
            }
            (LayerOp::MaxPool { .. }, Cache::Pool { argmax, input_len }) => {
                layers::maxpool_backward(&argmax, input_len, &grad)
            }
            (
                LayerOp::Dense {
                    weight_param,
                    inputs,
                    outputs,
                },
                Cache::Dense { input },
            ) => {
                let g = layers::dense_backward(
                    &input,
                    batch,
                    params[weight_param].tensor.values(),
                    inputs,
                    outputs,
                    &grad,
                );
                grads[weight_param] = Some(g.weight);
                grads[weight_param + 1] = Some(g.bias);
                g.input
            }
            _ => unreachable!("layer cache does not match layer plan"),
        };
    }
    Gradients {
        tensors: params
            .iter()
            .zip(grads)
            .map(|(p, g)| NamedTensor {
                name: p.name.clone(),
                tensor: TensorBuffer::new(
                    p.tensor.shape().to_vec(),
                    g.expect("every parameter receives a gradient"),
                )
                .expect("gradient shape"),
            })
            .collect(),
    }
}

/// Class-probability rows for a batch of `(N, H, W, C)` images.
pub fn forward(ckpt: &Checkpoint, batch: &TensorBuffer, mode: Mode) -> Result<TensorBuffer> {
    let n = check_batch(&ckpt.architecture, batch)?;
    let pass = run_forward(ckpt, batch.values(), n, mode, false);
    let classes = ckpt.architecture.class_count;
    TensorBuffer::new(vec![n, classes], layers::softmax(&pass.logits, classes))
}

fn check_labels(classes: usize, labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            context: "labels".into(),
            expected: vec![n],
            found: vec![labels.len()],
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidLabel {
            label,
            class_count: classes,
        });
    }
    Ok(())
}

/// Mean cross-entropy of a train-mode forward pass and the gradient of every
/// parameter.
pub fn loss_and_grads(
    ckpt: &Checkpoint,
    batch: &TensorBuffer,
    labels: &[usize],
) -> Result<(f64, Gradients)> {
    let (loss, grads, _) = loss_grads_stats(ckpt, batch, labels)?;
    Ok((loss, grads))
}

pub(crate) fn loss_grads_stats(
    ckpt: &Checkpoint,
    batch: &TensorBuffer,
    labels: &[usize],
) -> Result<(f64, Gradients, Vec<BatchStats>)> {
    let n = check_batch(&ckpt.architecture, batch)?;
    let classes = ckpt.architecture.class_count;
    check_labels(classes, labels, n)?;
    let pass = run_forward(ckpt, batch.values(), n, Mode::Train, true);
    let (loss, grad_logits) = layers::softmax_cross_entropy(&pass.logits, classes, labels);
    let stats = pass.batch_stats.clone();
    let grads = run_backward(ckpt, pass, grad_logits);
    Ok((loss, grads, stats))
}

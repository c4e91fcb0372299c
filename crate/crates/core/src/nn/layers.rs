//! Forward and backward kernels for every layer type. Activations are
//! channels-last (`NHWC`); dense activations are `[batch, features]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

pub const BN_EPSILON: f64 = 1e-5;

/// Upper bound on im2col scratch, in scalars.
const IM2COL_BUDGET: usize = 1 << 21;

fn view(data: &[f64], rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn view_mut(data: &mut [f64], rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view")
}

#[derive(Clone, Copy, Debug)]
pub struct ConvGeometry {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_channels
    }

    fn pixels(&self) -> usize {
        self.height * self.width
    }

    fn chunk(&self) -> usize {
        (IM2COL_BUDGET / (self.pixels() * self.patch_len())).max(1)
    }

    fn im2col(&self, input: &[f64], samples: usize, cols: &mut [f64]) {
        let (h, w, c, k) = (self.height, self.width, self.in_channels, self.kernel);
        let pad = (k / 2) as isize;
        let patch = self.patch_len();
        cols[..samples * h * w * patch].fill(0.0);
        for s in 0..samples {
            let img = &input[s * h * w * c..(s + 1) * h * w * c];
            for y in 0..h {
                for x in 0..w {
                    let row = &mut cols[((s * h + y) * w + x) * patch..][..patch];
                    for ky in 0..k {
                        let iy = y as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = x as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = (iy as usize * w + ix as usize) * c;
                            let dst = (ky * k + kx) * c;
                            row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], samples: usize, grad_input: &mut [f64]) {
        let (h, w, c, k) = (self.height, self.width, self.in_channels, self.kernel);
        let pad = (k / 2) as isize;
        let patch = self.patch_len();
        for s in 0..samples {
            let img = &mut grad_input[s * h * w * c..(s + 1) * h * w * c];
            for y in 0..h {
                for x in 0..w {
                    let row = &cols[((s * h + y) * w + x) * patch..][..patch];
                    for ky in 0..k {
                        let iy = y as isize + ky as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = x as isize + kx as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = (iy as usize * w + ix as usize) * c;
                            let src = (ky * k + kx) * c;
                            for ch in 0..c {
                                img[dst + ch] += row[src + ch];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Same-padded stride-1 convolution. `kernel` is `[k, k, in, out]`.
pub fn conv_forward(
    geo: &ConvGeometry,
    input: &[f64],
    batch: usize,
    kernel: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (pixels, patch, out_c) = (geo.pixels(), geo.patch_len(), geo.out_channels);
    let in_len = pixels * geo.in_channels;
    let mut out = vec![0.0; batch * pixels * out_c];
    let chunk = geo.chunk();
    let mut cols = vec![0.0; chunk.min(batch) * pixels * patch];
    let weights = view(kernel, patch, out_c);
    let mut start = 0;
    while start < batch {
        let n = chunk.min(batch - start);
        geo.im2col(&input[start * in_len..(start + n) * in_len], n, &mut cols);
        let rows = n * pixels;
        let out_chunk = &mut out[start * pixels * out_c..(start + n) * pixels * out_c];
        for row in out_chunk.chunks_exact_mut(out_c) {
            row.copy_from_slice(bias);
        }
        general_mat_mul(
            1.0,
            &view(&cols[..rows * patch], rows, patch),
            &weights,
            1.0,
            &mut view_mut(out_chunk, rows, out_c),
        );
        start += n;
    }
    out
}

pub struct ConvGrads {
    pub input: Vec<f64>,
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn conv_backward(
    geo: &ConvGeometry,
    input: &[f64],
    batch: usize,
    kernel: &[f64],
    grad_out: &[f64],
) -> ConvGrads {
    let (pixels, patch, out_c) = (geo.pixels(), geo.patch_len(), geo.out_channels);
    let in_len = pixels * geo.in_channels;
    let mut grads = ConvGrads {
        input: vec![0.0; batch * in_len],
        kernel: vec![0.0; kernel.len()],
        bias: vec![0.0; out_c],
    };
    for row in grad_out.chunks_exact(out_c) {
        for (b, g) in grads.bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    let chunk = geo.chunk();
    let mut cols = vec![0.0; chunk.min(batch) * pixels * patch];
    let weights = view(kernel, patch, out_c);
    let mut start = 0;
    while start < batch {
        let n = chunk.min(batch - start);
        let rows = n * pixels;
        geo.im2col(&input[start * in_len..(start + n) * in_len], n, &mut cols);
        let g = view(&grad_out[start * pixels * out_c..][..rows * out_c], rows, out_c);
        general_mat_mul(
            1.0,
            &view(&cols[..rows * patch], rows, patch).t(),
            &g,
            1.0,
            &mut view_mut(&mut grads.kernel, patch, out_c),
        );
        general_mat_mul(
            1.0,
            &g,
            &weights.t(),
            0.0,
            &mut view_mut(&mut cols[..rows * patch], rows, patch),
        );
        geo.col2im(
            &cols[..rows * patch],
            n,
            &mut grads.input[start * in_len..(start + n) * in_len],
        );
        start += n;
    }
    grads
}

pub fn relu_forward(input: &[f64]) -> Vec<f64> {
    input.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given the layer's *input*.
pub fn relu_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Per-channel statistics of one batch-norm call in train mode.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub struct BatchNormCache {
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Batch-norm with batch statistics over every non-channel axis.
pub fn batchnorm_train_forward(
    input: &[f64],
    channels: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BatchStats, BatchNormCache) {
    let m = (input.len() / channels) as f64;
    let mut mean = vec![0.0; channels];
    for row in input.chunks_exact(channels) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    let mut var = vec![0.0; channels];
    for row in input.chunks_exact(channels) {
        for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();

    let mut normalized = vec![0.0; input.len()];
    let mut out = vec![0.0; input.len()];
    for ((row, nrow), orow) in input
        .chunks_exact(channels)
        .zip(normalized.chunks_exact_mut(channels))
        .zip(out.chunks_exact_mut(channels))
    {
        for c in 0..channels {
            let xhat = (row[c] - mean[c]) * inv_std[c];
            nrow[c] = xhat;
            orow[c] = gamma[c] * xhat + beta[c];
        }
    }
    (
        out,
        BatchStats { mean, var },
        BatchNormCache {
            normalized,
            inv_std,
        },
    )
}

/// Batch-norm with fixed (running) statistics.
pub fn batchnorm_eval_forward(
    input: &[f64],
    channels: usize,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
) -> Vec<f64> {
    let scale: Vec<f64> = (0..channels)
        .map(|c| gamma[c] / (var[c] + BN_EPSILON).sqrt())
        .collect();
    let mut out = vec![0.0; input.len()];
    for (row, orow) in input.chunks_exact(channels).zip(out.chunks_exact_mut(channels)) {
        for c in 0..channels {
            orow[c] = (row[c] - mean[c]) * scale[c] + beta[c];
        }
    }
    out
}

pub struct BatchNormGrads {
    pub input: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn batchnorm_backward(
    cache: &BatchNormCache,
    channels: usize,
    gamma: &[f64],
    grad_out: &[f64],
) -> BatchNormGrads {
    let m = (grad_out.len() / channels) as f64;
    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    for (g, xhat) in grad_out
        .chunks_exact(channels)
        .zip(cache.normalized.chunks_exact(channels))
    {
        for c in 0..channels {
            dgamma[c] += g[c] * xhat[c];
            dbeta[c] += g[c];
        }
    }
    let mut dinput = vec![0.0; grad_out.len()];
    for ((g, xhat), d) in grad_out
        .chunks_exact(channels)
        .zip(cache.normalized.chunks_exact(channels))
        .zip(dinput.chunks_exact_mut(channels))
    {
        for c in 0..channels {
            d[c] = gamma[c] * cache.inv_std[c] / m * (m * g[c] - dbeta[c] - xhat[c] * dgamma[c]);
        }
    }
    BatchNormGrads {
        input: dinput,
        gamma: dgamma,
        beta: dbeta,
    }
}

/// Non-overlapping `size x size` max-pool. Returns the pooled map and, for
/// every output element, the flat input index that won.
pub fn maxpool_forward(
    input: &[f64],
    batch: usize,
    height: usize,
    width: usize,
    channels: usize,
    size: usize,
) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (height / size, width / size);
    let mut out = Vec::with_capacity(batch * oh * ow * channels);
    let mut argmax = Vec::with_capacity(out.capacity());
    for s in 0..batch {
        let base = s * height * width * channels;
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..channels {
                    let mut best = usize::MAX;
                    let mut best_val = f64::NEG_INFINITY;
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx =
                                base + ((oy * size + dy) * width + ox * size + dx) * channels + c;
                            if input[idx] > best_val {
                                best_val = input[idx];
                                best = idx;
                            }
                        }
                    }
                    out.push(best_val);
                    argmax.push(best);
                }
            }
        }
    }
    (out, argmax)
}

pub fn maxpool_backward(argmax: &[usize], input_len: usize, grad_out: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; input_len];
    for (&idx, &g) in argmax.iter().zip(grad_out) {
        grad[idx] += g;
    }
    grad
}

/// `input [batch, inputs] x weight [inputs, outputs] + bias`.
pub fn dense_forward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    bias: &[f64],
    inputs: usize,
    outputs: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * outputs);
    for _ in 0..batch {
        out.extend_from_slice(bias);
    }
    general_mat_mul(
        1.0,
        &view(input, batch, inputs),
        &view(weight, inputs, outputs),
        1.0,
        &mut view_mut(&mut out, batch, outputs),
    );
    out
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn dense_backward(
    input: &[f64],
    batch: usize,
    weight: &[f64],
    inputs: usize,
    outputs: usize,
    grad_out: &[f64],
) -> DenseGrads {
    let g = view(grad_out, batch, outputs);
    let mut dweight = vec![0.0; inputs * outputs];
    general_mat_mul(
        1.0,
        &view(input, batch, inputs).t(),
        &g,
        0.0,
        &mut view_mut(&mut dweight, inputs, outputs),
    );
    let mut dinput = vec![0.0; batch * inputs];
    general_mat_mul(
        1.0,
        &g,
        &view(weight, inputs, outputs).t(),
        0.0,
        &mut view_mut(&mut dinput, batch, inputs),
    );
    let mut dbias = vec![0.0; outputs];
    for row in grad_out.chunks_exact(outputs) {
        for (b, v) in dbias.iter_mut().zip(row) {
            *b += v;
        }
    }
    DenseGrads {
        input: dinput,
        weight: dweight,
        bias: dbias,
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, orow) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &z) in orow.iter_mut().zip(row) {
            *o = (z - max).exp();
            sum += *o;
        }
        orow.iter_mut().for_each(|o| *o /= sum);
    }
    out
}

/// Mean categorical cross-entropy of probability rows against labels.
pub fn cross_entropy(probs: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let total: f64 = probs
        .chunks_exact(classes)
        .zip(labels)
        .map(|(row, &y)| -row[y].ln())
        .sum();
    total / labels.len() as f64
}

/// Mean cross-entropy computed from logits, and its gradient w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &[f64], classes: usize, labels: &[usize]) -> (f64, Vec<f64>) {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for ((row, grow), &y) in logits
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(labels)
    {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - row[y];
        for (c, g) in grow.iter_mut().enumerate() {
            *g = (row[c] - log_norm).exp() / n;
        }
        grow[y] -= 1.0 / n;
    }
    (loss / n, grad)
}

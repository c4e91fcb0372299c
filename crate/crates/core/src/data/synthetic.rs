use rand_distr::{Distribution, StandardNormal};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::TensorBuffer;

/// Per-pixel standard deviation of every synthetic class cluster.
pub const SYNTHETIC_NOISE: f64 = 0.1;

/// Gaussian class clusters in pixel space.
///
/// Class means sit at `0.5 + separation * SYNTHETIC_NOISE * u_c`, where the
/// `u_c` are random orthonormal directions, so any two means are
/// `sqrt(2) * separation` noise standard deviations apart. Samples are
/// clamped to `[0, 1]`. Records are interleaved by class.
pub fn make_synthetic(
    class_count: usize,
    per_class: usize,
    image_shape: (usize, usize, usize),
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let (h, w, c) = image_shape;
    let dim = h * w * c;
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "separation must be finite and non-negative, got {separation}"
        )));
    }
    if class_count < 2 || per_class == 0 || dim == 0 {
        return Err(Error::InvalidConfig(
            "synthetic data needs at least two classes, one record per class and a non-empty image".into(),
        ));
    }
    if class_count > dim {
        return Err(Error::InvalidConfig(format!(
            "{class_count} orthogonal class directions do not fit in {dim} pixels"
        )));
    }
    let mut rng = crate::seed::rng(seed);
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(class_count);
    while directions.len() < class_count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for u in &directions {
            let proj: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|a| *a /= norm);
            directions.push(v);
        }
    }
    let offset = separation * SYNTHETIC_NOISE;
    let means: Vec<Vec<f64>> = directions
        .iter()
        .map(|u| u.iter().map(|x| 0.5 + offset * x).collect())
        .collect();

    let n = class_count * per_class;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (class, mean) in means.iter().enumerate() {
            labels.push(class);
            for &m in mean {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push((m + SYNTHETIC_NOISE * z).clamp(0.0, 1.0));
            }
        }
    }
    let id = format!("synthetic-c{class_count}-p{per_class}-{h}x{w}x{c}-sep{separation}-seed{seed}");
    LabeledDataset::new(id, TensorBuffer::new(vec![n, h, w, c], values)?, labels, class_count)
}

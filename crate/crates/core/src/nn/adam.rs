use serde::{Deserialize, Serialize};

use super::checkpoint::NamedTensor;
use super::network::Gradients;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        let positive = |x: f64| x > 0.0;
        if !positive(self.learning_rate) || !unit(self.beta1) || !unit(self.beta2) || !positive(self.epsilon) {
            return Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    /// Zeroed moments sized to `params`.
    pub fn new(params: &[NamedTensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    /// Number of scalars this state tracks.
    pub fn tracked_scalars(&self) -> usize {
        self.first.iter().map(Vec::len).sum()
    }
}

/// One bias-corrected Adam update at step `state.step + 1`.
pub fn adam_step(
    params: &mut [NamedTensor],
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.tensors.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::ShapeMismatch {
            context: "adam_step tensor count".into(),
            expected: vec![params.len()],
            found: vec![grads.tensors.len(), state.first.len()],
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let correct1 = 1.0 - cfg.beta1.powi(t);
    let correct2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(&grads.tensors).enumerate() {
        if p.tensor.shape() != g.tensor.shape() {
            return Err(Error::ShapeMismatch {
                context: format!("adam_step gradient for {}", p.name),
                expected: p.tensor.shape().to_vec(),
                found: g.tensor.shape().to_vec(),
            });
        }
        let m = &mut state.first[i];
        let v = &mut state.second[i];
        for (((w, &gr), m), v) in p
            .tensor
            .values_mut()
            .iter_mut()
            .zip(g.tensor.values())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gr;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gr * gr;
            let m_hat = *m / correct1;
            let v_hat = *v / correct2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::TensorBuffer;

    fn scalar(v: f64) -> Vec<NamedTensor> {
        vec![NamedTensor {
            name: "w".into(),
            tensor: TensorBuffer::new(vec![1], vec![v]).unwrap(),
        }]
    }

    fn grad(v: f64) -> Gradients {
        Gradients { tensors: scalar(v) }
    }

    #[test]
    fn zero_gradient_leaves_weights_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut params = scalar(0.5);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grad(2.0), &mut state, &cfg).unwrap();
        let w = params[0].tensor.values()[0];
        let (m, v) = (state.first[0][0], state.second[0][0]);
        adam_step(&mut params, &grad(0.0), &mut state, &cfg).unwrap();
        assert_eq!(state.first[0][0], 0.9 * m);
        assert_eq!(state.second[0][0], 0.999 * v);
        // Weight still moves on residual momentum; with a fresh state it does not.
        assert_ne!(params[0].tensor.values()[0], w);
        let mut fresh = scalar(0.5);
        let mut fresh_state = AdamState::new(&fresh);
        adam_step(&mut fresh, &grad(0.0), &mut fresh_state, &cfg).unwrap();
        assert_eq!(fresh[0].tensor.values()[0], 0.5);
    }

    #[test]
    fn scalar_trace_matches_hand_computation() {
        let cfg = AdamConfig::default();
        let g = -3.0;
        let mut params = scalar(1.0);
        let mut state = AdamState::new(&params);
        // Hand trace: m1 = 0.1 g, v1 = 0.001 g^2, m_hat = g, v_hat = g^2.
        adam_step(&mut params, &grad(g), &mut state, &cfg).unwrap();
        let expected1 = 1.0 - 1e-3 * g / (g.abs() + 1e-8);
        assert!((params[0].tensor.values()[0] - expected1).abs() < 1e-15);
        assert!((params[0].tensor.values()[0] - (1.0 + 1e-3)).abs() < 1e-10);
        // Step 2 with the same gradient: m_hat = g, v_hat = g^2 again.
        adam_step(&mut params, &grad(g), &mut state, &cfg).unwrap();
        let m2 = 0.9 * 0.1 * g + 0.1 * g;
        let v2 = 0.999 * 0.001 * g * g + 0.001 * g * g;
        let step2 = 1e-3 * (m2 / (1.0 - 0.81)) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((params[0].tensor.values()[0] - (expected1 - step2)).abs() < 1e-15);
    }
}

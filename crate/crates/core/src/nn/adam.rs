//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled from the gradient: added as `weight_decay * param` before the
    /// moment update (classic L2 form).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// Moment buffers are shaped after `shapes`, one entry per parameter tensor.
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Convenience constructor sized after a parameter set.
    pub fn for_params<P: super::Params + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(NnError::ShapeMismatch {
                expected: format!("{} parameter tensors", self.first.len()),
                found: format!("{} params, {} grads", params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(NnError::ShapeMismatch {
                    expected: format!("tensor {i} of length {}", self.first[i].len()),
                    found: format!("param {}, grad {}", p.len(), g.len()),
                });
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for j in 0..p.len() {
                let grad = g[j] + weight_decay * p[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * grad;
                v[j] = beta2 * v[j] + (1.0 - beta2) * grad * grad;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }

    /// Steps a whole parameter set with a matching gradient set.
    pub fn step_params<P, G>(&mut self, params: &mut P, grads: &G) -> Result<(), NnError>
    where
        P: super::ParamsMut + ?Sized,
        G: super::Params + ?Sized,
    {
        let mut p = params.param_slices_mut();
        let g = grads.param_slices();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        let before = p.clone();
        state.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_learning_rate() {
        let cfg = AdamConfig::with_learning_rate(0.005);
        let mut state = AdamState::new(cfg, &[3]);
        let mut p = vec![0.0; 3];
        state.step(&mut [&mut p], &[&[0.3, -7.0, 1e-3]]).unwrap();
        assert!((p[0] + 0.005).abs() < 1e-6);
        assert!((p[1] - 0.005).abs() < 1e-6);
        assert!((p[2] + 0.005).abs() < 1e-4);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0; 3];
        assert!(state.step(&mut [&mut p], &[&[0.0; 3]]).is_err());
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn trajectories_are_bit_identical() {
        let run = || {
            let mut state = AdamState::new(AdamConfig::default(), &[2]);
            let mut p = vec![1.0, 2.0];
            for t in 0..50 {
                let g = [p[0] * 0.3 + t as f64 * 1e-3, (p[1] - 1.0).sin()];
                state.step(&mut [&mut p], &[&g]).unwrap();
            }
            p
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}

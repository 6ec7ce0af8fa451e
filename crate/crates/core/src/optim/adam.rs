use serde::{Deserialize, Serialize};

use crate::error::{check_dim, CoralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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
            beta1: 0.90,
            beta2: 0.99,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive moment estimation.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Result<Self> {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(CoralError::Config(format!("learning rate {learning_rate} must be >= 0")));
        }
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)) {
            return Err(CoralError::Config(format!(
                "decay rates must lie in [0, 1), got {beta1}, {beta2}"
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(CoralError::Config(format!("epsilon {epsilon} must be > 0")));
        }
        Ok(Self {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_dim("parameters", self.first_moment.len(), params.len())?;
        check_dim("gradients", self.first_moment.len(), grads.len())?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(CoralError::NonFiniteGradient { index });
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so the update is
        // -lr * g / (|g| + eps)
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..Default::default()
        };
        for g in [3.0, -0.2, 1e-3, 50.0] {
            let mut opt = Adam::new(cfg, 1).unwrap();
            let mut p = [1.0];
            opt.step(&mut p, &[g]).unwrap();
            let expected = 1.0 - 0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "{g}");
            assert!(((1.0 - p[0]).abs() - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut opt = Adam::new(AdamConfig::default(), 3).unwrap();
        let mut p = [1.0, -2.0, 0.5];
        for _ in 0..100 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
        assert_eq!(opt.steps_taken(), 100);
    }

    #[test]
    fn equal_gradients_equal_updates() {
        let mut opt = Adam::new(AdamConfig::default(), 2).unwrap();
        let mut p = [0.25, 0.25];
        for i in 0..10 {
            let g = (i as f64).cos();
            opt.step(&mut p, &[g, g]).unwrap();
        }
        assert_eq!(p[0].to_bits(), p[1].to_bits());
    }

    #[test]
    fn rejects_bad_input() {
        let mut opt = Adam::new(AdamConfig::default(), 2).unwrap();
        let mut p = [0.0, 0.0];
        assert!(matches!(
            opt.step(&mut p, &[0.0, f64::NAN]),
            Err(CoralError::NonFiniteGradient { index: 1 })
        ));
        assert!(opt.step(&mut p, &[0.0]).is_err());
        assert!(Adam::new(AdamConfig { beta1: 1.0, ..Default::default() }, 1).is_err());
        assert!(Adam::new(AdamConfig { learning_rate: -1.0, ..Default::default() }, 1).is_err());
    }
}

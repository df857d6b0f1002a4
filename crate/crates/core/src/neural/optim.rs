use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            ..OptimizerConfig::adam(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Optimizer with its running state.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    lr_scale: f64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        let moments = match config.algorithm {
            Algorithm::Sgd => 0,
            Algorithm::Adam => num_params,
        };
        Ok(OptimizerState {
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
            lr_scale: 1.0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Multiplies the base learning rate (used by schedules).
    pub fn set_lr_scale(&mut self, scale: f64) {
        self.lr_scale = scale;
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate * self.lr_scale
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != grad.len() {
            return Err(invalid("parameter and gradient lengths differ"));
        }
        self.step += 1;
        let lr = self.learning_rate();
        match self.config.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Algorithm::Adam => {
                if self.m.len() != params.len() {
                    return Err(invalid("optimizer state sized for a different network"));
                }
                let OptimizerConfig {
                    beta1, beta2, eps, ..
                } = self.config;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    /// Effective step length applied to coordinate `i` in the last update,
    /// i.e. the diagonal metric of the step. Used to scale proximal maps.
    pub fn coordinate_step(&self, i: usize) -> f64 {
        match self.config.algorithm {
            Algorithm::Sgd => self.learning_rate(),
            Algorithm::Adam => {
                if self.step == 0 {
                    return self.learning_rate();
                }
                let c2 = 1.0 - self.config.beta2.powi(self.step as i32);
                self.learning_rate() / ((self.v[i] / c2).sqrt() + self.config.eps)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut opt = OptimizerState::new(OptimizerConfig::sgd(0.1), 1).unwrap();
        let mut p = [1.0];
        opt.step(&mut p, &[0.5]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let lr = 1e-3;
        for g in [3.0, -0.02, 1e-3] {
            let mut opt = OptimizerState::new(OptimizerConfig::adam(lr), 1).unwrap();
            let mut p = [0.0];
            opt.step(&mut p, &[g]).unwrap();
            let expected = -lr * f64::signum(g) * g.abs() / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
            assert!((p[0].abs() - lr).abs() < lr * 1e-4);
        }
    }

    #[test]
    fn zero_gradients_leave_params() {
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.01), 3).unwrap();
        let mut p = [0.5, -1.0, 2.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(OptimizerState::new(OptimizerConfig::adam(0.0), 1).is_err());
        let mut c = OptimizerConfig::adam(0.1);
        c.beta2 = 1.0;
        assert!(OptimizerState::new(c, 1).is_err());
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.1), 2).unwrap();
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}

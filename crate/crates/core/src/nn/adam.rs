use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam with per-parameter moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Result<Self> {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = config;
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be >= 0, got {lr}")));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::invalid(format!("Adam betas must lie in (0, 1), got {beta1}, {beta2}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid(format!("Adam epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            step: 0,
            config,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
        })
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.first, &self.second)
    }

    /// Applies one update from `params.grads`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "Adam state for {} parameters, store has {}",
                self.first.len(),
                params.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((theta, &g), m), v) in params
            .values
            .iter_mut()
            .zip(&params.grads)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

/// Rescales the gradient so its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm {
        let k = max_norm / norm;
        params.grads.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::{Segment, SegmentKind};

    fn store(values: Vec<f64>) -> ParamStore {
        let mut p = ParamStore::zeros(vec![Segment {
            offset: 0,
            len: values.len(),
            kind: SegmentKind::Bias,
        }]);
        p.set_values(values).unwrap();
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = store(vec![1.0, -2.0, 0.5]);
        p.grads = vec![0.3, -4.0, 1e-3];
        let mut adam = AdamState::new(AdamConfig::default(), 3).unwrap();
        adam.step(&mut p).unwrap();
        let moved = [1.0 - p.values[0], -2.0 - p.values[1], 0.5 - p.values[2]];
        for (d, g) in moved.iter().zip([0.3, -4.0, 1e-3]) {
            let expected = 1e-3 * g / (f64::abs(g) + 1e-8);
            assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
        }
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = store(vec![1.0, 2.0]);
        let mut adam = AdamState::new(AdamConfig::default(), 2).unwrap();
        adam.step(&mut p).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.values, vec![1.0, 2.0]);
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn quadratic_descent() {
        // loss ½θ², gradient θ
        let mut p = store(vec![1.0]);
        let mut adam = AdamState::new(AdamConfig::default(), 1).unwrap();
        let mut last = p.values[0];
        for _ in 0..2 {
            p.grads[0] = p.values[0];
            adam.step(&mut p).unwrap();
            assert!(p.values[0] < last);
            last = p.values[0];
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = |c| AdamState::new(c, 1).is_err();
        assert!(bad(AdamConfig { beta1: 1.0, ..AdamConfig::default() }));
        assert!(bad(AdamConfig { beta2: 0.0, ..AdamConfig::default() }));
        assert!(bad(AdamConfig { epsilon: 0.0, ..AdamConfig::default() }));
        assert!(bad(AdamConfig::with_lr(-1.0)));
    }

    #[test]
    fn clipping() {
        let mut p = store(vec![0.0, 0.0]);
        p.grads = vec![30.0, 40.0];
        assert_eq!(clip_grad_norm(&mut p, 10.0), 50.0);
        assert!((p.grad_norm() - 10.0).abs() < 1e-12);
        p.grads = vec![3.0, 4.0];
        clip_grad_norm(&mut p, 10.0);
        assert_eq!(p.grads, vec![3.0, 4.0]);
    }
}

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// AdamW hyperparameters. `lr` and `weight_decay` defaults are starting
/// points, not tuned values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

/// Adam with decoupled weight decay:
///
/// ```text
/// θ ← θ − lr·wd·θ
/// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
/// θ ← θ − lr · m̂ / (√v̂ + ε)   with m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, params: &[Tensor]) -> Self {
        let m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Self { config, step: 0, m, v }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::shape("parameter, gradient and moment sizes differ"));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            for (j, theta) in p.data_mut().iter_mut().enumerate() {
                *theta -= c.lr * c.weight_decay * *theta;
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let before = p.clone();
        let mut s = AdamWState::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }, &p);
        for _ in 0..5 {
            s.step(&mut p, &[vec![0.0; 3]]).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn first_step_closed_form() {
        let (lr, wd, eps, theta, g) = (0.01, 0.1, 1e-8, 2.0, 0.5);
        let cfg = AdamWConfig { lr, weight_decay: wd, eps, ..Default::default() };
        let mut p = vec![Tensor::vector(vec![theta])];
        let mut s = AdamWState::new(cfg, &p);
        s.step(&mut p, &[vec![g]]).unwrap();
        // t = 1: m̂ = g, v̂ = g²
        let expected = theta - lr * (g / (g.abs() + eps)) - lr * wd * theta;
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn quadratic_descends() {
        let target = [3.0, -1.0, 0.5];
        let loss = |p: &[f64]| p.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut p = vec![Tensor::vector(vec![0.0; 3])];
        let mut s = AdamWState::new(AdamWConfig { lr: 0.05, weight_decay: 0.0, ..Default::default() }, &p);
        let mut history = vec![loss(p[0].data())];
        for _ in 0..100 {
            let g: Vec<f64> = p[0].data().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            s.step(&mut p, &[g]).unwrap();
            history.push(loss(p[0].data()));
        }
        // monotone after a short warm-up
        for w in history[5..60].windows(2) {
            assert!(w[1] < w[0], "loss went up: {:?}", w);
        }
        assert!(history[100] < 1e-2 * history[0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![Tensor::vector(vec![1.0])];
        let mut s = AdamWState::new(AdamWConfig::default(), &p);
        assert!(matches!(s.step(&mut p, &[vec![1.0, 2.0]]), Err(Error::Shape(_))));
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{argument, Result};

/// Adaptive-moment optimizer with bias correction. Minimizes: each step moves
/// parameters against the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(argument(format!(
                "optimizer sized for {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powf(self.t as f64);
        let bc2 = 1.0 - self.beta2.powf(self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescales `grad` in place so its Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(3);
        let mut p = vec![1.0, -2.0, 3.0];
        opt.step(&mut p, &[0.0; 3], 1e-3).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let mut opt = Adam::new(4);
        let mut p = vec![0.0; 4];
        opt.step(&mut p, &[0.7; 4], 3e-4).unwrap();
        for x in &p {
            assert!((x + 3e-4).abs() < 1e-10);
        }
        let mut opt = Adam::new(2);
        let mut p = vec![0.0; 2];
        opt.step(&mut p, &[-2.5, -2.5], 0.1).unwrap();
        assert!(p.iter().all(|x| (x - 0.1).abs() < 1e-8));
    }

    #[test]
    fn deterministic() {
        let grads = [[0.3, -0.1], [0.2, 0.4], [-0.5, 0.1]];
        let run = || {
            let mut opt = Adam::new(2);
            let mut p = vec![0.5, 0.5];
            for g in &grads {
                opt.step(&mut p, g, 1e-2).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn size_mismatch() {
        let mut opt = Adam::new(2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3], 0.1).is_err());
    }

    #[test]
    fn clipping() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.1, 0.0];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.1, 0.0]);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Float, Tensor};

/// Bias-corrected ADAM with per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Float> Default for Adam<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Adam<T> {
    pub fn new() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using each parameter's accumulated gradient
    /// (missing gradients count as zero), then clears the gradients.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], lr: f64) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Invalid("parameter set changed between ADAM steps".into()));
        }
        for (i, p) in params.iter().enumerate() {
            if let Some(g) = p.grad() {
                if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of parameter {i} at index {pos}")));
                }
            }
        }

        self.t += 1;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let bc1 = T::from_f64_lossy(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::from_f64_lossy(1.0 - self.beta2.powi(self.t as i32));
        let eps = T::from_f64_lossy(self.eps);
        let lr = T::from_f64_lossy(lr);

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let grad = p.grad().map(<[T]>::to_vec);
            let data = p.data_mut();
            for j in 0..data.len() {
                let g = grad.as_ref().map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

/// Multiplicative learning-rate decay driven by validation-loss stagnation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LrScheduler {
    lr: f64,
    pub factor: f64,
    pub patience: usize,
    best: f64,
    stale: usize,
}

impl LrScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize) -> Self {
        assert!(factor > 0.0 && factor <= 1.0);
        Self {
            lr,
            factor,
            patience: patience.max(1),
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Records one epoch's validation loss and returns the lr to use next.
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: f64) -> Tensor<f64> {
        Tensor::from_vec(vec![1], vec![v]).unwrap().with_grad()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = param(1.0);
        p.accumulate_grad(&[0.3]);
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], 1e-3).unwrap();
        // m̂ = g, v̂ = g², Δ = -lr·g/(|g|+ε)
        let expect = 1.0 - 1e-3 * 0.3 / (0.3 + 1e-8);
        assert!((p.data()[0] - expect).abs() < 1e-15);
        assert!(p.grad().is_none());
    }

    #[test]
    fn zero_grad_leaves_param_but_counts_step() {
        let mut p = param(2.5);
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], 1e-3).unwrap();
        assert_eq!(p.data()[0], 2.5);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn constant_gradient_steps_do_not_grow() {
        // reference recurrence evaluated independently
        let (b1, b2, eps, lr, g) = (0.9f64, 0.999f64, 1e-8, 1e-2, 0.7);
        let (mut m, mut v) = (0.0, 0.0);
        let mut reference = Vec::new();
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            reference.push(-lr * mh / (vh.sqrt() + eps));
        }

        let mut p = param(0.0);
        let mut adam = Adam::new();
        let mut deltas = Vec::new();
        for _ in 0..2 {
            let before = p.data()[0];
            p.accumulate_grad(&[g]);
            adam.step(&mut [&mut p], lr).unwrap();
            deltas.push(p.data()[0] - before);
        }
        for (d, r) in deltas.iter().zip(&reference) {
            assert!((d - r).abs() < 1e-15);
        }
        assert!(deltas[1].abs() <= deltas[0].abs() * (1.0 + 1e-6));
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut p = Tensor::from_vec(vec![3], vec![0.1f32, -2.0, 7.5]).unwrap().with_grad();
        let before = p.data().to_vec();
        let mut adam = Adam::new();
        for _ in 0..3 {
            p.accumulate_grad(&[1.0, -0.5, 3.0]);
            adam.step(&mut [&mut p], 0.0).unwrap();
        }
        assert_eq!(p.data(), before.as_slice());
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = param(1.0);
        p.accumulate_grad(&[f64::NAN]);
        let mut adam = Adam::new();
        assert!(matches!(adam.step(&mut [&mut p], 1e-3), Err(Error::NonFinite(_))));
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn improving_losses_keep_lr() {
        let mut s = LrScheduler::new(1e-3, 0.5, 5);
        for i in 0..20 {
            assert_eq!(s.step(10.0 - i as f64), 1e-3);
        }
    }

    #[test]
    fn five_stale_epochs_halve_once() {
        let mut s = LrScheduler::new(1e-3, 0.5, 5);
        s.step(1.0);
        for _ in 0..4 {
            assert_eq!(s.step(1.0), 1e-3);
        }
        assert_eq!(s.step(1.0), 5e-4);
    }

    #[test]
    fn two_windows_quarter_lr() {
        let mut s = LrScheduler::new(1e-3, 0.5, 5);
        s.step(1.0);
        for _ in 0..10 {
            s.step(2.0);
        }
        assert_eq!(s.lr(), 2.5e-4);
    }
}

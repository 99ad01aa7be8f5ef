//! Learning-rate schedule and momentum SGD.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Linear warm-up followed by cosine annealing to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub peak_lr: f64,
}

impl Schedule {
    /// `peak·(e+1)/warmup` during warm-up, then
    /// `peak·½(1 + cos(π·(e − warmup)/(epochs − warmup)))`.
    pub fn lr_at_epoch(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.epochs {
            return Err(Error::OutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        if epoch < self.warmup_epochs {
            return Ok(self.peak_lr * ((epoch + 1) as f64 / self.warmup_epochs as f64));
        }
        let progress = (epoch - self.warmup_epochs) as f64 / (self.epochs - self.warmup_epochs) as f64;
        Ok(self.peak_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress)))
    }
}

/// One momentum-SGD update: `v ← μ·v + g`, `p ← p − lr·v`.
///
/// Parameters are left untouched if any gradient is non-finite.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape(format!(
            "{} parameters, {} gradients, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Velocity buffers for a fixed list of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SgdState {
    velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            velocity: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Updates tensor `slot`.
    pub fn step(&mut self, slot: usize, params: &mut [f64], grads: &[f64], lr: f64, momentum: f64) -> Result<()> {
        let v = self
            .velocity
            .get_mut(slot)
            .ok_or_else(|| Error::shape(format!("no optimizer slot {slot}")))?;
        sgd_step(params, grads, v, lr, momentum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_schedule(epochs: usize) -> Schedule {
        Schedule {
            epochs,
            warmup_epochs: 10,
            peak_lr: 1e-4,
        }
    }

    #[test]
    fn warmup_ramp() {
        let s = reference_schedule(100);
        assert!((s.lr_at_epoch(4).unwrap() - 5e-5).abs() < 1e-20);
        assert_eq!(s.lr_at_epoch(9).unwrap(), 1e-4);
        assert_eq!(s.lr_at_epoch(10).unwrap(), 1e-4);
    }

    #[test]
    fn annealing_midpoint_and_range() {
        let s = reference_schedule(110);
        assert!((s.lr_at_epoch(60).unwrap() - 5e-5).abs() < 1e-12);
        assert_eq!(s.lr_at_epoch(110), Err(Error::OutOfRange { epoch: 110, epochs: 110 }));
        let mut prev = f64::INFINITY;
        for e in 10..110 {
            let lr = s.lr_at_epoch(e).unwrap();
            assert!(lr <= prev && lr > 0.0);
            prev = lr;
        }
    }

    #[test]
    fn plain_step() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[0.25], &mut v, 1.0, 0.0).unwrap();
        assert_eq!(p, [0.75]);
        sgd_step(&mut p, &[0.0], &mut [0.0], 1.0, 0.0).unwrap();
        assert_eq!(p, [0.75]);
    }

    #[test]
    fn momentum_recurrence() {
        let (lr, g) = (0.1, 0.5);
        let mut p = [0.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[g], &mut v, lr, 0.9).unwrap();
        let after_one = p[0];
        sgd_step(&mut p, &[g], &mut v, lr, 0.9).unwrap();
        // second displacement is (1 + 0.9)·lr·g, total (1 + 1.9)·lr·g
        assert!((after_one - p[0] - 1.9 * lr * g).abs() < 1e-15);
        assert!((-p[0] - 2.9 * lr * g).abs() < 1e-15);
    }

    #[test]
    fn step_errors() {
        let mut p = [1.0, 2.0];
        let mut v = [0.0, 0.0];
        assert!(matches!(sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.0), Err(Error::ShapeMismatch(_))));
        assert_eq!(sgd_step(&mut p, &[1.0, f64::NAN], &mut v, 0.1, 0.0), Err(Error::NonFiniteGradient));
        assert_eq!(p, [1.0, 2.0]);
    }
}

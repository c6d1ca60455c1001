use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            lr,
        }
    }

    /// One bias-corrected Adam update. Nothing is modified if a gradient
    /// entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("adam gradient length", params.len(), grads.len()));
        }
        if params.len() != self.m.len() {
            return Err(Error::dim("adam state length", self.m.len(), params.len()));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                context: "adam gradient".into(),
                index,
            });
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = [1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = AdamState::new(3, 0.01);
        let mut p = [0.0; 3];
        s.step(&mut p, &[4.0, -0.3, 1e-2]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
        assert!((p[1] - 0.01).abs() < 1e-8);
        assert!((p[2] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn quadratic_run_converges() {
        let mut s = AdamState::new(1, 0.1);
        let mut x = [1.0];
        let mut trace = Vec::new();
        for _ in 0..100 {
            let g = [2.0 * x[0]];
            s.step(&mut x, &g).unwrap();
            trace.push(x[0].abs());
        }
        // Adam oscillates around the minimum; after the first dip below 0.1
        // the successive peaks of |x| shrink strictly.
        let burn = trace.iter().position(|&v| v < 0.1).expect("reaches 0.1");
        let peaks: Vec<f64> = (burn + 1..trace.len() - 1)
            .filter(|&i| trace[i] >= trace[i - 1] && trace[i] > trace[i + 1])
            .map(|i| trace[i])
            .collect();
        assert!(peaks.len() >= 4);
        assert!(peaks.windows(2).all(|w| w[1] < w[0]), "{peaks:?}");
        assert!(trace[99] < 0.01);
    }

    #[test]
    fn non_finite_gradient_reports_index() {
        let mut s = AdamState::new(3, 0.1);
        let mut p = [1.0, 1.0, 1.0];
        let err = s.step(&mut p, &[0.0, f64::NAN, 1.0]).unwrap_err();
        assert_eq!(
            err,
            Error::Divergence {
                context: "adam gradient".into(),
                index: 1
            }
        );
        assert_eq!(p, [1.0; 3]);
        assert_eq!(s.t, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = AdamState::new(2, 0.05);
            let mut p = [0.3, -0.7];
            for k in 0..10 {
                s.step(&mut p, &[0.1 * k as f64, -0.2]).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
        assert_eq!(sa, sb);
    }
}

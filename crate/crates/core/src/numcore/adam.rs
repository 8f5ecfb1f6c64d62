//! Adam optimizer.

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled-style decay: applied as an extra `λ·w` term added to
    /// the normalized step, not folded into the moment estimates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Optimizer state: first/second moment accumulators shaped like their
/// parameters, plus the step counter.
pub struct Adam<S: Scalar> {
    pub cfg: AdamConfig,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(cfg: AdamConfig, param_lens: &[usize]) -> Self {
        Adam {
            cfg,
            step: 0,
            m: param_lens.iter().map(|&n| vec![S::zero(); n]).collect(),
            v: param_lens.iter().map(|&n| vec![S::zero(); n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over all parameter slices. `params[i]` and `grads[i]`
    /// must have the length this optimizer was built with.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "adam: {} parameter groups, {} gradient groups, state has {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let b1 = S::from_f64(self.cfg.beta1);
        let b2 = S::from_f64(self.cfg.beta2);
        let lr = S::from_f64(self.cfg.lr);
        let eps = S::from_f64(self.cfg.eps);
        let wd = S::from_f64(self.cfg.weight_decay);
        let bc1 = S::from_f64(1.0 - self.cfg.beta1.powi(self.step as i32));
        let bc2 = S::from_f64(1.0 - self.cfg.beta2.powi(self.step as i32));
        for ((w, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if w.len() != m.len() || g.len() != m.len() {
                return Err(Error::config(format!(
                    "adam: parameter len {} / grad len {} vs state len {}",
                    w.len(),
                    g.len(),
                    m.len()
                )));
            }
            for i in 0..w.len() {
                let gi = g[i];
                if !gi.is_finite() {
                    return Err(Error::Numerical(format!(
                        "adam: non-finite gradient {gi} at step {}",
                        self.step
                    )));
                }
                m[i] = b1 * m[i] + (S::one() - b1) * gi;
                v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] = w[i] - lr * (m_hat / (v_hat.sqrt() + eps) + wd * w[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut adam: Adam<f64> = Adam::new(AdamConfig::default(), &[3]);
        let mut w = vec![1.0, -2.0, 0.5];
        let orig = w.clone();
        let g = vec![0.0; 3];
        adam.step(&mut [&mut w], &[&g]).unwrap();
        assert_eq!(w, orig);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // One step of the recurrences, written out by hand:
        //   m = 0.1 g, v = 0.001 g², m̂ = g, v̂ = g²,
        //   Δw = -lr · g / (|g| + eps)
        let lr = 0.01;
        let cfg = AdamConfig {
            lr,
            ..AdamConfig::default()
        };
        let mut adam: Adam<f64> = Adam::new(cfg, &[2]);
        let mut w = vec![0.3, -0.7];
        let g = vec![2.0, -0.5];
        adam.step(&mut [&mut w], &[&g]).unwrap();
        for (i, (&wi, &gi)) in [0.3, -0.7].iter().zip(&g).enumerate() {
            let m = 0.1 * gi;
            let v = 0.001 * gi * gi;
            let m_hat = m / 0.1;
            let v_hat = v / 0.001;
            let expect = wi - lr * m_hat / (v_hat.sqrt() + 1e-8);
            assert_relative_eq!(w[i], expect, max_relative = 1e-12);
            // ≈ -lr · sign(g) up to bias correction and eps
            assert_relative_eq!(w[i] - wi, -lr * gi.signum(), max_relative = 1e-6);
        }
    }

    #[test]
    fn decay_with_zero_grad_shrinks_toward_zero() {
        // Zero gradient leaves both moments at zero, so the whole step
        // is the decay term: w ← w - lr·λ·w.
        let cfg = AdamConfig {
            lr: 0.01,
            weight_decay: 1e-5,
            ..AdamConfig::default()
        };
        let mut adam: Adam<f64> = Adam::new(cfg, &[1]);
        let mut w = vec![4.0];
        let g = vec![0.0];
        adam.step(&mut [&mut w], &[&g]).unwrap();
        assert_relative_eq!(w[0], 4.0 - 0.01 * 1e-5 * 4.0, max_relative = 1e-12);
    }
}

//! Parameter access shared by every trainable model, the Adam update, and
//! soft target tracking.

use crate::error::{Error, Result};

/// A model (or gradient) viewed as an ordered list of flat tensors.
///
/// Gradients mirror their model: the i-th slice of a gradient belongs to
/// the i-th slice of the parameters.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, other: &Self, alpha: f64)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<P: Parameters + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self {
            config,
            step: 0,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn update<P, G>(&mut self, params: &mut P, grads: &G) -> Result<()>
    where
        P: Parameters + ?Sized,
        G: Parameters + ?Sized,
    {
        let grads = grads.tensors();
        let params = params.tensors_mut();
        if params.len() != grads.len() || params.len() != self.first_moment.len() {
            return Err(Error::Internal(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Internal("optimizer tensor length mismatch".into()));
            }
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// `target = (1 - tau) * target + tau * online`.
pub fn soft_update<P: Parameters + ?Sized>(target: &mut P, online: &P, tau: f64) {
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (t, o) in t.iter_mut().zip(o) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }
}

/// Plain vector of trainable scalars (e.g. a policy log standard deviation).
impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Max-norm relative difference between two tensors of equal length:
/// `max|a - b| / max(max|a|, max|b|)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "relative_error on unequal lengths");
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.5, -1.0, 2.0];
        let mut adam = Adam::new(AdamConfig::with_lr(1e-3), &p);
        adam.update(&mut p, &vec![0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = vec![0.0, 0.0, 0.0];
        let g = vec![3.0, -0.02, 1e-3];
        let mut adam = Adam::new(AdamConfig::with_lr(0.01), &p);
        adam.update(&mut p, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for (x, gi) in p.iter().zip(&g) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((x - expected).abs() < 1e-15);
            assert!((x + 0.01 * gi.signum()).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = vec![1.0, 2.0];
            let mut adam = Adam::new(AdamConfig::with_lr(0.1), &p);
            for i in 0..5 {
                adam.update(&mut p, &vec![f64::from(i) - 2.0, 0.3]).unwrap();
            }
            (p, adam)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn soft_update_endpoints() {
        let online = vec![1.0, -2.0, 3.5];
        let mut target = vec![0.1, 0.2, 0.3];
        soft_update(&mut target, &online, 0.0);
        assert_eq!(target, vec![0.1, 0.2, 0.3]);
        soft_update(&mut target, &online, 1.0);
        assert_eq!(target, online);
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 2.0], &[1.0, 2.2]) - 0.2 / 2.2).abs() < 1e-15);
    }
}

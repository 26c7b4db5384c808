use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::nn::Param;
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }
}

impl AdamConfig {
    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based), computed in 64-bit.
pub fn adam_update<T: Scalar>(param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i].as_f64();
        let mi = cfg.beta1 * m[i].as_f64() + (1.0 - cfg.beta1) * g;
        let vi = cfg.beta2 * v[i].as_f64() + (1.0 - cfg.beta2) * g * g;
        m[i] = T::from_f64(mi);
        v[i] = T::from_f64(vi);
        let step = cfg.lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
        param[i] = T::from_f64(param[i].as_f64() - step);
    }
}

/// Adam moments for every parameter of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &[Param]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()).expect("parameter shapes are valid"))
                .collect::<Vec<_>>()
        };
        Self {
            cfg,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies one update. Parameters without a gradient are left alone.
    pub fn step(&mut self, params: &mut [Param], grads: &[Option<Tensor<f32>>]) {
        assert_eq!(params.len(), grads.len(), "one gradient slot per parameter");
        self.t += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            adam_update(
                p.value.data_mut(),
                g.data(),
                self.m[i].data_mut(),
                self.v[i].data_mut(),
                self.t,
                &self.cfg,
            );
        }
    }

    /// Moments as named tensors for a checkpoint.
    pub fn to_extra(&self, params: &[Param]) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::with_capacity(2 * params.len());
        for (i, p) in params.iter().enumerate() {
            out.push((format!("adam.m.{}", p.name), self.m[i].clone()));
            out.push((format!("adam.v.{}", p.name), self.v[i].clone()));
        }
        out
    }

    /// Rebuilds the optimizer from checkpoint tensors.
    pub fn from_extra(cfg: AdamConfig, t: u64, params: &[Param], extra: &[(String, Tensor<f32>)]) -> Result<Self, TrainError> {
        let find = |name: String, like: &Tensor<f32>| -> Result<Tensor<f32>, TrainError> {
            let t = extra
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| TrainError::Config(format!("checkpoint lacks optimizer state `{name}`")))?;
            if t.shape() != like.shape() {
                return Err(TrainError::Config(format!("optimizer state `{name}` has the wrong shape")));
            }
            Ok(t)
        };
        let mut m = Vec::new();
        let mut v = Vec::new();
        for p in params {
            m.push(find(format!("adam.m.{}", p.name), &p.value)?);
            v.push(find(format!("adam.v.{}", p.name), &p.value)?);
        }
        Ok(Self { cfg, t, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = [1.5f64, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &AdamConfig::default());
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut p = [0.0f64, 0.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[3.0, -0.25], &mut m, &mut v, 1, &cfg);
        assert!((p[0] + cfg.lr).abs() < 1e-11);
        assert!((p[1] - cfg.lr).abs() < 1e-11);
    }
}

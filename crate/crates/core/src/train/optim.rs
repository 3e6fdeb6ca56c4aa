//! Momentum SGD and Adam over a flat list of parameters, with global-norm clipping.

use crate::network::Param;
use crate::{Error, Result, Scalar, Tensor};

use super::config::{OptimizerConfig, OptimizerKind};

pub const ADAM_EPSILON: f64 = 1e-8;

/// `v ← μv + g`, `p ← p − lr·v`.
pub fn sgd_step<T: Scalar>(value: &mut [T], grad: &[T], velocity: &mut [T], lr: f64, momentum: f64) {
    let (lr, mu) = (T::of(lr), T::of(momentum));
    for ((p, &g), v) in value.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

/// Bias-corrected Adam; `t` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Scalar>(
    value: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
) {
    let c1 = 1.0 - beta1.powf(t as f64);
    let c2 = 1.0 - beta2.powf(t as f64);
    let (b1, b2) = (T::of(beta1), T::of(beta2));
    let (one, eps) = (T::one(), T::of(ADAM_EPSILON));
    let (lr, c1, c2) = (T::of(lr), T::of(c1), T::of(c2));
    for (((p, &g), mk), vk) in value.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *mk = b1 * *mk + (one - b1) * g;
        *vk = b2 * *vk + (one - b2) * g * g;
        let m_hat = *mk / c1;
        let v_hat = *vk / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Errors naming the first parameter whose gradient holds NaN or ±∞.
pub fn check_finite<T: Scalar>(params: &[&mut Param<T>]) -> Result<()> {
    for p in params {
        if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                param: p.name.clone(),
                detail: format!("element {i} is {}", p.grad.data()[i].to_f64_lossy()),
            });
        }
    }
    Ok(())
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(params: &mut [&mut Param<T>], max_norm: f64) -> f64 {
    let total: f64 = params
        .iter()
        .flat_map(|p| p.grad.data().iter())
        .map(|g| {
            let g = g.to_f64_lossy();
            g * g
        })
        .sum::<f64>()
        .sqrt();
    if total > max_norm {
        let s = T::of(max_norm / total);
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    total
}

/// Per-parameter optimizer state, in the order parameters are passed to [`step`](Optimizer::step).
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    t: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, t: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Checks, clips, then updates every parameter from its accumulated gradient.
    pub fn step(&mut self, params: &mut [&mut Param<T>]) -> Result<()> {
        check_finite(params)?;
        clip_global_norm(params, self.config.clip_norm);
        if self.first.is_empty() {
            for p in params.iter() {
                self.first.push(Tensor::zeros_like(&p.value));
                self.second.push(Tensor::zeros_like(&p.value));
            }
        }
        if self.first.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer holds state for {} parameters, got {}",
                self.first.len(),
                params.len()
            )));
        }
        self.t += 1;
        let c = &self.config;
        for (i, p) in params.iter_mut().enumerate() {
            let Param { value, grad, .. } = &mut **p;
            match c.kind {
                OptimizerKind::SgdMomentum => {
                    sgd_step(value.data_mut(), grad.data(), self.first[i].data_mut(), c.lr, c.momentum)
                }
                OptimizerKind::Adam => adam_step(
                    value.data_mut(),
                    grad.data(),
                    self.first[i].data_mut(),
                    self.second[i].data_mut(),
                    self.t,
                    c.lr,
                    c.beta1,
                    c.beta2,
                ),
            }
        }
        Ok(())
    }
}

//! AdamW with decoupled weight decay, and the warmup-then-linear-decay
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl ScheduleConfig {
    pub fn new(base_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self> {
        let s = Self {
            base_lr,
            warmup_steps,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 || self.warmup_steps > self.total_steps {
            return Err(Error::invalid(format!(
                "need 0 < warmup_steps ({}) <= total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::invalid("base_lr must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Learning rate for zero-based `step`.
///
/// Steps `0..warmup` ramp as `base·(step+1)/warmup`, reaching `base_lr` on
/// step `warmup−1`; from `warmup` the rate decays linearly to 0 at
/// `total_steps`.
pub fn lr_at(step: usize, cfg: &ScheduleConfig) -> Result<f64> {
    cfg.validate()?;
    if step > cfg.total_steps {
        return Err(Error::invalid(format!(
            "step {step} beyond total_steps {}",
            cfg.total_steps
        )));
    }
    if step < cfg.warmup_steps {
        return Ok(cfg.base_lr * ((step + 1) as f64 / cfg.warmup_steps as f64));
    }
    let span = cfg.total_steps - cfg.warmup_steps;
    if span == 0 {
        return Ok(0.0);
    }
    let remaining = (cfg.total_steps - step) as f64 / span as f64;
    Ok(cfg.base_lr * remaining)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// First/second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct AdamWState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamWState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One AdamW update over named tensors:
/// `p ← p − lr·(m̂/(√v̂ + eps) + wd·p)`.
pub fn adamw_step(
    params: &mut [(String, &mut [f64])],
    grads: &[(String, &[f64])],
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::invalid(format!("learning rate {lr} must be >= 0")));
    }
    if params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} parameter tensors but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for ((pname, p), (gname, g)) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::Shape {
                op: "adamw_step",
                left: (p.len(), 1),
                right: (g.len(), 1),
            });
        }
        if pname != gname {
            return Err(Error::invalid(format!("parameter {pname} paired with gradient {gname}")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient {gname}")));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
        state.v = params.iter().map(|(_, p)| vec![0.0; p.len()]).collect();
    } else if state.m.len() != params.len() || state.m.iter().zip(params.iter()).any(|(m, (_, p))| m.len() != p.len()) {
        return Err(Error::invalid("optimizer state does not match parameter shapes"));
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (k, ((_, p), (_, g))) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * p[i]);
        }
    }
    Ok(())
}

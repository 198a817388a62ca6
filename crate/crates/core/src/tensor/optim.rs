use super::{invalid, Tensor, TensorError};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update, in place. No weight decay, no clipping.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    cfg: AdamConfig,
) -> Result<(), TensorError> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(invalid("adam_step", format!("learning rate must be >= 0, got {lr}")));
    }
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(invalid(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, p) in params.iter().enumerate() {
        for other in [grads[i].shape(), state.m[i].shape(), state.v[i].shape()] {
            if p.shape() != other {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: other.to_vec(),
                });
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = cfg.beta1 * *mj + (1.0 - cfg.beta1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = cfg.beta2 * *vj + (1.0 - cfg.beta2) * gj * gj;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for (j, pj) in p.data_mut().iter_mut().enumerate() {
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            *pj -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// `lr0 * 0.5 * (1 + cos(pi * step / total))` for `0 <= step <= total`.
pub fn cosine_anneal(lr0: f64, step: usize, total: usize) -> Result<f64, TensorError> {
    if step > total {
        return Err(invalid("cosine_anneal", format!("step {step} beyond total {total}")));
    }
    if total == 0 {
        return Ok(lr0);
    }
    Ok(lr0 * 0.5 * (1.0 + (PI * step as f64 / total as f64).cos()))
}

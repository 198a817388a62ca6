//! Negative Pearson loss, thresholded appearance loss and the two
//! objectives of the alternating optimisation.

use super::{Generator, NeuralError, Prn};
use crate::tensor::{BatchNormMode, DiffTensor, Tape, Tensor, UnaryOp};

/// Variance guard inside the Pearson denominator.
pub const PPG_EPS: f64 = 1e-8;

/// `1 - Sxy / sqrt(Sxx Syy + eps^2)` per row of `[N, T]`, averaged over rows.
/// `p` is the reference pulse, `p_hat` the prediction.
pub fn loss_ppg(tape: &mut Tape, p: DiffTensor, p_hat: DiffTensor) -> Result<DiffTensor, NeuralError> {
    let s = tape.shape(p_hat).to_vec();
    if tape.shape(p) != s.as_slice() {
        return Err(NeuralError::Shape(format!(
            "pulse shapes differ: {:?} vs {s:?}",
            tape.shape(p)
        )));
    }
    if s.len() != 2 || s[1] < 2 {
        return Err(NeuralError::Shape(format!("pulse batch must be [N, T] with T >= 2, got {s:?}")));
    }
    let center = |tape: &mut Tape, x: DiffTensor| -> Result<DiffTensor, NeuralError> {
        let m = tape.mean_axes(x, &[1])?;
        let m = tape.broadcast(m, &s)?;
        Ok(tape.sub(x, m)?)
    };
    let pc = center(tape, p)?;
    let qc = center(tape, p_hat)?;
    let pq = tape.mul(pc, qc)?;
    let sxy = tape.sum_axes(pq, &[1])?;
    let pp = tape.square(pc)?;
    let sxx = tape.sum_axes(pp, &[1])?;
    let qq = tape.square(qc)?;
    let syy = tape.sum_axes(qq, &[1])?;
    let prod = tape.mul(sxx, syy)?;
    let prod = tape.unary(prod, UnaryOp::Shift(PPG_EPS * PPG_EPS))?;
    let den = tape.sqrt(prod)?;
    let inv = tape.unary(den, UnaryOp::Recip)?;
    let r = tape.mul(sxy, inv)?;
    let neg = tape.unary(r, UnaryOp::Scale(-1.0))?;
    let per_row = tape.unary(neg, UnaryOp::Shift(1.0))?;
    Ok(tape.mean(per_row)?)
}

/// Mean absolute difference over elements whose difference is at least
/// `eps`; the mask is fixed from the forward values. Zero when no element
/// qualifies.
pub fn loss_appearance(tape: &mut Tape, a: DiffTensor, b: DiffTensor, eps: f64) -> Result<DiffTensor, NeuralError> {
    let d = tape.sub(a, b)?;
    let shape = tape.shape(d).to_vec();
    let mask: Vec<f64> = tape.value(d).iter().map(|v| if v.abs() < eps { 0.0 } else { 1.0 }).collect();
    let count = mask.iter().sum::<f64>();
    if count == 0.0 {
        return Ok(tape.constant(&Tensor::scalar(0.0)));
    }
    let mask = tape.constant_from(&shape, mask)?;
    let ad = tape.unary(d, UnaryOp::Abs)?;
    let masked = tape.mul(ad, mask)?;
    let total = tape.sum(masked)?;
    Ok(tape.unary(total, UnaryOp::Scale(1.0 / count))?)
}

/// Scalar values of the generator objective and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorLoss {
    pub total: f64,
    pub ppg: f64,
    pub appearance: f64,
}

/// Generator objective `L_ppg(p, E(G(I_light))) + lambda L_A(I_dark, G(I_light))`
/// on `tape`. The generator must be bound trainable and the estimator as
/// constants; the estimator runs with batch statistics, which are discarded.
/// Returns the loss node and the translated clip node.
#[allow(clippy::too_many_arguments)]
pub fn loss_generator(
    tape: &mut Tape,
    light: &Tensor,
    dark: &Tensor,
    pulse: &Tensor,
    g: &Generator,
    g_bound: &super::params::Bound,
    e: &Prn,
    e_bound: &super::params::Bound,
    lambda: f64,
    eps: f64,
) -> Result<(DiffTensor, DiffTensor, Vec<(String, crate::tensor::BatchNormStats)>, GeneratorLoss), NeuralError> {
    if light.shape() != dark.shape() {
        return Err(NeuralError::Shape(format!(
            "light clip {:?} and pseudo target {:?} differ",
            light.shape(),
            dark.shape()
        )));
    }
    let x = tape.constant(light);
    let target = tape.constant(dark);
    let p = tape.constant(pulse);
    let (fake, g_stats) = g.forward(tape, g_bound, x, BatchNormMode::Train)?;
    let (pred, _) = e.forward(tape, e_bound, fake, BatchNormMode::Train)?;
    let l_ppg = loss_ppg(tape, p, pred)?;
    let l_a = loss_appearance(tape, target, fake, eps)?;
    let weighted = tape.unary(l_a, UnaryOp::Scale(lambda))?;
    let total = tape.add(l_ppg, weighted)?;
    let parts = GeneratorLoss {
        total: tape.scalar_value(total),
        ppg: tape.scalar_value(l_ppg),
        appearance: tape.scalar_value(l_a),
    };
    Ok((total, fake, g_stats, parts))
}

/// Estimator objective `L_ppg(p, E(fake)) + L_ppg(p, E(I_light))`. Both clips
/// go through the estimator as one batch, so the batch statistics cover both
/// domains. `fake` is detached (a plain tensor).
pub fn loss_estimator(
    tape: &mut Tape,
    light: &Tensor,
    fake: &Tensor,
    pulse: &Tensor,
    e: &Prn,
    e_bound: &super::params::Bound,
) -> Result<(DiffTensor, Vec<(String, crate::tensor::BatchNormStats)>), NeuralError> {
    if light.shape() != fake.shape() {
        return Err(NeuralError::Shape(format!(
            "light clip {:?} and translated clip {:?} differ",
            light.shape(),
            fake.shape()
        )));
    }
    let n = light.shape()[0];
    let xf = tape.constant(fake);
    let xl = tape.constant(light);
    let both = tape.concat(&[xf, xl], 0)?;
    let (pred, stats) = e.forward(tape, e_bound, both, BatchNormMode::Train)?;
    let pf = tape.slice(pred, 0, 0, n)?;
    let pl = tape.slice(pred, 0, n, n)?;
    let p = tape.constant(pulse);
    let a = loss_ppg(tape, p, pf)?;
    let b = loss_ppg(tape, p, pl)?;
    Ok((tape.add(a, b)?, stats))
}

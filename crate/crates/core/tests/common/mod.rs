#![allow(dead_code)]

pub mod gradcases;

use pulsetone::neural::ParamSet;
use pulsetone::tensor::{DiffTensor, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;

/// Uniform values in `[lo, hi)`, with magnitude at least `min_abs` so that
/// kinks (relu, abs) are never within a finite-difference step.
pub fn rand_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64, min_abs: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.gen_range(lo..hi);
            if f64::abs(v) >= min_abs {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `|a - n| / max(|a|, |n|)` over the whole gradient vector.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Scalar objective `sum(W * f(inputs))` with fixed random weights, so every
/// output element contributes.
fn objective(tape: &mut Tape, ids: &[DiffTensor], f: &dyn Fn(&mut Tape, &[DiffTensor]) -> DiffTensor) -> DiffTensor {
    let out = f(tape, ids);
    let shape = tape.shape(out).to_vec();
    let w = rand_tensor(&shape, 999, -1.0, 1.0, 0.0);
    let w = tape.constant(&w);
    let prod = tape.mul(out, w).unwrap();
    tape.sum(prod).unwrap()
}

/// Worst relative error, over all inputs, between reverse-mode gradients and
/// central differences of step `h`.
pub fn check_op(inputs: &[Tensor], h: f64, f: impl Fn(&mut Tape, &[DiffTensor]) -> DiffTensor) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<DiffTensor> = inputs.iter().map(|t| tape.param(t)).collect();
    let root = objective(&mut tape, &ids, &f);
    tape.backward(root).unwrap();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&i| tape.grad(i)).collect();
    let eval = |xs: &[Tensor]| {
        let mut t = Tape::new();
        let ids: Vec<DiffTensor> = xs.iter().map(|x| t.param(x)).collect();
        let r = objective(&mut t, &ids, &f);
        t.scalar_value(r)
    };
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for (j, g) in numeric.iter_mut().enumerate() {
            let mut xs = inputs.to_vec();
            xs[k].data_mut()[j] += h;
            let up = eval(&xs);
            xs[k].data_mut()[j] -= 2.0 * h;
            let down = eval(&xs);
            *g = (up - down) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    worst
}

/// Central differences of `loss(params)` for every entry of every tensor.
pub fn numeric_param_grads(params: &ParamSet, h: f64, loss: impl Fn(&ParamSet) -> f64) -> Vec<Vec<f64>> {
    let mut p = params.clone();
    let names: Vec<String> = params.tensors.keys().cloned().collect();
    names
        .iter()
        .map(|name| {
            let n = params.tensors[name].numel();
            (0..n)
                .map(|j| {
                    p.tensors[name].data_mut()[j] += h;
                    let up = loss(&p);
                    p.tensors[name].data_mut()[j] -= 2.0 * h;
                    let down = loss(&p);
                    p.tensors[name].data_mut()[j] += h;
                    (up - down) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

pub fn flatten(v: &[Vec<f64>]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

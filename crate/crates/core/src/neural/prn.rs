//! Pulse regression network: three residual 3D conv blocks, each followed
//! by 1x2x2 average pooling, then a spatial mean and a per-frame linear head.

use super::params::{add_res_block, Bound, Fwd, ParamSet};
use super::NeuralError;
use crate::optics::VideoTensor;
use crate::tensor::{BatchNormMode, BatchNormStats, DiffTensor, Tape, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrnConfig {
    pub channels: [usize; 3],
}

impl Default for PrnConfig {
    fn default() -> Self {
        Self { channels: [8, 16, 32] }
    }
}

/// Temporal receptive radius in frames (two 3-tap convs per block).
pub const PRN_TEMPORAL_RADIUS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct Prn {
    pub cfg: PrnConfig,
    pub params: ParamSet,
}

impl Prn {
    pub fn new(cfg: PrnConfig, seed: u64) -> Self {
        let mut ps = ParamSet::default();
        let mut cin = 3;
        for (i, &c) in cfg.channels.iter().enumerate() {
            add_res_block(&mut ps, &format!("block{i}"), cin, c, [3, 3, 3], seed.wrapping_mul(31).wrapping_add(10 * i as u64));
            cin = c;
        }
        ps.insert(
            "head.weight",
            crate::tensor::kaiming_init(&[1, cin, 1, 1, 1], cin, seed.wrapping_mul(31).wrapping_add(99)),
        );
        ps.insert("head.bias", Tensor::zeros(&[1]));
        Self { cfg, params: ps }
    }

    /// Rebuilds the architecture from parameter names and shapes.
    pub fn from_params(params: ParamSet) -> Result<Self, NeuralError> {
        let mut channels = [0; 3];
        for (i, c) in channels.iter_mut().enumerate() {
            let w = params
                .get(&format!("block{i}.a.conv"))
                .ok_or_else(|| NeuralError::Checkpoint(format!("missing block{i}.a.conv")))?;
            *c = w.shape()[0];
        }
        let expect = Prn::new(PrnConfig { channels }, 0);
        check_layout(&expect.params, &params)?;
        Ok(Self {
            cfg: PrnConfig { channels },
            params,
        })
    }

    /// `x`: `[N, 3, T, H, W]` -> `[N, T]`. Returns BN batch statistics in train mode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: DiffTensor,
        mode: BatchNormMode,
    ) -> Result<(DiffTensor, Vec<(String, BatchNormStats)>), NeuralError> {
        let s = tape.shape(x).to_vec();
        if s.len() != 5 || s[1] != 3 {
            return Err(NeuralError::Shape(format!("estimator expects [N, 3, T, H, W], got {s:?}")));
        }
        let mut f = Fwd::new(tape, bound, &self.params, mode);
        let mut y = x;
        for i in 0..3 {
            y = f.res_block(y, &format!("block{i}"))?;
            let ys = f.tape.shape(y).to_vec();
            let ky = if ys[3] % 2 == 0 { 2 } else { 1 };
            let kx = if ys[4] % 2 == 0 { 2 } else { 1 };
            if ky * kx > 1 {
                y = f.tape.avg_pool3d(y, [1, ky, kx])?;
            }
        }
        let y = f.tape.mean_axes(y, &[3, 4])?;
        let y = f.conv(y, "head.weight")?;
        let y = f.bias(y, "head.bias")?;
        let stats = std::mem::take(&mut f.stats);
        let out = tape.reshape(y, &[s[0], s[2]])?;
        Ok((out, stats))
    }

    /// Eval-mode forward on a batch tensor, no gradients.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xi = tape.constant(x);
        let (y, _) = self.forward(&mut tape, &bound, xi, BatchNormMode::Eval)?;
        Ok(tape.to_tensor(y))
    }

    /// Pulse estimate for a whole video, processed in overlapping temporal
    /// chunks so memory stays bounded; margins exceed the receptive radius,
    /// so the result equals a single full-length pass.
    pub fn predict(&self, video: &VideoTensor, chunk: usize) -> Result<Vec<f64>, NeuralError> {
        chunked(video, chunk, PRN_TEMPORAL_RADIUS + 2, |clip| {
            let y = self.infer(&clip.to_tensor())?;
            Ok(y.into_data())
        })
    }
}

/// Runs `f` on overlapping clips and stitches the per-frame outputs.
pub(crate) fn chunked<T: Clone>(
    video: &VideoTensor,
    chunk: usize,
    margin: usize,
    mut f: impl FnMut(&VideoTensor) -> Result<Vec<T>, NeuralError>,
) -> Result<Vec<T>, NeuralError> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(video.t);
    let mut start = 0;
    while start < video.t {
        let end = (start + chunk).min(video.t);
        let lo = start.saturating_sub(margin);
        let hi = (end + margin).min(video.t);
        let clip = video.clip(lo, hi - lo).map_err(|e| NeuralError::Shape(e.to_string()))?;
        let y = f(&clip)?;
        let per_frame = y.len() / clip.t;
        out.extend_from_slice(&y[(start - lo) * per_frame..(end - lo) * per_frame]);
        start = end;
    }
    Ok(out)
}

/// Checks names and shapes of `got` against a freshly built `want`.
pub(crate) fn check_layout(want: &ParamSet, got: &ParamSet) -> Result<(), NeuralError> {
    for (name, t) in &want.tensors {
        match got.get(name) {
            Some(g) if g.shape() == t.shape() => {}
            Some(g) => {
                return Err(NeuralError::Checkpoint(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    t.shape(),
                    g.shape()
                )))
            }
            None => return Err(NeuralError::Checkpoint(format!("missing tensor {name}"))),
        }
    }
    if let Some(extra) = got.tensors.keys().find(|k| !want.tensors.contains_key(*k)) {
        return Err(NeuralError::Checkpoint(format!("unexpected tensor {extra}")));
    }
    for name in want.running.keys() {
        if !got.running.contains_key(name) {
            return Err(NeuralError::Checkpoint(format!("missing running statistics {name}")));
        }
    }
    Ok(())
}

//! Translation generator: conv encoder with two spatial downsamplings,
//! residual transformer blocks, upsampling decoder. The network predicts a
//! logit-space offset, so with its zero-initialised output layer the
//! untrained generator is the identity map.

use super::params::{add_conv, add_conv_bn, add_res_block, Bound, Fwd, ParamSet};
use super::prn::{check_layout, chunked};
use super::NeuralError;
use crate::optics::VideoTensor;
use crate::tensor::{BatchNormMode, BatchNormStats, DiffTensor, Tape, Tensor, UnaryOp};
use serde::{Deserialize, Serialize};

/// Inputs are clamped to `[LOGIT_CLAMP, 1 - LOGIT_CLAMP]` before the logit.
pub const LOGIT_CLAMP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub channels: [usize; 2],
    pub res_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16],
            res_blocks: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pub params: ParamSet,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Self {
        let [c1, c2] = cfg.channels;
        let k = [3, 3, 3];
        let s = |i: u64| seed.wrapping_mul(131).wrapping_add(i);
        let mut ps = ParamSet::default();
        add_conv_bn(&mut ps, "enc0", 3, c1, k, s(0));
        add_conv_bn(&mut ps, "enc1", c1, c2, k, s(1));
        add_conv_bn(&mut ps, "enc2", c2, c2, k, s(2));
        for i in 0..cfg.res_blocks {
            add_res_block(&mut ps, &format!("res{i}"), c2, c2, k, s(10 + 3 * i as u64));
        }
        add_conv_bn(&mut ps, "dec0", c2, c1, k, s(100));
        add_conv_bn(&mut ps, "dec1", c1, c1, k, s(101));
        add_conv(&mut ps, "out.conv", c1, 3, k, s(102));
        for v in ps.tensors.get_mut("out.conv").expect("just added").data_mut() {
            *v = 0.0;
        }
        ps.insert("out.bias", Tensor::zeros(&[3]));
        Self { cfg, params: ps }
    }

    pub fn from_params(params: ParamSet) -> Result<Self, NeuralError> {
        let c1 = params
            .get("enc0.conv")
            .ok_or_else(|| NeuralError::Checkpoint("missing enc0.conv".into()))?
            .shape()[0];
        let c2 = params
            .get("enc1.conv")
            .ok_or_else(|| NeuralError::Checkpoint("missing enc1.conv".into()))?
            .shape()[0];
        let res_blocks = (0..)
            .take_while(|i| params.get(&format!("res{i}.a.conv")).is_some())
            .count();
        let cfg = GeneratorConfig {
            channels: [c1, c2],
            res_blocks,
        };
        check_layout(&Generator::new(cfg, 0).params, &params)?;
        Ok(Self { cfg, params })
    }

    /// Temporal receptive radius in frames.
    pub fn temporal_radius(&self) -> usize {
        6 + 2 * self.cfg.res_blocks
    }

    /// `x`: `[N, 3, T, H, W]` with H and W divisible by 4; output has the same shape, in (0, 1).
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        x: DiffTensor,
        mode: BatchNormMode,
    ) -> Result<(DiffTensor, Vec<(String, BatchNormStats)>), NeuralError> {
        let s = tape.shape(x).to_vec();
        if s.len() != 5 || s[1] != 3 || s[3] % 4 != 0 || s[4] % 4 != 0 {
            return Err(NeuralError::Shape(format!(
                "generator expects [N, 3, T, H, W] with H, W divisible by 4, got {s:?}"
            )));
        }
        let logit: Vec<f64> = tape
            .value(x)
            .iter()
            .map(|&v| {
                let v = v.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
                (v / (1.0 - v)).ln()
            })
            .collect();
        let logit = tape.constant_from(&s, logit)?;
        let mut f = Fwd::new(tape, bound, &self.params, mode);
        let y = f.conv_bn(x, "enc0", true)?;
        let y = f.tape.avg_pool3d(y, [1, 2, 2])?;
        let y = f.conv_bn(y, "enc1", true)?;
        let y = f.tape.avg_pool3d(y, [1, 2, 2])?;
        let mut y = f.conv_bn(y, "enc2", true)?;
        for i in 0..self.cfg.res_blocks {
            y = f.res_block(y, &format!("res{i}"))?;
        }
        let y = f.upsample2(y)?;
        let y = f.conv_bn(y, "dec0", true)?;
        let y = f.upsample2(y)?;
        let y = f.conv_bn(y, "dec1", true)?;
        let y = f.conv(y, "out.conv")?;
        let delta = f.bias(y, "out.bias")?;
        let stats = std::mem::take(&mut f.stats);
        let z = tape.add(logit, delta)?;
        let out = tape.unary(z, UnaryOp::Sigmoid)?;
        Ok((out, stats))
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xi = tape.constant(x);
        let (y, _) = self.forward(&mut tape, &bound, xi, BatchNormMode::Eval)?;
        Ok(tape.to_tensor(y))
    }

    /// Translates a whole video in overlapping temporal chunks.
    pub fn translate(&self, video: &VideoTensor, chunk: usize) -> Result<VideoTensor, NeuralError> {
        let frames = chunked(video, chunk, self.temporal_radius() + 2, |clip| {
            let y = self.infer(&clip.to_tensor())?;
            let v = VideoTensor::from_tensor(&y, clip.fs).map_err(|e| NeuralError::Shape(e.to_string()))?;
            Ok(v.data)
        })?;
        VideoTensor::new(video.t, video.h, video.w, video.fs, frames).map_err(|e| NeuralError::Shape(e.to_string()))
    }
}

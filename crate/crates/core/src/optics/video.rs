//! Frame sequences and the per-pixel reflection model.

use super::{OpticsError, PulseTrace, SceneConfig};
use crate::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fraction of clipped samples above which a video is flagged.
pub const CLIP_WARN_FRACTION: f64 = 0.05;

/// `T x H x W x 3` frames in [0,1], channel-last, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoTensor {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub fs: f64,
    pub data: Vec<f64>,
    pub clipped_fraction: f64,
}

impl VideoTensor {
    pub fn new(t: usize, h: usize, w: usize, fs: f64, data: Vec<f64>) -> Result<Self, OpticsError> {
        if t == 0 || h == 0 || w == 0 {
            return Err(OpticsError::InvalidArgument(format!("video dims must be positive, got {t}x{h}x{w}")));
        }
        if data.len() != t * h * w * 3 {
            return Err(OpticsError::InvalidArgument(format!(
                "video {t}x{h}x{w}x3 needs {} values, got {}",
                t * h * w * 3,
                data.len()
            )));
        }
        if !(fs > 0.0) {
            return Err(OpticsError::InvalidArgument(format!("frame rate must be positive, got {fs}")));
        }
        Ok(Self {
            t,
            h,
            w,
            fs,
            data,
            clipped_fraction: 0.0,
        })
    }

    /// Every pixel of every frame set to `rgb`.
    pub fn constant(t: usize, h: usize, w: usize, fs: f64, rgb: [f64; 3]) -> Result<Self, OpticsError> {
        let data = (0..t * h * w).flat_map(|_| rgb).collect();
        Self::new(t, h, w, fs, data)
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.pixels() * 3;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn at(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((t * self.h + y) * self.w + x) * 3 + c]
    }

    pub fn clip_warning(&self) -> bool {
        self.clipped_fraction > CLIP_WARN_FRACTION
    }

    /// Temporal trace of one pixel channel.
    pub fn trace(&self, y: usize, x: usize, c: usize) -> Vec<f64> {
        (0..self.t).map(|t| self.at(t, y, x, c)).collect()
    }

    /// Temporal mean frame, `H x W x 3`.
    pub fn mean_frame(&self) -> Vec<f64> {
        let n = self.pixels() * 3;
        let mut m = vec![0.0; n];
        for t in 0..self.t {
            for (a, v) in m.iter_mut().zip(self.frame(t)) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.t as f64);
        m
    }

    /// Mean BT.601 luma of the temporal-mean frame.
    pub fn mean_luma(&self) -> f64 {
        let m = self.mean_frame();
        m.chunks_exact(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).sum::<f64>() / self.pixels() as f64
    }

    /// Frames `[start, start + len)`.
    pub fn clip(&self, start: usize, len: usize) -> Result<Self, OpticsError> {
        if start + len > self.t || len == 0 {
            return Err(OpticsError::InvalidArgument(format!(
                "clip {start}..{} outside video of {} frames",
                start + len,
                self.t
            )));
        }
        let n = self.pixels() * 3;
        Self::new(len, self.h, self.w, self.fs, self.data[start * n..(start + len) * n].to_vec())
    }

    /// `[1, 3, T, H, W]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        let plane = self.t * self.pixels();
        let mut out = vec![0.0; 3 * plane];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + i] = px[c];
            }
        }
        Tensor::new(vec![1, 3, self.t, self.h, self.w], out).expect("consistent dims")
    }

    /// Inverse of [`VideoTensor::to_tensor`]; values are clipped to [0,1].
    pub fn from_tensor(x: &Tensor, fs: f64) -> Result<Self, OpticsError> {
        let s = x.shape();
        if s.len() != 5 || s[0] != 1 || s[1] != 3 {
            return Err(OpticsError::InvalidArgument(format!("expected [1, 3, T, H, W], got {s:?}")));
        }
        let (t, h, w) = (s[2], s[3], s[4]);
        let plane = t * h * w;
        let d = x.data();
        let data = (0..plane)
            .flat_map(|i| (0..3).map(move |c| d[c * plane + i].clamp(0.0, 1.0)))
            .collect();
        Self::new(t, h, w, fs, data)
    }
}

// Pixels inside the central plateau get weight 1; both weights fall off
// quadratically towards the corners.
fn radial(y: usize, x: usize, h: usize, w: usize) -> f64 {
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let dy = (y as f64 - cy) / (h as f64 / 2.0);
    let dx = (x as f64 - cx) / (w as f64 / 2.0);
    let r = (dy * dy + dx * dx).sqrt() / 2f64.sqrt();
    ((r - 0.3).max(0.0) / 0.7).powi(2)
}

/// Illumination gain of a pixel.
pub fn gain_mask(y: usize, x: usize, h: usize, w: usize) -> f64 {
    1.0 - 0.3 * radial(y, x, h, w)
}

/// Relative pulsatile weight of a pixel.
pub fn pulse_weight(y: usize, x: usize, h: usize, w: usize) -> f64 {
    1.0 - 0.5 * radial(y, x, h, w)
}

/// Motion-induced intensity and specular modulation at time `t`.
pub fn motion_terms(cfg: &SceneConfig, t: f64) -> (f64, f64) {
    (
        cfg.i_amp * (2.0 * PI * cfg.i_freq * t + cfg.i_phase).sin(),
        cfg.s_amp * (2.0 * PI * cfg.s_freq * t + cfg.s_phase).sin(),
    )
}

/// Renders `t` frames of the reflection model
/// `C_k(t) = I0 g_k (1 + i(t)) (u_c c0 + u_s s(t) + w_k u_p a p(t)) + v_n(t)`.
pub fn synth_video(cfg: &SceneConfig, pulse: &PulseTrace, t: usize, h: usize, w: usize) -> Result<VideoTensor, OpticsError> {
    cfg.validate()?;
    if pulse.samples.len() < t {
        return Err(OpticsError::PulseTooShort {
            len: pulse.samples.len(),
            needed: t,
        });
    }
    let mut video = VideoTensor::new(t, h, w, pulse.fs, vec![0.0; t * h * w * 3])?;
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| OpticsError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights: Vec<(f64, f64)> = (0..h * w)
        .map(|k| (gain_mask(k / w, k % w, h, w), pulse_weight(k / w, k % w, h, w)))
        .collect();
    let stationary = cfg.u_c.map(|v| v * cfg.c0);
    let mut clipped = 0usize;
    for ti in 0..t {
        let time = ti as f64 / pulse.fs;
        let (i, s) = motion_terms(cfg, time);
        let p = cfg.pulse_amp * pulse.samples[ti];
        let frame = &mut video.data[ti * h * w * 3..(ti + 1) * h * w * 3];
        for (k, &(g, pw)) in weights.iter().enumerate() {
            for c in 0..3 {
                let mut v = cfg.i0 * g * (1.0 + i) * (stationary[c] + cfg.u_s[c] * s + pw * cfg.u_p[c] * p);
                if cfg.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng);
                }
                if !(0.0..=1.0).contains(&v) {
                    clipped += 1;
                }
                frame[k * 3 + c] = v.clamp(0.0, 1.0);
            }
        }
    }
    video.clipped_fraction = clipped as f64 / video.data.len() as f64;
    if video.clip_warning() {
        log::warn!("{:.1}% of samples clipped; scene is ill-scaled", 100.0 * video.clipped_fraction);
    }
    Ok(video)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::pcc;
    use crate::optics::{synth_pulse, Fitzpatrick, HrProfile};

    fn pulse(secs: f64) -> PulseTrace {
        synth_pulse(&HrProfile::Constant { bpm: 72.0 }, secs, 30.0, 5).unwrap()
    }

    #[test]
    fn static_scene_is_constant() {
        let mut cfg = SceneConfig::for_scale(Fitzpatrick::III, 0);
        cfg.pulse_amp = 0.0;
        let v = synth_video(&cfg, &pulse(2.0), 20, 8, 8).unwrap();
        let want = cfg.stationary();
        for t in 0..20 {
            for c in 0..3 {
                assert!((v.at(t, 4, 4, c) - want[c]).abs() < 1e-15);
                assert_eq!(v.at(t, 0, 0, c), v.at(0, 0, 0, c));
            }
        }
    }

    #[test]
    fn pulse_only_trace_is_scaled_pulse() {
        let cfg = SceneConfig::for_scale(Fitzpatrick::II, 0);
        let p = pulse(4.0);
        let v = synth_video(&cfg, &p, 120, 8, 8).unwrap();
        for c in 0..3 {
            let tr = v.trace(3, 4, c);
            let off = tr[0] - cfg.i0 * cfg.u_p[c] * cfg.pulse_amp * p.samples[0];
            for (t, val) in tr.iter().enumerate() {
                let want = cfg.i0 * cfg.u_p[c] * cfg.pulse_amp * p.samples[t] + off;
                assert!((val - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noisy_average_tracks_pulse() {
        let p = pulse(10.0);
        let mut traces = Vec::new();
        for seed in [1, 2] {
            let mut cfg = SceneConfig::for_scale(Fitzpatrick::I, seed);
            cfg.noise_sigma = 1e-3;
            let v = synth_video(&cfg, &p, 300, 8, 8).unwrap();
            let g: Vec<f64> = (0..v.t).map(|t| v.frame(t).chunks(3).map(|px| px[1]).sum::<f64>() / 64.0).collect();
            assert!(pcc(&p.samples[..300], &g).unwrap() > 0.99);
            traces.push(g);
        }
        assert_ne!(traces[0], traces[1]);
    }

    #[test]
    fn regression_recovers_components() {
        // Noise off: each trace is an exact combination of 1, i, s, p, i*s, i*p.
        let mut cfg = SceneConfig::for_scale(Fitzpatrick::IV, 0);
        (cfg.i_amp, cfg.i_freq, cfg.s_amp, cfg.s_freq, cfg.s_phase) = (0.05, 0.4, 0.02, 1.7, 0.3);
        let p = pulse(10.0);
        let v = synth_video(&cfg, &p, 300, 6, 6).unwrap();
        let rows: Vec<[f64; 6]> = (0..300)
            .map(|t| {
                let (i, s) = motion_terms(&cfg, t as f64 / 30.0);
                let pp = p.samples[t];
                [1.0, i, s, pp, i * s, i * pp]
            })
            .collect();
        let x = nalgebra::DMatrix::from_fn(300, 6, |r, c| rows[r][c]);
        let (y, xx, c) = (1, 2, 1);
        let b = nalgebra::DVector::from_vec(v.trace(y, xx, c));
        let coef = x.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let g = gain_mask(y, xx, 6, 6);
        let pw = pulse_weight(y, xx, 6, 6);
        let base = cfg.u_c[c] * cfg.c0;
        let pc = pw * cfg.u_p[c] * cfg.pulse_amp;
        let want = [base, base, cfg.u_s[c], pc, cfg.u_s[c], pc].map(|v| v * g * cfg.i0);
        for k in 0..6 {
            assert!((coef[k] - want[k]).abs() < 1e-6, "{k}: {} vs {}", coef[k], want[k]);
        }
    }

    #[test]
    fn overexposure_is_flagged() {
        let mut cfg = SceneConfig::for_scale(Fitzpatrick::I, 0);
        cfg.i0 = 3.0;
        let v = synth_video(&cfg, &pulse(1.0), 10, 4, 4).unwrap();
        assert!(v.clip_warning());
        assert!(v.data.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn tensor_round_trip() {
        let cfg = SceneConfig::for_scale(Fitzpatrick::V, 0);
        let v = synth_video(&cfg, &pulse(1.0), 5, 3, 4).unwrap();
        let back = VideoTensor::from_tensor(&v.to_tensor(), v.fs).unwrap();
        assert_eq!(back.data, v.data);
    }
}

//! Skin-tone constants and the per-subject scene description.

use super::OpticsError;
use crate::dsp::FitzGroup;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Version of the constant table below; bump when any entry changes.
pub const FITZPATRICK_TABLE_VERSION: u32 = 1;

/// Skin colour before normalisation, reflection strength and pulsatile scale
/// for scales I..VI.
const TABLE: [([f64; 3], f64, f64); 6] = [
    ([0.95, 0.80, 0.72], 0.90, 1.0),
    ([0.92, 0.74, 0.63], 0.79, 0.9),
    ([0.88, 0.66, 0.52], 0.68, 0.8),
    ([0.82, 0.58, 0.42], 0.57, 0.7),
    ([0.75, 0.50, 0.34], 0.46, 0.6),
    ([0.68, 0.45, 0.30], 0.35, 0.5),
];

/// Direction of the pulsatile colour change (blood absorption is strongest in green).
pub const PULSE_DIRECTION: [f64; 3] = [0.33, 0.77, 0.53];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Fitzpatrick {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Fitzpatrick {
    pub const ALL: [Fitzpatrick; 6] = [Self::I, Self::II, Self::III, Self::IV, Self::V, Self::VI];

    /// 1 for I through 6 for VI.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get((n as usize).wrapping_sub(1)).copied()
    }

    pub fn group(self) -> FitzGroup {
        FitzGroup::from_scale(self.number()).expect("scale in 1..=6")
    }

    pub fn is_dark(self) -> bool {
        self >= Self::V
    }
}

impl fmt::Display for Fitzpatrick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitzParams {
    /// Unit skin reflection colour.
    pub u_c: [f64; 3],
    pub c0: f64,
    pub up_scale: f64,
}

impl FitzParams {
    /// Stationary colour `u_c * c0`.
    pub fn stationary(&self) -> [f64; 3] {
        self.u_c.map(|v| v * self.c0)
    }

    /// Pulsatile strength per channel.
    pub fn u_p(&self) -> [f64; 3] {
        normalize(PULSE_DIRECTION).map(|v| v * self.up_scale)
    }
}

pub fn fitzpatrick_params(scale: Fitzpatrick) -> FitzParams {
    let (raw, c0, up_scale) = TABLE[scale as usize];
    FitzParams {
        u_c: normalize(raw),
        c0,
        up_scale,
    }
}

/// Merges a specular and a diffuse stationary part into one unit colour and
/// strength: `u_c * c0 = u_s * s0 + u_d * d0`.
pub fn combine_stationary(u_s: [f64; 3], s0: f64, u_d: [f64; 3], d0: f64) -> ([f64; 3], f64) {
    let v = [0, 1, 2].map(|k| u_s[k] * s0 + u_d[k] * d0);
    let c0 = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (v.map(|x| x / c0), c0)
}

/// All symbols of the reflection model for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub i0: f64,
    pub i_amp: f64,
    pub i_freq: f64,
    pub i_phase: f64,
    pub u_c: [f64; 3],
    pub c0: f64,
    pub u_s: [f64; 3],
    pub s_amp: f64,
    pub s_freq: f64,
    pub s_phase: f64,
    pub u_p: [f64; 3],
    pub pulse_amp: f64,
    pub noise_sigma: f64,
    pub fitzpatrick: Fitzpatrick,
    /// Drives the sensor noise only.
    pub seed: u64,
}

impl SceneConfig {
    /// Static scene with the table constants of `scale`: no motion, no noise,
    /// pulse amplitude 0.01.
    pub fn for_scale(scale: Fitzpatrick, seed: u64) -> Self {
        let p = fitzpatrick_params(scale);
        Self {
            i0: 1.0,
            i_amp: 0.0,
            i_freq: 0.0,
            i_phase: 0.0,
            u_c: p.u_c,
            c0: p.c0,
            u_s: normalize([1.0, 1.0, 1.0]),
            s_amp: 0.0,
            s_freq: 0.0,
            s_phase: 0.0,
            u_p: p.u_p(),
            pulse_amp: 0.01,
            noise_sigma: 0.0,
            fitzpatrick: scale,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        let unit = |v: &[f64; 3]| ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-9;
        if !unit(&self.u_c) || !unit(&self.u_s) {
            return Err(OpticsError::InvalidArgument("u_c and u_s must be unit vectors".into()));
        }
        let nonneg = [self.i0, self.c0, self.i_amp, self.s_amp, self.pulse_amp, self.noise_sigma];
        if !(self.i0 > 0.0) || nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(OpticsError::InvalidArgument(
                "i0 must be positive; strengths, amplitudes and noise must be finite and non-negative".into(),
            ));
        }
        if self.i_amp >= 1.0 {
            return Err(OpticsError::InvalidArgument("i_amp must be below 1".into()));
        }
        Ok(())
    }

    pub fn stationary(&self) -> [f64; 3] {
        self.u_c.map(|v| v * self.c0 * self.i0)
    }

    /// Same scene and motion with the skin constants of another scale.
    pub fn with_scale(&self, scale: Fitzpatrick) -> Self {
        let p = fitzpatrick_params(scale);
        Self {
            u_c: p.u_c,
            c0: p.c0,
            u_p: p.u_p(),
            fitzpatrick: scale,
            ..self.clone()
        }
    }
}

/// BT.601 chroma of an RGB triple in [0,1], on the 8-bit scale.
pub fn ycrcb(rgb: [f64; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|v| v * 255.0);
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    let cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
    (y, cr, cb)
}

//! Conventional pulse extraction: skin masking, spatial averaging and the
//! CHROM, POS and ICA projections.

pub mod chrom;
pub mod ica;
pub mod pos;
pub mod skin;

pub use chrom::chrom;
pub use ica::{ica, ica_with, IcaConfig};
pub use pos::pos;
pub use skin::{skin_mask, spatial_average, SkinMask, SkinThresholds};

use crate::dsp::{butterworth_bandpass, DspError};
use crate::optics::VideoTensor;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Window length of the CHROM and POS projections, seconds.
pub const PROJECTION_WINDOW_S: f64 = 1.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RppgError {
    #[error("no pixel passes the skin thresholds (Cr {cr:?}, Cb {cb:?}); override the thresholds in the config")]
    EmptyMask { cr: (f64, f64), cb: (f64, f64) },
    #[error("trace has {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("trace contains non-finite values")]
    NonFinite,
    #[error("mask is {mask:?} but video frames are {video:?}")]
    MaskMismatch { mask: (usize, usize), video: (usize, usize) },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Spatially averaged skin colour per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbTrace {
    pub rgb: Vec<[f64; 3]>,
    pub fs: f64,
}

impl RgbTrace {
    /// Checks the trace covers at least two seconds and is finite.
    pub fn new(rgb: Vec<[f64; 3]>, fs: f64) -> Result<Self, RppgError> {
        let needed = (2.0 * fs).ceil() as usize;
        if rgb.len() < needed {
            return Err(RppgError::TooShort { len: rgb.len(), needed });
        }
        if rgb.iter().flatten().any(|v| !v.is_finite()) {
            return Err(RppgError::NonFinite);
        }
        Ok(Self { rgb, fs })
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rgb.iter().map(|p| p[c]).collect()
    }
}

/// Estimated pulse waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseEstimate {
    pub samples: Vec<f64>,
    pub fs: f64,
    /// False when an iterative method stopped at its iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassicalMethod {
    Chrom,
    Pos,
    Ica,
}

impl ClassicalMethod {
    pub const ALL: [ClassicalMethod; 3] = [Self::Chrom, Self::Pos, Self::Ica];

    pub fn name(self) -> &'static str {
        match self {
            Self::Chrom => "chrom",
            Self::Pos => "pos",
            Self::Ica => "ica",
        }
    }

    pub fn apply(self, trace: &RgbTrace, seed: u64) -> Result<PulseEstimate, RppgError> {
        match self {
            Self::Chrom => chrom(trace),
            Self::Pos => pos(trace),
            Self::Ica => ica(trace, seed),
        }
    }
}

impl fmt::Display for ClassicalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassicalMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// Mask, average, project and band-pass one video.
pub fn extract(
    method: ClassicalMethod,
    video: &VideoTensor,
    thresholds: &SkinThresholds,
    seed: u64,
) -> Result<PulseEstimate, RppgError> {
    let mask = skin_mask(video, thresholds)?;
    let trace = spatial_average(video, &mask)?;
    let mut est = method.apply(&trace, seed)?;
    est.samples = butterworth_bandpass(&est.samples, est.fs, 0.7, 2.5)?;
    Ok(est)
}

/// Hann window of length `n` (periodic form, suited to 50% overlap-add).
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
}

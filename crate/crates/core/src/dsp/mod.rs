//! Evaluation protocol: band-pass filtering, windowed heart-rate estimation,
//! error metrics and bias statistics.

pub mod filter;
pub mod metrics;
pub mod spectrum;

pub use filter::{butterworth_bandpass, Biquad, SosFilter, BANDPASS_ORDER};
pub use metrics::{
    bias_std, mae, pcc, rmse, subject_metrics, FitzGroup, GroupMetrics, MetricsReport, SubjectMetrics,
};
pub use spectrum::{
    estimate_hr, estimate_hr_with, fft_len_for, fft_peak_hz, periodogram, snr, snr_from_spectrum, HrConfig, Spectrum,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sampling rate {fs} Hz is too low, need more than {needed} Hz")]
    SampleRateTooLow { fs: f64, needed: f64 },
    #[error("signal has {len} samples, need at least {needed}")]
    SignalTooShort { len: usize, needed: usize },
    #[error("series lengths differ: estimate has {est} windows, reference has {gt}")]
    LengthMismatch { est: usize, gt: usize },
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("no valid estimates to score")]
    NoEstimates,
    #[error("bias needs at least two groups with estimates, got {0}")]
    TooFewGroups(usize),
}

/// Heart rate per analysis window. `None` marks a window with no usable
/// spectral peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    pub bpm: Vec<Option<f64>>,
    pub window_s: f64,
    pub stride_s: f64,
}

impl HrSeries {
    /// Series with every window present, default 30 s / 1 s windowing.
    pub fn from_bpm(bpm: impl IntoIterator<Item = f64>) -> Self {
        Self {
            bpm: bpm.into_iter().map(Some).collect(),
            window_s: 30.0,
            stride_s: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.bpm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bpm.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.bpm.iter().filter(|b| b.is_none()).count()
    }
}

//! Ground-truth blood volume pulse waveforms.

use super::OpticsError;
use crate::dsp::HrSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Heart rates the simulator accepts, in BPM.
pub const HR_RANGE_BPM: (f64, f64) = (42.0, 150.0);
/// Amplitude of the first harmonic relative to the fundamental.
pub const HARMONIC_AMP: f64 = 0.3;

const PHASE_NOISE_AR: f64 = 0.99;
const PHASE_NOISE_STEP: f64 = 0.01;

/// Heart rate as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HrProfile {
    Constant { bpm: f64 },
    /// Linear drift from `start_bpm` at t = 0 to `end_bpm` at the end of the clip.
    Linear { start_bpm: f64, end_bpm: f64 },
    /// Consecutive `(duration_s, bpm)` segments; the last one extends to the end.
    Piecewise { segments: Vec<(f64, f64)> },
}

impl HrProfile {
    pub fn bpm_at(&self, t: f64, duration: f64) -> f64 {
        match self {
            Self::Constant { bpm } => *bpm,
            Self::Linear { start_bpm, end_bpm } => {
                let a = if duration > 0.0 { (t / duration).clamp(0.0, 1.0) } else { 0.0 };
                start_bpm + (end_bpm - start_bpm) * a
            }
            Self::Piecewise { segments } => {
                let mut acc = 0.0;
                for &(d, bpm) in segments {
                    acc += d;
                    if t < acc {
                        return bpm;
                    }
                }
                segments.last().map_or(0.0, |s| s.1)
            }
        }
    }

    fn rates(&self) -> Vec<f64> {
        match self {
            Self::Constant { bpm } => vec![*bpm],
            Self::Linear { start_bpm, end_bpm } => vec![*start_bpm, *end_bpm],
            Self::Piecewise { segments } => segments.iter().map(|s| s.1).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if let Self::Piecewise { segments } = self {
            if segments.is_empty() || segments.iter().any(|s| !(s.0 > 0.0)) {
                return Err(OpticsError::InvalidArgument(
                    "piecewise profile needs segments with positive durations".into(),
                ));
            }
        }
        for bpm in self.rates() {
            if !(HR_RANGE_BPM.0..=HR_RANGE_BPM.1).contains(&bpm) {
                return Err(OpticsError::HrOutOfRange { bpm });
            }
        }
        Ok(())
    }

    /// Reference heart rate per analysis window: the mean instantaneous rate
    /// over the window.
    pub fn reference(&self, duration: f64, fs: f64, window_s: f64, stride_s: f64) -> HrSeries {
        let n = (duration * fs).round() as usize;
        let win = (window_s * fs).round() as usize;
        let stride = ((stride_s * fs).round() as usize).max(1);
        let count = if n >= win && win > 0 { (n - win) / stride + 1 } else { 0 };
        let bpm = (0..count)
            .map(|w| {
                let s: f64 = (w * stride..w * stride + win)
                    .map(|i| self.bpm_at(i as f64 / fs, duration))
                    .sum();
                Some(s / win as f64)
            })
            .collect();
        HrSeries {
            bpm,
            window_s,
            stride_s,
        }
    }
}

/// Sampled pulse waveform p(t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrace {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub profile: HrProfile,
}

impl PulseTrace {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    pub fn reference_hr(&self) -> HrSeries {
        self.profile.reference(self.duration(), self.fs, 30.0, 1.0)
    }
}

/// Fundamental plus a 0.3 first harmonic, with slow seeded phase jitter.
/// The output has zero mean.
pub fn synth_pulse(profile: &HrProfile, duration_s: f64, fs: f64, seed: u64) -> Result<PulseTrace, OpticsError> {
    if !(duration_s > 0.0) {
        return Err(OpticsError::InvalidArgument(format!("duration must be positive, got {duration_s}")));
    }
    if !(fs >= 20.0) {
        return Err(OpticsError::InvalidArgument(format!("sampling rate must be at least 20 Hz, got {fs}")));
    }
    profile.validate()?;
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase = 2.0 * PI * rand::Rng::gen::<f64>(&mut rng);
    let mut jitter = 0.0;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let z: f64 = StandardNormal.sample(&mut rng);
        jitter = PHASE_NOISE_AR * jitter + PHASE_NOISE_STEP * z;
        let phi = phase + jitter;
        samples.push(phi.sin() + HARMONIC_AMP * (2.0 * phi).sin());
        phase += 2.0 * PI * profile.bpm_at(t, duration_s) / 60.0 / fs;
    }
    let mean = samples.iter().sum::<f64>() / n.max(1) as f64;
    samples.iter_mut().for_each(|v| *v -= mean);
    Ok(PulseTrace {
        samples,
        fs,
        profile: profile.clone(),
    })
}

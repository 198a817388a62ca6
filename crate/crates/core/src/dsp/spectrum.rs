//! Periodogram peak picking and the spectral SNR of a pulse estimate.

use super::{DspError, HrSeries};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Frequency resolution of the zero-padded periodogram, in BPM.
pub const BIN_BPM: f64 = 0.5;

/// Windowing and band settings for heart-rate estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            window_s: 30.0,
            stride_s: 1.0,
            lo_hz: 0.7,
            hi_hz: 2.5,
        }
    }
}

/// Mask half-width around the fundamental and first harmonic.
pub const SNR_MASK_HALF_WIDTH_HZ: f64 = 0.1;
/// Summation band of the SNR ratio.
pub const SNR_BAND_HZ: (f64, f64) = (0.75, 2.5);

/// One-sided power spectrum (Hann window), zero-padded to `nfft`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

pub fn fft_len_for(fs: f64) -> usize {
    (60.0 * fs / BIN_BPM).round() as usize
}

pub fn periodogram(x: &[f64], fs: f64, nfft: usize) -> Spectrum {
    let nfft = nfft.max(x.len());
    let n = x.len();
    let win: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut buf: Vec<Complex64> = x.iter().zip(&win).map(|(&v, w)| Complex64::new(v * w, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2 + 1;
    let norm = 1.0 / (fs * win.iter().map(|w| w * w).sum::<f64>()).max(f64::MIN_POSITIVE);
    Spectrum {
        freqs: (0..half).map(|k| k as f64 * fs / nfft as f64).collect(),
        power: buf[..half].iter().map(|c| c.norm_sqr() * norm).collect(),
    }
}

impl Spectrum {
    /// Frequency of the largest bin inside `[lo, hi]`, or `None` when the band
    /// carries no power.
    pub fn peak_in(&self, lo: f64, hi: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        for (&f, &p) in self.freqs.iter().zip(&self.power) {
            if f < lo || f > hi {
                continue;
            }
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((f, p));
            }
        }
        best.filter(|(_, p)| *p > 0.0).map(|(f, _)| f)
    }
}

/// In-band peak frequency of the whole signal, 0.5 BPM resolution.
pub fn fft_peak_hz(x: &[f64], fs: f64) -> Option<f64> {
    let cfg = HrConfig::default();
    periodogram(x, fs, fft_len_for(fs)).peak_in(cfg.lo_hz, cfg.hi_hz)
}

fn window_bounds(len: usize, fs: f64, cfg: &HrConfig) -> Result<(usize, usize, usize), DspError> {
    let win = (cfg.window_s * fs).round() as usize;
    let stride = ((cfg.stride_s * fs).round() as usize).max(1);
    if win == 0 || len < win {
        return Err(DspError::SignalTooShort { len, needed: win });
    }
    Ok((win, stride, (len - win) / stride + 1))
}

/// Per-window heart rate from the periodogram peak inside the band.
/// Windows whose band carries no power are reported as missing.
pub fn estimate_hr(pulse: &[f64], fs: f64) -> Result<HrSeries, DspError> {
    estimate_hr_with(pulse, fs, &HrConfig::default())
}

pub fn estimate_hr_with(pulse: &[f64], fs: f64, cfg: &HrConfig) -> Result<HrSeries, DspError> {
    if !(fs > 0.0) {
        return Err(DspError::InvalidArgument(format!("sampling rate must be positive, got {fs}")));
    }
    let (win, stride, count) = window_bounds(pulse.len(), fs, cfg)?;
    let nfft = fft_len_for(fs);
    let bpm = (0..count)
        .map(|w| {
            let seg = &pulse[w * stride..w * stride + win];
            periodogram(seg, fs, nfft)
                .peak_in(cfg.lo_hz, cfg.hi_hz)
                .map(|f| f * 60.0)
        })
        .collect();
    Ok(HrSeries {
        bpm,
        window_s: cfg.window_s,
        stride_s: cfg.stride_s,
    })
}

/// SNR in dB of a spectrum given the reference heart rate. Returns
/// `f64::INFINITY` when no power falls outside the mask.
pub fn snr_from_spectrum(spec: &Spectrum, hr_bpm: f64) -> f64 {
    let f_hr = hr_bpm / 60.0;
    let (lo, hi) = SNR_BAND_HZ;
    let (mut signal, mut noise) = (0.0, 0.0);
    for (&f, &p) in spec.freqs.iter().zip(&spec.power) {
        if f < lo || f > hi {
            continue;
        }
        let in_mask =
            (f - f_hr).abs() <= SNR_MASK_HALF_WIDTH_HZ || (f - 2.0 * f_hr).abs() <= SNR_MASK_HALF_WIDTH_HZ;
        if in_mask {
            signal += p;
        } else {
            noise += p;
        }
    }
    if noise == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (signal / noise).log10()
}

/// Window-averaged SNR of a pulse estimate against per-window reference
/// heart rates (`gt_bpm.len()` must equal the number of windows).
pub fn snr(pulse: &[f64], fs: f64, gt_bpm: &[f64], cfg: &HrConfig) -> Result<f64, DspError> {
    let (win, stride, count) = window_bounds(pulse.len(), fs, cfg)?;
    if gt_bpm.len() != count {
        return Err(DspError::LengthMismatch {
            est: count,
            gt: gt_bpm.len(),
        });
    }
    let nfft = fft_len_for(fs);
    let mut total = 0.0;
    for (w, &hr) in gt_bpm.iter().enumerate() {
        let seg = &pulse[w * stride..w * stride + win];
        total += snr_from_spectrum(&periodogram(seg, fs, nfft), hr);
    }
    Ok(total / count as f64)
}

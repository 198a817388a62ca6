//! Zero-phase Butterworth band-pass filtering.
//!
//! The digital filter is designed from the analog prototype: prototype poles,
//! low-pass to band-pass transform around pre-warped edges, then the bilinear
//! transform. Each conjugate pole pair becomes one second-order section with
//! zeros at `z = 1` and `z = -1`. Filtering runs forward then backward with
//! odd-extension padding and steady-state initial conditions, so the phase
//! response cancels and the magnitude response is squared.

use super::DspError;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

/// Prototype order of the band-pass used by the evaluation protocol.
pub const BANDPASS_ORDER: usize = 2;

/// One biquad, `b = [b0, b1, b2]`, `a = [1, a1, a2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Complex response at normalised angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z1 * self.a[1] + z2 * self.a[2];
        num / den
    }

    // Transposed direct form II steady-state state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        // (I - A) zi = B with A the transposed companion matrix.
        let (m00, m01, m10, m11) = (1.0 + a1, -1.0, a2, 1.0);
        let (r0, r1) = (b1 - a1 * b0, b2 - a2 * b0);
        let det = m00 * m11 - m01 * m10;
        [(r0 * m11 - m01 * r1) / det, (m00 * r1 - m10 * r0) / det]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    /// Digital Butterworth band-pass of prototype order `order` with
    /// half-power edges at `lo` and `hi` Hz.
    pub fn butterworth_bandpass(order: usize, lo: f64, hi: f64, fs: f64) -> Result<Self, DspError> {
        if order == 0 {
            return Err(DspError::InvalidArgument("filter order must be positive".into()));
        }
        if !(lo > 0.0 && hi > lo) {
            return Err(DspError::InvalidArgument(format!("band edges must satisfy 0 < lo < hi, got {lo}..{hi}")));
        }
        if !(fs > 2.0 * hi) {
            return Err(DspError::SampleRateTooLow { fs, needed: 2.0 * hi });
        }
        let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
        let (w1, w2) = (warp(lo), warp(hi));
        let bw = w2 - w1;
        let w0_sq = w1 * w2;
        let k2 = 2.0 * fs;

        let mut poles = Vec::with_capacity(2 * order);
        for k in 0..order {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta) * (bw / 2.0);
            let disc = (p * p - w0_sq).sqrt();
            for s in [p + disc, p - disc] {
                poles.push((k2 + s) / (k2 - s));
            }
        }
        // Analog gain bw^order, N zeros at s = 0 mapping to z = 1, N zeros
        // at infinity mapping to z = -1.
        let mut gain = Complex64::new(bw.powi(order as i32), 0.0);
        for _ in 0..order {
            gain *= k2;
        }
        for p in &poles {
            let s = k2 * (p - 1.0) / (p + 1.0);
            gain /= k2 - s;
        }
        let mut upper: Vec<Complex64> = poles.into_iter().filter(|p| p.im > 0.0).collect();
        if upper.len() != order {
            return Err(DspError::InvalidArgument("pole pairing failed; band too close to Nyquist".into()));
        }
        upper.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
        let sections = upper
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let g = if i == 0 { gain.re } else { 1.0 };
                Biquad {
                    b: [g, 0.0, -g],
                    a: [1.0, -2.0 * p.re, p.norm_sqr()],
                }
            })
            .collect();
        Ok(Self { sections })
    }

    pub fn response(&self, freq: f64, fs: f64) -> Complex64 {
        let omega = 2.0 * PI * freq / fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    fn filter_with_state(&self, x: &[f64], x0: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        let mut scale = 1.0;
        for s in &self.sections {
            let zi = s.step_state();
            let (mut z0, mut z1) = (zi[0] * scale * x0, zi[1] * scale * x0);
            for v in y.iter_mut() {
                let xin = *v;
                let out = s.b[0] * xin + z0;
                z0 = s.b[1] * xin - s.a[1] * out + z1;
                z1 = s.b[2] * xin - s.a[2] * out;
                *v = out;
            }
            scale *= s.dc_gain();
        }
        y
    }

    /// Edge padding used by the forward-backward pass.
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Forward-backward filtering with odd-extension padding.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(DspError::SignalTooShort {
                len: x.len(),
                needed: pad + 1,
            });
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let fwd = self.filter_with_state(&ext, ext[0]);
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        let r0 = rev[0];
        rev = self.filter_with_state(&rev, r0);
        rev.reverse();
        Ok(rev[pad..pad + n].to_vec())
    }
}

/// Zero-phase band-pass with the evaluation protocol's filter (order 2).
pub fn butterworth_bandpass(signal: &[f64], fs: f64, lo: f64, hi: f64) -> Result<Vec<f64>, DspError> {
    SosFilter::butterworth_bandpass(BANDPASS_ORDER, lo, hi, fs)?.filtfilt(signal)
}

//! Recoloured pseudo targets with the pulse removed.

use super::{fitzpatrick_params, Fitzpatrick, VideoTensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Table scale whose skin chromaticity is closest (by angle) to `rgb`.
pub fn nearest_scale(rgb: [f64; 3]) -> Fitzpatrick {
    let n = (rgb[0] * rgb[0] + rgb[1] * rgb[1] + rgb[2] * rgb[2]).sqrt().max(f64::MIN_POSITIVE);
    let cos = |s: Fitzpatrick| {
        let u = fitzpatrick_params(s).u_c;
        (u[0] * rgb[0] + u[1] * rgb[1] + u[2] * rgb[2]) / n
    };
    Fitzpatrick::ALL
        .into_iter()
        .max_by(|a, b| cos(*a).total_cmp(&cos(*b)))
        .expect("table is not empty")
}

/// Mean colour over all pixels and frames.
pub fn mean_color(video: &VideoTensor) -> [f64; 3] {
    let m = video.mean_frame();
    let mut acc = [0.0; 3];
    for px in m.chunks_exact(3) {
        for c in 0..3 {
            acc[c] += px[c];
        }
    }
    acc.map(|v| v / video.pixels() as f64)
}

/// Per-channel gain mapping the stationary colour of `from` onto `to`.
pub fn tone_gain(from: Fitzpatrick, to: Fitzpatrick) -> [f64; 3] {
    let (a, b) = (fitzpatrick_params(from).stationary(), fitzpatrick_params(to).stationary());
    [0, 1, 2].map(|c| b[c] / a[c])
}

/// Recolours the temporal mean frame to `target` and adds back the
/// gain-scaled residuals in a seeded random frame order, which keeps the
/// motion and noise statistics but removes any temporal pulse structure.
pub fn pseudo_target(video: &VideoTensor, target: Fitzpatrick, seed: u64) -> VideoTensor {
    let source = nearest_scale(mean_color(video));
    let gain = tone_gain(source, target);
    let mean = video.mean_frame();
    let mut order: Vec<usize> = (0..video.t).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = video.pixels() * 3;
    let mut data = Vec::with_capacity(video.data.len());
    let mut clipped = 0usize;
    for &src in &order {
        for (i, (&v, &m)) in video.frame(src).iter().zip(&mean).enumerate() {
            let out = gain[i % 3] * (m + (v - m));
            if !(0.0..=1.0).contains(&out) {
                clipped += 1;
            }
            data.push(out.clamp(0.0, 1.0));
        }
    }
    debug_assert_eq!(data.len(), video.t * n);
    let mut out = VideoTensor::new(video.t, video.h, video.w, video.fs, data).expect("same dims as input");
    out.clipped_fraction = clipped as f64 / out.data.len() as f64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{butterworth_bandpass, snr, HrConfig};
    use crate::optics::{synth_pulse, synth_video, HrProfile, SceneConfig};

    fn green_average(v: &VideoTensor) -> Vec<f64> {
        (0..v.t)
            .map(|t| v.frame(t).chunks(3).map(|p| p[1]).sum::<f64>() / v.pixels() as f64)
            .collect()
    }

    fn light_video(pulse_amp: f64, secs: f64) -> VideoTensor {
        let mut cfg = SceneConfig::for_scale(Fitzpatrick::II, 7);
        cfg.pulse_amp = pulse_amp;
        cfg.noise_sigma = 1e-3;
        let p = synth_pulse(&HrProfile::Constant { bpm: 72.0 }, secs, 30.0, 3).unwrap();
        synth_video(&cfg, &p, p.samples.len(), 6, 6).unwrap()
    }

    fn source_snr(v: &VideoTensor) -> f64 {
        let g = butterworth_bandpass(&green_average(v), v.fs, 0.7, 2.5).unwrap();
        let windows = (v.t - 900) / 30 + 1;
        snr(&g, v.fs, &vec![72.0; windows], &HrConfig::default()).unwrap()
    }

    #[test]
    fn source_scale_is_recognised() {
        for s in Fitzpatrick::ALL {
            assert_eq!(nearest_scale(fitzpatrick_params(s).stationary()), s);
        }
    }

    #[test]
    fn mean_frame_is_tone_mapped() {
        let v = light_video(0.01, 4.0);
        let out = pseudo_target(&v, Fitzpatrick::V, 1);
        let gain = tone_gain(Fitzpatrick::II, Fitzpatrick::V);
        for (i, (a, b)) in out.mean_frame().iter().zip(v.mean_frame()).enumerate() {
            assert!((a - gain[i % 3] * b).abs() < 1e-6);
        }
        assert!(out.mean_luma() < v.mean_luma());
    }

    #[test]
    fn pulseless_static_input_is_recoloured() {
        let mut cfg = SceneConfig::for_scale(Fitzpatrick::I, 0);
        cfg.pulse_amp = 0.0;
        let p = synth_pulse(&HrProfile::Constant { bpm: 72.0 }, 1.0, 30.0, 0).unwrap();
        let v = synth_video(&cfg, &p, 30, 4, 4).unwrap();
        let out = pseudo_target(&v, Fitzpatrick::VI, 5);
        let gain = tone_gain(Fitzpatrick::I, Fitzpatrick::VI);
        for (i, (a, b)) in out.data.iter().zip(&v.data).enumerate() {
            assert!((a - gain[i % 3] * b).abs() < 1e-12);
        }
    }

    #[test]
    fn pulse_is_destroyed() {
        let v = light_video(0.02, 40.0);
        assert!(source_snr(&v) > 3.0);
        let once = pseudo_target(&v, Fitzpatrick::V, 11);
        let once_db = source_snr(&once);
        assert!(once_db < -3.0, "{once_db}");
        let twice_db = source_snr(&pseudo_target(&once, Fitzpatrick::V, 12));
        assert!((twice_db - once_db).abs() < 1.0, "{once_db} vs {twice_db}");
    }
}

//! Simulated subject cohorts.

use super::{fitzpatrick_params, normalize, Fitzpatrick, HrProfile, OpticsError, SceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Evaluation cohort proportions over scales I..VI.
pub const VITAL_COUNTS: [usize; 6] = [5, 16, 14, 11, 5, 7];
/// Share of dark (V-VI) subjects in the skewed training cohort.
pub const UBFC_DARK_FRACTION: f64 = 0.05;

/// One simulated subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectSpec {
    pub id: String,
    pub scene: SceneConfig,
    pub profile: HrProfile,
    /// Seed of the pulse waveform.
    pub pulse_seed: u64,
}

/// Ranges the per-subject parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub hr_bpm: (f64, f64),
    /// Probability of a linearly drifting heart rate instead of a constant one.
    pub drift_prob: f64,
    pub max_drift_bpm: f64,
    pub i_amp: (f64, f64),
    pub s_amp: (f64, f64),
    pub motion_freq_hz: (f64, f64),
    pub pulse_amp: f64,
    pub noise_sigma: f64,
    pub i0: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            hr_bpm: (55.0, 110.0),
            drift_prob: 0.3,
            max_drift_bpm: 10.0,
            i_amp: (0.005, 0.02),
            s_amp: (0.002, 0.01),
            motion_freq_hz: (0.8, 2.2),
            pulse_amp: 0.01,
            noise_sigma: 2e-3,
            i0: 1.0,
        }
    }
}

/// Splits `n` into integer parts proportional to `weights` (largest
/// remainder, ties to the earlier entry).
pub fn largest_remainder(weights: &[usize], n: usize) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights.iter().map(|w| w * n / total).collect();
    let mut rems: Vec<(usize, usize)> = weights.iter().enumerate().map(|(i, w)| (w * n % total, i)).collect();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - parts.iter().sum::<usize>();
    for &(_, i) in rems.iter().take(short) {
        parts[i] += 1;
    }
    parts
}

/// Skewed training cohort: `round(n * dark_fraction)` subjects alternating
/// V and VI, the rest cycling through I..III.
pub fn ubfc_like_scales(n: usize, dark_fraction: f64) -> Vec<Fitzpatrick> {
    let dark = ((n as f64 * dark_fraction).round() as usize).min(n);
    let light = [Fitzpatrick::I, Fitzpatrick::II, Fitzpatrick::III];
    let dark_tones = [Fitzpatrick::V, Fitzpatrick::VI];
    (0..n - dark)
        .map(|i| light[i % 3])
        .chain((0..dark).map(|i| dark_tones[i % 2]))
        .collect()
}

/// Balanced evaluation cohort proportional to [`VITAL_COUNTS`].
pub fn vital_like_scales(n: usize) -> Vec<Fitzpatrick> {
    largest_remainder(&VITAL_COUNTS, n)
        .into_iter()
        .zip(Fitzpatrick::ALL)
        .flat_map(|(k, s)| std::iter::repeat(s).take(k))
        .collect()
}

/// Draws one subject of skin tone `scale`.
pub fn random_subject(id: impl Into<String>, scale: Fitzpatrick, cfg: &CohortConfig, rng: &mut ChaCha8Rng) -> SubjectSpec {
    let fp = fitzpatrick_params(scale);
    let uniform = |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| if b > a { rng.gen_range(a..b) } else { a };
    let bpm = uniform(rng, cfg.hr_bpm);
    let profile = if rng.gen::<f64>() < cfg.drift_prob {
        let d = uniform(rng, (-cfg.max_drift_bpm, cfg.max_drift_bpm));
        HrProfile::Linear {
            start_bpm: bpm,
            end_bpm: (bpm + d).clamp(cfg.hr_bpm.0.min(bpm), cfg.hr_bpm.1.max(bpm)),
        }
    } else {
        HrProfile::Constant { bpm }
    };
    let scene = SceneConfig {
        i0: cfg.i0,
        i_amp: uniform(rng, cfg.i_amp),
        i_freq: uniform(rng, cfg.motion_freq_hz),
        i_phase: uniform(rng, (0.0, 2.0 * PI)),
        u_c: fp.u_c,
        c0: fp.c0,
        u_s: normalize([1.0, 1.0, 1.0]),
        s_amp: uniform(rng, cfg.s_amp),
        s_freq: uniform(rng, cfg.motion_freq_hz),
        s_phase: uniform(rng, (0.0, 2.0 * PI)),
        u_p: fp.u_p(),
        pulse_amp: cfg.pulse_amp,
        noise_sigma: cfg.noise_sigma,
        fitzpatrick: scale,
        seed: rng.gen(),
    };
    SubjectSpec {
        id: id.into(),
        scene,
        profile,
        pulse_seed: rng.gen(),
    }
}

/// Subjects for the given scales, ids `{prefix}{index:03}`.
pub fn cohort(prefix: &str, scales: &[Fitzpatrick], cfg: &CohortConfig, seed: u64) -> Vec<SubjectSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scales
        .iter()
        .enumerate()
        .map(|(i, &s)| random_subject(format!("{prefix}{i:03}"), s, cfg, &mut rng))
        .collect()
}

/// Rejects duplicate subject ids.
pub fn check_unique_ids(subjects: &[SubjectSpec]) -> Result<(), OpticsError> {
    let mut seen = std::collections::HashSet::new();
    for s in subjects {
        if !seen.insert(s.id.as_str()) {
            return Err(OpticsError::DuplicateSubject(s.id.clone()));
        }
    }
    Ok(())
}

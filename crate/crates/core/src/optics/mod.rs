//! Reflection-model simulator: pulse waveforms, skin tones, video synthesis,
//! pulse-free pseudo targets and subject cohorts.

pub mod dataset;
pub mod pseudo;
pub mod pulse;
pub mod scene;
pub mod video;

pub use dataset::{
    cohort, largest_remainder, random_subject, ubfc_like_scales, vital_like_scales, CohortConfig, SubjectSpec,
};
pub use pseudo::{nearest_scale, pseudo_target, tone_gain};
pub use pulse::{synth_pulse, HrProfile, PulseTrace};
pub(crate) use scene::normalize;
pub use scene::{combine_stationary, fitzpatrick_params, ycrcb, FitzParams, Fitzpatrick, SceneConfig};
pub use video::{synth_video, VideoTensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("heart rate {bpm} BPM outside the supported 42-150 BPM range")]
    HrOutOfRange { bpm: f64 },
    #[error("pulse has {len} samples, video needs {needed}")]
    PulseTooShort { len: usize, needed: usize },
    #[error("duplicate subject id {0:?}")]
    DuplicateSubject(String),
}

/// Renders a subject: pulse at `fs` for `frames` frames and its video.
pub fn render_subject(s: &SubjectSpec, frames: usize, h: usize, w: usize, fs: f64) -> Result<(PulseTrace, VideoTensor), OpticsError> {
    let pulse = synth_pulse(&s.profile, frames as f64 / fs, fs, s.pulse_seed)?;
    let video = synth_video(&s.scene, &pulse, frames, h, w)?;
    Ok((pulse, video))
}

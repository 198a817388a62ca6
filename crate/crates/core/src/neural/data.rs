//! Cutting rendered videos into training clips.

use super::TrainClip;
use crate::optics::{pseudo_target, Fitzpatrick, VideoTensor};
use crate::tensor::Tensor;

/// Non-overlapping clips of `clip_len` frames (at most `max_clips`), each
/// with its pulse segment and, when `target` is set, a pseudo target made
/// from that clip.
pub fn clips_from_video(
    subject: &str,
    video: &VideoTensor,
    pulse: &[f64],
    clip_len: usize,
    max_clips: usize,
    target: Option<Fitzpatrick>,
    seed: u64,
) -> Vec<TrainClip> {
    let count = (video.t / clip_len).min(max_clips);
    (0..count)
        .map(|i| {
            let start = i * clip_len;
            let clip = video.clip(start, clip_len).expect("clip inside video");
            let light = drop_batch(clip.to_tensor());
            let dark = target.map(|s| drop_batch(pseudo_target(&clip, s, seed.wrapping_add(i as u64)).to_tensor()));
            TrainClip {
                subject: subject.to_string(),
                light,
                dark,
                pulse: pulse[start..start + clip_len].to_vec(),
            }
        })
        .collect()
}

fn drop_batch(t: Tensor) -> Tensor {
    let shape = t.shape()[1..].to_vec();
    t.reshape(&shape).expect("leading axis is 1")
}

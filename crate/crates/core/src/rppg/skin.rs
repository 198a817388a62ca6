use super::{RgbTrace, RppgError};
use crate::optics::{ycrcb, VideoTensor};
use serde::{Deserialize, Serialize};

/// YCrCb skin box on the 8-bit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkinThresholds {
    pub cr: (f64, f64),
    pub cb: (f64, f64),
}

impl Default for SkinThresholds {
    fn default() -> Self {
        Self {
            cr: (133.0, 173.0),
            cb: (77.0, 127.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    pub h: usize,
    pub w: usize,
    pub mask: Vec<bool>,
}

impl SkinMask {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Pixels whose temporal-mean colour falls inside the skin box.
pub fn skin_mask(video: &VideoTensor, thr: &SkinThresholds) -> Result<SkinMask, RppgError> {
    let mean = video.mean_frame();
    let mask: Vec<bool> = mean
        .chunks_exact(3)
        .map(|p| {
            let (_, cr, cb) = ycrcb([p[0], p[1], p[2]]);
            (thr.cr.0..=thr.cr.1).contains(&cr) && (thr.cb.0..=thr.cb.1).contains(&cb)
        })
        .collect();
    if !mask.iter().any(|m| *m) {
        return Err(RppgError::EmptyMask { cr: thr.cr, cb: thr.cb });
    }
    Ok(SkinMask {
        h: video.h,
        w: video.w,
        mask,
    })
}

/// Per-frame mean colour over the masked pixels.
pub fn spatial_average(video: &VideoTensor, mask: &SkinMask) -> Result<RgbTrace, RppgError> {
    if (mask.h, mask.w) != (video.h, video.w) {
        return Err(RppgError::MaskMismatch {
            mask: (mask.h, mask.w),
            video: (video.h, video.w),
        });
    }
    let n = mask.count();
    if n == 0 {
        return Err(RppgError::EmptyMask {
            cr: SkinThresholds::default().cr,
            cb: SkinThresholds::default().cb,
        });
    }
    let rgb = (0..video.t)
        .map(|t| {
            let mut acc = [0.0; 3];
            for (px, _) in video.frame(t).chunks_exact(3).zip(&mask.mask).filter(|(_, m)| **m) {
                for c in 0..3 {
                    acc[c] += px[c];
                }
            }
            acc.map(|v| v / n as f64)
        })
        .collect();
    RgbTrace::new(rgb, video.fs)
}

//! Applies a trained generator to an RVID file and reports whether the
//! pulse survived the tone change.

use super::{rvid, to_json, write_file, HarnessError};
use crate::dsp::fft_peak_hz;
use crate::neural::{load_checkpoint, Generator};
use crate::optics::VideoTensor;
use crate::rppg::{extract, ClassicalMethod, SkinThresholds};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Mean RGB of a rectangular region, per frame, before and after translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTrace {
    pub name: String,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
    pub input: Vec<[f64; 3]>,
    pub output: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslateDiagnostics {
    pub input: String,
    pub output: String,
    pub frames: usize,
    pub fps: f64,
    pub mean_luma_in: f64,
    pub mean_luma_out: f64,
    pub luminance_drop: f64,
    /// Whole-clip POS heart rate; `None` if no skin pixels or no in-band peak.
    pub pos_hr_in_bpm: Option<f64>,
    pub pos_hr_out_bpm: Option<f64>,
    pub regions: Vec<RegionTrace>,
}

fn region_mean(v: &VideoTensor, rows: (usize, usize), cols: (usize, usize)) -> Vec<[f64; 3]> {
    let n = ((rows.1 - rows.0) * (cols.1 - cols.0)) as f64;
    (0..v.t)
        .map(|t| {
            let mut acc = [0.0; 3];
            for y in rows.0..rows.1 {
                for x in cols.0..cols.1 {
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += v.at(t, y, x, c);
                    }
                }
            }
            acc.map(|a| a / n)
        })
        .collect()
}

/// Centre, top and left regions of the frame.
pub fn regions(h: usize, w: usize) -> Vec<(&'static str, (usize, usize), (usize, usize))> {
    let (qh, qw) = ((h / 4).max(1), (w / 4).max(1));
    vec![
        ("centre", (qh, h - qh), (qw, w - qw)),
        ("top", (0, qh), (qw, w - qw)),
        ("left", (qh, h - qh), (0, qw)),
    ]
}

pub fn pos_hr(video: &VideoTensor) -> Option<f64> {
    let est = extract(ClassicalMethod::Pos, video, &SkinThresholds::default(), 0).ok()?;
    fft_peak_hz(&est.samples, video.fs).map(|f| f * 60.0)
}

pub fn diagnostics(input: &VideoTensor, output: &VideoTensor) -> TranslateDiagnostics {
    let (li, lo) = (input.mean_luma(), output.mean_luma());
    TranslateDiagnostics {
        input: String::new(),
        output: String::new(),
        frames: input.t,
        fps: input.fs,
        mean_luma_in: li,
        mean_luma_out: lo,
        luminance_drop: li - lo,
        pos_hr_in_bpm: pos_hr(input),
        pos_hr_out_bpm: pos_hr(output),
        regions: regions(input.h, input.w)
            .into_iter()
            .map(|(name, rows, cols)| RegionTrace {
                name: name.to_string(),
                rows,
                cols,
                input: region_mean(input, rows, cols),
                output: region_mean(output, rows, cols),
            })
            .collect(),
    }
}

/// Path of the diagnostics file written next to `output`.
pub fn diagnostics_path(output: &Path) -> PathBuf {
    output.with_extension("diagnostics.json")
}

/// Translates `input` with the generator checkpoint and writes the result to
/// `output` plus a diagnostics JSON beside it.
pub fn cmd_translate(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    chunk: usize,
) -> Result<TranslateDiagnostics, HarnessError> {
    let ck = load_checkpoint(checkpoint)?;
    let g = Generator::from_params(ck.params.clone())?;
    let video = rvid::read(input)?;
    let expected = match (ck.meta_usize("height"), ck.meta_usize("width")) {
        (Some(h), Some(w)) => (video.h, video.w) == (h, w),
        _ => video.h % 4 == 0 && video.w % 4 == 0,
    };
    if !expected {
        let want = match (ck.meta_usize("height"), ck.meta_usize("width")) {
            (Some(h), Some(w)) => format!("{h}x{w} frames"),
            _ => "frame height and width divisible by 4".to_string(),
        };
        return Err(HarnessError::Dims {
            expected: want,
            got: format!("{}x{} frames", video.h, video.w),
        });
    }
    let out_video = g.translate(&video, chunk.max(8))?;
    let mut out_video = out_video;
    for v in &mut out_video.data {
        *v = *v as f32 as f64;
    }
    write_file(output, rvid::encode(&out_video))?;
    let mut d = diagnostics(&video, &out_video);
    d.input = input.display().to_string();
    d.output = output.display().to_string();
    write_file(&diagnostics_path(output), to_json(&d))?;
    Ok(d)
}

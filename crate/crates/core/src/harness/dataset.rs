//! Seeded dataset generation and its on-disk layout.
//!
//! ```text
//! <out>/data/manifest.json
//! <out>/data/<split>/<id>.rvid
//! <out>/data/<split>/<id>.json      sidecar
//! ```

use super::config::{ExperimentConfig, SplitConfig};
use super::{from_json, par_map, read_text, rvid, to_json, write_file, HarnessError};
use crate::optics::{cohort, render_subject, Fitzpatrick, HrProfile, PulseTrace, SceneConfig, SubjectSpec, VideoTensor};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

pub const MANIFEST_VERSION: u32 = 1;
/// Offset between the training and evaluation cohort seeds.
const EVAL_SEED_OFFSET: u64 = 0x9E37_79B9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Train => "train",
            Self::Eval => "eval",
        })
    }
}

/// Everything about a subject except its frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub id: String,
    pub split: Split,
    pub fitzpatrick: u8,
    pub fps: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub profile: HrProfile,
    pub scene: SceneConfig,
    pub pulse_seed: u64,
    /// Experiment seed the cohort was drawn from.
    pub seed: u64,
    pub pulse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sidecar: Sidecar,
    pub video: VideoTensor,
}

impl Sample {
    pub fn id(&self) -> &str {
        &self.sidecar.id
    }

    pub fn scale(&self) -> Fitzpatrick {
        self.sidecar.scene.fitzpatrick
    }

    pub fn pulse(&self) -> PulseTrace {
        PulseTrace {
            samples: self.sidecar.pulse.clone(),
            fs: self.sidecar.fps,
            profile: self.sidecar.profile.clone(),
        }
    }

    pub fn spec(&self) -> SubjectSpec {
        SubjectSpec {
            id: self.sidecar.id.clone(),
            scene: self.sidecar.scene.clone(),
            profile: self.sidecar.profile.clone(),
            pulse_seed: self.sidecar.pulse_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub fitzpatrick: u8,
    pub frames: usize,
    pub video: String,
    pub sidecar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub fitzpatrick_table_version: u32,
    pub subjects: Vec<ManifestEntry>,
}

pub fn data_dir(out: &Path) -> PathBuf {
    out.join("data")
}

/// Values as stored on disk: optional 8-bit levels, then `f32` precision.
fn storage_round(video: &mut VideoTensor, quantize: bool) {
    for v in &mut video.data {
        let q = if quantize { rvid::quantize_8bit(*v) } else { *v };
        *v = q as f32 as f64;
    }
}

fn render(spec: &SubjectSpec, split: Split, s: &SplitConfig, cfg: &ExperimentConfig) -> Result<Sample, HarnessError> {
    let d = &cfg.dataset;
    let frames = (s.duration_s * d.fps).round() as usize;
    let (pulse, mut video) = render_subject(spec, frames, d.size, d.size, d.fps)?;
    storage_round(&mut video, d.quantize_8bit);
    Ok(Sample {
        sidecar: Sidecar {
            id: spec.id.clone(),
            split,
            fitzpatrick: spec.scene.fitzpatrick.number(),
            fps: d.fps,
            frames,
            height: d.size,
            width: d.size,
            profile: spec.profile.clone(),
            scene: spec.scene.clone(),
            pulse_seed: spec.pulse_seed,
            seed: cfg.seed,
            pulse: pulse.samples,
        },
        video,
    })
}

/// Renders both splits in memory, training subjects first, each in id order.
pub fn make_dataset(cfg: &ExperimentConfig) -> Result<Vec<Sample>, HarnessError> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (split, s, seed) in [
        (Split::Train, &cfg.dataset.train, cfg.seed),
        (Split::Eval, &cfg.dataset.eval, cfg.seed.wrapping_add(EVAL_SEED_OFFSET)),
    ] {
        let Some(s) = s else { continue };
        let specs = cohort(&split.to_string(), &s.scales(), &cfg.dataset.cohort, seed);
        out.extend(par_map(&specs, |spec| render(spec, split, s, cfg))?);
    }
    Ok(out)
}

pub fn write_dataset(dir: &Path, seed: u64, samples: &[Sample]) -> Result<Manifest, HarnessError> {
    let mut subjects = Vec::with_capacity(samples.len());
    for s in samples {
        let sc = &s.sidecar;
        let video = format!("{}/{}.rvid", sc.split, sc.id);
        let sidecar = format!("{}/{}.json", sc.split, sc.id);
        rvid::write(&ensure_parent(&dir.join(&video))?, &s.video)?;
        write_file(&dir.join(&sidecar), to_json(sc))?;
        subjects.push(ManifestEntry {
            id: sc.id.clone(),
            split: sc.split,
            fitzpatrick: sc.fitzpatrick,
            frames: sc.frames,
            video,
            sidecar,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed,
        fitzpatrick_table_version: crate::optics::scene::FITZPATRICK_TABLE_VERSION,
        subjects,
    };
    write_file(&dir.join("manifest.json"), to_json(&manifest))?;
    Ok(manifest)
}

fn ensure_parent(path: &Path) -> Result<PathBuf, HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    Ok(path.to_path_buf())
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Sample>), HarnessError> {
    let path = dir.join("manifest.json");
    if !path.exists() {
        return Err(HarnessError::Data(format!(
            "no dataset at {} (run `gen` first)",
            dir.display()
        )));
    }
    let manifest: Manifest = from_json(&path, &read_text(&path)?)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(HarnessError::Data(format!(
            "{}: manifest version {} is not supported (expected {MANIFEST_VERSION})",
            path.display(),
            manifest.version
        )));
    }
    let samples = par_map(&manifest.subjects, |e| {
        let sc_path = dir.join(&e.sidecar);
        let sidecar: Sidecar = from_json(&sc_path, &read_text(&sc_path)?)?;
        let video = rvid::read(&dir.join(&e.video))?;
        if (video.t, video.h, video.w) != (sidecar.frames, sidecar.height, sidecar.width)
            || sidecar.pulse.len() != sidecar.frames
        {
            return Err(HarnessError::Data(format!(
                "{}: video, sidecar and pulse disagree on dimensions",
                e.id
            )));
        }
        Ok(Sample { sidecar, video })
    })?;
    Ok((manifest, samples))
}

/// Samples of one split, in manifest order.
pub fn split(samples: &[Sample], which: Split) -> Vec<&Sample> {
    samples.iter().filter(|s| s.sidecar.split == which).collect()
}

/// Generates the dataset under `<out>/data`.
pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, HarnessError> {
    let samples = make_dataset(cfg)?;
    write_dataset(&data_dir(out), cfg.seed, &samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Mix;

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default().with_seed(5);
        cfg.dataset.size = 8;
        cfg.train.size = 8;
        cfg.dataset.train = Some(SplitConfig {
            subjects: 2,
            mix: Mix::Light,
            duration_s: 2.0,
            ..SplitConfig::default()
        });
        cfg
    }

    #[test]
    fn disk_round_trip_matches_memory() {
        let cfg = small();
        let dir = tempfile::tempdir().unwrap();
        let m = cmd_gen(&cfg, dir.path()).unwrap();
        assert_eq!(m.subjects.len(), 2);
        let (_, back) = read_dataset(&data_dir(dir.path())).unwrap();
        assert_eq!(back, make_dataset(&cfg).unwrap());
    }

    #[test]
    fn splits_have_distinct_ids() {
        let mut cfg = small();
        cfg.dataset.eval = cfg.dataset.train.clone();
        let s = make_dataset(&cfg).unwrap();
        assert_eq!(s.iter().map(Sample::id).collect::<Vec<_>>(), ["train000", "train001", "eval000", "eval001"]);
        assert_ne!(s[0].sidecar.profile, s[2].sidecar.profile);
    }

    #[test]
    fn quantised_values_sit_on_levels() {
        let mut cfg = small();
        cfg.dataset.quantize_8bit = true;
        let s = make_dataset(&cfg).unwrap();
        for v in &s[0].video.data[..100] {
            let k = v * 255.0;
            assert!((k - k.round()).abs() < 1e-4);
        }
    }
}

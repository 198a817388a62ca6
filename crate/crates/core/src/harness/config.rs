//! Experiment configuration (TOML, strict schema).

use super::HarnessError;
use crate::dsp::HrConfig;
use crate::neural::TrainConfig;
use crate::optics::{ubfc_like_scales, vital_like_scales, CohortConfig, Fitzpatrick};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Skin-tone composition of a dataset split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mix {
    /// Mostly light with `dark_fraction` of subjects at V-VI.
    UbfcLike,
    /// Proportions 5/16/14/11/5/7 over I..VI.
    VitalLike,
    /// Scales I and II alternating.
    Light,
    /// Scales V and VI alternating.
    Dark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub subjects: usize,
    pub mix: Mix,
    pub dark_fraction: f64,
    pub duration_s: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            subjects: 2,
            mix: Mix::UbfcLike,
            dark_fraction: crate::optics::dataset::UBFC_DARK_FRACTION,
            duration_s: 10.0,
        }
    }
}

impl SplitConfig {
    pub fn scales(&self) -> Vec<Fitzpatrick> {
        let alternate = |a, b| (0..self.subjects).map(|i| if i % 2 == 0 { a } else { b }).collect();
        match self.mix {
            Mix::UbfcLike => ubfc_like_scales(self.subjects, self.dark_fraction),
            Mix::VitalLike => vital_like_scales(self.subjects),
            Mix::Light => alternate(Fitzpatrick::I, Fitzpatrick::II),
            Mix::Dark => alternate(Fitzpatrick::V, Fitzpatrick::VI),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub fps: f64,
    /// Frame height and width.
    pub size: usize,
    /// Round stored values to 8-bit levels, emulating camera quantisation.
    pub quantize_8bit: bool,
    pub cohort: CohortConfig,
    pub train: Option<SplitConfig>,
    pub eval: Option<SplitConfig>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            size: 16,
            quantize_8bit: false,
            cohort: CohortConfig::default(),
            train: None,
            eval: None,
        }
    }
}

/// How training clips are cut and which tones the pseudo targets use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    pub max_per_subject: usize,
    /// Fitzpatrick numbers, cycled over light training subjects.
    pub dark_targets: Vec<u8>,
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            max_per_subject: 4,
            dark_targets: vec![5, 6],
        }
    }
}

impl ClipConfig {
    pub fn targets(&self) -> Vec<Fitzpatrick> {
        self.dark_targets.iter().filter_map(|&n| Fitzpatrick::from_number(n)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub window_s: f64,
    pub stride_s: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// Frames per inference chunk for learned models.
    pub chunk: usize,
    /// Seed of the ICA initialisation.
    pub ica_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let hr = HrConfig::default();
        Self {
            window_s: hr.window_s,
            stride_s: hr.stride_s,
            lo_hz: hr.lo_hz,
            hi_hz: hr.hi_hz,
            chunk: 64,
            ica_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn hr(&self) -> HrConfig {
        HrConfig {
            window_s: self.window_s,
            stride_s: self.stride_s,
            lo_hz: self.lo_hz,
            hi_hz: self.hi_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pos,
    Chrom,
    Ica,
    PrnReal,
    PrnAugmented,
    PrnSynth,
    /// Ground truth passed through the scoring path.
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Self::Pos,
        Self::Chrom,
        Self::Ica,
        Self::PrnReal,
        Self::PrnAugmented,
        Self::PrnSynth,
        Self::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pos => "pos",
            Self::Chrom => "chrom",
            Self::Ica => "ica",
            Self::PrnReal => "prn-real",
            Self::PrnAugmented => "prn-augmented",
            Self::PrnSynth => "prn-synth",
            Self::Oracle => "oracle",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::PrnReal | Self::PrnAugmented | Self::PrnSynth)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the cohort, the training run and every derived stream.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub clips: ClipConfig,
    /// `train.seed` is taken from the top-level seed and must not be set.
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub methods: Vec<Method>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetConfig::default(),
            clips: ClipConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            methods: vec![Method::Pos],
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.train.seed != 0 {
            return Err(HarnessError::Config(
                "train.seed: set the top-level `seed` instead".into(),
            ));
        }
        let seed = cfg.seed;
        let cfg = cfg.with_seed(seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        let mut c = self.clone();
        c.train.seed = 0;
        toml::to_string_pretty(&c).expect("config is always serialisable")
    }

    /// Replaces the experiment seed (and the training seed derived from it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let d = &self.dataset;
        if !(d.fps >= 20.0 && d.fps.is_finite()) {
            return bad(format!("dataset.fps: must be at least 20, got {}", d.fps));
        }
        if d.size < 4 {
            return bad(format!("dataset.size: must be at least 4, got {}", d.size));
        }
        for (name, split) in [("train", &d.train), ("eval", &d.eval)] {
            let Some(s) = split else { continue };
            if s.subjects == 0 {
                return bad(format!("dataset.{name}.subjects: must be positive"));
            }
            if !(s.duration_s > 0.0) {
                return bad(format!("dataset.{name}.duration_s: must be positive, got {}", s.duration_s));
            }
            if !(0.0..=1.0).contains(&s.dark_fraction) {
                return bad(format!("dataset.{name}.dark_fraction: must lie in [0, 1], got {}", s.dark_fraction));
            }
        }
        if self.clips.dark_targets.is_empty() || self.clips.targets().len() != self.clips.dark_targets.len() {
            return bad(format!(
                "clips.dark_targets: need one or more Fitzpatrick numbers in 1..=6, got {:?}",
                self.clips.dark_targets
            ));
        }
        if self.clips.max_per_subject == 0 {
            return bad("clips.max_per_subject: must be positive".into());
        }
        self.train.validate().map_err(|e| HarnessError::Config(format!("train: {e}")))?;
        if self.train.size != d.size {
            return bad(format!(
                "train.size ({}) must equal dataset.size ({})",
                self.train.size, d.size
            ));
        }
        let e = &self.eval;
        if !(e.window_s > 0.0 && e.stride_s > 0.0 && e.lo_hz > 0.0 && e.hi_hz > e.lo_hz) {
            return bad("eval: window and stride must be positive and lo_hz < hi_hz".into());
        }
        if e.hi_hz >= d.fps / 2.0 {
            return bad(format!("eval.hi_hz: must be below Nyquist ({} Hz)", d.fps / 2.0));
        }
        if e.chunk < 8 {
            return bad(format!("eval.chunk: must be at least 8, got {}", e.chunk));
        }
        if d.train.is_none() && d.eval.is_none() {
            return bad("dataset: define [dataset.train], [dataset.eval] or both".into());
        }
        if self.methods.is_empty() {
            return bad("methods: list at least one method".into());
        }
        Ok(())
    }

    pub fn out_dir(&self) -> Result<&Path, HarnessError> {
        self.out
            .as_deref()
            .ok_or_else(|| HarnessError::Config("no output directory: set `out` or pass --out".into()))
    }

    pub fn learned_methods(&self) -> Vec<Method> {
        self.methods.iter().copied().filter(|m| m.is_learned()).collect()
    }
}

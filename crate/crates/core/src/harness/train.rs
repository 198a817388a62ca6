//! Training driver for the learned methods, with epoch-level stop and resume.
//!
//! Every method pre-trains the estimator on real clips, then runs a second
//! stage: `prn-real` fine-tunes on real clips, `prn-synth` fine-tunes on real
//! clips plus simulator re-renders of the light subjects at dark scales, and
//! `prn-augmented` runs the alternating generator/estimator loop.

use super::config::{ExperimentConfig, Method};
use super::dataset::{data_dir, read_dataset, split, Sample, Split};
use super::{write_file, HarnessError};
use crate::neural::{
    clips_from_video, load_checkpoint, make_batches, new_prn, save_checkpoint, train_joint, train_prn, Checkpoint,
    Generator, JointModels, LogEntry, NeuralError, Phase, Prn, PrnState, TrainClip, TrainConfig, TrainLog,
};
use crate::optics::synth_video;
use crate::tensor::AdamState;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const ESTIMATOR_FILE: &str = "estimator.pfck";
pub const GENERATOR_FILE: &str = "generator.pfck";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Stop after this many epochs counted over both stages.
    pub stop_after_epoch: Option<usize>,
    /// Continue from the checkpoint in the method's model directory.
    pub resume: bool,
}

/// One row of `train_log.csv`. Steps and epochs count across both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub ppg: Option<f64>,
    pub appearance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub method: Method,
    pub prn: Prn,
    pub generator: Option<Generator>,
    pub log: Vec<LogRow>,
    /// 0 while pre-training, 1 in the second stage.
    pub stage: usize,
    /// Epochs finished within `stage`.
    pub epochs_done: usize,
    pub complete: bool,
    prn_opt: AdamState,
    g_opt: Option<AdamState>,
}

/// Training clips for every method, built once per dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSets {
    pub real: Vec<TrainClip>,
    /// Light subjects with pseudo targets.
    pub augmented: Vec<TrainClip>,
    /// Real clips plus dark re-renders of the light subjects.
    pub synth: Vec<TrainClip>,
}

impl ClipSets {
    pub fn build(samples: &[&Sample], cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let (len, max) = (cfg.train.clip_len, cfg.clips.max_per_subject);
        let targets = cfg.clips.targets();
        let mut sets = Self {
            real: Vec::new(),
            augmented: Vec::new(),
            synth: Vec::new(),
        };
        let mut light = 0;
        for s in samples {
            let (id, pulse) = (s.id(), &s.sidecar.pulse);
            let real = clips_from_video(id, &s.video, pulse, len, max, None, 0);
            if real.is_empty() {
                return Err(HarnessError::Data(format!(
                    "{id}: {} frames is shorter than one {len}-frame clip",
                    s.video.t
                )));
            }
            sets.real.extend(real.iter().cloned());
            sets.synth.extend(real);
            if s.scale().is_dark() {
                continue;
            }
            let target = targets[light % targets.len()];
            let seed = cfg.seed.wrapping_add(1 + light as u64);
            sets.augmented.extend(clips_from_video(id, &s.video, pulse, len, max, Some(target), seed));
            let scene = s.sidecar.scene.with_scale(target);
            let video = synth_video(&scene, &s.pulse(), s.video.t, s.video.h, s.video.w)?;
            sets.synth.extend(clips_from_video(&format!("{id}-synth"), &video, pulse, len, max, None, 0));
            light += 1;
        }
        if sets.augmented.is_empty() {
            return Err(HarnessError::Data("training split has no light-skin subjects to translate".into()));
        }
        Ok(sets)
    }
}

impl TrainedModel {
    fn fresh(method: Method, cfg: &TrainConfig) -> Self {
        let prn = new_prn(cfg);
        let prn_opt = AdamState::new(&prn.params.tensors.values().collect::<Vec<_>>());
        Self {
            method,
            prn,
            generator: None,
            log: Vec::new(),
            stage: 0,
            epochs_done: 0,
            complete: false,
            prn_opt,
            g_opt: None,
        }
    }

    /// Epochs finished across both stages.
    pub fn total_epochs(&self, cfg: &TrainConfig) -> usize {
        if self.stage == 0 {
            self.epochs_done
        } else {
            cfg.pretrain_epochs + self.epochs_done
        }
    }

    fn meta(&self, size: usize) -> Vec<(&'static str, f64)> {
        vec![
            ("stage", self.stage as f64),
            ("epochs_done", self.epochs_done as f64),
            ("complete", self.complete as u8 as f64),
            ("height", size as f64),
            ("width", size as f64),
        ]
    }

    /// Writes the estimator, the generator (if any) and the log.
    pub fn save(&self, dir: &Path, size: usize) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let mut ck = Checkpoint::new(self.prn.params.clone());
        ck.adam = Some(self.prn_opt.clone());
        ck.meta.extend(self.meta(size).into_iter().map(|(k, v)| (k.to_string(), v)));
        save_checkpoint(&dir.join(ESTIMATOR_FILE), &ck)?;
        if let Some(g) = &self.generator {
            let mut ck = Checkpoint::new(g.params.clone());
            ck.adam = self.g_opt.clone();
            ck.meta.extend(self.meta(size).into_iter().map(|(k, v)| (k.to_string(), v)));
            save_checkpoint(&dir.join(GENERATOR_FILE), &ck)?;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.log {
            w.serialize(row).map_err(|e| HarnessError::Data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))?;
        write_file(&dir.join(LOG_FILE), bytes)
    }

    /// Restores a model saved by [`TrainedModel::save`].
    pub fn load(method: Method, dir: &Path) -> Result<Self, HarnessError> {
        let ck = load_checkpoint(&dir.join(ESTIMATOR_FILE))?;
        let prn = Prn::from_params(ck.params)?;
        let prn_opt = ck
            .adam
            .unwrap_or_else(|| AdamState::new(&prn.params.tensors.values().collect::<Vec<_>>()));
        let (generator, g_opt) = if dir.join(GENERATOR_FILE).exists() {
            let g = load_checkpoint(&dir.join(GENERATOR_FILE))?;
            (Some(Generator::from_params(g.params)?), g.adam)
        } else {
            (None, None)
        };
        let log_path = dir.join(LOG_FILE);
        let mut log = Vec::new();
        if log_path.exists() {
            let mut r = csv::Reader::from_path(&log_path).map_err(|e| HarnessError::Data(e.to_string()))?;
            for row in r.deserialize() {
                log.push(row.map_err(|e| HarnessError::Data(format!("{}: {e}", log_path.display())))?);
            }
        }
        let meta = |k: &str| ck.meta.get(k).copied().unwrap_or(0.0) as usize;
        Ok(Self {
            method,
            prn,
            generator,
            log,
            stage: meta("stage"),
            epochs_done: meta("epochs_done"),
            complete: meta("complete") == 1,
            prn_opt,
            g_opt,
        })
    }
}

fn rows(log: TrainLog, step_offset: usize, epoch_offset: usize) -> impl Iterator<Item = LogRow> {
    log.into_iter().map(move |e: LogEntry| LogRow {
        step: e.step + step_offset,
        epoch: e.epoch + epoch_offset,
        phase: e.phase,
        loss: e.loss,
        ppg: e.ppg,
        appearance: e.appearance,
    })
}

/// Trains (or continues training) one learned method.
pub fn train_method(
    method: Method,
    clips: &ClipSets,
    cfg: &TrainConfig,
    state: Option<TrainedModel>,
    stop_after_epoch: Option<usize>,
) -> Result<TrainedModel, NeuralError> {
    if !method.is_learned() {
        return Err(NeuralError::Config(format!("{method} is not a learned method")));
    }
    let mut m = state.unwrap_or_else(|| TrainedModel::fresh(method, cfg));
    if m.complete {
        return Ok(m);
    }
    let budget = stop_after_epoch.unwrap_or(usize::MAX);
    let pre_steps = cfg.pretrain_epochs * make_batches(&clips.real, cfg.batch, cfg.seed, 0).len();

    if m.stage == 0 {
        let st = PrnState {
            prn: m.prn,
            opt: m.prn_opt,
            epochs_done: m.epochs_done,
        };
        let (st, log) = train_prn(&clips.real, cfg, st, cfg.pretrain_epochs, Phase::Pretrain, Some(budget))?;
        m.log.extend(rows(log, 0, 0));
        m.prn = st.prn;
        m.epochs_done = st.epochs_done;
        m.prn_opt = st.opt;
        if m.epochs_done < cfg.pretrain_epochs {
            return Ok(m);
        }
        // Second stage starts with fresh optimiser state.
        m.stage = 1;
        m.epochs_done = 0;
        m.prn_opt = AdamState::new(&m.prn.params.tensors.values().collect::<Vec<_>>());
        if method == Method::PrnAugmented {
            let j = JointModels::new(cfg, m.prn.clone());
            m.generator = Some(j.g);
            m.g_opt = Some(j.g_opt);
        }
    }

    let stop = budget.saturating_sub(cfg.pretrain_epochs);
    match method {
        Method::PrnAugmented => {
            let g = m.generator.take().ok_or_else(|| NeuralError::Checkpoint("missing generator".into()))?;
            let g_opt = m.g_opt.take().ok_or_else(|| NeuralError::Checkpoint("missing generator optimiser".into()))?;
            let j = JointModels {
                g,
                e: m.prn,
                g_opt,
                e_opt: m.prn_opt,
                epochs_done: m.epochs_done,
            };
            let (j, log) = train_joint(&clips.augmented, cfg, j, Some(stop))?;
            m.log.extend(rows(log, pre_steps, cfg.pretrain_epochs));
            m.prn = j.e;
            m.prn_opt = j.e_opt;
            m.generator = Some(j.g);
            m.g_opt = Some(j.g_opt);
            m.epochs_done = j.epochs_done;
        }
        _ => {
            let data = if method == Method::PrnSynth { &clips.synth } else { &clips.real };
            let st = PrnState {
                prn: m.prn,
                opt: m.prn_opt,
                epochs_done: m.epochs_done,
            };
            let (st, log) = train_prn(data, cfg, st, cfg.epochs, Phase::Finetune, Some(stop))?;
            m.log.extend(rows(log, pre_steps, cfg.pretrain_epochs));
            m.prn = st.prn;
            m.prn_opt = st.opt;
            m.epochs_done = st.epochs_done;
        }
    }
    m.complete = m.epochs_done >= cfg.epochs;
    Ok(m)
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn method_dir(out: &Path, method: Method) -> PathBuf {
    models_dir(out).join(method.name())
}

/// Trains every learned method listed in the config on the generated
/// training split, writing checkpoints and logs under `<out>/models/<method>`.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, opts: TrainOptions) -> Result<Vec<TrainedModel>, HarnessError> {
    let methods = cfg.learned_methods();
    if methods.is_empty() {
        return Err(HarnessError::Config("methods: no learned method to train".into()));
    }
    let (_, samples) = read_dataset(&data_dir(out))?;
    let train = split(&samples, Split::Train);
    if train.is_empty() {
        return Err(HarnessError::Data("dataset has no training split".into()));
    }
    let clips = ClipSets::build(&train, cfg)?;
    let mut done = Vec::new();
    for method in methods {
        let dir = method_dir(out, method);
        let state = if opts.resume && dir.join(ESTIMATOR_FILE).exists() {
            Some(TrainedModel::load(method, &dir)?)
        } else {
            None
        };
        let m = match train_method(method, &clips, &cfg.train, state, opts.stop_after_epoch) {
            Ok(m) => m,
            Err(e @ NeuralError::NonFinite { .. }) => {
                let snapshot = dir.join("abort_snapshot.txt");
                write_file(&snapshot, format!("{e}\n"))?;
                return Err(HarnessError::TrainingAborted { snapshot, source: e });
            }
            Err(e) => return Err(e.into()),
        };
        m.save(&dir, cfg.dataset.size)?;
        log::info!(
            "{method}: {} epochs, {} log rows{}",
            m.total_epochs(&cfg.train),
            m.log.len(),
            if m.complete { "" } else { " (stopped early)" }
        );
        done.push(m);
    }
    Ok(done)
}

//! Supervised estimator training and the alternating generator/estimator loop.

use super::losses::{loss_estimator, loss_generator, loss_ppg};
use super::{Generator, GeneratorConfig, NeuralError, ParamSet, Prn, PrnConfig};
use crate::tensor::{adam_step, cosine_anneal, AdamConfig, AdamState, BatchNormMode, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub lr_g: f64,
    pub lr_e: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub clip_len: usize,
    pub size: usize,
    /// Epochs of supervised estimator pre-training on real clips.
    pub pretrain_epochs: usize,
    /// Epochs of the alternating optimisation (and of the real-only fine-tune).
    pub epochs: usize,
    pub seed: u64,
    pub prn: PrnConfig,
    pub generator: GeneratorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: 0.1,
            lr_g: 1e-4,
            lr_e: 3e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch: 2,
            clip_len: 64,
            size: 16,
            pretrain_epochs: 10,
            epochs: 10,
            seed: 0,
            prn: PrnConfig::default(),
            generator: GeneratorConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if self.clip_len < 8 {
            return bad("clip_len must be at least 8");
        }
        if self.size == 0 || self.size % 4 != 0 {
            return bad("size must be a positive multiple of 4");
        }
        if !(self.lr_g >= 0.0 && self.lr_e >= 0.0 && self.epsilon >= 0.0 && self.lambda >= 0.0) {
            return bad("learning rates, epsilon and lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }
}

/// One training clip: `light` and `dark` are `[3, T, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainClip {
    pub subject: String,
    pub light: Tensor,
    /// Pseudo target; only needed by the alternating loop.
    pub dark: Option<Tensor>,
    pub pulse: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
    Generator,
    Estimator,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pretrain => "pretrain",
            Self::Finetune => "finetune",
            Self::Generator => "generator",
            Self::Estimator => "estimator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub ppg: Option<f64>,
    pub appearance: Option<f64>,
}

pub type TrainLog = Vec<LogEntry>;

/// Model and optimiser state, resumable at epoch boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PrnState {
    pub prn: Prn,
    pub opt: AdamState,
    pub epochs_done: usize,
}

impl PrnState {
    pub fn new(prn: Prn) -> Self {
        let opt = AdamState::new(&prn.params.tensors.values().collect::<Vec<_>>());
        Self {
            prn,
            opt,
            epochs_done: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointModels {
    pub g: Generator,
    pub e: Prn,
    pub g_opt: AdamState,
    pub e_opt: AdamState,
    pub epochs_done: usize,
}

impl JointModels {
    /// Fresh generator (seeded from `cfg.seed`) around a given estimator.
    pub fn new(cfg: &TrainConfig, e: Prn) -> Self {
        let g = Generator::new(cfg.generator, cfg.seed.wrapping_add(7));
        Self::from_models(g, e)
    }

    pub fn from_models(g: Generator, e: Prn) -> Self {
        let g_opt = AdamState::new(&g.params.tensors.values().collect::<Vec<_>>());
        let e_opt = AdamState::new(&e.params.tensors.values().collect::<Vec<_>>());
        Self {
            g,
            e,
            g_opt,
            e_opt,
            epochs_done: 0,
        }
    }
}

/// Seeded per-epoch shuffle grouped into batches whose clips come from
/// distinct subjects where possible.
pub fn make_batches(clips: &[TrainClip], batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    let mut batches = Vec::new();
    while !order.is_empty() {
        let mut b = vec![order.remove(0)];
        while b.len() < batch {
            match order.iter().position(|&i| b.iter().all(|&j| clips[j].subject != clips[i].subject)) {
                Some(pos) => b.push(order.remove(pos)),
                None => break,
            }
        }
        batches.push(b);
    }
    batches
}

fn stack(items: impl Iterator<Item = Tensor>) -> Result<Tensor, NeuralError> {
    let items: Vec<Tensor> = items.collect();
    let inner = items[0].shape().to_vec();
    if items.iter().any(|t| t.shape() != inner.as_slice()) {
        return Err(NeuralError::Shape("clips in a batch differ in shape".into()));
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(&inner);
    let data = items.into_iter().flat_map(Tensor::into_data).collect();
    Ok(Tensor::new(shape, data)?)
}

fn pulses(clips: &[TrainClip], idx: &[usize]) -> Result<Tensor, NeuralError> {
    let t = clips[idx[0]].pulse.len();
    if idx.iter().any(|&i| clips[i].pulse.len() != t) {
        return Err(NeuralError::Shape("pulses in a batch differ in length".into()));
    }
    Ok(Tensor::new(vec![idx.len(), t], idx.iter().flat_map(|&i| clips[i].pulse.clone()).collect())?)
}

fn check_finite(loss: f64, step: usize, phase: Phase, params: &ParamSet) -> Result<(), NeuralError> {
    if loss.is_finite() {
        return Ok(());
    }
    let norms: Vec<String> = params
        .tensors
        .iter()
        .map(|(k, t)| format!("{k}={:.3e}", t.data().iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    Err(NeuralError::NonFinite {
        step,
        phase: phase.to_string(),
        snapshot: format!("loss={loss}; parameter norms: {}", norms.join(", ")),
    })
}

fn apply_adam(params: &mut ParamSet, grads: &[Tensor], opt: &mut AdamState, lr: f64, cfg: AdamConfig) -> Result<(), NeuralError> {
    let mut refs: Vec<&mut Tensor> = params.tensors.values_mut().collect();
    adam_step(&mut refs, grads, opt, lr, cfg)?;
    Ok(())
}

/// Supervised training of the estimator with the Pearson loss, from
/// `state.epochs_done` up to `epochs` (or `stop_after` epochs, if smaller).
pub fn train_prn(
    clips: &[TrainClip],
    cfg: &TrainConfig,
    mut state: PrnState,
    epochs: usize,
    phase: Phase,
    stop_after: Option<usize>,
) -> Result<(PrnState, TrainLog), NeuralError> {
    cfg.validate()?;
    let mut log = Vec::new();
    if clips.is_empty() || epochs == 0 {
        return Ok((state, log));
    }
    let per_epoch = make_batches(clips, cfg.batch, cfg.seed, 0).len();
    let total = epochs * per_epoch;
    let end = stop_after.map_or(epochs, |s| s.min(epochs));
    let seed = cfg.seed.wrapping_add(phase as u64 * 1000);
    for epoch in state.epochs_done..end {
        for (b, idx) in make_batches(clips, cfg.batch, seed, epoch).iter().enumerate() {
            let step = epoch * per_epoch + b;
            let lr = cosine_anneal(cfg.lr_e, step.min(total), total)?;
            let x = stack(idx.iter().map(|&i| clips[i].light.clone()))?;
            let p = pulses(clips, idx)?;
            let mut tape = Tape::new();
            let bound = state.prn.params.bind(&mut tape, true);
            let xi = tape.constant(&x);
            let (pred, stats) = state.prn.forward(&mut tape, &bound, xi, BatchNormMode::Train)?;
            let pt = tape.constant(&p);
            let loss = loss_ppg(&mut tape, pt, pred)?;
            let value = tape.scalar_value(loss);
            check_finite(value, step, phase, &state.prn.params)?;
            tape.backward(loss)?;
            let grads = state.prn.params.grads(&tape, &bound);
            apply_adam(&mut state.prn.params, &grads, &mut state.opt, lr, cfg.adam())?;
            state.prn.params.update_running(&stats);
            log.push(LogEntry {
                step,
                epoch,
                phase,
                loss: value,
                ppg: Some(value),
                appearance: None,
            });
        }
        state.epochs_done = epoch + 1;
    }
    Ok((state, log))
}

/// Alternating optimisation: per mini-batch, a generator step with the
/// estimator frozen, then an estimator step with the generator frozen.
pub fn train_joint(
    clips: &[TrainClip],
    cfg: &TrainConfig,
    mut m: JointModels,
    stop_after: Option<usize>,
) -> Result<(JointModels, TrainLog), NeuralError> {
    cfg.validate()?;
    let mut log = Vec::new();
    if clips.is_empty() || cfg.epochs == 0 {
        return Ok((m, log));
    }
    if clips.iter().any(|c| c.dark.is_none()) {
        return Err(NeuralError::Config("every clip needs a pseudo target for joint training".into()));
    }
    let per_epoch = make_batches(clips, cfg.batch, cfg.seed, 0).len();
    let total = cfg.epochs * per_epoch;
    let end = stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let seed = cfg.seed.wrapping_add(Phase::Generator as u64 * 1000);
    for epoch in m.epochs_done..end {
        for (b, idx) in make_batches(clips, cfg.batch, seed, epoch).iter().enumerate() {
            let step = epoch * per_epoch + b;
            let lr_g = cosine_anneal(cfg.lr_g, step.min(total), total)?;
            let lr_e = cosine_anneal(cfg.lr_e, step.min(total), total)?;
            let light = stack(idx.iter().map(|&i| clips[i].light.clone()))?;
            let dark = stack(idx.iter().map(|&i| clips[i].dark.clone().expect("checked above")))?;
            let p = pulses(clips, idx)?;

            // Generation phase: estimator parameters enter as constants.
            let mut tape = Tape::new();
            let gb = m.g.params.bind(&mut tape, true);
            let eb = m.e.params.bind(&mut tape, false);
            let (loss, fake, g_stats, parts) =
                loss_generator(&mut tape, &light, &dark, &p, &m.g, &gb, &m.e, &eb, cfg.lambda, cfg.epsilon)?;
            check_finite(parts.total, step, Phase::Generator, &m.g.params)?;
            let fake = tape.to_tensor(fake);
            tape.backward(loss)?;
            let grads = m.g.params.grads(&tape, &gb);
            drop(tape);
            apply_adam(&mut m.g.params, &grads, &mut m.g_opt, lr_g, cfg.adam())?;
            m.g.params.update_running(&g_stats);
            log.push(LogEntry {
                step,
                epoch,
                phase: Phase::Generator,
                loss: parts.total,
                ppg: Some(parts.ppg),
                appearance: Some(parts.appearance),
            });

            // Estimation phase on the detached translation.
            let mut tape = Tape::new();
            let eb = m.e.params.bind(&mut tape, true);
            let (loss, e_stats) = loss_estimator(&mut tape, &light, &fake, &p, &m.e, &eb)?;
            let value = tape.scalar_value(loss);
            check_finite(value, step, Phase::Estimator, &m.e.params)?;
            tape.backward(loss)?;
            let grads = m.e.params.grads(&tape, &eb);
            apply_adam(&mut m.e.params, &grads, &mut m.e_opt, lr_e, cfg.adam())?;
            m.e.params.update_running(&e_stats);
            log.push(LogEntry {
                step,
                epoch,
                phase: Phase::Estimator,
                loss: value,
                ppg: Some(value),
                appearance: None,
            });
        }
        m.epochs_done = epoch + 1;
    }
    Ok((m, log))
}

/// Fresh estimator seeded from the config.
pub fn new_prn(cfg: &TrainConfig) -> Prn {
    Prn::new(cfg.prn, cfg.seed.wrapping_add(3))
}

//! Experiment harness: configuration, the RVID container, dataset
//! generation, training and evaluation drivers, report files.

pub mod config;
pub mod dataset;
pub mod eval;
pub mod report;
pub mod rvid;
pub mod train;
pub mod translate;

pub use config::{ClipConfig, DatasetConfig, EvalConfig, ExperimentConfig, Method, Mix, SplitConfig};
pub use dataset::{cmd_gen, make_dataset, read_dataset, write_dataset, Manifest, Sample, Sidecar, Split};
pub use eval::{cmd_eval, evaluate_method, TraceRow};
pub use report::{validate_report, ReportFile, REPORT_SCHEMA_VERSION};
pub use train::{cmd_train, train_method, ClipSets, LogRow, TrainOptions, TrainedModel};
pub use translate::{cmd_translate, TranslateDiagnostics};

use crate::dsp::DspError;
use crate::neural::NeuralError;
use crate::optics::OpticsError;
use crate::rppg::RppgError;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("{0}")]
    Data(String),
    #[error("no checkpoint for method {method}; available: [{}]", available.join(", "))]
    MissingCheckpoint { method: String, available: Vec<String> },
    #[error("input is {got}, the model expects {expected}")]
    Dims { expected: String, got: String },
    #[error("training aborted, snapshot written to {snapshot}: {source}")]
    TrainingAborted {
        snapshot: PathBuf,
        #[source]
        source: NeuralError,
    },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Rppg(#[from] RppgError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Prefixes a format error with the file it came from.
    pub fn in_file(self, path: &Path) -> Self {
        match self {
            Self::Format { offset, msg } => Self::Format {
                offset,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        }
    }

    /// Process exit code: 1 for invalid input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Dims { .. } => 1,
            _ => 2,
        }
    }
}

pub(crate) fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("harness types serialise");
    s.push('\n');
    s
}

pub(crate) fn from_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, HarnessError> {
    serde_json::from_str(text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// Maps `f` over `items` on scoped worker threads; results keep input order.
pub(crate) fn par_map<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R, HarnessError> + Sync,
) -> Result<Vec<R>, HarnessError> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let per = items.len().div_ceil(workers);
    let parts: Vec<Result<Vec<R>, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(per)
            .map(|chunk| s.spawn(|| chunk.iter().map(&f).collect::<Result<Vec<R>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

//! Evaluation driver: per-method pulse extraction, windowed HR, metrics and
//! the report files under `<out>/eval`.

use super::config::{EvalConfig, ExperimentConfig, Method};
use super::dataset::{data_dir, read_dataset, split, Sample, Split};
use super::report::{ReportFile, REPORT_SCHEMA_VERSION};
use super::train::{method_dir, models_dir, ESTIMATOR_FILE};
use super::{par_map, to_json, write_file, HarnessError};
use crate::dsp::{butterworth_bandpass, estimate_hr_with, subject_metrics, FitzGroup, MetricsReport, SubjectMetrics};
use crate::neural::{load_checkpoint, Prn};
use crate::rppg::{extract, ClassicalMethod, SkinThresholds};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One analysis window of one subject, for plotting HR traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub method: String,
    pub subject: String,
    pub group: FitzGroup,
    pub window: usize,
    pub start_s: f64,
    pub gt_bpm: f64,
    pub est_bpm: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct GroupRow<'a> {
    method: &'a str,
    group: &'a str,
    subjects: Option<usize>,
    mae: f64,
    rmse: f64,
    pcc: Option<f64>,
    snr_db: Option<f64>,
}

fn score(
    method: Method,
    sample: &Sample,
    prn: Option<&Prn>,
    cfg: &EvalConfig,
) -> Result<(SubjectMetrics, Vec<TraceRow>), HarnessError> {
    let video = &sample.video;
    let fs = video.fs;
    let hr = cfg.hr();
    let gt_pulse = &sample.sidecar.pulse;
    let gt = sample.sidecar.profile.reference(video.t as f64 / fs, fs, hr.window_s, hr.stride_s);
    let pulse = match method {
        Method::Pos | Method::Chrom | Method::Ica => {
            let m = match method {
                Method::Pos => ClassicalMethod::Pos,
                Method::Chrom => ClassicalMethod::Chrom,
                _ => ClassicalMethod::Ica,
            };
            extract(m, video, &SkinThresholds::default(), cfg.ica_seed)?.samples
        }
        Method::Oracle => gt_pulse.clone(),
        _ => {
            let prn = prn.ok_or_else(|| HarnessError::Data(format!("{method} needs a trained estimator")))?;
            butterworth_bandpass(&prn.predict(video, cfg.chunk)?, fs, hr.lo_hz, hr.hi_hz)?
        }
    };
    let est = if method == Method::Oracle {
        gt.clone()
    } else {
        estimate_hr_with(&pulse, fs, &hr)?
    };
    let group = sample.scale().group();
    let metrics = subject_metrics(sample.id(), group, &est, &gt, &pulse, gt_pulse, fs)?;
    let traces = gt
        .bpm
        .iter()
        .zip(&est.bpm)
        .enumerate()
        .map(|(i, (g, e))| TraceRow {
            method: method.name().to_string(),
            subject: sample.id().to_string(),
            group,
            window: i,
            start_s: i as f64 * hr.stride_s,
            gt_bpm: g.expect("reference windows are complete"),
            est_bpm: *e,
        })
        .collect();
    Ok((metrics, traces))
}

/// Scores one method on the given subjects (in order).
pub fn evaluate_method(
    method: Method,
    samples: &[&Sample],
    prn: Option<&Prn>,
    cfg: &EvalConfig,
) -> Result<(MetricsReport, Vec<TraceRow>), HarnessError> {
    let scored = par_map(samples, |s| score(method, s, prn, cfg))?;
    let (subjects, traces): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
    let report = MetricsReport::from_subjects(method.name(), subjects)?;
    Ok((report, traces.into_iter().flatten().collect()))
}

fn available_models(out: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(models_dir(out))
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().join(ESTIMATOR_FILE).exists())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

pub fn load_estimator(out: &Path, method: Method) -> Result<Prn, HarnessError> {
    let path = method_dir(out, method).join(ESTIMATOR_FILE);
    if !path.exists() {
        return Err(HarnessError::MissingCheckpoint {
            method: method.name().to_string(),
            available: available_models(out),
        });
    }
    Ok(Prn::from_params(load_checkpoint(&path)?.params)?)
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| HarnessError::Data(e.to_string()))
}

fn group_rows(r: &MetricsReport) -> Vec<GroupRow<'_>> {
    let mut rows: Vec<GroupRow> = r
        .groups
        .iter()
        .map(|(g, m)| (g.label(), m))
        .chain([("overall", &r.overall)])
        .map(|(label, m)| GroupRow {
            method: &r.method,
            group: label,
            subjects: Some(m.subjects),
            mae: m.mae,
            rmse: m.rmse,
            pcc: Some(m.pcc),
            snr_db: Some(m.snr_db),
        })
        .collect();
    if let Some(b) = &r.bias {
        rows.push(GroupRow {
            method: &r.method,
            group: "bias_std",
            subjects: None,
            mae: b.std_mae,
            rmse: b.std_rmse,
            pcc: None,
            snr_db: None,
        });
    }
    rows
}

/// Evaluates every configured method on the evaluation split and writes
/// `report.json`, `groups.csv` and `hr_traces.csv` under `<out>/eval`.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<ReportFile, HarnessError> {
    let (_, samples) = read_dataset(&data_dir(out))?;
    let eval = split(&samples, Split::Eval);
    if eval.is_empty() {
        return Err(HarnessError::Data("dataset has no evaluation split".into()));
    }
    // Fail on missing checkpoints before spending time on any method.
    let mut models = Vec::new();
    for &m in &cfg.methods {
        models.push(if m.is_learned() { Some(load_estimator(out, m)?) } else { None });
    }
    let mut reports = Vec::new();
    let mut traces = Vec::new();
    for (&m, prn) in cfg.methods.iter().zip(&models) {
        let (r, t) = evaluate_method(m, &eval, prn.as_ref(), &cfg.eval)?;
        reports.push(r);
        traces.extend(t);
    }
    let file = ReportFile {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        eval: cfg.eval.clone(),
        reports,
    };
    let dir = out.join("eval");
    write_file(&dir.join("report.json"), to_json(&file))?;
    write_file(&dir.join("groups.csv"), csv_bytes(file.reports.iter().flat_map(group_rows))?)?;
    write_file(&dir.join("hr_traces.csv"), csv_bytes(&traces)?)?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{Mix, SplitConfig};
    use crate::harness::make_dataset;

    fn cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default().with_seed(8);
        cfg.dataset.size = 8;
        cfg.train.size = 8;
        cfg.dataset.eval = Some(SplitConfig {
            subjects: 4,
            mix: Mix::VitalLike,
            duration_s: 32.0,
            ..SplitConfig::default()
        });
        cfg
    }

    #[test]
    fn oracle_is_perfect() {
        let c = cfg();
        let s = make_dataset(&c).unwrap();
        let (r, traces) = evaluate_method(Method::Oracle, &s.iter().collect::<Vec<_>>(), None, &c.eval).unwrap();
        assert_eq!(r.overall.mae, 0.0);
        assert_eq!(r.overall.rmse, 0.0);
        assert!((r.overall.pcc - 1.0).abs() < 1e-12);
        assert_eq!(traces.len(), 4 * 3);
    }

    #[test]
    fn missing_checkpoint_lists_available() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("models/prn-real")).unwrap();
        std::fs::write(dir.path().join("models/prn-real").join(ESTIMATOR_FILE), b"").unwrap();
        match load_estimator(dir.path(), Method::PrnAugmented) {
            Err(HarnessError::MissingCheckpoint { method, available }) => {
                assert_eq!(method, "prn-augmented");
                assert_eq!(available, vec!["prn-real".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }
}

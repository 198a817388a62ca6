//! Heart-rate error metrics, waveform correlation and per-group bias.

use super::{DspError, HrSeries};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Paired windows that both carry an estimate.
fn paired(est: &HrSeries, gt: &HrSeries) -> Result<Vec<(f64, f64)>, DspError> {
    if est.len() != gt.len() {
        return Err(DspError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    let pairs: Vec<_> = est
        .bpm
        .iter()
        .zip(&gt.bpm)
        .filter_map(|(e, g)| Some(((*e)?, (*g)?)))
        .collect();
    if pairs.is_empty() {
        return Err(DspError::NoEstimates);
    }
    Ok(pairs)
}

/// Mean absolute error over windows. Missing windows are skipped.
pub fn mae(est: &HrSeries, gt: &HrSeries) -> Result<f64, DspError> {
    let p = paired(est, gt)?;
    Ok(p.iter().map(|(e, g)| (e - g).abs()).sum::<f64>() / p.len() as f64)
}

/// Root mean square error over windows. Missing windows are skipped.
pub fn rmse(est: &HrSeries, gt: &HrSeries) -> Result<f64, DspError> {
    let p = paired(est, gt)?;
    Ok((p.iter().map(|(e, g)| (e - g).powi(2)).sum::<f64>() / p.len() as f64).sqrt())
}

/// Centered cross and auto sums `(Sxy, Sxx, Syy)`.
pub fn centered_sums(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    (sxy, sxx, syy)
}

/// Pearson correlation of two equal-length waveforms.
pub fn pcc(p: &[f64], p_hat: &[f64]) -> Result<f64, DspError> {
    if p.len() != p_hat.len() {
        return Err(DspError::LengthMismatch {
            est: p_hat.len(),
            gt: p.len(),
        });
    }
    if p.len() < 2 {
        return Err(DspError::SignalTooShort { len: p.len(), needed: 2 });
    }
    let (sxy, sxx, syy) = centered_sums(p, p_hat);
    if sxx == 0.0 || syy == 0.0 {
        return Err(DspError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// JSON has no infinities; non-finite values are written as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub mod float_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        match *v {
            v if v.is_finite() => s.serialize_f64(v),
            v if v.is_nan() => s.serialize_str("nan"),
            v if v > 0.0 => s.serialize_str("inf"),
            _ => s.serialize_str("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("expected a number, got {t:?}"))),
            },
        }
    }
}

/// Fitzpatrick groups used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FitzGroup {
    #[serde(rename = "F1-2")]
    F12,
    #[serde(rename = "F3-4")]
    F34,
    #[serde(rename = "F5-6")]
    F56,
}

impl FitzGroup {
    pub const ALL: [FitzGroup; 3] = [FitzGroup::F12, FitzGroup::F34, FitzGroup::F56];

    /// Group of a Fitzpatrick scale given as 1..=6.
    pub fn from_scale(scale: u8) -> Option<Self> {
        match scale {
            1 | 2 => Some(Self::F12),
            3 | 4 => Some(Self::F34),
            5 | 6 => Some(Self::F56),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::F12 => "F1-2",
            Self::F34 => "F3-4",
            Self::F56 => "F5-6",
        }
    }
}

impl fmt::Display for FitzGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectMetrics {
    pub subject: String,
    pub group: FitzGroup,
    pub mae: f64,
    pub rmse: f64,
    pub pcc: f64,
    #[serde(with = "float_json")]
    pub snr_db: f64,
    pub windows: usize,
    pub missing: usize,
}

/// Scores one subject. `pulse_est` and `pulse_gt` are the full waveforms,
/// `pulse_est` already band-passed.
pub fn subject_metrics(
    subject: impl Into<String>,
    group: FitzGroup,
    est: &HrSeries,
    gt: &HrSeries,
    pulse_est: &[f64],
    pulse_gt: &[f64],
    fs: f64,
) -> Result<SubjectMetrics, DspError> {
    let gt_bpm: Vec<f64> = gt
        .bpm
        .iter()
        .map(|b| b.ok_or(DspError::InvalidArgument("reference series has a missing window".into())))
        .collect::<Result<_, _>>()?;
    let cfg = super::HrConfig {
        window_s: gt.window_s,
        stride_s: gt.stride_s,
        ..Default::default()
    };
    let pcc = pcc(pulse_gt, pulse_est).unwrap_or(0.0);
    Ok(SubjectMetrics {
        subject: subject.into(),
        group,
        mae: mae(est, gt)?,
        rmse: rmse(est, gt)?,
        pcc,
        snr_db: super::snr(pulse_est, fs, &gt_bpm, &cfg)?,
        windows: est.len(),
        missing: est.missing(),
    })
}

/// Subject-averaged metrics for one group (or the whole cohort).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupMetrics {
    pub subjects: usize,
    pub mae: f64,
    pub rmse: f64,
    pub pcc: f64,
    #[serde(with = "float_json")]
    pub snr_db: f64,
}

impl GroupMetrics {
    pub fn from_subjects<'a>(rows: impl IntoIterator<Item = &'a SubjectMetrics>) -> Option<Self> {
        let rows: Vec<_> = rows.into_iter().collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&SubjectMetrics) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        Some(Self {
            subjects: rows.len(),
            mae: avg(|r| r.mae),
            rmse: avg(|r| r.rmse),
            pcc: avg(|r| r.pcc),
            snr_db: avg(|r| r.snr_db),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bias {
    pub std_mae: f64,
    pub std_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub method: String,
    pub subjects: Vec<SubjectMetrics>,
    pub groups: IndexMap<FitzGroup, GroupMetrics>,
    pub overall: GroupMetrics,
    pub bias: Option<Bias>,
}

impl MetricsReport {
    pub fn from_subjects(method: impl Into<String>, subjects: Vec<SubjectMetrics>) -> Result<Self, DspError> {
        let overall = GroupMetrics::from_subjects(&subjects).ok_or(DspError::NoEstimates)?;
        let mut groups = IndexMap::new();
        for g in FitzGroup::ALL {
            if let Some(m) = GroupMetrics::from_subjects(subjects.iter().filter(|s| s.group == g)) {
                groups.insert(g, m);
            }
        }
        let mut report = Self {
            method: method.into(),
            subjects,
            groups,
            overall,
            bias: None,
        };
        if report.groups.len() >= 2 {
            let (std_mae, std_rmse) = bias_std(&report)?;
            report.bias = Some(Bias { std_mae, std_rmse });
        }
        Ok(report)
    }
}

fn population_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of per-group MAE and RMSE.
pub fn bias_std(report: &MetricsReport) -> Result<(f64, f64), DspError> {
    if report.groups.len() < 2 {
        return Err(DspError::TooFewGroups(report.groups.len()));
    }
    let maes: Vec<f64> = report.groups.values().map(|g| g.mae).collect();
    let rmses: Vec<f64> = report.groups.values().map(|g| g.rmse).collect();
    Ok((population_std(&maes), population_std(&rmses)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(mae: f64) -> GroupMetrics {
        GroupMetrics {
            subjects: 1,
            mae,
            rmse: mae + 1.0,
            pcc: 1.0,
            snr_db: 0.0,
        }
    }

    fn report(maes: &[f64]) -> MetricsReport {
        MetricsReport {
            method: "m".into(),
            subjects: vec![],
            groups: FitzGroup::ALL.iter().zip(maes).map(|(g, &m)| (*g, group(m))).collect(),
            overall: group(0.0),
            bias: None,
        }
    }

    #[test]
    fn mae_rmse_fixture() {
        let est = HrSeries::from_bpm([70.0, 72.0]);
        let gt = HrSeries::from_bpm([71.0, 70.0]);
        assert!((mae(&est, &gt).unwrap() - 1.5).abs() < 1e-12);
        assert!((rmse(&est, &gt).unwrap() - 2.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let gt = HrSeries::from_bpm([60.0, 75.0, 90.0]);
        let est = HrSeries::from_bpm([62.0, 77.0, 92.0]);
        assert!((mae(&est, &gt).unwrap() - 2.0).abs() < 1e-12);
        assert!((rmse(&est, &gt).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(mae(&gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        let a = HrSeries::from_bpm([1.0]);
        let b = HrSeries::from_bpm([1.0, 2.0]);
        assert!(matches!(mae(&a, &b), Err(DspError::LengthMismatch { .. })));
    }

    #[test]
    fn missing_windows_skipped() {
        let mut est = HrSeries::from_bpm([70.0, 0.0]);
        est.bpm[1] = None;
        let gt = HrSeries::from_bpm([72.0, 80.0]);
        assert_eq!(mae(&est, &gt).unwrap(), 2.0);
    }

    #[test]
    fn pcc_fixture() {
        // Hand evaluation: Sxy = 4, Sxx = Syy = 5.
        let r = pcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pcc_affine_and_negation() {
        let p = [0.3, -1.2, 2.5, 0.7, -0.4];
        let q: Vec<f64> = p.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((pcc(&p, &q).unwrap() - 1.0).abs() < 1e-12);
        let n: Vec<f64> = p.iter().map(|v| -v).collect();
        assert!((pcc(&p, &n).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pcc(&p, &[1.0; 5]), Err(DspError::ZeroVariance));
    }

    #[test]
    fn bias_fixture() {
        // Population std of the three values, evaluated by hand:
        // mean 3.43, squared deviations 1.1236 + 0.2304 + 2.3716 = 3.7256.
        let (s, _) = bias_std(&report(&[2.37, 2.95, 4.97])).unwrap();
        assert!((s - (3.7256f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((s - 1.11439).abs() < 1e-3);
    }

    #[test]
    fn bias_shift_invariant_and_zero() {
        let (a, _) = bias_std(&report(&[1.0, 2.0, 4.0])).unwrap();
        let (b, _) = bias_std(&report(&[11.0, 12.0, 14.0])).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert_eq!(bias_std(&report(&[3.0, 3.0, 3.0])).unwrap().0, 0.0);
        assert_eq!(bias_std(&report(&[3.0])), Err(DspError::TooFewGroups(1)));
    }

    #[test]
    fn group_names_serialize() {
        assert_eq!(serde_json::to_string(&FitzGroup::F56).unwrap(), "\"F5-6\"");
        assert_eq!(FitzGroup::from_scale(4), Some(FitzGroup::F34));
    }
}

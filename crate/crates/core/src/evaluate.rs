//! Prediction scoring, ride-quality classes and run-to-run repeatability.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("repeatability needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("invalid class thresholds: good_max {good_max}, fair_max {fair_max}")]
    InvalidThresholds { good_max: f64, fair_max: f64 },
}

/// RMSE and MAPE in the units of the inputs; MAPE in percent.
///
/// `mape` is `None` when any truth value is zero (`zero_truth` is then set);
/// `r2` is `None` when the truth vector has zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mape: Option<f64>,
    pub r2: Option<f64>,
    pub n: usize,
    pub zero_truth: bool,
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<MetricReport, EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    let zero_truth = truth.contains(&0.0);
    let mape = (!zero_truth).then(|| 100.0 * pred.iter().zip(truth).map(|(p, t)| ((p - t) / t).abs()).sum::<f64>() / n);
    let mean_t = truth.iter().sum::<f64>() / n;
    let sst: f64 = truth.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let r2 = (sst > 0.0).then(|| 1.0 - sse / sst);
    Ok(MetricReport {
        rmse: (sse / n).sqrt(),
        mape,
        r2,
        n: pred.len(),
        zero_truth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RideClass {
    Good,
    Fair,
    Poor,
}

impl RideClass {
    pub const ALL: [RideClass; 3] = [RideClass::Good, RideClass::Fair, RideClass::Poor];

    pub fn as_str(self) -> &'static str {
        match self {
            RideClass::Good => "good",
            RideClass::Fair => "fair",
            RideClass::Poor => "poor",
        }
    }
}

impl std::fmt::Display for RideClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RideClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "good" => Ok(RideClass::Good),
            "fair" => Ok(RideClass::Fair),
            "poor" => Ok(RideClass::Poor),
            _ => Err(format!("unknown ride class {s:?}")),
        }
    }
}

/// Class boundaries in in/mi. Both boundaries belong to Fair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassThresholds {
    pub good_max: f64,
    pub fair_max: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        Self {
            good_max: 95.0,
            fair_max: 170.0,
        }
    }
}

impl ClassThresholds {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.good_max > 0.0 && self.good_max < self.fair_max && self.fair_max.is_finite() {
            Ok(())
        } else {
            Err(EvalError::InvalidThresholds {
                good_max: self.good_max,
                fair_max: self.fair_max,
            })
        }
    }
}

pub fn classify(iri_inmi: f64, th: &ClassThresholds) -> RideClass {
    if iri_inmi < th.good_max {
        RideClass::Good
    } else if iri_inmi <= th.fair_max {
        RideClass::Fair
    } else {
        RideClass::Poor
    }
}

/// Percentage of segments whose predicted class matches the true class.
pub fn classification_accuracy(pred: &[f64], truth: &[f64], th: &ClassThresholds) -> Result<f64, EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred
        .iter()
        .zip(truth)
        .filter(|(p, t)| classify(**p, th) == classify(**t, th))
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Counts indexed `[truth][pred]` in Good, Fair, Poor order.
pub fn confusion_matrix(pred: &[f64], truth: &[f64], th: &ClassThresholds) -> Result<[[usize; 3]; 3], EvalError> {
    check_lengths(pred.len(), truth.len())?;
    let mut m = [[0usize; 3]; 3];
    for (p, t) in pred.iter().zip(truth) {
        m[classify(*t, th) as usize][classify(*p, th) as usize] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRepeatability {
    pub index: usize,
    pub mean: f64,
    pub sd: f64,
    /// Percent; `None` where the mean is zero.
    pub cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub segments: Vec<SegmentRepeatability>,
    /// Mean over segments with a defined CV.
    pub mean_cv: f64,
    pub count_cv_over_20: usize,
    pub n_runs: usize,
}

impl RepeatabilityReport {
    pub fn fraction_cv_over_20(&self) -> f64 {
        self.count_cv_over_20 as f64 / self.segments.len() as f64
    }
}

/// Per-segment population SD and CV across runs aligned by segment index.
pub fn repeatability<R: AsRef<[f64]>>(runs: &[R]) -> Result<RepeatabilityReport, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewRuns(runs.len()));
    }
    let n_seg = runs[0].as_ref().len();
    for r in runs {
        check_lengths(n_seg, r.as_ref().len())?;
    }
    let k = runs.len() as f64;
    let segments: Vec<SegmentRepeatability> = (0..n_seg)
        .map(|i| {
            let mean = runs.iter().map(|r| r.as_ref()[i]).sum::<f64>() / k;
            let var = runs.iter().map(|r| (r.as_ref()[i] - mean).powi(2)).sum::<f64>() / k;
            let sd = var.sqrt();
            SegmentRepeatability {
                index: i,
                mean,
                sd,
                cv: (mean != 0.0).then(|| 100.0 * sd / mean.abs()),
            }
        })
        .collect();
    let cvs: Vec<f64> = segments.iter().filter_map(|s| s.cv).collect();
    let mean_cv = if cvs.is_empty() {
        0.0
    } else {
        cvs.iter().sum::<f64>() / cvs.len() as f64
    };
    Ok(RepeatabilityReport {
        count_cv_over_20: cvs.iter().filter(|&&c| c > 20.0).count(),
        mean_cv,
        segments,
        n_runs: runs.len(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// `metric,value` rows; undefined metrics are written with an empty value.
pub fn write_metrics_csv<W: Write>(mut out: W, report: &MetricReport, accuracy: Option<f64>) -> std::io::Result<()> {
    writeln!(out, "metric,value")?;
    writeln!(out, "rmse,{}", report.rmse)?;
    writeln!(out, "mape,{}", opt(report.mape))?;
    writeln!(out, "r2,{}", opt(report.r2))?;
    writeln!(out, "n,{}", report.n)?;
    if let Some(a) = accuracy {
        writeln!(out, "class_accuracy,{a}")?;
    }
    Ok(())
}

pub fn write_repeatability_csv<W: Write>(mut out: W, report: &RepeatabilityReport) -> std::io::Result<()> {
    writeln!(out, "index,mean,sd,cv")?;
    for s in &report.segments {
        writeln!(out, "{},{},{},{}", s.index, s.mean, s.sd, opt(s.cv))?;
    }
    Ok(())
}

/// Plain-text table for terminals.
pub fn format_metrics(report: &MetricReport) -> String {
    let show = |v: Option<f64>, unit: &str| v.map_or("undefined".to_string(), |x| format!("{x:.3}{unit}"));
    format!(
        "n     {}\nRMSE  {:.3} in/mi\nMAPE  {}\nR2    {}\n",
        report.n,
        report.rmse,
        show(report.mape, " %"),
        show(report.r2, "")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let r = metrics(&[50.0, 100.0, 150.0], &[50.0, 100.0, 150.0]).unwrap();
        assert_eq!((r.rmse, r.mape, r.r2), (0.0, Some(0.0), Some(1.0)));
    }

    #[test]
    fn hand_values() {
        let r = metrics(&[110.0, 190.0], &[100.0, 200.0]).unwrap();
        assert!((r.rmse - 10.0).abs() < 1e-12);
        assert!((r.mape.unwrap() - 7.5).abs() < 1e-12);
        assert!((r.r2.unwrap() - 0.96).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases_flagged() {
        let r = metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap();
        assert_eq!(r.r2, None);
        let z = metrics(&[1.0, 2.0], &[0.0, 3.0]).unwrap();
        assert!(z.zero_truth && z.mape.is_none());
        assert_eq!(
            metrics(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(metrics(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn class_boundaries() {
        let th = ClassThresholds::default();
        assert_eq!(classify(80.0, &th), RideClass::Good);
        assert_eq!(classify(120.0, &th), RideClass::Fair);
        assert_eq!(classify(200.0, &th), RideClass::Poor);
        assert_eq!(classify(95.0, &th), RideClass::Fair);
        assert_eq!(classify(170.0, &th), RideClass::Fair);
        assert!(ClassThresholds {
            good_max: 170.0,
            fair_max: 95.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn accuracy_extremes() {
        let th = ClassThresholds::default();
        let truth = [40.0, 60.0, 80.0];
        assert_eq!(classification_accuracy(&truth, &truth, &th).unwrap(), 100.0);
        assert_eq!(
            classification_accuracy(&[50.0, 70.0, 90.0], &truth, &th).unwrap(),
            100.0
        );
        let shifted: Vec<f64> = truth.iter().map(|t| t + 200.0).collect();
        assert_eq!(classification_accuracy(&shifted, &truth, &th).unwrap(), 0.0);
        let cm = confusion_matrix(&shifted, &truth, &th).unwrap();
        assert_eq!(cm[0][2], 3);
    }

    #[test]
    fn repeatability_hand_value() {
        let r = repeatability(&[vec![100.0, 100.0], vec![120.0, 100.0]]).unwrap();
        assert!((r.segments[0].sd - 10.0).abs() < 1e-12);
        assert!((r.segments[0].cv.unwrap() - 100.0 / 11.0).abs() < 1e-12);
        assert_eq!(r.segments[1].sd, 0.0);
        assert_eq!(r.count_cv_over_20, 0);
        assert!(repeatability(&[vec![1.0]]).is_err());
        assert!(repeatability(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &metrics(&[1.0, 2.0], &[3.0, 3.0]).unwrap(), Some(50.0)).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("metric,value\nrmse,"));
        assert!(s.contains("\nr2,\n"));
        let mut buf = Vec::new();
        write_repeatability_csv(&mut buf, &repeatability(&[vec![0.0], vec![0.0]]).unwrap()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,mean,sd,cv\n0,0,0,\n");
    }
}

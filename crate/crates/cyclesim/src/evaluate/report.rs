//! Classification reports: confusion matrix, accuracy, macro-averaged
//! precision/recall/F1, multiclass MCC, Cohen's kappa, stratified by domain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classify::ClassPrediction;
use crate::dataio::{DomainTag, TissueClass};

use super::{EvalError, Stratum};

/// Precision/recall/F1 for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Averaging scheme over classes present in the truth set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Unweighted mean over present classes (the default).
    Macro,
    /// Support-weighted mean over present classes.
    Weighted,
}

/// One stratum's metric battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stratum: Stratum,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub cohen_kappa: f64,
    /// confusion[truth][predicted], classes in fixed order.
    pub confusion: [[usize; 4]; 4],
    pub per_class: BTreeMap<TissueClass, PerClassMetrics>,
}

impl MetricsReport {
    pub fn support(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Builds the report with macro averaging.
pub fn classification_report(
    preds: &[ClassPrediction],
    truth: &[TissueClass],
    stratum: Stratum,
) -> Result<MetricsReport, EvalError> {
    classification_report_with(preds, truth, stratum, AveragingMode::Macro)
}

/// Builds the report with an explicit averaging scheme.
pub fn classification_report_with(
    preds: &[ClassPrediction],
    truth: &[TissueClass],
    stratum: Stratum,
    averaging: AveragingMode,
) -> Result<MetricsReport, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            left: preds.len(),
            right: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut confusion = [[0usize; 4]; 4];
    for (p, t) in preds.iter().zip(truth.iter()) {
        let ti = t.index().ok_or(EvalError::UnlabeledTruth)?;
        let pi = p.predicted.index().expect("prediction is a real class");
        confusion[ti][pi] += 1;
    }
    Ok(report_from_confusion(confusion, stratum, averaging))
}

fn report_from_confusion(
    confusion: [[usize; 4]; 4],
    stratum: Stratum,
    averaging: AveragingMode,
) -> MetricsReport {
    let total: usize = confusion.iter().flatten().sum();
    let trace: usize = (0..4).map(|i| confusion[i][i]).sum();
    let accuracy = trace as f64 / total as f64;

    let row_sum = |i: usize| -> usize { confusion[i].iter().sum() };
    let col_sum = |j: usize| -> usize { (0..4).map(|i| confusion[i][j]).sum() };

    let mut per_class = BTreeMap::new();
    let mut avg_p = 0.0;
    let mut avg_r = 0.0;
    let mut avg_f = 0.0;
    let mut weight_total = 0.0;
    for k in 0..4 {
        let support = row_sum(k);
        if support == 0 {
            continue; // class absent from truth: excluded from averages
        }
        let tp = confusion[k][k] as f64;
        let predicted = col_sum(k) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.insert(
            TissueClass::from_index(k),
            PerClassMetrics {
                precision,
                recall,
                f1,
            },
        );
        let w = match averaging {
            AveragingMode::Macro => 1.0,
            AveragingMode::Weighted => support as f64,
        };
        avg_p += w * precision;
        avg_r += w * recall;
        avg_f += w * f1;
        weight_total += w;
    }
    let precision = avg_p / weight_total;
    let recall = avg_r / weight_total;
    let f1 = avg_f / weight_total;

    // Multiclass MCC from the confusion matrix.
    let s = total as f64;
    let c = trace as f64;
    let mut sum_pt = 0.0;
    let mut sum_p2 = 0.0;
    let mut sum_t2 = 0.0;
    for k in 0..4 {
        let p_k = col_sum(k) as f64;
        let t_k = row_sum(k) as f64;
        sum_pt += p_k * t_k;
        sum_p2 += p_k * p_k;
        sum_t2 += t_k * t_k;
    }
    let mcc_den = ((s * s - sum_p2) * (s * s - sum_t2)).sqrt();
    let mcc = if mcc_den > 0.0 {
        (c * s - sum_pt) / mcc_den
    } else {
        0.0
    };

    // Cohen's kappa; degenerate chance agreement (p_e = 1) maps to 0.
    let p_o = accuracy;
    let p_e = sum_pt / (s * s);
    let cohen_kappa = if (1.0 - p_e).abs() < 1e-12 {
        0.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };

    MetricsReport {
        stratum,
        accuracy,
        precision,
        recall,
        f1,
        mcc,
        cohen_kappa,
        confusion,
        per_class,
    }
}

/// Reports per stratum. ALL is computed over the union of samples, not
/// averaged from the per-domain reports; a domain with no samples yields
/// `None`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerDomainReports {
    pub all: MetricsReport,
    pub wli: Option<MetricsReport>,
    pub nbi: Option<MetricsReport>,
}

impl PerDomainReports {
    pub fn get(&self, stratum: Stratum) -> Option<&MetricsReport> {
        match stratum {
            Stratum::All => Some(&self.all),
            Stratum::Wli => self.wli.as_ref(),
            Stratum::Nbi => self.nbi.as_ref(),
        }
    }
}

pub fn per_domain_report(
    samples: &[(ClassPrediction, TissueClass, DomainTag)],
) -> Result<PerDomainReports, EvalError> {
    let all_preds: Vec<ClassPrediction> = samples.iter().map(|(p, _, _)| *p).collect();
    let all_truth: Vec<TissueClass> = samples.iter().map(|(_, t, _)| *t).collect();
    let all = classification_report(&all_preds, &all_truth, Stratum::All)?;

    let stratified = |domain: DomainTag, stratum: Stratum| -> Result<Option<MetricsReport>, EvalError> {
        let preds: Vec<ClassPrediction> = samples
            .iter()
            .filter(|(_, _, d)| *d == domain)
            .map(|(p, _, _)| *p)
            .collect();
        if preds.is_empty() {
            return Ok(None);
        }
        let truth: Vec<TissueClass> = samples
            .iter()
            .filter(|(_, _, d)| *d == domain)
            .map(|(_, t, _)| *t)
            .collect();
        Ok(Some(classification_report(&preds, &truth, stratum)?))
    };
    let wli = stratified(DomainTag::Wli, Stratum::Wli)?;
    let nbi = stratified(DomainTag::Nbi, Stratum::Nbi)?;
    Ok(PerDomainReports { all, wli, nbi })
}

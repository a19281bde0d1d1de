//! AUROC and thresholded confusion-matrix metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Usage("metrics of an empty sample".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::dim(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("non-binary label {bad}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    Ok(())
}

/// Mann–Whitney AUROC with average ranks for ties. `None` when only one
/// class is present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: positions i..=j share (i+1 + j+1)/2
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum_pos += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok(Some((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl Confusion {
    /// Predicts positive iff `score >= threshold`.
    pub fn count(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        check_inputs(scores, labels)?;
        let mut c = Self::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One evaluation. Undefined metrics are `None` and serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub arm: String,
    pub split: String,
    /// `None` on rows that average over seeds.
    pub seed: Option<u64>,
    pub auroc: Option<f64>,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Confusion metrics only; `auroc` is left undefined.
pub fn confusion_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<MetricsReport> {
    let c = Confusion::count(scores, labels, threshold)?;
    Ok(MetricsReport {
        arm: String::new(),
        split: String::new(),
        seed: None,
        auroc: None,
        acc: ratio(c.tp + c.tn, c.total()),
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        specificity: ratio(c.tn, c.tn + c.fp),
        sensitivity: ratio(c.tp, c.tp + c.fn_),
        ppv: ratio(c.tp, c.tp + c.fp),
        npv: ratio(c.tn, c.tn + c.fn_),
        threshold,
        tp: c.tp,
        fp: c.fp,
        tn: c.tn,
        fn_: c.fn_,
        notes: Vec::new(),
    })
}

/// AUROC plus confusion metrics at 0.5; `scores` are probabilities.
pub fn metrics_report(scores: &[f64], labels: &[u8]) -> Result<MetricsReport> {
    let mut r = confusion_metrics(scores, labels, DEFAULT_THRESHOLD)?;
    r.auroc = roc_auc(scores, labels)?;
    if r.auroc.is_none() {
        r.notes.push("AUROC undefined: only one class present".into());
    }
    Ok(r)
}

impl MetricsReport {
    pub fn tagged(mut self, arm: &str, split: &str, seed: Option<u64>) -> Self {
        self.arm = arm.to_string();
        self.split = split.to_string();
        self.seed = seed;
        self
    }

    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    /// Mean over runs of each metric defined in every run; counts are summed.
    pub fn mean(arm: &str, split: &str, reports: &[MetricsReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Usage("mean of no reports".into()));
        }
        let avg = |f: fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = reports.iter().map(f).collect();
            v.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        Ok(Self {
            arm: arm.into(),
            split: split.into(),
            seed: None,
            auroc: avg(|r| r.auroc),
            acc: avg(|r| r.acc),
            f1: avg(|r| r.f1),
            specificity: avg(|r| r.specificity),
            sensitivity: avg(|r| r.sensitivity),
            ppv: avg(|r| r.ppv),
            npv: avg(|r| r.npv),
            threshold: reports[0].threshold,
            tp: reports.iter().map(|r| r.tp).sum(),
            fp: reports.iter().map(|r| r.fp).sum(),
            tn: reports.iter().map(|r| r.tn).sum(),
            fn_: reports.iter().map(|r| r.fn_).sum(),
            notes: Vec::new(),
        })
    }
}

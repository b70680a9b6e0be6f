//! Confusion counts and the derived percentage metrics.
//!
//! The geometric mean of sensitivity and specificity is the model-selection
//! criterion everywhere in this crate, so it is computed from the unrounded
//! ratios. Undefined ratios never surface as NaN: they become 0 with a flag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
    /// Label counted as positive (the one-class target).
    pub positive_class: String,
}

impl ConfusionMatrix {
    pub fn new(positive_class: &str) -> Self {
        ConfusionMatrix {
            true_pos: 0,
            false_neg: 0,
            false_pos: 0,
            true_neg: 0,
            positive_class: positive_class.to_string(),
        }
    }

    pub fn from_counts(tp: u64, fn_: u64, fp: u64, tn: u64, positive_class: &str) -> Self {
        ConfusionMatrix {
            true_pos: tp,
            false_neg: fn_,
            false_pos: fp,
            true_neg: tn,
            positive_class: positive_class.to_string(),
        }
    }

    pub fn record(&mut self, actual_positive: bool, predicted_positive: bool) {
        match (actual_positive, predicted_positive) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_neg += 1,
            (false, true) => self.false_pos += 1,
            (false, false) => self.true_neg += 1,
        }
    }

    /// Pools another matrix's counts into this one (micro-averaging).
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        self.true_pos += other.true_pos;
        self.false_neg += other.false_neg;
        self.false_pos += other.false_pos;
        self.true_neg += other.true_neg;
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_neg + self.false_pos + self.true_neg
    }

    pub fn positives(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    pub fn negatives(&self) -> u64 {
        self.false_pos + self.true_neg
    }
}

/// The six metrics, each as a percentage in [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sen: f64,
    pub spe: f64,
    pub pre: f64,
    pub f1: f64,
    pub acc: f64,
    pub gm: f64,
    /// Names of metrics that were undefined and reported as 0.
    pub flags: Vec<String>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.positives() == 0 || cm.negatives() == 0 {
        return Err(Error::Contract(format!(
            "metrics need both classes in the ground truth (positives {}, negatives {})",
            cm.positives(),
            cm.negatives()
        )));
    }
    let mut flags = Vec::new();
    let sen = cm.true_pos as f64 / cm.positives() as f64;
    let spe = cm.true_neg as f64 / cm.negatives() as f64;
    let pre = if cm.true_pos + cm.false_pos == 0 {
        flags.push("undefined-precision".to_string());
        0.0
    } else {
        cm.true_pos as f64 / (cm.true_pos + cm.false_pos) as f64
    };
    let f1 = if pre + sen == 0.0 {
        flags.push("undefined-f1".to_string());
        0.0
    } else {
        2.0 * pre * sen / (pre + sen)
    };
    let acc = (cm.true_pos + cm.true_neg) as f64 / cm.total() as f64;
    let gm = (sen * spe).sqrt();
    Ok(MetricsReport {
        sen: sen * 100.0,
        spe: spe * 100.0,
        pre: pre * 100.0,
        f1: f1 * 100.0,
        acc: acc * 100.0,
        gm: gm * 100.0,
        flags,
    })
}

//! Metrics (accuracy, macro precision/recall/F1, Cohen's kappa), confusion
//! matrices, the evaluation runner, and the two unimodal baselines.

mod baselines;
mod runner;

pub use baselines::{text_only_loss, train_prosody_svm, train_text_only, ProsodySvm, TextOnlyModel};
pub use runner::{
    evaluate, metrics_csv, metrics_from_predictions, table_markdown, validate_protocol,
    EvalOutcome, FoldMetrics, ModelKind, Protocol,
};

use crate::corpus::{Dimension, Labels};
use crate::error::{Error, Result};
use crate::fusion::Prediction;

/// 3x3 integer counts for one dimension; rows are true classes, columns
/// predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    fn row_sum(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }

    fn col_sum(&self, c: usize) -> u64 {
        (0..3).map(|r| self.counts[r][c]).sum()
    }
}

/// Argmax of each predicted distribution (ties to the lower class index)
/// tallied against the true labels, per dimension.
pub fn confusion(true_labels: &[Labels], predictions: &[Prediction]) -> Result<[ConfusionMatrix; 4]> {
    if true_labels.len() != predictions.len() {
        return Err(Error::Metric(format!(
            "length mismatch: {} labels vs {} predictions",
            true_labels.len(),
            predictions.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::Metric("no records to evaluate".into()));
    }
    let mut cms = [ConfusionMatrix::default(); 4];
    for (labels, pred) in true_labels.iter().zip(predictions) {
        for d in Dimension::ALL {
            let t = labels.get(d).index();
            let p = pred.dominant(d).index();
            cms[d.index()].add(t, p);
        }
    }
    Ok(cms)
}

fn nonempty(cm: &ConfusionMatrix) -> Result<()> {
    if cm.total() == 0 {
        return Err(Error::Metric("empty confusion matrix".into()));
    }
    Ok(())
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let correct: u64 = (0..3).map(|c| cm.counts[c][c]).sum();
    Ok(correct as f64 / cm.total() as f64)
}

fn per_class_precision(cm: &ConfusionMatrix, c: usize) -> f64 {
    let col = cm.col_sum(c);
    if col == 0 {
        0.0 // 0/0 defined as 0
    } else {
        cm.counts[c][c] as f64 / col as f64
    }
}

fn per_class_recall(cm: &ConfusionMatrix, c: usize) -> f64 {
    let row = cm.row_sum(c);
    if row == 0 {
        0.0
    } else {
        cm.counts[c][c] as f64 / row as f64
    }
}

pub fn macro_precision(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    Ok((0..3).map(|c| per_class_precision(cm, c)).sum::<f64>() / 3.0)
}

pub fn macro_recall(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    Ok((0..3).map(|c| per_class_recall(cm, c)).sum::<f64>() / 3.0)
}

/// Unweighted mean over the three classes of 2PR/(P+R), with 0 when
/// P + R = 0.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let f1 = (0..3)
        .map(|c| {
            let p = per_class_precision(cm, c);
            let r = per_class_recall(cm, c);
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .sum::<f64>()
        / 3.0;
    Ok(f1)
}

/// Chance-corrected agreement. Degenerate chance agreement (p_e = 1) is
/// defined as kappa = 0.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    nonempty(cm)?;
    let n = cm.total() as f64;
    let p_o: f64 = (0..3).map(|c| cm.counts[c][c] as f64).sum::<f64>() / n;
    let p_e: f64 = (0..3)
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (n * n);
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// All five metrics for one confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub kappa: f64,
}

pub fn dimension_metrics(cm: &ConfusionMatrix) -> Result<DimensionMetrics> {
    Ok(DimensionMetrics {
        accuracy: accuracy(cm)?,
        precision: macro_precision(cm)?,
        recall: macro_recall(cm)?,
        f1: macro_f1(cm)?,
        kappa: cohen_kappa(cm)?,
    })
}

//! Cross-validated evaluation runner and report rendering.

use crate::corpus::{self, DatasetManifest, Dimension, Labels};
use crate::error::{Error, Result};
use crate::eval::baselines::{train_prosody_svm, train_text_only};
use crate::eval::{confusion, dimension_metrics, DimensionMetrics};
use crate::fusion::features::FeatureExtractor;
use crate::fusion::train::TrainConfig;
use crate::fusion::{predict, train, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Fusion,
    TextOnly,
    ProsodySvm,
}

impl ModelKind {
    pub fn csv_name(self) -> &'static str {
        match self {
            ModelKind::Fusion => "fusion",
            ModelKind::TextOnly => "text_only",
            ModelKind::ProsodySvm => "prosody_svm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Fusion => "Multimodal Fusion (BiLSTM + attention)",
            ModelKind::TextOnly => "Text-only classifier",
            ModelKind::ProsodySvm => "Prosody-only SVM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// Single stratified split with this test fraction.
    Split { test_fraction: f64 },
    /// Stratified k-fold cross-validation.
    KFold { k: usize },
}

#[derive(Debug, Clone)]
pub struct FoldMetrics {
    pub fold: usize,
    /// `Dimension::ALL` order.
    pub per_dim: [DimensionMetrics; 4],
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub kind: ModelKind,
    pub folds: Vec<FoldMetrics>,
}

impl EvalOutcome {
    /// Mean over folds and dimensions of one metric.
    fn mean_of(&self, f: impl Fn(&DimensionMetrics) -> f64) -> f64 {
        let vals: Vec<f64> = self
            .folds
            .iter()
            .flat_map(|fm| fm.per_dim.iter().map(&f))
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.mean_of(|m| m.accuracy)
    }

    pub fn mean_macro_f1(&self) -> f64 {
        self.mean_of(|m| m.f1)
    }

    pub fn mean_kappa(&self) -> f64 {
        self.mean_of(|m| m.kappa)
    }

    /// Std over folds of the fold-mean macro-F1 (0 for a single split).
    pub fn std_macro_f1(&self) -> f64 {
        let per_fold: Vec<f64> = self
            .folds
            .iter()
            .map(|fm| fm.per_dim.iter().map(|m| m.f1).sum::<f64>() / 4.0)
            .collect();
        if per_fold.len() < 2 {
            return 0.0;
        }
        let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
        let var = per_fold.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
            / (per_fold.len() - 1) as f64;
        var.sqrt()
    }
}

/// Train and evaluate one model kind under the protocol. Each fold trains
/// from scratch on its own training portion; features and vocabulary are
/// fitted on that portion only.
pub fn evaluate(
    kind: ModelKind,
    manifest: &DatasetManifest,
    protocol: &Protocol,
    config: &TrainConfig,
    strat_dimension: Dimension,
    seed: u64,
) -> Result<EvalOutcome> {
    let splits: Vec<(DatasetManifest, DatasetManifest)> = match *protocol {
        Protocol::Split { test_fraction } => {
            vec![corpus::stratified_split(
                manifest,
                test_fraction,
                strat_dimension,
                seed,
            )?]
        }
        Protocol::KFold { k } => corpus::kfold(manifest, k, strat_dimension, seed)?,
    };

    let mut folds = Vec::with_capacity(splits.len());
    for (fold, (train_m, test_m)) in splits.iter().enumerate() {
        let per_dim = evaluate_fold(kind, train_m, test_m, config)?;
        folds.push(FoldMetrics { fold, per_dim });
    }
    Ok(EvalOutcome { kind, folds })
}

fn evaluate_fold(
    kind: ModelKind,
    train_m: &DatasetManifest,
    test_m: &DatasetManifest,
    config: &TrainConfig,
) -> Result<[DimensionMetrics; 4]> {
    let fx = FeatureExtractor::fit(train_m, config.model.d_text, config.seed);
    let train_items = fx.prepare_all(train_m);
    let test_items = fx.prepare_all(test_m);
    let labels: Vec<Labels> = test_items.iter().map(|i| i.labels).collect();

    let preds: Vec<Prediction> = match kind {
        ModelKind::Fusion => {
            let (params, _history) =
                train(&train_items, &test_items, fx.table.vectors.clone(), config)?;
            test_items
                .iter()
                .map(|i| predict(&params, i).map(|(p, _)| p))
                .collect::<Result<_>>()?
        }
        ModelKind::TextOnly => {
            let model = train_text_only(&train_items, fx.table.vectors.clone(), config)?;
            test_items.iter().map(|i| model.predict(i)).collect()
        }
        ModelKind::ProsodySvm => {
            let svm = train_prosody_svm(&train_items, config.seed)?;
            test_items.iter().map(|i| svm.predict(i)).collect()
        }
    };

    metrics_from_predictions(&labels, &preds)
}

/// Confusion + all metrics for an already-predicted set.
pub fn metrics_from_predictions(
    labels: &[Labels],
    preds: &[Prediction],
) -> Result<[DimensionMetrics; 4]> {
    let cms = confusion(labels, preds)?;
    let mut out = [DimensionMetrics {
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        kappa: 0.0,
    }; 4];
    for d in 0..4 {
        out[d] = dimension_metrics(&cms[d])?;
    }
    Ok(out)
}

/// `model,dimension,fold,accuracy,precision,recall,f1,kappa` rows.
pub fn metrics_csv(outcomes: &[EvalOutcome]) -> String {
    let mut out = String::from("model,dimension,fold,accuracy,precision,recall,f1,kappa\n");
    for oc in outcomes {
        for fm in &oc.folds {
            for d in Dimension::ALL {
                let m = &fm.per_dim[d.index()];
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                    oc.kind.csv_name(),
                    d.name(),
                    fm.fold,
                    m.accuracy,
                    m.precision,
                    m.recall,
                    m.f1,
                    m.kappa
                ));
            }
        }
    }
    out
}

/// Markdown comparison table, one row per model.
pub fn table_markdown(outcomes: &[EvalOutcome]) -> String {
    let mut out = String::new();
    out.push_str("| Model | Accuracy (%) | F1-Score | Cohen's Kappa |\n");
    out.push_str("|---|---|---|---|\n");
    for oc in outcomes {
        out.push_str(&format!(
            "| {} | {:.1} | {:.2} | {:.2} |\n",
            oc.kind.display_name(),
            100.0 * oc.mean_accuracy(),
            oc.mean_macro_f1(),
            oc.mean_kappa()
        ));
    }
    out
}

/// Error out when evaluation is impossible for a protocol (used by the
/// CLI to pre-validate).
pub fn validate_protocol(protocol: &Protocol) -> Result<()> {
    match *protocol {
        Protocol::Split { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::Config(format!(
                    "test_fraction must be in (0,1), got {test_fraction}"
                )));
            }
        }
        Protocol::KFold { k } => {
            if k < 2 {
                return Err(Error::Config(format!("kfold needs k >= 2, got {k}")));
            }
        }
    }
    Ok(())
}

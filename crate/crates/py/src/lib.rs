//! Python extension module exposing the main pipeline types and
//! operations: corpus generation, text preprocessing, prosody features,
//! knowledge-graph scoring and prompts, model training/inference,
//! evaluation metrics, and the feedback policy.
//!
//! Build with `cargo build -p psychstate-py --release`, then import the
//! produced shared library as `psychstate` (see python/smoke_test.py).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use psychstate_core::corpus::{self, Dimension, GenConfig, Level};
use psychstate_core::error::Error;
use psychstate_core::eval::{self, ConfusionMatrix};
use psychstate_core::feedback::{self, PolicyConfig};
use psychstate_core::fusion::{self, ModelConfig, TrainConfig};
use psychstate_core::kg;
use psychstate_core::prosody;
use psychstate_core::textproc;

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io(_) | Error::MissingArtifact(_) => PyIOError::new_err(err.to_string()),
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Version(_)
        | Error::Lookup(_)
        | Error::Stratification(_)
        | Error::Fold(_)
        | Error::Report(_)
        | Error::Metric(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn prediction_from_neg(neg_probs: [f64; 4]) -> PyResult<fusion::Prediction> {
    let mut probs = [[0.0; 3]; 4];
    for (row, &neg) in probs.iter_mut().zip(&neg_probs) {
        if !(0.0..=1.0).contains(&neg) {
            return Err(PyValueError::new_err(format!(
                "negative probability {neg} outside [0,1]"
            )));
        }
        *row = [neg, (1.0 - neg) * 0.5, (1.0 - neg) * 0.5];
    }
    Ok(fusion::Prediction { probs })
}

fn cm_from_rows(rows: Vec<Vec<u64>>) -> PyResult<ConfusionMatrix> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 3) {
        return Err(PyValueError::new_err("confusion matrix must be 3x3"));
    }
    let mut counts = [[0u64; 3]; 3];
    for (i, row) in rows.iter().enumerate() {
        counts[i].copy_from_slice(row);
    }
    Ok(ConfusionMatrix { counts })
}

/// A generated or loaded dataset.
#[pyclass(name = "Dataset")]
struct PyDataset {
    manifest: corpus::DatasetManifest,
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.manifest.len()
    }

    /// Per-dimension class tallies: {dimension: [negative, neutral, positive]}.
    fn class_counts<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for d in Dimension::ALL {
            dict.set_item(d.name(), self.manifest.class_counts[d.index()].to_vec())?;
        }
        Ok(dict)
    }

    fn record_ids(&self) -> Vec<String> {
        self.manifest
            .records
            .iter()
            .map(|r| r.record_id.clone())
            .collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        corpus::save_dataset(&self.manifest, &path).map_err(to_py_err)
    }
}

/// Generate the deterministic synthetic corpus.
#[pyfunction]
#[pyo3(signature = (seed, total=None, voice_fraction=None))]
fn generate_corpus(seed: u64, total: Option<usize>, voice_fraction: Option<f64>) -> PyResult<PyDataset> {
    let mut config = GenConfig::default();
    if let Some(t) = total {
        config.total = t;
    }
    if let Some(vf) = voice_fraction {
        config.voice_fraction = vf;
    }
    let manifest = corpus::generate_synthetic_corpus(&config, seed).map_err(to_py_err)?;
    Ok(PyDataset { manifest })
}

#[pyfunction]
fn load_dataset(path: PathBuf) -> PyResult<PyDataset> {
    let manifest = corpus::load_dataset(&path).map_err(to_py_err)?;
    Ok(PyDataset { manifest })
}

// --- text processing ------------------------------------------------------

#[pyfunction]
fn strip_markup(text: &str) -> String {
    textproc::strip_markup(text)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    textproc::tokenize(text).tokens
}

#[pyfunction]
fn stem(token: &str) -> String {
    textproc::stem(token)
}

/// Full cleaning pipeline: strip markup, tokenize, drop stop words, stem.
#[pyfunction]
fn preprocess(text: &str) -> Vec<String> {
    textproc::preprocess(text, textproc::default_stopwords())
}

// --- prosody ---------------------------------------------------------------

#[pyfunction]
fn estimate_pitch(frame: Vec<f64>, sample_rate: u32) -> f64 {
    prosody::estimate_pitch(&frame, sample_rate)
}

#[pyfunction]
fn intensity(frame: Vec<f64>) -> f64 {
    prosody::intensity(&frame)
}

#[pyfunction]
fn mfcc(frame: Vec<f64>, sample_rate: u32) -> Vec<f64> {
    prosody::mfcc(&frame, sample_rate).to_vec()
}

// --- metrics ----------------------------------------------------------------

#[pyfunction]
fn accuracy(cm: Vec<Vec<u64>>) -> PyResult<f64> {
    eval::accuracy(&cm_from_rows(cm)?).map_err(to_py_err)
}

#[pyfunction]
fn macro_f1(cm: Vec<Vec<u64>>) -> PyResult<f64> {
    eval::macro_f1(&cm_from_rows(cm)?).map_err(to_py_err)
}

#[pyfunction]
fn cohen_kappa(cm: Vec<Vec<u64>>) -> PyResult<f64> {
    eval::cohen_kappa(&cm_from_rows(cm)?).map_err(to_py_err)
}

// --- feedback ----------------------------------------------------------------

#[pyfunction]
fn percent_change(pre: f64, post: f64) -> PyResult<f64> {
    feedback::percent_change(pre, post).map_err(to_py_err)
}

/// Map per-dimension Negative probabilities to an intervention plan.
#[pyfunction]
fn select_intervention<'py>(py: Python<'py>, neg_probs: [f64; 4]) -> PyResult<Bound<'py, PyDict>> {
    let prediction = prediction_from_neg(neg_probs)?;
    let plan = feedback::select_intervention(&prediction, &PolicyConfig::default(), "");
    let dict = PyDict::new(py);
    dict.set_item("category", format!("{:?}", plan.category))?;
    dict.set_item("urgency", format!("{:?}", plan.urgency))?;
    dict.set_item("message", plan.message)?;
    dict.set_item(
        "triggering",
        plan.triggering.iter().map(|d| d.name()).collect::<Vec<_>>(),
    )?;
    Ok(dict)
}

// --- knowledge graph ---------------------------------------------------------

/// The bundled instructional knowledge graph with trainable triple
/// embeddings.
#[pyclass(name = "KnowledgeGraph")]
struct PyKnowledgeGraph {
    emb: kg::KgEmbeddings,
}

#[pymethods]
impl PyKnowledgeGraph {
    /// Train translational embeddings on the bundled graph.
    #[new]
    #[pyo3(signature = (seed=42, epochs=200))]
    fn new(seed: u64, epochs: usize) -> PyResult<Self> {
        let config = kg::KgTrainConfig {
            epochs,
            ..kg::KgTrainConfig::default()
        };
        let emb =
            kg::train_kg_embeddings(kg::KnowledgeGraph::bundled(), &config, seed).map_err(to_py_err)?;
        Ok(PyKnowledgeGraph { emb })
    }

    fn entities(&self) -> Vec<String> {
        kg::KnowledgeGraph::bundled()
            .entities
            .iter()
            .map(|e| e.id.clone())
            .collect()
    }

    fn triple_count(&self) -> usize {
        kg::KnowledgeGraph::bundled().triples.len()
    }

    /// Triple plausibility in (0, 1).
    fn score(&self, head: &str, relation: &str, tail: &str) -> PyResult<f64> {
        kg::score_triple(kg::KnowledgeGraph::bundled(), &self.emb, head, relation, tail)
            .map_err(to_py_err)
    }

    /// Top-k triples around a topic, given per-dimension Negative
    /// probabilities.
    #[pyo3(signature = (topic, k, neg_probs=[0.0, 0.0, 0.0, 0.0]))]
    fn top_k(
        &self,
        topic: &str,
        k: usize,
        neg_probs: [f64; 4],
    ) -> PyResult<Vec<(String, String, String)>> {
        let graph = kg::KnowledgeGraph::bundled();
        let prediction = prediction_from_neg(neg_probs)?;
        let triples = kg::top_k_triples(graph, &self.emb, topic, &prediction, k).map_err(to_py_err)?;
        Ok(triples
            .iter()
            .map(|t| {
                let (h, r, tl) = graph.triple_ids(t);
                (h.to_string(), r.to_string(), tl.to_string())
            })
            .collect())
    }

    /// Structured prompt for the top-k triples around a topic.
    #[pyo3(signature = (topic, k, neg_probs=[0.0, 0.0, 0.0, 0.0]))]
    fn render_prompt(&self, topic: &str, k: usize, neg_probs: [f64; 4]) -> PyResult<String> {
        let graph = kg::KnowledgeGraph::bundled();
        let prediction = prediction_from_neg(neg_probs)?;
        let triples = kg::top_k_triples(graph, &self.emb, topic, &prediction, k).map_err(to_py_err)?;
        Ok(kg::render_prompt(graph, &triples, &prediction))
    }
}

// --- model ---------------------------------------------------------------------

/// A trained fusion model plus its feature pipeline.
#[pyclass(name = "Model")]
struct PyModel {
    params: fusion::ModelParams,
    extractor: fusion::FeatureExtractor,
}

#[pymethods]
impl PyModel {
    /// Train on a dataset (80/20 stratified split internally).
    #[new]
    #[pyo3(signature = (dataset, epochs=20, seed=42, hidden=128, d_text=64))]
    fn new(dataset: &PyDataset, epochs: usize, seed: u64, hidden: usize, d_text: usize) -> PyResult<Self> {
        let (train_m, test_m) =
            corpus::stratified_split(&dataset.manifest, 0.2, Dimension::Stress, seed)
                .map_err(to_py_err)?;
        let config = TrainConfig {
            epochs,
            seed,
            model: ModelConfig { d_text, hidden },
            ..TrainConfig::default()
        };
        let extractor = fusion::FeatureExtractor::fit(&train_m, d_text, seed);
        let train_items = extractor.prepare_all(&train_m);
        let test_items = extractor.prepare_all(&test_m);
        let (params, _history) =
            fusion::train(&train_items, &test_items, extractor.table.vectors.clone(), &config)
                .map_err(to_py_err)?;
        Ok(PyModel { params, extractor })
    }

    /// Predict the four distributions for an ad-hoc text utterance.
    /// Returns {dimension: [p_negative, p_neutral, p_positive]}.
    fn predict_text<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
        let tokens = textproc::preprocess(text, textproc::default_stopwords());
        let record = corpus::InteractionRecord {
            record_id: "py".into(),
            student_id: "py".into(),
            session_index: 0,
            modality: corpus::Modality::TextOnly,
            text: text.to_string(),
            tokens,
            audio: None,
            labels: corpus::Labels {
                engagement: Level::Neutral,
                stress: Level::Neutral,
                motivation: Level::Neutral,
                understanding: Level::Neutral,
            },
        };
        let item = self.extractor.prepare(&record);
        let (prediction, attention) = fusion::predict(&self.params, &item).map_err(to_py_err)?;
        let dict = PyDict::new(py);
        for d in Dimension::ALL {
            dict.set_item(d.name(), prediction.get(d).to_vec())?;
        }
        dict.set_item("attention", attention)?;
        Ok(dict)
    }

    fn param_count(&self) -> usize {
        self.params.param_count()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        fusion::save_checkpoint(
            &path,
            &self.params,
            &self.extractor.table.vocab,
            &self.extractor.norm_stats,
        )
        .map_err(to_py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let checkpoint = fusion::load_checkpoint(&path).map_err(to_py_err)?;
        let extractor = checkpoint.extractor();
        Ok(PyModel {
            params: checkpoint.params,
            extractor,
        })
    }
}

#[pymodule]
fn psychstate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyKnowledgeGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(strip_markup, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(stem, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_pitch, m)?)?;
    m.add_function(wrap_pyfunction!(intensity, m)?)?;
    m.add_function(wrap_pyfunction!(mfcc, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(cohen_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(percent_change, m)?)?;
    m.add_function(wrap_pyfunction!(select_intervention, m)?)?;
    Ok(())
}

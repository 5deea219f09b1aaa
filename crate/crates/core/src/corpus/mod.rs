//! Data model, deterministic synthetic corpus generation, dataset
//! persistence, and split/fold utilities.

mod generate;
mod io;

pub use generate::{generate_synthetic_corpus, GenConfig, TOPICS};
pub use io::{load_dataset, save_dataset, SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prosody::AudioClip;
use crate::rng::{streams, DetRng};

/// The four monitored psychological dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    Engagement,
    Stress,
    Motivation,
    Understanding,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [
        Dimension::Engagement,
        Dimension::Stress,
        Dimension::Motivation,
        Dimension::Understanding,
    ];

    pub fn index(self) -> usize {
        match self {
            Dimension::Engagement => 0,
            Dimension::Stress => 1,
            Dimension::Motivation => 2,
            Dimension::Understanding => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Engagement => "engagement",
            Dimension::Stress => "stress",
            Dimension::Motivation => "motivation",
            Dimension::Understanding => "understanding",
        }
    }
}

/// Class ordering is load-bearing: argmax ties resolve to the lower index
/// (Negative < Neutral < Positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Negative,
    Neutral,
    Positive,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Negative, Level::Neutral, Level::Positive];

    pub fn index(self) -> usize {
        match self {
            Level::Negative => 0,
            Level::Neutral => 1,
            Level::Positive => 2,
        }
    }

    pub fn from_index(i: usize) -> Level {
        Level::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Negative => "Negative",
            Level::Neutral => "Neutral",
            Level::Positive => "Positive",
        }
    }
}

/// One (dimension, level) assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLabel {
    pub dimension: Dimension,
    pub level: Level,
}

/// Exactly one level per dimension, all four dimensions always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    pub engagement: Level,
    pub stress: Level,
    pub motivation: Level,
    pub understanding: Level,
}

impl Labels {
    pub fn get(&self, d: Dimension) -> Level {
        match d {
            Dimension::Engagement => self.engagement,
            Dimension::Stress => self.stress,
            Dimension::Motivation => self.motivation,
            Dimension::Understanding => self.understanding,
        }
    }

    pub fn set(&mut self, d: Dimension, l: Level) {
        match d {
            Dimension::Engagement => self.engagement = l,
            Dimension::Stress => self.stress = l,
            Dimension::Motivation => self.motivation = l,
            Dimension::Understanding => self.understanding = l,
        }
    }

    pub fn to_state_labels(self) -> [StateLabel; 4] {
        Dimension::ALL.map(|dimension| StateLabel {
            dimension,
            level: self.get(dimension),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    TextOnly,
    TextPlusVoice,
}

/// Audio payload: the WAV path stored in the dataset file (relative to it)
/// plus the decoded samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordAudio {
    pub path: String,
    pub clip: AudioClip,
}

/// One student-agent exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub record_id: String,
    pub student_id: String,
    pub session_index: u32,
    pub modality: Modality,
    pub text: String,
    pub tokens: Vec<String>,
    pub audio: Option<RecordAudio>,
    pub labels: Labels,
}

/// A dataset plus its provenance seed and per-dimension class tallies.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<InteractionRecord>,
    pub seed: u64,
    /// `class_counts[dimension][level]`, always equal to the actual tally.
    pub class_counts: [[u32; 3]; 4],
}

impl DatasetManifest {
    pub fn from_records(records: Vec<InteractionRecord>, seed: u64) -> Self {
        let class_counts = tally(&records);
        DatasetManifest {
            records,
            seed,
            class_counts,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Count labels per (dimension, level) over a record slice.
pub fn tally(records: &[InteractionRecord]) -> [[u32; 3]; 4] {
    let mut counts = [[0u32; 3]; 4];
    for r in records {
        for d in Dimension::ALL {
            counts[d.index()][r.labels.get(d).index()] += 1;
        }
    }
    counts
}

/// 80/20-style stratified split: per-class test counts are
/// round(class_count * test_fraction). Train and test partition the input.
pub fn stratified_split(
    manifest: &DatasetManifest,
    test_fraction: f64,
    strat_dimension: Dimension,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let groups = group_by_level(manifest, strat_dimension);
    for (level, idxs) in groups.iter().enumerate() {
        if idxs.len() == 1 {
            return Err(Error::Stratification(format!(
                "class {} of {} has 1 record; need at least 2",
                Level::from_index(level).name(),
                strat_dimension.name()
            )));
        }
    }

    let rng = DetRng::new(seed).fork(streams::SPLIT);
    let mut test_idx = Vec::new();
    for (level, idxs) in groups.iter().enumerate() {
        let mut idxs = idxs.clone();
        rng.fork(level as u64).shuffle(&mut idxs);
        let n_test = (idxs.len() as f64 * test_fraction).round() as usize;
        test_idx.extend_from_slice(&idxs[..n_test]);
    }
    test_idx.sort_unstable();
    let test_set: std::collections::HashSet<usize> = test_idx.iter().copied().collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in manifest.records.iter().enumerate() {
        if test_set.contains(&i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    Ok((
        DatasetManifest::from_records(train, manifest.seed),
        DatasetManifest::from_records(test, manifest.seed),
    ))
}

/// Stratified k-fold: validation folds are disjoint, cover the dataset,
/// and preserve class proportions within one record per class.
pub fn kfold(
    manifest: &DatasetManifest,
    k: usize,
    strat_dimension: Dimension,
    seed: u64,
) -> Result<Vec<(DatasetManifest, DatasetManifest)>> {
    if k < 2 {
        return Err(Error::Fold(format!("k must be at least 2, got {k}")));
    }
    let groups = group_by_level(manifest, strat_dimension);
    for (level, idxs) in groups.iter().enumerate() {
        if !idxs.is_empty() && idxs.len() < k {
            return Err(Error::Fold(format!(
                "class {} of {} has {} records, fewer than k = {k}",
                Level::from_index(level).name(),
                strat_dimension.name(),
                idxs.len()
            )));
        }
    }

    let rng = DetRng::new(seed).fork(streams::SPLIT);
    let mut fold_of = vec![0usize; manifest.len()];
    for (level, idxs) in groups.iter().enumerate() {
        let mut idxs = idxs.clone();
        rng.fork(100 + level as u64).shuffle(&mut idxs);
        for (j, &rec) in idxs.iter().enumerate() {
            fold_of[rec] = j % k;
        }
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, r) in manifest.records.iter().enumerate() {
            if fold_of[i] == f {
                val.push(r.clone());
            } else {
                train.push(r.clone());
            }
        }
        folds.push((
            DatasetManifest::from_records(train, manifest.seed),
            DatasetManifest::from_records(val, manifest.seed),
        ));
    }
    Ok(folds)
}

fn group_by_level(manifest: &DatasetManifest, dim: Dimension) -> [Vec<usize>; 3] {
    let mut groups: [Vec<usize>; 3] = Default::default();
    for (i, r) in manifest.records.iter().enumerate() {
        groups[r.labels.get(dim).index()].push(i);
    }
    groups
}

//! Fused-feature assembly: vocabulary + embedding table fitted on the
//! training split, prosody normalization stats, and per-record fused
//! frame construction.

use crate::corpus::{DatasetManifest, InteractionRecord, Labels, Modality};
use crate::fusion::model::AUX_DIM;
use crate::prosody::{self, NormStats, FEATURE_DIM};
use crate::rng::DetRng;
use crate::textproc::{EmbeddingTable, UNK_INDEX};

/// Vocabulary frequency cut-off: tokens seen fewer times map to `<UNK>`.
pub const MIN_TOKEN_FREQ: usize = 2;

/// A record ready for the model: token row indices plus the per-step
/// prosody-and-indicator vector.
#[derive(Debug, Clone)]
pub struct PreparedRecord {
    pub record_id: String,
    pub token_ids: Vec<usize>,
    /// Normalized prosody 16-vector plus the modality indicator
    /// (1 = voice present, 0 = absent) per token step.
    pub aux: Vec<[f64; AUX_DIM]>,
    pub labels: Labels,
}

/// Everything fitted on the training split that inference needs again:
/// the embedding table (vocabulary + initial vectors) and the prosody
/// normalization statistics.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub table: EmbeddingTable,
    pub norm_stats: NormStats,
}

impl FeatureExtractor {
    /// Build vocabulary and normalization stats from the training split
    /// only. Test-split OOV tokens later map to `<UNK>`; that rate is
    /// reported, never an error.
    pub fn fit(train: &DatasetManifest, d_text: usize, seed: u64) -> Self {
        let mut rng = DetRng::new(seed).fork(crate::rng::streams::INIT).fork(99);
        let table = EmbeddingTable::build(
            train
                .records
                .iter()
                .flat_map(|r| r.tokens.iter().map(|t| t.as_str())),
            d_text,
            MIN_TOKEN_FREQ,
            &mut rng,
        );
        let tracks: Vec<prosody::ProsodyTrack> = train
            .records
            .iter()
            .filter_map(|r| r.audio.as_ref())
            .map(|a| prosody::extract_track(&a.clip))
            .collect();
        let refs: Vec<&prosody::ProsodyTrack> = tracks.iter().collect();
        let norm_stats = prosody::compute_norm_stats(&refs);
        FeatureExtractor { table, norm_stats }
    }

    /// Assemble the fused inputs for one record. Text-only records carry
    /// the all-zeros prosody vector with indicator 0; records whose token
    /// list is empty fall back to a single `<UNK>` step.
    pub fn prepare(&self, record: &InteractionRecord) -> PreparedRecord {
        let mut token_ids = self.table.indices(&record.tokens);
        if token_ids.is_empty() {
            token_ids.push(UNK_INDEX);
        }
        let t_len = token_ids.len();

        let aux: Vec<[f64; AUX_DIM]> = match (&record.audio, record.modality) {
            (Some(audio), Modality::TextPlusVoice) => {
                let track = prosody::extract_track(&audio.clip);
                let normed = prosody::normalize(&track, &self.norm_stats);
                let duration = audio.clip.duration_s();
                let spans: Vec<(f64, f64)> = (0..t_len)
                    .map(|i| {
                        (
                            i as f64 * duration / t_len as f64,
                            (i + 1) as f64 * duration / t_len as f64,
                        )
                    })
                    .collect();
                prosody::align_to_tokens(&normed, &spans)
                    .into_iter()
                    .map(|v| {
                        let mut a = [0.0; AUX_DIM];
                        a[..FEATURE_DIM].copy_from_slice(&v);
                        a[FEATURE_DIM] = 1.0;
                        a
                    })
                    .collect()
            }
            _ => vec![[0.0; AUX_DIM]; t_len],
        };

        PreparedRecord {
            record_id: record.record_id.clone(),
            token_ids,
            aux,
            labels: record.labels,
        }
    }

    pub fn prepare_all(&self, manifest: &DatasetManifest) -> Vec<PreparedRecord> {
        manifest.records.iter().map(|r| self.prepare(r)).collect()
    }

    /// OOV rate of a manifest against the fitted vocabulary.
    pub fn oov_rate(&self, manifest: &DatasetManifest) -> f64 {
        let tokens: Vec<String> = manifest
            .records
            .iter()
            .flat_map(|r| r.tokens.iter().cloned())
            .collect();
        self.table.oov_rate(&tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, GenConfig};

    fn small_manifest() -> DatasetManifest {
        let cfg = GenConfig {
            total: 30,
            class_counts: [[4, 20, 6], [2, 26, 2], [4, 18, 8], [2, 22, 6]],
            ..GenConfig::default()
        };
        generate_synthetic_corpus(&cfg, 11).unwrap()
    }

    #[test]
    fn prepared_shapes_match() {
        let m = small_manifest();
        let fx = FeatureExtractor::fit(&m, 16, 3);
        for item in fx.prepare_all(&m) {
            assert!(!item.token_ids.is_empty());
            assert_eq!(item.token_ids.len(), item.aux.len());
            for a in &item.aux {
                assert!(a.iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn text_only_records_are_zero_with_indicator_off() {
        let m = small_manifest();
        let fx = FeatureExtractor::fit(&m, 16, 3);
        let text_only = m
            .records
            .iter()
            .find(|r| r.modality == Modality::TextOnly)
            .unwrap();
        let item = fx.prepare(text_only);
        for a in &item.aux {
            assert!(a.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn voice_records_set_indicator() {
        let m = small_manifest();
        let fx = FeatureExtractor::fit(&m, 16, 3);
        let voice = m
            .records
            .iter()
            .find(|r| r.modality == Modality::TextPlusVoice)
            .unwrap();
        let item = fx.prepare(voice);
        for a in &item.aux {
            assert_eq!(a[FEATURE_DIM], 1.0);
        }
        // prosody features are not identically zero
        assert!(item.aux.iter().any(|a| a[..FEATURE_DIM].iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn fit_is_deterministic() {
        let m = small_manifest();
        let a = FeatureExtractor::fit(&m, 16, 3);
        let b = FeatureExtractor::fit(&m, 16, 3);
        assert_eq!(a.table, b.table);
        assert_eq!(a.norm_stats, b.norm_stats);
    }
}

//! Deterministic synthetic corpus generation.
//!
//! The real study corpus is private, so end-to-end tests run against a
//! generated stand-in whose labels are learnable by construction: each
//! (dimension, level) pair leaves lexical markers in the text, and voice
//! records get sine-plus-noise audio whose pitch, amplitude, and syllable
//! rate are conditioned on the stress, engagement, and motivation labels.
//! Marker dropout keeps text evidence imperfect so the prosodic channel
//! carries complementary signal.

use crate::corpus::{
    tally, DatasetManifest, Dimension, InteractionRecord, Labels, Level, Modality, RecordAudio,
};
use crate::error::{Error, Result};
use crate::prosody::{wav, AudioClip, DEFAULT_SAMPLE_RATE};
use crate::rng::{streams, DetRng};
use crate::textproc;

/// Topic concepts mentioned in generated texts. These ids match the
/// bundled knowledge graph so downstream prompt rendering can link
/// utterances to graph entities.
pub const TOPICS: [&str; 10] = [
    "loops",
    "recursion",
    "arrays",
    "functions",
    "variables",
    "conditionals",
    "pointers",
    "strings",
    "debugging",
    "testing",
];

/// Per-dimension class counts from the study's annotation distribution.
pub const DEFAULT_CLASS_COUNTS: [[i64; 3]; 4] = [
    [70, 320, 110], // engagement
    [40, 410, 50],  // stress
    [80, 290, 130], // motivation
    [50, 360, 90],  // understanding
];

#[derive(Debug, Clone)]
pub struct GenConfig {
    /// Total record count. The default equals the class-count sum (500);
    /// other totals rescale every dimension proportionally with
    /// largest-remainder rounding.
    pub total: usize,
    /// Fraction of records carrying audio.
    pub voice_fraction: f64,
    /// `class_counts[dimension][level]`; every dimension must sum to the
    /// same value.
    pub class_counts: [[i64; 3]; 4],
    /// Coupling between Stress=Negative and Motivation=Negative in the
    /// joint label assignment (marginals stay exact).
    pub label_correlation: f64,
    /// Probability that a dimension's lexical marker phrase is replaced
    /// by an uninformative filler, for text-only records.
    pub marker_dropout: f64,
    /// Marker dropout for records that carry audio. Spoken turns put
    /// their affect in the voice and transcribe flatter, so this defaults
    /// much higher; the gap is what gives the fused model its multimodal
    /// edge over the text-only baseline.
    pub marker_dropout_voice: f64,
    /// Number of distinct students; 0 derives ~16 interactions/student.
    pub students: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            total: 500,
            voice_fraction: 0.30,
            class_counts: DEFAULT_CLASS_COUNTS,
            label_correlation: 0.3,
            marker_dropout: 0.18,
            marker_dropout_voice: 0.95,
            students: 0,
        }
    }
}

/// Generate a labeled synthetic corpus. Per-dimension tallies equal the
/// configured (rescaled) counts exactly; the result is a pure function of
/// (config, seed).
pub fn generate_synthetic_corpus(config: &GenConfig, seed: u64) -> Result<DatasetManifest> {
    validate(config)?;
    let total = config.total;
    if total == 0 {
        return Ok(DatasetManifest {
            records: Vec::new(),
            seed,
            class_counts: [[0; 3]; 4],
        });
    }

    let counts: [[u32; 3]; 4] = {
        let mut scaled = [[0u32; 3]; 4];
        for d in 0..4 {
            scaled[d] = largest_remainder(&config.class_counts[d], total);
        }
        scaled
    };

    let root = DetRng::new(seed);
    let labels = assign_labels(&counts, config.label_correlation, &root);

    // exact voice-record count via a shuffled index pool
    let voice_count = (total as f64 * config.voice_fraction).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    root.fork(streams::MODALITY).shuffle(&mut order);
    let mut is_voice = vec![false; total];
    for &i in order.iter().take(voice_count) {
        is_voice[i] = true;
    }

    let n_students = if config.students > 0 {
        config.students
    } else {
        (total / 16).max(1)
    };

    let stoplist = textproc::default_stopwords();
    let record_stream = root.fork(streams::RECORD);
    let mut records = Vec::with_capacity(total);
    for i in 0..total {
        let mut rng = record_stream.fork(i as u64);
        let record_id = format!("r{i:05}");
        let dropout = if is_voice[i] {
            config.marker_dropout_voice
        } else {
            config.marker_dropout
        };
        let text = render_text(&labels[i], dropout, &mut rng);
        let tokens = textproc::preprocess(&text, stoplist);
        let audio = if is_voice[i] {
            let clip = synthesize_audio(&labels[i], tokens.len().max(4), &mut rng);
            Some(RecordAudio {
                path: format!("audio/{record_id}.wav"),
                clip,
            })
        } else {
            None
        };
        records.push(InteractionRecord {
            record_id,
            student_id: format!("s{:03}", i % n_students),
            session_index: (i / n_students) as u32,
            modality: if is_voice[i] {
                Modality::TextPlusVoice
            } else {
                Modality::TextOnly
            },
            text,
            tokens,
            audio,
            labels: labels[i],
        });
    }

    let actual = tally(&records);
    debug_assert_eq!(actual, counts);
    Ok(DatasetManifest {
        records,
        seed,
        class_counts: actual,
    })
}

fn validate(config: &GenConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&config.voice_fraction) {
        return Err(Error::Config(format!(
            "voice_fraction must be in [0,1], got {}",
            config.voice_fraction
        )));
    }
    for (name, p) in [
        ("marker_dropout", config.marker_dropout),
        ("marker_dropout_voice", config.marker_dropout_voice),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
        }
    }
    if !(-1.0..=1.0).contains(&config.label_correlation) {
        return Err(Error::Config(format!(
            "label_correlation must be in [-1,1], got {}",
            config.label_correlation
        )));
    }
    let mut sums = [0i64; 4];
    for d in 0..4 {
        for l in 0..3 {
            let c = config.class_counts[d][l];
            if c < 0 {
                return Err(Error::Config(format!(
                    "negative class count {c} for {}/{}",
                    Dimension::ALL[d].name(),
                    Level::from_index(l).name()
                )));
            }
            sums[d] += c;
        }
    }
    if sums.iter().any(|&s| s != sums[0]) {
        return Err(Error::Config(format!(
            "class counts must sum to the same total per dimension, got {sums:?}"
        )));
    }
    if config.total > 0 && sums[0] == 0 {
        return Err(Error::Config(
            "class counts are all zero but total > 0".into(),
        ));
    }
    Ok(())
}

/// Scale integer counts to a new total, preserving proportions via
/// largest-remainder rounding.
fn largest_remainder(counts: &[i64; 3], total: usize) -> [u32; 3] {
    let sum: i64 = counts.iter().sum();
    if sum == 0 {
        return [0; 3];
    }
    let quotas: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 * total as f64 / sum as f64)
        .collect();
    let mut out: Vec<u32> = quotas.iter().map(|q| q.floor() as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut remainder_order: Vec<usize> = (0..3).collect();
    remainder_order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = total as u32 - assigned;
    for &i in remainder_order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    [out[0], out[1], out[2]]
}

/// Assign labels so each dimension's marginals are exact. Stress and
/// Motivation are drawn jointly from an IPF-fitted contingency table with
/// a boosted (Negative, Negative) cell; Engagement and Understanding come
/// from independent shuffled pools.
fn assign_labels(counts: &[[u32; 3]; 4], correlation: f64, root: &DetRng) -> Vec<Labels> {
    let total: u32 = counts[0].iter().sum();
    let label_rng = root.fork(streams::LABELS);

    let pool = |dim: usize, tag: u64| -> Vec<Level> {
        let mut v = Vec::with_capacity(total as usize);
        for l in 0..3 {
            v.extend(std::iter::repeat(Level::from_index(l)).take(counts[dim][l] as usize));
        }
        label_rng.fork(tag).shuffle(&mut v);
        v
    };

    let engagement = pool(0, 0);
    let understanding = pool(3, 3);

    let joint = ipf_joint(&counts[1], &counts[2], correlation);
    let mut pairs = Vec::with_capacity(total as usize);
    for s in 0..3 {
        for m in 0..3 {
            pairs.extend(
                std::iter::repeat((Level::from_index(s), Level::from_index(m)))
                    .take(joint[s][m] as usize),
            );
        }
    }
    label_rng.fork(1).shuffle(&mut pairs);

    (0..total as usize)
        .map(|i| Labels {
            engagement: engagement[i],
            stress: pairs[i].0,
            motivation: pairs[i].1,
            understanding: understanding[i],
        })
        .collect()
}

/// Iterative proportional fitting of a 3x3 contingency table to exact row
/// (stress) and column (motivation) marginals, then integerization that
/// keeps both marginals exact.
fn ipf_joint(row: &[u32; 3], col: &[u32; 3], correlation: f64) -> [[u32; 3]; 3] {
    let mut w = [[0f64; 3]; 3];
    for (i, &r) in row.iter().enumerate() {
        for (j, &c) in col.iter().enumerate() {
            w[i][j] = (r as f64 * c as f64).max(1e-9);
        }
    }
    // couple the negative poles; IPF restores the marginals
    w[0][0] *= 1.0 + 2.0 * correlation;
    w[0][2] *= (1.0 - correlation).max(0.05);

    for _ in 0..200 {
        for i in 0..3 {
            let s: f64 = w[i].iter().sum();
            if s > 0.0 {
                let f = row[i] as f64 / s;
                for j in 0..3 {
                    w[i][j] *= f;
                }
            }
        }
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| w[i][j]).sum();
            if s > 0.0 {
                let f = col[j] as f64 / s;
                for i in 0..3 {
                    w[i][j] *= f;
                }
            }
        }
    }

    // floor, then place the deficit greedily by fractional part; any cell
    // with remaining row and column capacity is feasible
    let mut out = [[0u32; 3]; 3];
    let mut row_left = *row;
    let mut col_left = *col;
    for i in 0..3 {
        for j in 0..3 {
            let f = (w[i][j].floor() as u32)
                .min(row_left[i])
                .min(col_left[j]);
            out[i][j] = f;
            row_left[i] -= f;
            col_left[j] -= f;
        }
    }
    while row_left.iter().sum::<u32>() > 0 {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..3 {
            for j in 0..3 {
                if row_left[i] > 0 && col_left[j] > 0 {
                    let frac = w[i][j] - w[i][j].floor();
                    if best.map_or(true, |(_, _, bf)| frac > bf) {
                        best = Some((i, j, frac));
                    }
                }
            }
        }
        let (i, j, _) = best.expect("deficits always leave a feasible cell");
        out[i][j] += 1;
        row_left[i] -= 1;
        col_left[j] -= 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Text templates
// ---------------------------------------------------------------------------

const TOPIC_SENTENCES: [&str; 3] = [
    "we did {t}",
    "more {t} practice",
    "that {t} session",
];

const FILLERS: [&str; 3] = [
    "the usual session",
    "a usual practice",
    "the usual sheet",
];

/// Marker phrase variants per (dimension, level). Short and marker-dense:
/// the glue words are stop words or shared fillers, the two content words
/// per phrase stem to vocabulary unique to the (dimension, level) cell so
/// labels stay learnable inside the fixed optimizer budget.
fn marker_phrases(d: Dimension, l: Level) -> [&'static str; 3] {
    match (d, l) {
        (Dimension::Engagement, Level::Negative) => [
            "so boring tedious and dull",
            "boring dull and tedious",
            "dull tedious and boring",
        ],
        (Dimension::Engagement, Level::Neutral) => [
            "an ordinary plain lesson",
            "plain and ordinary",
            "a plain ordinary one",
        ],
        (Dimension::Engagement, Level::Positive) => [
            "fascinating and gripping",
            "so hooked and fascinating",
            "hooked on this gripping one",
        ],
        (Dimension::Stress, Level::Negative) => [
            "panic dread and crushing pressure",
            "crushing pressure and pure panic dread",
            "dread panic and crushing pressure",
        ],
        (Dimension::Stress, Level::Neutral) => [
            "calm and composed",
            "composed and settled",
            "settled and calm",
        ],
        (Dimension::Stress, Level::Positive) => [
            "relaxed and serene",
            "carefree and relaxed",
            "serene and carefree",
        ],
        (Dimension::Motivation, Level::Negative) => [
            "pointless could quit and surrender",
            "might quit surrender feels pointless",
            "quit this pointless surrender looms",
        ],
        (Dimension::Motivation, Level::Neutral) => [
            "modest plodding effort",
            "plodding with modest effort",
            "a modest plodding pace",
        ],
        (Dimension::Motivation, Level::Positive) => [
            "determined and driven",
            "driven and ambitious",
            "ambitious and determined",
        ],
        (Dimension::Understanding, Level::Negative) => [
            "confused baffled and muddled",
            "baffled muddled and confused",
            "muddled confused and baffled",
        ],
        (Dimension::Understanding, Level::Neutral) => [
            "a partial halfway picture",
            "halfway and partial",
            "roughly a partial grasp",
        ],
        (Dimension::Understanding, Level::Positive) => [
            "crystal clear and mastered",
            "mastered and clear",
            "clear and crystal sharp",
        ],
    }
}

fn render_text(labels: &Labels, marker_dropout: f64, rng: &mut DetRng) -> String {
    let topic = TOPICS[rng.below(TOPICS.len())];
    let mut sentences = Vec::with_capacity(5);
    sentences.push(
        TOPIC_SENTENCES[rng.below(TOPIC_SENTENCES.len())].replace("{t}", topic),
    );
    let mut dims = Dimension::ALL;
    rng.shuffle(&mut dims);
    for d in dims {
        let phrase = if rng.chance(marker_dropout) {
            FILLERS[rng.below(FILLERS.len())].to_string()
        } else {
            let variants = marker_phrases(d, labels.get(d));
            variants[rng.below(variants.len())].to_string()
        };
        sentences.push(phrase);
    }
    let mut text = sentences.join(". ");
    text.push('.');
    // occasional markup and entities exercise the cleaning pipeline
    if rng.chance(0.10) {
        text = text.replacen(' ', " <em>really</em> ", 1);
    }
    if rng.chance(0.05) {
        text.push_str(" Q &amp; A followed.");
    }
    text
}

// ---------------------------------------------------------------------------
// Audio synthesis
// ---------------------------------------------------------------------------

/// Sine-plus-noise syllable bursts. Pitch tracks stress, amplitude tracks
/// engagement, burst rate tracks motivation, and harmonic richness
/// (timbre, visible to the MFCCs) tracks conceptual understanding; small
/// per-record jitter on all four. Samples are quantized to the 16-bit
/// grid at synthesis time so WAV round-trips are exact.
fn synthesize_audio(labels: &Labels, token_count: usize, rng: &mut DetRng) -> AudioClip {
    let pitch_base = match labels.stress {
        Level::Negative => 285.0, // elevated pitch under high stress
        Level::Neutral => 185.0,
        Level::Positive => 130.0,
    };
    let amplitude = match labels.engagement {
        Level::Negative => 0.12,
        Level::Neutral => 0.35,
        Level::Positive => 0.65,
    };
    let rate = match labels.motivation {
        Level::Negative => 1.6,
        Level::Neutral => 3.0,
        Level::Positive => 4.4,
    };
    let harmonics = match labels.understanding {
        Level::Negative => 0.02, // hesitant, dull timbre
        Level::Neutral => 0.45,
        Level::Positive => 0.95, // bright, confident timbre
    };

    let pitch = pitch_base + rng.uniform(-8.0, 8.0);
    let amplitude = amplitude * rng.uniform(0.9, 1.1);
    let rate = rate + rng.uniform(-0.2, 0.2);
    let harmonics = harmonics * rng.uniform(0.9, 1.1);

    let sr = DEFAULT_SAMPLE_RATE as usize;
    let duration = (token_count as f64 * 0.22).clamp(1.2, 3.5);
    let n = (duration * sr as f64) as usize;
    // constant voiced duty cycle keeps per-token pitch and timbre stats
    // independent of the burst rate
    let step = (sr as f64 / rate) as usize;
    let burst_len = ((0.9 * sr as f64 / rate) as usize).min(n.saturating_sub(1));

    let mut samples = vec![0.0f64; n];
    let mut start = step / 4;
    while start + burst_len < n {
        for i in 0..burst_len {
            let t = (start + i) as f64 / sr as f64;
            let env = (std::f64::consts::PI * i as f64 / burst_len as f64).sin();
            let vib = 1.0 + 0.015 * (2.0 * std::f64::consts::PI * 5.0 * t).sin();
            let phase = 2.0 * std::f64::consts::PI * pitch * vib * t;
            let voice =
                phase.sin() + harmonics * (2.0 * phase).sin() + 0.5 * harmonics * (3.0 * phase).sin();
            samples[start + i] += amplitude * env * voice;
        }
        start += step;
    }
    for s in samples.iter_mut() {
        *s = wav::quantize(*s + rng.uniform(-0.008, 0.008));
    }
    AudioClip {
        samples,
        sample_rate: DEFAULT_SAMPLE_RATE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody;
    use std::collections::HashSet;

    #[test]
    fn default_tallies_match_annotation_distribution() {
        let m = generate_synthetic_corpus(&GenConfig::default(), 42).unwrap();
        assert_eq!(m.class_counts[0], [70, 320, 110]);
        assert_eq!(m.class_counts[1], [40, 410, 50]);
        assert_eq!(m.class_counts[2], [80, 290, 130]);
        assert_eq!(m.class_counts[3], [50, 360, 90]);
        assert_eq!(m.len(), 500);
    }

    #[test]
    fn empty_total_gives_empty_manifest() {
        let cfg = GenConfig {
            total: 0,
            ..GenConfig::default()
        };
        let m = generate_synthetic_corpus(&cfg, 42).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.class_counts, [[0; 3]; 4]);
    }

    #[test]
    fn rescaled_total_keeps_exact_sums() {
        let cfg = GenConfig {
            total: 720,
            ..GenConfig::default()
        };
        let m = generate_synthetic_corpus(&cfg, 7).unwrap();
        assert_eq!(m.len(), 720);
        for d in 0..4 {
            assert_eq!(m.class_counts[d].iter().sum::<u32>(), 720);
        }
        // proportions preserved within rounding
        assert!((m.class_counts[1][1] as f64 - 410.0 * 720.0 / 500.0).abs() <= 1.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_synthetic_corpus(&GenConfig::default(), 42).unwrap();
        let b = generate_synthetic_corpus(&GenConfig::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&GenConfig::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn modality_audio_invariant_and_voice_fraction() {
        let m = generate_synthetic_corpus(&GenConfig::default(), 42).unwrap();
        let voice = m
            .records
            .iter()
            .filter(|r| r.modality == Modality::TextPlusVoice)
            .count();
        assert_eq!(voice, 150); // 30% of 500
        for r in &m.records {
            assert_eq!(r.modality == Modality::TextPlusVoice, r.audio.is_some());
            assert!(!r.text.is_empty());
            assert!(!r.tokens.is_empty());
        }
    }

    #[test]
    fn record_ids_unique() {
        let m = generate_synthetic_corpus(&GenConfig::default(), 1).unwrap();
        let ids: HashSet<&str> = m.records.iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids.len(), m.len());
    }

    #[test]
    fn rejects_inconsistent_counts() {
        let mut cfg = GenConfig::default();
        cfg.class_counts[0] = [70, 320, 111]; // sums differ across dimensions
        assert!(matches!(
            generate_synthetic_corpus(&cfg, 1).unwrap_err(),
            Error::Config(_)
        ));
        let mut cfg = GenConfig::default();
        cfg.class_counts[2][0] = -5;
        cfg.class_counts[2][1] = 375;
        assert!(matches!(
            generate_synthetic_corpus(&cfg, 1).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn ipf_marginals_exact() {
        let joint = ipf_joint(&[40, 410, 50], &[80, 290, 130], 0.3);
        for i in 0..3 {
            let row: u32 = joint[i].iter().sum();
            assert_eq!(row, [40, 410, 50][i]);
        }
        for j in 0..3 {
            let col: u32 = (0..3).map(|i| joint[i][j]).sum();
            assert_eq!(col, [80, 290, 130][j]);
        }
        // coupling pushed (Neg, Neg) above the independence expectation
        let independent = 40.0 * 80.0 / 500.0;
        assert!(
            joint[0][0] as f64 > independent,
            "joint[0][0]={} vs independent {independent}",
            joint[0][0]
        );
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(&[70, 320, 110], 720).iter().sum::<u32>(), 720);
        assert_eq!(largest_remainder(&[70, 320, 110], 500), [70, 320, 110]);
        assert_eq!(largest_remainder(&[1, 1, 1], 10).iter().sum::<u32>(), 10);
    }

    #[test]
    fn marker_stems_are_distinct_across_cells() {
        // one representative content word per (dimension, level) must stem
        // to a unique vocabulary item, otherwise labels stop being learnable
        let stop = textproc::default_stopwords();
        let mut seen: HashSet<String> = HashSet::new();
        for d in Dimension::ALL {
            for l in Level::ALL {
                let stems: HashSet<String> = marker_phrases(d, l)
                    .iter()
                    .flat_map(|p| textproc::preprocess(p, stop))
                    .collect();
                assert!(!stems.is_empty());
                let overlap: Vec<&String> = stems.iter().filter(|s| seen.contains(*s)).collect();
                assert!(
                    overlap.len() < stems.len(),
                    "all markers of {:?}/{:?} collide: {overlap:?}",
                    d,
                    l
                );
                seen.extend(stems);
            }
        }
    }

    #[test]
    fn audio_is_label_conditioned() {
        let mut rng = DetRng::new(5);
        let stressed = Labels {
            engagement: Level::Neutral,
            stress: Level::Negative,
            motivation: Level::Neutral,
            understanding: Level::Neutral,
        };
        let calm = Labels {
            engagement: Level::Neutral,
            stress: Level::Positive,
            motivation: Level::Neutral,
            understanding: Level::Neutral,
        };
        let clip_s = synthesize_audio(&stressed, 10, &mut rng);
        let clip_c = synthesize_audio(&calm, 10, &mut rng);
        let pitch = |clip: &AudioClip| {
            let track = prosody::extract_track(clip);
            let voiced: Vec<f64> = track
                .frames
                .iter()
                .map(|f| f.pitch_hz)
                .filter(|&p| p > 0.0)
                .collect();
            voiced.iter().sum::<f64>() / voiced.len() as f64
        };
        let p_stressed = pitch(&clip_s);
        let p_calm = pitch(&clip_c);
        assert!(
            p_stressed > p_calm + 60.0,
            "stressed {p_stressed} vs calm {p_calm}"
        );
    }
}

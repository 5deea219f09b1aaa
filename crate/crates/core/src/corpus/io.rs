//! Dataset persistence: UTF-8 line-delimited records with a schema-version
//! header; audio as separate 16-bit mono PCM WAV files referenced by path.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetManifest, InteractionRecord, Labels, Modality, RecordAudio};
use crate::error::{Error, Result};
use crate::prosody::wav;

pub const SCHEMA_VERSION: &str = "psychstate/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: String,
    seed: u64,
}

/// On-disk record shape: identical to `InteractionRecord` except audio is
/// a WAV path relative to the dataset file.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    record_id: String,
    student_id: String,
    session_index: u32,
    modality: Modality,
    text: String,
    tokens: Vec<String>,
    audio: Option<String>,
    labels: Labels,
}

/// Write the manifest to `path` and every referenced WAV below it.
pub fn save_dataset(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = Header {
        schema: SCHEMA_VERSION.to_string(),
        seed: manifest.seed,
    };
    writeln!(out, "{}", serde_json::to_string(&header).expect("header"))?;
    for r in &manifest.records {
        if let Some(audio) = &r.audio {
            let wav_path = base.join(&audio.path);
            if let Some(dir) = wav_path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            wav::write_wav(&wav_path, &audio.clip)?;
        }
        let line = RecordLine {
            record_id: r.record_id.clone(),
            student_id: r.student_id.clone(),
            session_index: r.session_index,
            modality: r.modality,
            text: r.text.clone(),
            tokens: r.tokens.clone(),
            audio: r.audio.as_ref().map(|a| a.path.clone()),
            labels: r.labels,
        };
        writeln!(out, "{}", serde_json::to_string(&line).expect("record"))?;
    }
    out.flush()?;
    Ok(())
}

/// Load a dataset saved by [`save_dataset`]. Parse failures carry the
/// 1-based line number and the offending field path.
pub fn load_dataset(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("dataset {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let reader = BufReader::new(file);
    let mut lines = reader.lines();

    let header_line = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty file, expected schema header".into(),
            })
        }
    };
    let header: Header = parse_line(&header_line, 1)?;
    if header.schema != SCHEMA_VERSION {
        return Err(Error::Version(header.schema));
    }

    let mut records = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = parse_line(&line, line_no)?;
        if !seen_ids.insert(rec.record_id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate record_id {:?}", rec.record_id),
            });
        }
        if rec.text.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "text: must be non-empty".into(),
            });
        }
        let has_audio = rec.audio.is_some();
        let needs_audio = rec.modality == Modality::TextPlusVoice;
        if has_audio != needs_audio {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "modality {:?} inconsistent with audio {}",
                    rec.modality,
                    if has_audio { "present" } else { "absent" }
                ),
            });
        }
        let audio = match rec.audio {
            Some(rel) => {
                let clip = wav::read_wav(&base.join(&rel))?;
                Some(RecordAudio { path: rel, clip })
            }
            None => None,
        };
        records.push(InteractionRecord {
            record_id: rec.record_id,
            student_id: rec.student_id,
            session_index: rec.session_index,
            modality: rec.modality,
            text: rec.text,
            tokens: rec.tokens,
            audio,
            labels: rec.labels,
        });
    }
    Ok(DatasetManifest::from_records(records, header.seed))
}

fn parse_line<'de, T: Deserialize<'de>>(line: &'de str, line_no: usize) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(line);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        };
        Error::Parse { line: line_no, msg }
    })
}

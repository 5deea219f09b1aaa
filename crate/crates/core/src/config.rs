//! Run configuration: a flat `key = value` file (with `#` comments) plus
//! CLI-flag overrides. Every field is validated at load and unknown keys
//! are rejected with the offending name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::corpus::{Dimension, GenConfig};
use crate::error::{Error, Result};
use crate::eval::Protocol;
use crate::feedback::{AlertCriteria, PolicyConfig};
use crate::fusion::{ModelConfig, TrainConfig};

/// Everything a pipeline run needs: generation, training, evaluation
/// protocol, and policy settings, plus artifact paths.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub protocol: Protocol,
    pub strat_dimension: Dimension,
    pub test_fraction: f64,
    pub policy: PolicyConfig,
    pub alerts: AlertCriteria,
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            protocol: Protocol::Split { test_fraction: 0.2 },
            strat_dimension: Dimension::Stress,
            test_fraction: 0.2,
            policy: PolicyConfig::default(),
            alerts: AlertCriteria::default(),
            dataset: PathBuf::from("out/dataset.jsonl"),
            checkpoint: PathBuf::from("out/model.psym"),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parse a config file. Later `set` calls (CLI flags) override file
    /// values.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!("config {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        let mut config = RunConfig::default();
        for (key, value) in parse_pairs(&text)? {
            config.set(&key, &value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.policy.validate()?;
        crate::eval::validate_protocol(&self.protocol)?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must be in (0,1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }

    /// Apply one `key = value` assignment. Unknown keys are config errors
    /// naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("key {key:?}: invalid {what} {value:?}"));
        match key {
            "seed" => {
                self.seed = value.parse().map_err(|_| bad("integer"))?;
                self.train.seed = self.seed;
            }
            "total" => self.gen.total = value.parse().map_err(|_| bad("integer"))?,
            "voice_fraction" => {
                self.gen.voice_fraction = value.parse().map_err(|_| bad("number"))?
            }
            "label_correlation" => {
                self.gen.label_correlation = value.parse().map_err(|_| bad("number"))?
            }
            "marker_dropout" => {
                self.gen.marker_dropout = value.parse().map_err(|_| bad("number"))?
            }
            "marker_dropout_voice" => {
                self.gen.marker_dropout_voice = value.parse().map_err(|_| bad("number"))?
            }
            "students" => self.gen.students = value.parse().map_err(|_| bad("integer"))?,
            "epochs" => self.train.epochs = value.parse().map_err(|_| bad("integer"))?,
            "batch_size" => self.train.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "learning_rate" => self.train.lr = value.parse().map_err(|_| bad("number"))?,
            "dropout" => self.train.dropout = value.parse().map_err(|_| bad("number"))?,
            "gamma" => self.train.gamma = value.parse().map_err(|_| bad("number"))?,
            "clip_norm" => {
                self.train.clip_norm = if value == "off" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad("number"))?)
                }
            }
            "hidden" => {
                self.train.model = ModelConfig {
                    hidden: value.parse().map_err(|_| bad("integer"))?,
                    ..self.train.model
                }
            }
            "d_text" => {
                self.train.model = ModelConfig {
                    d_text: value.parse().map_err(|_| bad("integer"))?,
                    ..self.train.model
                }
            }
            "protocol" => {
                self.protocol = parse_protocol(value, self.test_fraction)?;
            }
            "test_fraction" => {
                self.test_fraction = value.parse().map_err(|_| bad("number"))?;
                if let Protocol::Split { .. } = self.protocol {
                    self.protocol = Protocol::Split {
                        test_fraction: self.test_fraction,
                    };
                }
            }
            "strat_dimension" => {
                self.strat_dimension = match value {
                    "engagement" => Dimension::Engagement,
                    "stress" => Dimension::Stress,
                    "motivation" => Dimension::Motivation,
                    "understanding" => Dimension::Understanding,
                    _ => return Err(bad("dimension")),
                }
            }
            "theta_engagement" => {
                self.policy.thresholds[0] = value.parse().map_err(|_| bad("number"))?
            }
            "theta_stress" => {
                self.policy.thresholds[1] = value.parse().map_err(|_| bad("number"))?
            }
            "theta_motivation" => {
                self.policy.thresholds[2] = value.parse().map_err(|_| bad("number"))?
            }
            "theta_understanding" => {
                self.policy.thresholds[3] = value.parse().map_err(|_| bad("number"))?
            }
            "recalibration_delta" => {
                self.policy.delta = value.parse().map_err(|_| bad("number"))?
            }
            "alert_window" => self.alerts.window = value.parse().map_err(|_| bad("integer"))?,
            "alert_threshold" => {
                self.alerts.threshold = value.parse().map_err(|_| bad("number"))?
            }
            "dataset" => self.dataset = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }
}

/// `split` or `kfoldN` (e.g. `kfold5`).
pub fn parse_protocol(value: &str, test_fraction: f64) -> Result<Protocol> {
    if value == "split" {
        return Ok(Protocol::Split { test_fraction });
    }
    if let Some(k) = value.strip_prefix("kfold") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("bad protocol {value:?}")))?;
        return Ok(Protocol::KFold { k });
    }
    Err(Error::Config(format!(
        "unknown protocol {value:?}; expected 'split' or 'kfoldN'"
    )))
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: format!("expected 'key = value', got {line:?}"),
        })?;
        pairs.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(pairs)
}

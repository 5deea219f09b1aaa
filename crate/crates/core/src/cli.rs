//! Command-line pipeline: data generation, training, evaluation,
//! inference, reporting, and the built-in verification suite.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing artifact,
//! 4 verification failure. Every command is reproducible from
//! (config file, seed); the only wall-clock dependence is log timestamps.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_protocol, RunConfig};
use crate::corpus::{self, DatasetManifest, Dimension, InteractionRecord, Labels, Level, Modality};
use crate::error::{Error, Result};
use crate::eval::{self, EvalOutcome, FoldMetrics, ModelKind, Protocol};
use crate::feedback::{self, AlertCriteria};
use crate::fusion::{self, FeatureExtractor};
use crate::kg;
use crate::prosody;
use crate::textproc;
use crate::verify;

#[derive(Parser)]
#[command(
    name = "psychstate",
    about = "Multimodal student-state pipeline: synthetic corpus, BiLSTM-attention classifier, evaluation harness, adaptive feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and print its class tallies
    Gen(GenArgs),
    /// Train the fusion model and write checkpoint + history CSV
    Train(TrainArgs),
    /// Evaluate fusion vs the two unimodal baselines
    Eval(EvalArgs),
    /// Predict one interaction and emit an intervention plan
    Infer(InferArgs),
    /// Psychometric trend report, alerts summary, and SVG chart
    Report(ReportArgs),
    /// Run the built-in verification suite
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file (key = value lines); flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(dir) = &self.out_dir {
            cfg.set("out_dir", dir.to_str().unwrap_or("out"))?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    total: Option<usize>,
    #[arg(long)]
    voice_fraction: Option<f64>,
    /// Dataset file to write
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// 'split' or 'kfoldN'
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate a record from this dataset
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Record id within --dataset
    #[arg(long)]
    record_id: Option<String>,
    /// Ad-hoc text input instead of a dataset record
    #[arg(long)]
    text: Option<String>,
    /// Optional WAV (16-bit mono 16 kHz) accompanying --text
    #[arg(long)]
    wav: Option<PathBuf>,
    /// Dump the prosody feature CSV here (voice inputs only)
    #[arg(long)]
    features_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Psychometric series CSV (instrument,t0,t0_sd,t1,t1_sd,t2,t2_sd);
    /// defaults to the bundled study fixture
    #[arg(long)]
    psychometrics: Option<PathBuf>,
    /// Prediction history JSONL for at-risk alerts
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run the gradient check only
    #[arg(long)]
    quick: bool,
    /// Negative-test fixture: corrupt one analytic gradient
    #[arg(long, hide = true)]
    inject_grad_bug: bool,
}

/// Entry point; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version go to stdout with code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Report(args) => cmd_report(args),
        Command::Verify(args) => return cmd_verify(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Version(_)
        | Error::Lookup(_)
        | Error::Stratification(_)
        | Error::Fold(_) => 2,
        Error::MissingArtifact(_) => 3,
        _ => 1,
    }
}

fn timestamp() -> String {
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{now}")
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(total) = args.total {
        cfg.set("total", &total.to_string())?;
    }
    if let Some(vf) = args.voice_fraction {
        cfg.set("voice_fraction", &vf.to_string())?;
    }
    if let Some(out) = args.out {
        cfg.dataset = out;
    }

    let manifest = corpus::generate_synthetic_corpus(&cfg.gen, cfg.seed)?;
    corpus::save_dataset(&manifest, &cfg.dataset)?;
    println!("{}", tally_table(&manifest));
    eprintln!(
        "wrote {} records ({} with audio) to {}",
        manifest.len(),
        manifest
            .records
            .iter()
            .filter(|r| r.audio.is_some())
            .count(),
        cfg.dataset.display()
    );
    Ok(())
}

fn tally_table(manifest: &DatasetManifest) -> String {
    let mut out = format!(
        "{:<14}{:>10}{:>10}{:>10}\n",
        "State", "Negative", "Neutral", "Positive"
    );
    for d in Dimension::ALL {
        let c = manifest.class_counts[d.index()];
        let name = match d {
            Dimension::Engagement => "Engagement",
            Dimension::Stress => "Stress",
            Dimension::Motivation => "Motivation",
            Dimension::Understanding => "Understanding",
        };
        out.push_str(&format!("{name:<14}{:>10}{:>10}{:>10}\n", c[0], c[1], c[2]));
    }
    out
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(dataset) = args.dataset {
        cfg.dataset = dataset;
    }
    if let Some(epochs) = args.epochs {
        cfg.set("epochs", &epochs.to_string())?;
    }
    if let Some(ck) = args.checkpoint {
        cfg.checkpoint = ck;
    }

    let manifest = corpus::load_dataset(&cfg.dataset)?;
    let (train_m, test_m) =
        corpus::stratified_split(&manifest, cfg.test_fraction, cfg.strat_dimension, cfg.seed)?;
    let fx = FeatureExtractor::fit(&train_m, cfg.train.model.d_text, cfg.seed);
    eprintln!(
        "vocabulary {} tokens, test OOV rate {:.1}%",
        fx.table.vocab_size(),
        100.0 * fx.oov_rate(&test_m)
    );
    let train_items = fx.prepare_all(&train_m);
    let test_items = fx.prepare_all(&test_m);

    let (params, history) =
        fusion::train(&train_items, &test_items, fx.table.vectors.clone(), &cfg.train)?;
    eprintln!(
        "trained {} parameters for {} epochs",
        params.param_count(),
        cfg.train.epochs
    );

    fusion::save_checkpoint(&cfg.checkpoint, &params, &fx.table.vocab, &fx.norm_stats)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let history_path = cfg.out_dir.join("history.csv");
    std::fs::write(&history_path, history_csv(&history))?;
    eprintln!(
        "checkpoint {} | history {}",
        cfg.checkpoint.display(),
        history_path.display()
    );
    Ok(())
}

fn history_csv(history: &[fusion::EpochStats]) -> String {
    let mut out =
        String::from("epoch,train_loss,f1_engagement,f1_stress,f1_motivation,f1_understanding\n");
    for h in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            h.epoch,
            h.train_loss,
            h.val_macro_f1[0],
            h.val_macro_f1[1],
            h.val_macro_f1[2],
            h.val_macro_f1[3]
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(dataset) = args.dataset {
        cfg.dataset = dataset;
    }
    if let Some(ck) = args.checkpoint {
        cfg.checkpoint = ck;
    }
    if let Some(p) = &args.protocol {
        cfg.protocol = parse_protocol(p, cfg.test_fraction)?;
    }
    if let Some(epochs) = args.epochs {
        cfg.set("epochs", &epochs.to_string())?;
    }

    let manifest = corpus::load_dataset(&cfg.dataset)?;
    let outcomes = match cfg.protocol {
        Protocol::Split { test_fraction } => {
            // fusion comes from the trained checkpoint; baselines train on
            // the same split
            let (train_m, test_m) =
                corpus::stratified_split(&manifest, test_fraction, cfg.strat_dimension, cfg.seed)?;
            let checkpoint = fusion::load_checkpoint(&cfg.checkpoint)?;
            let ck_fx = checkpoint.extractor();
            let test_items = ck_fx.prepare_all(&test_m);
            let labels: Vec<Labels> = test_items.iter().map(|i| i.labels).collect();
            let preds: Vec<fusion::Prediction> = test_items
                .iter()
                .map(|i| fusion::predict(&checkpoint.params, i).map(|(p, _)| p))
                .collect::<Result<_>>()?;
            let fusion_metrics = eval::metrics_from_predictions(&labels, &preds)?;

            let fx = FeatureExtractor::fit(&train_m, cfg.train.model.d_text, cfg.seed);
            let train_items = fx.prepare_all(&train_m);
            let base_test = fx.prepare_all(&test_m);
            let base_labels: Vec<Labels> = base_test.iter().map(|i| i.labels).collect();

            let text_model =
                eval::train_text_only(&train_items, fx.table.vectors.clone(), &cfg.train)?;
            let text_preds: Vec<fusion::Prediction> =
                base_test.iter().map(|i| text_model.predict(i)).collect();
            let text_metrics = eval::metrics_from_predictions(&base_labels, &text_preds)?;

            let svm = eval::train_prosody_svm(&train_items, cfg.seed)?;
            let svm_preds: Vec<fusion::Prediction> =
                base_test.iter().map(|i| svm.predict(i)).collect();
            let svm_metrics = eval::metrics_from_predictions(&base_labels, &svm_preds)?;

            vec![
                EvalOutcome {
                    kind: ModelKind::Fusion,
                    folds: vec![FoldMetrics {
                        fold: 0,
                        per_dim: fusion_metrics,
                    }],
                },
                EvalOutcome {
                    kind: ModelKind::TextOnly,
                    folds: vec![FoldMetrics {
                        fold: 0,
                        per_dim: text_metrics,
                    }],
                },
                EvalOutcome {
                    kind: ModelKind::ProsodySvm,
                    folds: vec![FoldMetrics {
                        fold: 0,
                        per_dim: svm_metrics,
                    }],
                },
            ]
        }
        Protocol::KFold { .. } => {
            // every model retrains per fold; the checkpoint is not used
            let mut outcomes = Vec::new();
            for kind in [ModelKind::Fusion, ModelKind::TextOnly, ModelKind::ProsodySvm] {
                outcomes.push(eval::evaluate(
                    kind,
                    &manifest,
                    &cfg.protocol,
                    &cfg.train,
                    cfg.strat_dimension,
                    cfg.seed,
                )?);
            }
            outcomes
        }
    };

    std::fs::create_dir_all(&cfg.out_dir)?;
    let csv = eval::metrics_csv(&outcomes);
    std::fs::write(cfg.out_dir.join("metrics.csv"), &csv)?;
    let md = eval::table_markdown(&outcomes);
    std::fs::write(cfg.out_dir.join("comparison.md"), &md)?;
    println!("{md}");
    for oc in &outcomes {
        eprintln!(
            "{}: macro-F1 {:.3} ± {:.3}",
            oc.kind.csv_name(),
            oc.mean_macro_f1(),
            oc.std_macro_f1()
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

fn cmd_infer(args: InferArgs) -> Result<()> {
    let mut cfg = args.common.load()?;
    if let Some(ck) = args.checkpoint {
        cfg.checkpoint = ck;
    }
    if let Some(ds) = args.dataset {
        cfg.dataset = ds;
    }

    let checkpoint = fusion::load_checkpoint(&cfg.checkpoint)?;
    let fx = checkpoint.extractor();

    let record = match (&args.record_id, &args.text) {
        (Some(id), None) => {
            let manifest = corpus::load_dataset(&cfg.dataset)?;
            manifest
                .records
                .iter()
                .find(|r| &r.record_id == id)
                .cloned()
                .ok_or_else(|| Error::Lookup(format!("record {id:?} not in dataset")))?
        }
        (None, Some(text)) => ad_hoc_record(text, args.wav.as_deref())?,
        _ => {
            return Err(Error::Config(
                "provide exactly one of --record-id or --text".into(),
            ))
        }
    };

    if let (Some(csv_path), Some(audio)) = (&args.features_csv, &record.audio) {
        let track = prosody::extract_track(&audio.clip);
        let mut file = std::fs::File::create(csv_path)?;
        prosody::write_feature_csv(&track, &mut file)?;
        eprintln!("feature dump {}", csv_path.display());
    }

    let item = fx.prepare(&record);
    let (prediction, attention) = fusion::predict(&checkpoint.params, &item)?;

    // knowledge-graph prompt for the detected topic
    let graph = kg::KnowledgeGraph::bundled();
    let emb = kg::train_kg_embeddings(graph, &kg::KgTrainConfig::default(), cfg.seed)?;
    let prompt = match find_topic(graph, &record.tokens) {
        Some(topic) => {
            let triples = kg::top_k_triples(graph, &emb, &topic, &prediction, 3)?;
            kg::render_prompt(graph, &triples, &prediction)
        }
        None => kg::render_prompt(graph, &[], &prediction),
    };

    let plan = feedback::select_intervention(&prediction, &cfg.policy, &prompt);

    let output = serde_json::json!({
        "record_id": record.record_id,
        "student_id": record.student_id,
        "modality_indicator": if record.audio.is_some() { 1 } else { 0 },
        "probs": {
            "engagement": prediction.probs[0],
            "stress": prediction.probs[1],
            "motivation": prediction.probs[2],
            "understanding": prediction.probs[3],
        },
        "dominant": {
            "engagement": dominant_name(&prediction, Dimension::Engagement),
            "stress": dominant_name(&prediction, Dimension::Stress),
            "motivation": dominant_name(&prediction, Dimension::Motivation),
            "understanding": dominant_name(&prediction, Dimension::Understanding),
        },
        "attention": attention,
        "kg_prompt": prompt,
        "intervention": {
            "category": plan.category,
            "urgency": plan.urgency,
            "message": plan.message,
            "triggering": plan.triggering.iter().map(|d| d.name()).collect::<Vec<_>>(),
        },
    });
    println!("{output}");

    // append-only logs carry timestamps; the primary output above does not
    std::fs::create_dir_all(&cfg.out_dir)?;
    append_line(
        &cfg.out_dir.join("prompts.log"),
        &format!("[{}] {}: {prompt}", timestamp(), record.record_id),
    )?;
    let log_entry = serde_json::json!({
        "timestamp": timestamp(),
        "student_id": record.student_id,
        "category": plan.category,
        "urgency": plan.urgency,
        "message": plan.message,
        "triggering_probs": Dimension::ALL
            .iter()
            .map(|&d| prediction.negative_prob(d))
            .collect::<Vec<f64>>(),
    });
    append_line(
        &cfg.out_dir.join("interventions.jsonl"),
        &log_entry.to_string(),
    )?;
    Ok(())
}

fn dominant_name(p: &fusion::Prediction, d: Dimension) -> &'static str {
    p.dominant(d).name()
}

fn ad_hoc_record(text: &str, wav: Option<&Path>) -> Result<InteractionRecord> {
    if text.is_empty() {
        return Err(Error::Config("--text must be non-empty".into()));
    }
    let tokens = textproc::preprocess(text, textproc::default_stopwords());
    let audio = match wav {
        Some(path) => Some(corpus::RecordAudio {
            path: path.display().to_string(),
            clip: prosody::wav::read_wav(path)?,
        }),
        None => None,
    };
    Ok(InteractionRecord {
        record_id: "adhoc".into(),
        student_id: "adhoc".into(),
        session_index: 0,
        modality: if audio.is_some() {
            Modality::TextPlusVoice
        } else {
            Modality::TextOnly
        },
        text: text.to_string(),
        tokens,
        audio,
        labels: Labels {
            engagement: Level::Neutral,
            stress: Level::Neutral,
            motivation: Level::Neutral,
            understanding: Level::Neutral,
        },
    })
}

/// First record token that matches a stemmed Concept id in the graph.
fn find_topic(graph: &kg::KnowledgeGraph, tokens: &[String]) -> Option<String> {
    for token in tokens {
        for entity in &graph.entities {
            if entity.kind == kg::EntityKind::Concept
                && textproc::stem(&entity.id.to_lowercase()) == *token
            {
                return Some(entity.id.clone());
            }
        }
    }
    None
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(args: ReportArgs) -> Result<()> {
    let cfg = args.common.load()?;
    std::fs::create_dir_all(&cfg.out_dir)?;

    let series = match &args.psychometrics {
        Some(path) => parse_psychometrics_csv(path)?,
        None => feedback::study_fixture(),
    };
    let report = feedback::trend_report(&series)?;
    std::fs::write(cfg.out_dir.join("trend.md"), &report.table)?;
    std::fs::write(cfg.out_dir.join("trend.svg"), &report.svg)?;
    println!("{}", report.table);

    let alerts = match &args.predictions {
        Some(path) => alerts_from_history(path, &cfg.alerts)?,
        None => Vec::new(),
    };
    let mut alert_lines = String::new();
    for a in &alerts {
        let line = serde_json::json!({
            "student_id": a.student_id,
            "window": [a.window.0, a.window.1],
            "reason": a.reason,
            "evidence": a.evidence,
        });
        alert_lines.push_str(&line.to_string());
        alert_lines.push('\n');
    }
    std::fs::write(cfg.out_dir.join("alerts.jsonl"), &alert_lines)?;
    if alerts.is_empty() {
        println!("alerts: no data");
    } else {
        println!("alerts: {} student window(s) flagged", alerts.len());
        for a in &alerts {
            println!(
                "  {} sessions {}-{}: {} (stress {:.2}, motivation {:.2})",
                a.student_id, a.window.0, a.window.1, a.reason, a.evidence[0], a.evidence[1]
            );
        }
    }
    Ok(())
}

fn parse_psychometrics_csv(path: &Path) -> Result<Vec<feedback::PsychometricSeries>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("psychometrics {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let mut series = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("instrument") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let instrument = match fields[0] {
            "PSS" => feedback::Instrument::PSS,
            "STAI" => feedback::Instrument::STAI,
            "AMS" => feedback::Instrument::AMS,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown instrument {other:?}"),
                })
            }
        };
        let num = |f: &str| -> Result<f64> {
            f.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad number {f:?}"),
            })
        };
        series.push(feedback::PsychometricSeries {
            instrument,
            values: vec![
                (num(fields[1])?, num(fields[2])?),
                (num(fields[3])?, num(fields[4])?),
                (num(fields[5])?, num(fields[6])?),
            ],
        });
    }
    Ok(series)
}

/// Prediction-history JSONL: {"student_id", "session_index",
/// "neg_probs": [engagement, stress, motivation, understanding]}.
fn alerts_from_history(
    path: &Path,
    criteria: &AlertCriteria,
) -> Result<Vec<feedback::AlertRecord>> {
    #[derive(serde::Deserialize)]
    struct HistoryLine {
        student_id: String,
        session_index: u32,
        neg_probs: [f64; 4],
    }
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(format!("predictions {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    let mut by_student: std::collections::BTreeMap<String, Vec<(u32, fusion::Prediction)>> =
        std::collections::BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let row: HistoryLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let mut probs = [[0.0; 3]; 4];
        for d in 0..4 {
            let neg = row.neg_probs[d].clamp(0.0, 1.0);
            probs[d] = [neg, (1.0 - neg) * 0.5, (1.0 - neg) * 0.5];
        }
        by_student
            .entry(row.student_id)
            .or_default()
            .push((row.session_index, fusion::Prediction { probs }));
    }
    let mut alerts = Vec::new();
    for (student, mut history) in by_student {
        history.sort_by_key(|(s, _)| *s);
        let preds: Vec<fusion::Prediction> = history.into_iter().map(|(_, p)| p).collect();
        alerts.extend(feedback::flag_at_risk(&student, &preds, criteria));
    }
    Ok(alerts)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(args: VerifyArgs) -> i32 {
    let results = verify::run_all(args.quick, args.inject_grad_bug);
    let mut all_passed = true;
    for r in &results {
        println!("{}", r.line());
        all_passed &= r.passed;
    }
    if all_passed {
        0
    } else {
        4
    }
}

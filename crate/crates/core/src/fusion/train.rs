//! Focal-loss training with Adam: batch gradient accumulation, the
//! optimizer, the epoch loop with per-epoch validation macro-F1, and
//! inference.

use crate::corpus::{Dimension, Labels};
use crate::error::{Error, Result};
use crate::eval;
use crate::fusion::features::PreparedRecord;
use crate::fusion::model::{backward, forward, DropoutSpec, ModelConfig, ModelParams};
use crate::fusion::Prediction;
use crate::linalg::Mat;
use crate::rng::{streams, DetRng};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub gamma: f64,
    /// Per-(dimension, class) focal weights. `None` derives
    /// inverse-frequency weights from the training split, normalized to
    /// mean 1 per dimension.
    pub alpha: Option<[[f64; 3]; 4]>,
    /// Optional global-norm gradient clip; off by default.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            lr: 1e-4,
            dropout: 0.3,
            gamma: 2.0,
            alpha: None,
            clip_norm: None,
            seed: 42,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must be in [0,1), got {}",
                self.dropout
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Inverse-frequency focal weights from training labels, normalized so
/// each dimension's three weights average to 1.
pub fn inverse_frequency_alpha(labels: &[Labels]) -> [[f64; 3]; 4] {
    let mut alpha = [[1.0; 3]; 4];
    for d in Dimension::ALL {
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.get(d).index()] += 1;
        }
        let raw: [f64; 3] = std::array::from_fn(|c| 1.0 / counts[c].max(1) as f64);
        let mean = (raw[0] + raw[1] + raw[2]) / 3.0;
        alpha[d.index()] = std::array::from_fn(|c| raw[c] / mean);
    }
    alpha
}

/// Adam moment estimates, tensor-aligned with `ModelParams`.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam update with bias correction. `state.t` must already be
/// incremented to the current step (t >= 1).
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, lr: f64) {
    debug_assert!(state.t >= 1);
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    let mut p_t = params.tensors_mut();
    let g_t = grads.tensors();
    let mut m_t = state.m.tensors_mut();
    let mut v_t = state.v.tensors_mut();
    for i in 0..p_t.len() {
        let p = &mut p_t[i].1;
        let g = g_t[i].1;
        let m = &mut m_t[i].1;
        let v = &mut v_t[i].1;
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn zero_grads(grads: &mut ModelParams) {
    for (_, t) in grads.tensors_mut() {
        t.iter_mut().for_each(|v| *v = 0.0);
    }
}

fn clip_global_norm(grads: &mut ModelParams, max_norm: f64) {
    let sq: f64 = grads
        .tensors()
        .iter()
        .map(|(_, t)| t.iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

/// Mean focal loss and its gradients over a batch, dropout off. This is
/// the path the finite-difference check differentiates.
pub fn batch_loss_and_grads(
    params: &ModelParams,
    items: &[&PreparedRecord],
    gamma: f64,
    alpha: &[[f64; 3]; 4],
    grads: &mut ModelParams,
) -> Result<f64> {
    zero_grads(grads);
    let scale = 1.0 / items.len() as f64;
    let mut total = 0.0;
    for item in items {
        let trace = forward(params, &item.token_ids, &item.aux, None)?;
        total += backward(&trace, params, &item.labels, gamma, alpha, scale, grads);
    }
    Ok(total * scale)
}

/// Mean focal loss only (no gradients), dropout off.
pub fn batch_loss(
    params: &ModelParams,
    items: &[&PreparedRecord],
    gamma: f64,
    alpha: &[[f64; 3]; 4],
) -> Result<f64> {
    let mut total = 0.0;
    for item in items {
        let trace = forward(params, &item.token_ids, &item.aux, None)?;
        total += crate::fusion::model::focal_loss(
            &Prediction { probs: trace.probs },
            &item.labels,
            gamma,
            alpha,
        );
    }
    Ok(total / items.len() as f64)
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation macro-F1 per dimension, `Dimension::ALL` order.
    pub val_macro_f1: [f64; 4],
}

/// Train the fusion model. Shuffling, dropout masks, and initialization
/// all derive from `config.seed`; a rerun with identical inputs produces
/// a bit-identical parameter trajectory and history.
pub fn train(
    train_items: &[PreparedRecord],
    val_items: &[PreparedRecord],
    init_embedding: Mat,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    config.validate()?;
    if train_items.is_empty() || val_items.is_empty() {
        return Err(Error::Training("empty training or validation split".into()));
    }
    let labels: Vec<Labels> = train_items.iter().map(|i| i.labels).collect();
    let alpha = config.alpha.unwrap_or_else(|| inverse_frequency_alpha(&labels));

    let mut params = ModelParams::init(init_embedding, config.model, config.seed);
    let mut grads = params.zeros_like();
    let mut adam = AdamState::new(&params);
    let root = DetRng::new(config.seed);
    let epoch_stream = root.fork(streams::EPOCH);
    let dropout_stream = root.fork(streams::DROPOUT);

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        epoch_stream.fork(epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            zero_grads(&mut grads);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let item = &train_items[idx];
                let mut drop_rng = dropout_stream.fork(epoch as u64).fork(idx as u64);
                let trace = forward(
                    &params,
                    &item.token_ids,
                    &item.aux,
                    Some(DropoutSpec {
                        rate: config.dropout,
                        rng: &mut drop_rng,
                    }),
                )?;
                let loss = backward(
                    &trace,
                    &params,
                    &item.labels,
                    config.gamma,
                    &alpha,
                    scale,
                    &mut grads,
                );
                loss_sum += loss;
            }
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            adam.t += 1;
            adam_step(&mut params, &grads, &mut adam, config.lr);
        }

        let val_macro_f1 = validation_f1(&params, val_items)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_items.len() as f64,
            val_macro_f1,
        });
    }
    Ok((params, history))
}

fn validation_f1(params: &ModelParams, items: &[PreparedRecord]) -> Result<[f64; 4]> {
    let labels: Vec<Labels> = items.iter().map(|i| i.labels).collect();
    let preds: Vec<Prediction> = items
        .iter()
        .map(|i| predict(params, i).map(|(p, _)| p))
        .collect::<Result<_>>()?;
    let cms = eval::confusion(&labels, &preds)?;
    let mut out = [0.0; 4];
    for d in 0..4 {
        out[d] = eval::macro_f1(&cms[d])?;
    }
    Ok(out)
}

/// Inference-mode prediction plus per-step attention weights for the
/// interpretability log.
pub fn predict(params: &ModelParams, item: &PreparedRecord) -> Result<(Prediction, Vec<f64>)> {
    let trace = forward(params, &item.token_ids, &item.aux, None)?;
    Ok((
        Prediction { probs: trace.probs },
        trace.attn_weights,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Level;

    fn fake_item(seed: u64, t_len: usize, vocab: usize, labels: Labels) -> PreparedRecord {
        let mut rng = DetRng::new(seed);
        PreparedRecord {
            record_id: format!("t{seed}"),
            token_ids: (0..t_len).map(|_| rng.below(vocab)).collect(),
            aux: (0..t_len)
                .map(|_| std::array::from_fn(|_| rng.uniform(-1.0, 1.0)))
                .collect(),
            labels,
        }
    }

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 1e-3,
            dropout: 0.2,
            gamma: 2.0,
            model: ModelConfig {
                d_text: 4,
                hidden: 3,
            },
            seed: 9,
            ..TrainConfig::default()
        }
    }

    fn tiny_embedding(vocab: usize, d: usize, seed: u64) -> Mat {
        let mut rng = DetRng::new(seed);
        Mat::uniform(vocab, d, -0.05, 0.05, &mut rng)
    }

    fn labels(e: Level, s: Level, m: Level, u: Level) -> Labels {
        Labels {
            engagement: e,
            stress: s,
            motivation: m,
            understanding: u,
        }
    }

    fn items() -> Vec<PreparedRecord> {
        use Level::*;
        vec![
            fake_item(1, 4, 6, labels(Negative, Neutral, Positive, Neutral)),
            fake_item(2, 3, 6, labels(Neutral, Negative, Neutral, Positive)),
            fake_item(3, 5, 6, labels(Positive, Neutral, Negative, Neutral)),
            fake_item(4, 2, 6, labels(Neutral, Positive, Neutral, Negative)),
        ]
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let p0 = ModelParams::init(tiny_embedding(6, 4, 1), tiny_cfg().model, 1);
        let mut p = p0.clone();
        let grads = p.zeros_like();
        let mut state = AdamState::new(&p);
        state.t = 1;
        adam_step(&mut p, &grads, &mut state, 0.01);
        assert_eq!(p, p0);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // constant gradient g at t=1: update = lr * g/(|g| + eps') ~ lr
        let mut p = ModelParams::init(tiny_embedding(6, 4, 2), tiny_cfg().model, 2);
        let before = p.attn_v.clone();
        let mut grads = p.zeros_like();
        for (_, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.37);
        }
        let mut state = AdamState::new(&p);
        state.t = 1;
        adam_step(&mut p, &grads, &mut state, 0.01);
        for (a, b) in before.iter().zip(&p.attn_v) {
            let step = a - b;
            assert!((step - 0.01).abs() < 1e-6, "step={step}");
        }
    }

    #[test]
    fn adam_deterministic() {
        let items = items();
        let refs: Vec<&PreparedRecord> = items.iter().collect();
        let run = || {
            let mut p = ModelParams::init(tiny_embedding(6, 4, 3), tiny_cfg().model, 3);
            let mut grads = p.zeros_like();
            let mut state = AdamState::new(&p);
            for _ in 0..3 {
                batch_loss_and_grads(&p, &refs, 2.0, &[[1.0; 3]; 4], &mut grads).unwrap();
                state.t += 1;
                adam_step(&mut p, &grads, &mut state, 1e-3);
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn duplicated_batch_leaves_mean_gradients_unchanged() {
        let items = items();
        let refs: Vec<&PreparedRecord> = items.iter().collect();
        let doubled: Vec<&PreparedRecord> = refs.iter().chain(refs.iter()).copied().collect();
        let p = ModelParams::init(tiny_embedding(6, 4, 4), tiny_cfg().model, 4);
        let mut g1 = p.zeros_like();
        let mut g2 = p.zeros_like();
        let l1 = batch_loss_and_grads(&p, &refs, 2.0, &[[1.0; 3]; 4], &mut g1).unwrap();
        let l2 = batch_loss_and_grads(&p, &doubled, 2.0, &[[1.0; 3]; 4], &mut g2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_epochs_returns_init_and_empty_history() {
        let items = items();
        let cfg = TrainConfig {
            epochs: 0,
            ..tiny_cfg()
        };
        let emb = tiny_embedding(6, 4, 5);
        let (params, history) = train(&items, &items, emb.clone(), &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(params, ModelParams::init(emb, cfg.model, cfg.seed));
    }

    #[test]
    fn training_descends_on_learnable_data() {
        let items = items();
        let cfg = TrainConfig {
            epochs: 30,
            lr: 5e-3,
            dropout: 0.0,
            ..tiny_cfg()
        };
        let emb = tiny_embedding(6, 4, 6);
        let (params, history) = train(&items, &items, emb.clone(), &cfg).unwrap();
        assert_eq!(history.len(), 30);
        let first = history.first().unwrap().train_loss;
        let last = history.last().unwrap().train_loss;
        assert!(last < first, "no descent: {first} -> {last}");
        // final params differ from init
        assert_ne!(params, ModelParams::init(emb, cfg.model, cfg.seed));
    }

    #[test]
    fn training_history_is_deterministic() {
        let items = items();
        let cfg = tiny_cfg();
        let a = train(&items, &items, tiny_embedding(6, 4, 7), &cfg).unwrap();
        let b = train(&items, &items, tiny_embedding(6, 4, 7), &cfg).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn empty_split_is_training_error() {
        let items = items();
        let cfg = tiny_cfg();
        assert!(matches!(
            train(&[], &items, tiny_embedding(6, 4, 8), &cfg).unwrap_err(),
            Error::Training(_)
        ));
        assert!(matches!(
            train(&items, &[], tiny_embedding(6, 4, 8), &cfg).unwrap_err(),
            Error::Training(_)
        ));
    }

    #[test]
    fn invalid_config_rejected() {
        let bad_gamma = TrainConfig {
            gamma: -0.5,
            ..tiny_cfg()
        };
        assert!(bad_gamma.validate().is_err());
        let bad_dropout = TrainConfig {
            dropout: 1.0,
            ..tiny_cfg()
        };
        assert!(bad_dropout.validate().is_err());
    }

    #[test]
    fn inverse_frequency_normalized_to_mean_one() {
        use Level::*;
        let labels_list: Vec<Labels> = (0..10)
            .map(|i| {
                labels(
                    if i < 7 { Neutral } else { Negative },
                    Neutral,
                    Positive,
                    Neutral,
                )
            })
            .collect();
        let alpha = inverse_frequency_alpha(&labels_list);
        for d in 0..4 {
            let mean = (alpha[d][0] + alpha[d][1] + alpha[d][2]) / 3.0;
            assert!((mean - 1.0).abs() < 1e-12);
        }
        // rarer class gets the larger weight
        assert!(alpha[0][0] > alpha[0][1]);
    }

    #[test]
    fn predict_is_valid_and_deterministic() {
        let items = items();
        let p = ModelParams::init(tiny_embedding(6, 4, 9), tiny_cfg().model, 9);
        let (pred1, attn1) = predict(&p, &items[0]).unwrap();
        let (pred2, attn2) = predict(&p, &items[0]).unwrap();
        assert_eq!(pred1, pred2);
        assert_eq!(attn1, attn2);
        assert!(pred1.is_valid());
        assert_eq!(attn1.len(), items[0].token_ids.len());
    }

    #[test]
    fn dropout_expectation_preserved() {
        // inverted scaling: E[mask * x] = x within Monte-Carlo error
        let rate = 0.3;
        let mut rng = DetRng::new(77);
        let n = 100_000;
        let scale = 1.0 / (1.0 - rate);
        let x = 0.8;
        let mut sum = 0.0;
        for _ in 0..n {
            let kept = !rng.chance(rate);
            sum += if kept { x * scale } else { 0.0 };
        }
        let mean = sum / n as f64;
        assert!(
            (mean - x).abs() / x < 0.01,
            "dropout expectation off: {mean} vs {x}"
        );
    }
}

//! The two unimodal baselines: a text-only classifier (mean-pooled
//! trainable embeddings into four softmax heads, same focal loss and
//! optimizer as the fusion model) and a prosody-only linear SVM trained
//! one-vs-rest with hinge loss.

use crate::corpus::{Dimension, Labels};
use crate::error::{Error, Result};
use crate::fusion::features::PreparedRecord;
use crate::fusion::model::{focal_loss, Head};
use crate::fusion::train::{inverse_frequency_alpha, TrainConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
use crate::fusion::Prediction;
use crate::linalg::{softmax, Mat};
use crate::prosody::FEATURE_DIM;
use crate::rng::{streams, DetRng};

/// Mean-pooled embedding classifier: no recurrence, no prosody.
#[derive(Debug, Clone, PartialEq)]
pub struct TextOnlyModel {
    pub embedding: Mat,
    pub heads: [Head; 4],
}

impl TextOnlyModel {
    fn mean_embedding(&self, token_ids: &[usize]) -> Vec<f64> {
        let d = self.embedding.cols;
        let mut mean = vec![0.0; d];
        for &tok in token_ids {
            for (m, v) in mean.iter_mut().zip(self.embedding.row(tok)) {
                *m += v;
            }
        }
        let n = token_ids.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    pub fn predict(&self, item: &PreparedRecord) -> Prediction {
        let pooled = self.mean_embedding(&item.token_ids);
        let mut probs = [[0.0; 3]; 4];
        for (k, head) in self.heads.iter().enumerate() {
            let mut z = head.w.matvec(&pooled);
            for j in 0..3 {
                z[j] += head.b[j];
            }
            probs[k].copy_from_slice(&softmax(&z));
        }
        Prediction { probs }
    }
}

/// Train the text-only baseline with the fusion model's loss and
/// optimizer settings.
pub fn train_text_only(
    train_items: &[PreparedRecord],
    init_embedding: Mat,
    config: &TrainConfig,
) -> Result<TextOnlyModel> {
    config.validate()?;
    if train_items.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    let labels: Vec<Labels> = train_items.iter().map(|i| i.labels).collect();
    let alpha = config.alpha.unwrap_or_else(|| inverse_frequency_alpha(&labels));

    let d = init_embedding.cols;
    let mut rng = DetRng::new(config.seed).fork(streams::INIT).fork(1001);
    let bound = 1.0 / (d as f64).sqrt();
    let mut model = TextOnlyModel {
        embedding: init_embedding,
        heads: std::array::from_fn(|_| Head {
            w: Mat::uniform(3, d, -bound, bound, &mut rng),
            b: vec![0.0; 3],
        }),
    };

    // Adam moments for embedding + heads
    let mut m_emb = Mat::zeros(model.embedding.rows, d);
    let mut v_emb = Mat::zeros(model.embedding.rows, d);
    let mut m_heads: [Head; 4] = std::array::from_fn(|_| Head {
        w: Mat::zeros(3, d),
        b: vec![0.0; 3],
    });
    let mut v_heads: [Head; 4] = std::array::from_fn(|_| Head {
        w: Mat::zeros(3, d),
        b: vec![0.0; 3],
    });

    let epoch_stream = DetRng::new(config.seed).fork(streams::EPOCH).fork(7);
    let mut t_step = 0u64;
    let mut g_emb = Mat::zeros(model.embedding.rows, d);
    let mut g_heads: [Head; 4] = std::array::from_fn(|_| Head {
        w: Mat::zeros(3, d),
        b: vec![0.0; 3],
    });

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train_items.len()).collect();
        epoch_stream.fork(epoch as u64).shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            g_emb.data.iter_mut().for_each(|v| *v = 0.0);
            for h in g_heads.iter_mut() {
                h.w.data.iter_mut().for_each(|v| *v = 0.0);
                h.b.iter_mut().for_each(|v| *v = 0.0);
            }
            let scale = 1.0 / batch.len() as f64;

            for &idx in batch {
                let item = &train_items[idx];
                let pooled = model.mean_embedding(&item.token_ids);
                let pred = model.predict(item);
                let mut d_pooled = vec![0.0; d];
                for (k, dim) in Dimension::ALL.iter().enumerate() {
                    let y = item.labels.get(*dim).index();
                    let p = pred.probs[k][y].clamp(1e-7, 1.0 - 1e-7);
                    let gamma = config.gamma;
                    let dl_dp = alpha[k][y]
                        * (gamma * (1.0 - p).powf(gamma - 1.0) * p.ln()
                            - (1.0 - p).powf(gamma) / p);
                    let mut d_logits = [0.0; 3];
                    for j in 0..3 {
                        let ind = if j == y { 1.0 } else { 0.0 };
                        d_logits[j] = dl_dp * pred.probs[k][y] * (ind - pred.probs[k][j]) * scale;
                    }
                    g_heads[k].w.add_outer(&d_logits, &pooled);
                    for j in 0..3 {
                        g_heads[k].b[j] += d_logits[j];
                    }
                    model.heads[k].w.matvec_t_add(&d_logits, &mut d_pooled);
                }
                let per_token = 1.0 / item.token_ids.len().max(1) as f64;
                for &tok in &item.token_ids {
                    let row = g_emb.row_mut(tok);
                    for (r, g) in row.iter_mut().zip(&d_pooled) {
                        *r += g * per_token;
                    }
                }
            }

            t_step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(t_step as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(t_step as i32);
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for j in 0..p.len() {
                    m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
                    v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
                    p[j] -= config.lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + ADAM_EPS);
                }
            };
            update(&mut model.embedding.data, &g_emb.data, &mut m_emb.data, &mut v_emb.data);
            for k in 0..4 {
                update(
                    &mut model.heads[k].w.data,
                    &g_heads[k].w.data,
                    &mut m_heads[k].w.data,
                    &mut v_heads[k].w.data,
                );
                update(
                    &mut model.heads[k].b,
                    &g_heads[k].b,
                    &mut m_heads[k].b,
                    &mut v_heads[k].b,
                );
            }
        }
    }
    Ok(model)
}

/// One-vs-rest linear SVMs over the clip-level prosody vector: one
/// (dimension, class) machine each, hinge loss with L2 regularization,
/// Pegasos-style subgradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodySvm {
    /// weights[dimension][class]: 16 features + bias.
    pub weights: [[Vec<f64>; 3]; 4],
    pub lambda: f64,
    pub epochs: usize,
}

pub const SVM_LAMBDA: f64 = 1e-3;
pub const SVM_EPOCHS: usize = 200;

/// Clip-level feature vector: mean of the per-token prosody block. Text
/// only records contribute the zero vector (they are included, which
/// caps what a prosody-only model can do on them).
fn svm_features(item: &PreparedRecord) -> Vec<f64> {
    let mut f = vec![0.0; FEATURE_DIM + 1];
    let n = item.aux.len().max(1) as f64;
    for a in &item.aux {
        for j in 0..FEATURE_DIM {
            f[j] += a[j] / n;
        }
    }
    f[FEATURE_DIM] = 1.0; // bias input
    f
}

pub fn train_prosody_svm(train_items: &[PreparedRecord], seed: u64) -> Result<ProsodySvm> {
    if train_items.is_empty() {
        return Err(Error::Training("empty training split".into()));
    }
    let feats: Vec<Vec<f64>> = train_items.iter().map(svm_features).collect();
    let dim = FEATURE_DIM + 1;
    let mut weights: [[Vec<f64>; 3]; 4] =
        std::array::from_fn(|_| std::array::from_fn(|_| vec![0.0; dim]));

    let root = DetRng::new(seed).fork(streams::INIT).fork(2002);
    for d in Dimension::ALL {
        for class in 0..3 {
            let w = &mut weights[d.index()][class];
            let mut t = 0u64;
            for epoch in 0..SVM_EPOCHS {
                let mut order: Vec<usize> = (0..train_items.len()).collect();
                root.fork((d.index() * 3 + class) as u64)
                    .fork(epoch as u64)
                    .shuffle(&mut order);
                for &i in &order {
                    t += 1;
                    let lr = 1.0 / (SVM_LAMBDA * t as f64);
                    let y = if train_items[i].labels.get(d).index() == class {
                        1.0
                    } else {
                        -1.0
                    };
                    let margin: f64 = w.iter().zip(&feats[i]).map(|(wv, xv)| wv * xv).sum();
                    // L2 shrink on every step, hinge subgradient when violated
                    for wv in w.iter_mut() {
                        *wv *= 1.0 - lr * SVM_LAMBDA;
                    }
                    if y * margin < 1.0 {
                        for (wv, xv) in w.iter_mut().zip(&feats[i]) {
                            *wv += lr * y * xv;
                        }
                    }
                }
            }
        }
    }
    Ok(ProsodySvm {
        weights,
        lambda: SVM_LAMBDA,
        epochs: SVM_EPOCHS,
    })
}

impl ProsodySvm {
    /// Argmax of the per-class decision values, expressed as a Prediction
    /// via a softmax over decision values (for interface parity; the
    /// argmax is what evaluation consumes).
    pub fn predict(&self, item: &PreparedRecord) -> Prediction {
        let x = svm_features(item);
        let mut probs = [[0.0; 3]; 4];
        for d in 0..4 {
            let scores: Vec<f64> = (0..3)
                .map(|c| self.weights[d][c].iter().zip(&x).map(|(w, xv)| w * xv).sum())
                .collect();
            probs[d].copy_from_slice(&softmax(&scores));
        }
        Prediction { probs }
    }

    /// Mean hinge loss over a set, summed across the 12 machines.
    pub fn hinge_loss(&self, items: &[PreparedRecord]) -> f64 {
        let mut total = 0.0;
        for item in items {
            let x = svm_features(item);
            for d in Dimension::ALL {
                for class in 0..3 {
                    let y = if item.labels.get(d).index() == class {
                        1.0
                    } else {
                        -1.0
                    };
                    let margin: f64 = self.weights[d.index()][class]
                        .iter()
                        .zip(&x)
                        .map(|(w, xv)| w * xv)
                        .sum();
                    total += (1.0 - y * margin).max(0.0);
                }
            }
        }
        total / items.len().max(1) as f64
    }
}

/// Focal loss of a text-only model over a set (sanity metric for tests).
pub fn text_only_loss(
    model: &TextOnlyModel,
    items: &[PreparedRecord],
    gamma: f64,
    alpha: &[[f64; 3]; 4],
) -> f64 {
    items
        .iter()
        .map(|i| focal_loss(&model.predict(i), &i.labels, gamma, alpha))
        .sum::<f64>()
        / items.len().max(1) as f64
}

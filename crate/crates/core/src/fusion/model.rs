//! Model parameters, forward pass, focal loss, and the hand-derived
//! reverse-mode backward pass.
//!
//! Gate packing order throughout is [input, forget, cell-candidate,
//! output]. All math is f64; the backward pass is checked against central
//! finite differences (see `verify`).

use crate::corpus::{Dimension, Labels};
use crate::error::{Error, Result};
use crate::fusion::Prediction;
use crate::linalg::{softmax, Mat};
use crate::rng::DetRng;

/// Prosody vector width plus the modality indicator.
pub const PROSODY_DIM: usize = crate::prosody::FEATURE_DIM;
pub const AUX_DIM: usize = PROSODY_DIM + 1;

pub const FOCAL_P_MIN: f64 = 1e-7;
pub const FOCAL_P_MAX: f64 = 1.0 - 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Text-embedding width fed into the fusion (the encoder stand-in's
    /// output size; configurable, not a paper constant).
    pub d_text: usize,
    /// Hidden units per LSTM direction. The bidirectional concatenation is
    /// twice this.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_text: 64,
            hidden: 128,
        }
    }
}

impl ModelConfig {
    pub fn input_dim(&self) -> usize {
        self.d_text + AUX_DIM
    }

    pub fn h2(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir {
    /// 4H x input
    pub w: Mat,
    /// 4H x H
    pub u: Mat,
    /// 4H
    pub b: Vec<f64>,
}

impl LstmDir {
    fn zeros(hidden: usize, input: usize) -> Self {
        LstmDir {
            w: Mat::zeros(4 * hidden, input),
            u: Mat::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    fn uniform(hidden: usize, input: usize, bound: f64, rng: &mut DetRng) -> Self {
        LstmDir {
            w: Mat::uniform(4 * hidden, input, -bound, bound, rng),
            u: Mat::uniform(4 * hidden, hidden, -bound, bound, rng),
            b: (0..4 * hidden).map(|_| rng.uniform(-bound, bound)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub fwd: LstmDir,
    pub bwd: LstmDir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// 3 x 2H
    pub w: Mat,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub cfg: ModelConfig,
    /// |V| x d_text, shared with the text-processing embedding table.
    pub embedding: Mat,
    pub layer1: LstmLayer,
    /// Inter-layer projection (2H x 2H) with ReLU, then dropout, feeding
    /// layer 2.
    pub proj_w: Mat,
    pub proj_b: Vec<f64>,
    pub layer2: LstmLayer,
    pub attn_w: Mat,
    pub attn_v: Vec<f64>,
    pub heads: [Head; 4],
}

impl ModelParams {
    /// Fresh parameters; the embedding matrix is taken over from the fitted
    /// vocabulary table so gradients flow into shared rows.
    ///
    /// Input weights get a wider uniform init than 1/sqrt(H) and forget
    /// gates start at +1: with small-scale embeddings and a short
    /// optimizer budget, both are needed for usable signal magnitude at
    /// the attention layer from step one.
    pub fn init(embedding: Mat, cfg: ModelConfig, seed: u64) -> Self {
        assert_eq!(embedding.cols, cfg.d_text);
        let mut rng = DetRng::new(seed).fork(crate::rng::streams::INIT);
        let h = cfg.hidden;
        let h2 = cfg.h2();
        let lstm_bound = 0.25;
        let wide_bound = 0.15;
        let with_forget_bias = |mut dir: LstmDir| {
            for j in h..2 * h {
                dir.b[j] = 1.0;
            }
            dir
        };
        // variance-matched input columns: embeddings start at +-0.05 while
        // normalized prosody features are unit-scale, so the text block of
        // W gets a proportionally wider init
        let text_gain = 10.0;
        let with_text_gain = |mut dir: LstmDir| {
            for row in 0..dir.w.rows {
                for col in 0..cfg.d_text {
                    dir.w.row_mut(row)[col] *= text_gain;
                }
            }
            dir
        };
        let layer1 = LstmLayer {
            fwd: with_forget_bias(with_text_gain(LstmDir::uniform(
                h,
                cfg.input_dim(),
                lstm_bound,
                &mut rng,
            ))),
            bwd: with_forget_bias(with_text_gain(LstmDir::uniform(
                h,
                cfg.input_dim(),
                lstm_bound,
                &mut rng,
            ))),
        };
        let proj_w = Mat::uniform(h2, h2, -wide_bound, wide_bound, &mut rng);
        let layer2 = LstmLayer {
            fwd: with_forget_bias(LstmDir::uniform(h, h2, lstm_bound, &mut rng)),
            bwd: with_forget_bias(LstmDir::uniform(h, h2, lstm_bound, &mut rng)),
        };
        ModelParams {
            embedding,
            layer1,
            proj_w,
            proj_b: vec![0.0; h2],
            layer2,
            attn_w: Mat::uniform(h2, h2, -wide_bound, wide_bound, &mut rng),
            attn_v: (0..h2).map(|_| rng.uniform(-0.05, 0.05)).collect(),
            // zero-init heads: predictions start uniform and the whole
            // movement budget goes into aligned logits instead of
            // cancelling init noise
            heads: std::array::from_fn(|_| Head {
                w: Mat::zeros(3, h2),
                b: vec![0.0; 3],
            }),
            cfg,
        }
    }

    /// Same shapes, all zeros; used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.embedding.rows, self.cfg)
    }

    pub fn zeros(vocab_rows: usize, cfg: ModelConfig) -> Self {
        let h = cfg.hidden;
        let h2 = cfg.h2();
        ModelParams {
            cfg,
            embedding: Mat::zeros(vocab_rows, cfg.d_text),
            layer1: LstmLayer {
                fwd: LstmDir::zeros(h, cfg.input_dim()),
                bwd: LstmDir::zeros(h, cfg.input_dim()),
            },
            proj_w: Mat::zeros(h2, h2),
            proj_b: vec![0.0; h2],
            layer2: LstmLayer {
                fwd: LstmDir::zeros(h, h2),
                bwd: LstmDir::zeros(h, h2),
            },
            attn_w: Mat::zeros(h2, h2),
            attn_v: vec![0.0; h2],
            heads: std::array::from_fn(|_| Head {
                w: Mat::zeros(3, h2),
                b: vec![0.0; 3],
            }),
        }
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Named views of every tensor, in a fixed order shared with
    /// `tensors_mut`.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embedding".into(), &self.embedding.data)];
        for (layer_name, layer) in [("layer1", &self.layer1), ("layer2", &self.layer2)] {
            for (dir_name, dir) in [("fwd", &layer.fwd), ("bwd", &layer.bwd)] {
                out.push((format!("{layer_name}.{dir_name}.w"), &dir.w.data));
                out.push((format!("{layer_name}.{dir_name}.u"), &dir.u.data));
                out.push((format!("{layer_name}.{dir_name}.b"), &dir.b));
            }
        }
        out.push(("proj.w".into(), &self.proj_w.data));
        out.push(("proj.b".into(), &self.proj_b));
        out.push(("attn.w".into(), &self.attn_w.data));
        out.push(("attn.v".into(), &self.attn_v));
        for (d, head) in Dimension::ALL.iter().zip(&self.heads) {
            out.push((format!("head.{}.w", d.name()), &head.w.data));
            out.push((format!("head.{}.b", d.name()), &head.b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> =
            vec![("embedding".into(), &mut self.embedding.data)];
        for (layer_name, layer) in [("layer1", &mut self.layer1), ("layer2", &mut self.layer2)] {
            for (dir_name, dir) in [("fwd", &mut layer.fwd), ("bwd", &mut layer.bwd)] {
                out.push((format!("{layer_name}.{dir_name}.w"), &mut dir.w.data));
                out.push((format!("{layer_name}.{dir_name}.u"), &mut dir.u.data));
                out.push((format!("{layer_name}.{dir_name}.b"), &mut dir.b));
            }
        }
        out.push(("proj.w".into(), &mut self.proj_w.data));
        out.push(("proj.b".into(), &mut self.proj_b));
        out.push(("attn.w".into(), &mut self.attn_w.data));
        out.push(("attn.v".into(), &mut self.attn_v));
        for (d, head) in Dimension::ALL.iter().zip(&mut self.heads) {
            out.push((format!("head.{}.w", d.name()), &mut head.w.data));
            out.push((format!("head.{}.b", d.name()), &mut head.b));
        }
        out
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM cell step with standard gate semantics.
/// Exposed for direct testing; the batched paths below inline the same
/// computation.
pub fn lstm_cell(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    weights: &LstmDir,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hidden = weights.u.cols;
    if weights.w.cols != x.len() || h.len() != hidden || c.len() != hidden {
        return Err(Error::Shape(format!(
            "lstm_cell: x {} (want {}), h {} / c {} (want {hidden})",
            x.len(),
            weights.w.cols,
            h.len(),
            c.len()
        )));
    }
    let mut z = weights.w.matvec(x);
    let uh = weights.u.matvec(h);
    for (zv, (uv, bv)) in z.iter_mut().zip(uh.iter().zip(&weights.b)) {
        *zv += uv + bv;
    }
    let mut h_next = vec![0.0; hidden];
    let mut c_next = vec![0.0; hidden];
    for j in 0..hidden {
        let i_g = sigmoid(z[j]);
        let f_g = sigmoid(z[hidden + j]);
        let g_g = z[2 * hidden + j].tanh();
        let o_g = sigmoid(z[3 * hidden + j]);
        c_next[j] = f_g * c[j] + i_g * g_g;
        h_next[j] = o_g * c_next[j].tanh();
    }
    Ok((h_next, c_next))
}

/// Per-direction forward trace, indexed by time step regardless of
/// processing direction.
#[derive(Debug, Clone)]
pub struct DirTrace {
    pub i: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub o: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub tanh_c: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
}

/// Run one direction over the sequence. `reverse` processes t = T-1..0;
/// outputs stay time-indexed.
pub fn lstm_run_dir(weights: &LstmDir, xs: &[Vec<f64>], reverse: bool) -> DirTrace {
    let t_len = xs.len();
    let hidden = weights.u.cols;
    let empty = || vec![vec![0.0; hidden]; t_len];
    let mut trace = DirTrace {
        i: empty(),
        f: empty(),
        g: empty(),
        o: empty(),
        c: empty(),
        tanh_c: empty(),
        h: empty(),
    };
    let mut h_prev = vec![0.0; hidden];
    let mut c_prev = vec![0.0; hidden];
    for k in 0..t_len {
        let t = if reverse { t_len - 1 - k } else { k };
        let mut z = weights.w.matvec(&xs[t]);
        let uh = weights.u.matvec(&h_prev);
        for (zv, (uv, bv)) in z.iter_mut().zip(uh.iter().zip(&weights.b)) {
            *zv += uv + bv;
        }
        for j in 0..hidden {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[hidden + j]);
            let g_g = z[2 * hidden + j].tanh();
            let o_g = sigmoid(z[3 * hidden + j]);
            let c_new = f_g * c_prev[j] + i_g * g_g;
            let tc = c_new.tanh();
            trace.i[t][j] = i_g;
            trace.f[t][j] = f_g;
            trace.g[t][j] = g_g;
            trace.o[t][j] = o_g;
            trace.c[t][j] = c_new;
            trace.tanh_c[t][j] = tc;
            trace.h[t][j] = o_g * tc;
        }
        h_prev = trace.h[t].clone();
        c_prev = trace.c[t].clone();
    }
    trace
}

/// Full forward trace for one sequence.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub token_ids: Vec<usize>,
    /// Fused inputs (embedding + prosody + indicator) per step.
    pub xs: Vec<Vec<f64>>,
    pub l1_fwd: DirTrace,
    pub l1_bwd: DirTrace,
    pub concat1: Vec<Vec<f64>>,
    pub proj_pre: Vec<Vec<f64>>,
    /// Dropout mask values (0 or 1/(1-rate)); all-ones at inference.
    pub drop_mask: Vec<Vec<f64>>,
    /// Layer-2 inputs: relu(proj) * mask.
    pub x2: Vec<Vec<f64>>,
    pub l2_fwd: DirTrace,
    pub l2_bwd: DirTrace,
    pub concat2: Vec<Vec<f64>>,
    /// tanh(W_a h_t)
    pub attn_a: Vec<Vec<f64>>,
    pub attn_weights: Vec<f64>,
    pub context: Vec<f64>,
    pub logits: [[f64; 3]; 4],
    pub probs: [[f64; 3]; 4],
}

/// Dropout specification for a training-mode forward pass.
pub struct DropoutSpec<'a> {
    pub rate: f64,
    pub rng: &'a mut DetRng,
}

fn fuse_inputs(params: &ModelParams, token_ids: &[usize], aux: &[[f64; AUX_DIM]]) -> Vec<Vec<f64>> {
    let d_text = params.cfg.d_text;
    token_ids
        .iter()
        .zip(aux)
        .map(|(&tok, a)| {
            let mut x = Vec::with_capacity(d_text + AUX_DIM);
            x.extend_from_slice(params.embedding.row(tok));
            x.extend_from_slice(a);
            x
        })
        .collect()
}

/// Forward pass over one fused sequence. Errors on empty input.
pub fn forward(
    params: &ModelParams,
    token_ids: &[usize],
    aux: &[[f64; AUX_DIM]],
    mut dropout: Option<DropoutSpec>,
) -> Result<ForwardTrace> {
    if token_ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    if token_ids.len() != aux.len() {
        return Err(Error::Shape(format!(
            "token/prosody length mismatch: {} vs {}",
            token_ids.len(),
            aux.len()
        )));
    }
    let t_len = token_ids.len();
    let h2 = params.cfg.h2();
    let hidden = params.cfg.hidden;

    let xs = fuse_inputs(params, token_ids, aux);
    let l1_fwd = lstm_run_dir(&params.layer1.fwd, &xs, false);
    let l1_bwd = lstm_run_dir(&params.layer1.bwd, &xs, true);
    let concat1: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let mut v = Vec::with_capacity(h2);
            v.extend_from_slice(&l1_fwd.h[t]);
            v.extend_from_slice(&l1_bwd.h[t]);
            v
        })
        .collect();

    let proj_pre: Vec<Vec<f64>> = concat1
        .iter()
        .map(|c| {
            let mut z = params.proj_w.matvec(c);
            for (zv, bv) in z.iter_mut().zip(&params.proj_b) {
                *zv += bv;
            }
            z
        })
        .collect();

    // variational dropout: one mask per sequence, shared across steps,
    // keeps the recurrent gradient path coherent in time
    let drop_mask: Vec<Vec<f64>> = match dropout.as_mut() {
        Some(spec) if spec.rate > 0.0 => {
            let scale = 1.0 / (1.0 - spec.rate);
            let mask: Vec<f64> = (0..h2)
                .map(|_| if spec.rng.chance(spec.rate) { 0.0 } else { scale })
                .collect();
            vec![mask; t_len]
        }
        _ => vec![vec![1.0; h2]; t_len],
    };

    let x2: Vec<Vec<f64>> = proj_pre
        .iter()
        .zip(&drop_mask)
        .map(|(z, m)| z.iter().zip(m).map(|(&zv, &mv)| zv.max(0.0) * mv).collect())
        .collect();

    let l2_fwd = lstm_run_dir(&params.layer2.fwd, &x2, false);
    let l2_bwd = lstm_run_dir(&params.layer2.bwd, &x2, true);
    let concat2: Vec<Vec<f64>> = (0..t_len)
        .map(|t| {
            let mut v = Vec::with_capacity(h2);
            v.extend_from_slice(&l2_fwd.h[t]);
            v.extend_from_slice(&l2_bwd.h[t]);
            v
        })
        .collect();

    // additive attention: e_t = v . tanh(W h_t)
    let attn_a: Vec<Vec<f64>> = concat2
        .iter()
        .map(|hv| params.attn_w.matvec(hv).iter().map(|z| z.tanh()).collect())
        .collect();
    let scores: Vec<f64> = attn_a
        .iter()
        .map(|a| a.iter().zip(&params.attn_v).map(|(av, vv)| av * vv).sum())
        .collect();
    let attn_weights = softmax(&scores);
    let mut context = vec![0.0; h2];
    for (t, hv) in concat2.iter().enumerate() {
        for (cv, hvv) in context.iter_mut().zip(hv) {
            *cv += attn_weights[t] * hvv;
        }
    }

    let mut logits = [[0.0; 3]; 4];
    let mut probs = [[0.0; 3]; 4];
    for (k, head) in params.heads.iter().enumerate() {
        let z = head.w.matvec(&context);
        for j in 0..3 {
            logits[k][j] = z[j] + head.b[j];
        }
        let p = softmax(&logits[k]);
        probs[k].copy_from_slice(&p);
    }

    let _ = hidden;
    Ok(ForwardTrace {
        token_ids: token_ids.to_vec(),
        xs,
        l1_fwd,
        l1_bwd,
        concat1,
        proj_pre,
        drop_mask,
        x2,
        l2_fwd,
        l2_bwd,
        concat2,
        attn_a,
        attn_weights,
        context,
        logits,
        probs,
    })
}

/// The BiLSTM stack up to the layer-2 concatenated states (no attention),
/// inference mode.
pub fn bilstm_forward(
    params: &ModelParams,
    token_ids: &[usize],
    aux: &[[f64; AUX_DIM]],
) -> Result<Vec<Vec<f64>>> {
    Ok(forward(params, token_ids, aux, None)?.concat2)
}

/// Additive attention over arbitrary hidden states.
pub fn additive_attention(
    hiddens: &[Vec<f64>],
    attn_w: &Mat,
    attn_v: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if hiddens.is_empty() {
        return Err(Error::EmptySequence);
    }
    let scores: Vec<f64> = hiddens
        .iter()
        .map(|hv| {
            attn_w
                .matvec(hv)
                .iter()
                .zip(attn_v)
                .map(|(z, v)| z.tanh() * v)
                .sum()
        })
        .collect();
    let weights = softmax(&scores);
    let mut context = vec![0.0; hiddens[0].len()];
    for (t, hv) in hiddens.iter().enumerate() {
        for (cv, hvv) in context.iter_mut().zip(hv) {
            *cv += weights[t] * hvv;
        }
    }
    Ok((context, weights))
}

/// Per-dimension softmax heads over a context vector.
pub fn classify(context: &[f64], heads: &[Head; 4]) -> Prediction {
    let mut probs = [[0.0; 3]; 4];
    for (k, head) in heads.iter().enumerate() {
        let mut z = head.w.matvec(context);
        for j in 0..3 {
            z[j] += head.b[j];
        }
        probs[k].copy_from_slice(&softmax(&z));
    }
    Prediction { probs }
}

/// Focal loss summed over the four dimensions:
/// -alpha_y * (1 - p_y)^gamma * ln(p_y), p clamped to [1e-7, 1-1e-7].
pub fn focal_loss(
    prediction: &Prediction,
    labels: &Labels,
    gamma: f64,
    alpha: &[[f64; 3]; 4],
) -> f64 {
    let mut total = 0.0;
    for d in Dimension::ALL {
        let y = labels.get(d).index();
        let p = prediction.probs[d.index()][y].clamp(FOCAL_P_MIN, FOCAL_P_MAX);
        total += -alpha[d.index()][y] * (1.0 - p).powf(gamma) * p.ln();
    }
    total
}

fn focal_loss_from_probs(probs: &[[f64; 3]; 4], labels: &Labels, gamma: f64, alpha: &[[f64; 3]; 4]) -> f64 {
    focal_loss(&Prediction { probs: *probs }, labels, gamma, alpha)
}

/// Backward pass for one sequence: accumulates dLoss/dParams into `grads`
/// (scaled by `scale`, typically 1/batch) and returns this item's loss.
pub fn backward(
    trace: &ForwardTrace,
    params: &ModelParams,
    labels: &Labels,
    gamma: f64,
    alpha: &[[f64; 3]; 4],
    scale: f64,
    grads: &mut ModelParams,
) -> f64 {
    let t_len = trace.xs.len();
    let h2 = params.cfg.h2();
    let hidden = params.cfg.hidden;
    let d_text = params.cfg.d_text;

    let loss = focal_loss_from_probs(&trace.probs, labels, gamma, alpha);

    // heads + focal/softmax
    let mut d_context = vec![0.0; h2];
    for (k, d) in Dimension::ALL.iter().enumerate() {
        let y = labels.get(*d).index();
        let p_raw = trace.probs[k][y];
        let p = p_raw.clamp(FOCAL_P_MIN, FOCAL_P_MAX);
        // d/dp [ -a (1-p)^g ln p ]
        let dl_dp = if (FOCAL_P_MIN..=FOCAL_P_MAX).contains(&p_raw) {
            alpha[k][y] * (gamma * (1.0 - p).powf(gamma - 1.0) * p.ln() - (1.0 - p).powf(gamma) / p)
        } else {
            0.0
        };
        let mut d_logits = [0.0; 3];
        for j in 0..3 {
            let indicator = if j == y { 1.0 } else { 0.0 };
            d_logits[j] = dl_dp * p_raw * (indicator - trace.probs[k][j]) * scale;
        }
        let ghead = &mut grads.heads[k];
        ghead.w.add_outer(&d_logits, &trace.context);
        for j in 0..3 {
            ghead.b[j] += d_logits[j];
        }
        params.heads[k].w.matvec_t_add(&d_logits, &mut d_context);
    }

    // attention backward
    let mut d_alpha = vec![0.0; t_len];
    let mut d_concat2: Vec<Vec<f64>> = vec![vec![0.0; h2]; t_len];
    for t in 0..t_len {
        let mut acc = 0.0;
        for j in 0..h2 {
            acc += trace.concat2[t][j] * d_context[j];
            d_concat2[t][j] = trace.attn_weights[t] * d_context[j];
        }
        d_alpha[t] = acc;
    }
    let weighted: f64 = (0..t_len).map(|t| trace.attn_weights[t] * d_alpha[t]).sum();
    for t in 0..t_len {
        let d_e = trace.attn_weights[t] * (d_alpha[t] - weighted);
        if d_e == 0.0 {
            continue;
        }
        // e_t = v . a_t, a_t = tanh(W h_t)
        let mut d_za = vec![0.0; h2];
        for j in 0..h2 {
            let a = trace.attn_a[t][j];
            grads.attn_v[j] += d_e * a;
            d_za[j] = d_e * params.attn_v[j] * (1.0 - a * a);
        }
        grads.attn_w.add_outer(&d_za, &trace.concat2[t]);
        params.attn_w.matvec_t_add(&d_za, &mut d_concat2[t]);
    }

    // layer 2 BPTT
    let (d_h2f, d_h2b): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (
        d_concat2.iter().map(|v| v[..hidden].to_vec()).collect(),
        d_concat2.iter().map(|v| v[hidden..].to_vec()).collect(),
    );
    let mut d_x2 = vec![vec![0.0; h2]; t_len];
    backprop_dir(
        &params.layer2.fwd,
        &trace.x2,
        &trace.l2_fwd,
        &d_h2f,
        false,
        &mut grads.layer2.fwd,
        &mut d_x2,
    );
    backprop_dir(
        &params.layer2.bwd,
        &trace.x2,
        &trace.l2_bwd,
        &d_h2b,
        true,
        &mut grads.layer2.bwd,
        &mut d_x2,
    );

    // dropout, ReLU, projection
    let mut d_concat1 = vec![vec![0.0; h2]; t_len];
    for t in 0..t_len {
        let mut d_zp = vec![0.0; h2];
        for j in 0..h2 {
            let d_relu = d_x2[t][j] * trace.drop_mask[t][j];
            d_zp[j] = if trace.proj_pre[t][j] > 0.0 { d_relu } else { 0.0 };
        }
        grads.proj_w.add_outer(&d_zp, &trace.concat1[t]);
        for j in 0..h2 {
            grads.proj_b[j] += d_zp[j];
        }
        params.proj_w.matvec_t_add(&d_zp, &mut d_concat1[t]);
    }

    // layer 1 BPTT
    let (d_h1f, d_h1b): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (
        d_concat1.iter().map(|v| v[..hidden].to_vec()).collect(),
        d_concat1.iter().map(|v| v[hidden..].to_vec()).collect(),
    );
    let mut d_xs = vec![vec![0.0; params.cfg.input_dim()]; t_len];
    backprop_dir(
        &params.layer1.fwd,
        &trace.xs,
        &trace.l1_fwd,
        &d_h1f,
        false,
        &mut grads.layer1.fwd,
        &mut d_xs,
    );
    backprop_dir(
        &params.layer1.bwd,
        &trace.xs,
        &trace.l1_bwd,
        &d_h1b,
        true,
        &mut grads.layer1.bwd,
        &mut d_xs,
    );

    // embedding rows (prosody/indicator slots are inputs, not parameters)
    for (t, &tok) in trace.token_ids.iter().enumerate() {
        let row = grads.embedding.row_mut(tok);
        for j in 0..d_text {
            row[j] += d_xs[t][j];
        }
    }

    loss
}

/// BPTT through one direction. `d_h_ext` is time-indexed external gradient
/// on the direction's hidden states; gradients accumulate into `gw` and
/// input gradients into `d_xs`.
fn backprop_dir(
    weights: &LstmDir,
    xs: &[Vec<f64>],
    trace: &DirTrace,
    d_h_ext: &[Vec<f64>],
    reverse: bool,
    gw: &mut LstmDir,
    d_xs: &mut [Vec<f64>],
) {
    let t_len = xs.len();
    let hidden = weights.u.cols;
    let mut d_h_rec = vec![0.0; hidden];
    let mut d_c = vec![0.0; hidden];
    let mut d_z = vec![0.0; 4 * hidden];

    for k in 0..t_len {
        // walk processing order backwards
        let t = if reverse { k } else { t_len - 1 - k };
        let (prev_h, prev_c): (Option<&Vec<f64>>, Option<&Vec<f64>>) = if reverse {
            if t + 1 < t_len {
                (Some(&trace.h[t + 1]), Some(&trace.c[t + 1]))
            } else {
                (None, None)
            }
        } else if t > 0 {
            (Some(&trace.h[t - 1]), Some(&trace.c[t - 1]))
        } else {
            (None, None)
        };

        for j in 0..hidden {
            let d_h = d_h_ext[t][j] + d_h_rec[j];
            let tc = trace.tanh_c[t][j];
            let d_o = d_h * tc;
            let d_c_total = d_c[j] + d_h * trace.o[t][j] * (1.0 - tc * tc);
            let d_i = d_c_total * trace.g[t][j];
            let d_g = d_c_total * trace.i[t][j];
            let c_prev = prev_c.map_or(0.0, |c| c[j]);
            let d_f = d_c_total * c_prev;

            let i_g = trace.i[t][j];
            let f_g = trace.f[t][j];
            let g_g = trace.g[t][j];
            let o_g = trace.o[t][j];
            d_z[j] = d_i * i_g * (1.0 - i_g);
            d_z[hidden + j] = d_f * f_g * (1.0 - f_g);
            d_z[2 * hidden + j] = d_g * (1.0 - g_g * g_g);
            d_z[3 * hidden + j] = d_o * o_g * (1.0 - o_g);

            d_c[j] = d_c_total * f_g;
        }

        gw.w.add_outer(&d_z, &xs[t]);
        for (bv, dv) in gw.b.iter_mut().zip(&d_z) {
            *bv += dv;
        }
        if let Some(ph) = prev_h {
            gw.u.add_outer(&d_z, ph);
        }
        weights.w.matvec_t_add(&d_z, &mut d_xs[t]);
        d_h_rec.iter_mut().for_each(|v| *v = 0.0);
        weights.u.matvec_t_add(&d_z, &mut d_h_rec);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Level;

    fn tiny_params(seed: u64) -> ModelParams {
        let cfg = ModelConfig {
            d_text: 4,
            hidden: 3,
        };
        let mut rng = DetRng::new(seed);
        let emb = Mat::uniform(5, 4, -0.5, 0.5, &mut rng);
        ModelParams::init(emb, cfg, seed)
    }

    fn random_aux(t_len: usize, seed: u64) -> Vec<[f64; AUX_DIM]> {
        let mut rng = DetRng::new(seed);
        (0..t_len)
            .map(|_| std::array::from_fn(|_| rng.uniform(-1.0, 1.0)))
            .collect()
    }

    #[test]
    fn lstm_cell_zero_everything() {
        let w = LstmDir::zeros(3, 4);
        let (h, c) = lstm_cell(&[0.0; 4], &[0.0; 3], &[0.0; 3], &w).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn lstm_cell_gate_saturation_preserves_cell() {
        // forget bias -> +inf, input bias -> -inf: c' ~= c
        let mut w = LstmDir::zeros(2, 2);
        for j in 0..2 {
            w.b[j] = -40.0; // input gate closed
            w.b[2 + j] = 40.0; // forget gate open
        }
        let c0 = vec![0.7, -0.3];
        let (_, c1) = lstm_cell(&[0.5, -0.5], &[0.1, 0.2], &c0, &w).unwrap();
        for (a, b) in c0.iter().zip(&c1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_cell_matches_scalar_reference() {
        // straight-line scalar re-implementation for a 1-unit cell
        let mut rng = DetRng::new(3);
        let mut w = LstmDir::zeros(1, 2);
        for v in w.w.data.iter_mut().chain(w.u.data.iter_mut()).chain(w.b.iter_mut()) {
            *v = rng.uniform(-1.0, 1.0);
        }
        let (x, h, c) = ([0.3, -0.7], [0.25], [-0.4]);
        let (h1, c1) = lstm_cell(&x, &h, &c, &w).unwrap();

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let zi = w.w.data[0] * x[0] + w.w.data[1] * x[1] + w.u.data[0] * h[0] + w.b[0];
        let zf = w.w.data[2] * x[0] + w.w.data[3] * x[1] + w.u.data[1] * h[0] + w.b[1];
        let zg = w.w.data[4] * x[0] + w.w.data[5] * x[1] + w.u.data[2] * h[0] + w.b[2];
        let zo = w.w.data[6] * x[0] + w.w.data[7] * x[1] + w.u.data[3] * h[0] + w.b[3];
        let c_ref = s(zf) * c[0] + s(zi) * zg.tanh();
        let h_ref = s(zo) * c_ref.tanh();
        assert!((c1[0] - c_ref).abs() < 1e-12);
        assert!((h1[0] - h_ref).abs() < 1e-12);
    }

    #[test]
    fn lstm_cell_shape_mismatch() {
        let w = LstmDir::zeros(3, 4);
        assert!(matches!(
            lstm_cell(&[0.0; 5], &[0.0; 3], &[0.0; 3], &w).unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn forward_rejects_empty_sequence() {
        let p = tiny_params(1);
        assert!(matches!(
            forward(&p, &[], &[], None).unwrap_err(),
            Error::EmptySequence
        ));
    }

    #[test]
    fn forward_single_step_attention_is_one() {
        let p = tiny_params(2);
        let trace = forward(&p, &[1], &random_aux(1, 9), None).unwrap();
        assert_eq!(trace.attn_weights, vec![1.0]);
        assert_eq!(trace.context, trace.concat2[0]);
    }

    #[test]
    fn dropout_zero_equals_inference() {
        let p = tiny_params(3);
        let aux = random_aux(4, 4);
        let ids = [0, 1, 2, 3];
        let mut rng = DetRng::new(5);
        let with_drop = forward(
            &p,
            &ids,
            &aux,
            Some(DropoutSpec {
                rate: 0.0,
                rng: &mut rng,
            }),
        )
        .unwrap();
        let without = forward(&p, &ids, &aux, None).unwrap();
        assert_eq!(with_drop.probs, without.probs);
    }

    #[test]
    fn reversed_input_swaps_direction_roles() {
        // with tied weights, the backward direction over x equals the
        // forward direction over reversed x, mirrored in time
        let p = tiny_params(6);
        let aux = random_aux(3, 7);
        let xs = fuse_inputs(&p, &[1, 2, 4], &aux);
        let rev_xs: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let fwd_on_rev = lstm_run_dir(&p.layer1.fwd, &rev_xs, false);
        let bwd_on_orig = lstm_run_dir(&p.layer1.fwd, &xs, true);
        for t in 0..3 {
            for j in 0..p.cfg.hidden {
                assert!((fwd_on_rev.h[t][j] - bwd_on_orig.h[2 - t][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_uniform_on_identical_hiddens() {
        let p = tiny_params(8);
        let hiddens = vec![vec![0.3; p.cfg.h2()]; 5];
        let (context, weights) = additive_attention(&hiddens, &p.attn_w, &p.attn_v).unwrap();
        for w in &weights {
            assert!((w - 0.2).abs() < 1e-12);
        }
        for c in &context {
            assert!((c - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_weights_positive_sum_one() {
        let p = tiny_params(9);
        let aux = random_aux(6, 10);
        let trace = forward(&p, &[0, 1, 2, 3, 4, 1], &aux, None).unwrap();
        let sum: f64 = trace.attn_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(trace.attn_weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn classify_zero_everything_is_uniform() {
        let heads: [Head; 4] = std::array::from_fn(|_| Head {
            w: Mat::zeros(3, 6),
            b: vec![0.0; 3],
        });
        let pred = classify(&[0.0; 6], &heads);
        for d in Dimension::ALL {
            for p in pred.get(d) {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prediction_distributions_valid() {
        let p = tiny_params(11);
        let aux = random_aux(5, 12);
        let trace = forward(&p, &[1, 0, 3, 2, 1], &aux, None).unwrap();
        assert!(Prediction { probs: trace.probs }.is_valid());
    }

    #[test]
    fn focal_reduces_to_cross_entropy_at_gamma_zero() {
        let mut rng = DetRng::new(13);
        let ones = [[1.0; 3]; 4];
        for _ in 0..200 {
            let mut probs = [[0.0; 3]; 4];
            for row in probs.iter_mut() {
                let raw: Vec<f64> = (0..3).map(|_| rng.uniform(0.05, 1.0)).collect();
                let s: f64 = raw.iter().sum();
                for (j, r) in raw.iter().enumerate() {
                    row[j] = r / s;
                }
            }
            let labels = Labels {
                engagement: Level::from_index(rng.below(3)),
                stress: Level::from_index(rng.below(3)),
                motivation: Level::from_index(rng.below(3)),
                understanding: Level::from_index(rng.below(3)),
            };
            let pred = Prediction { probs };
            let focal = focal_loss(&pred, &labels, 0.0, &ones);
            let ce: f64 = Dimension::ALL
                .iter()
                .map(|&d| -probs[d.index()][labels.get(d).index()].ln())
                .sum();
            assert!((focal - ce).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_worked_value() {
        // p = 0.5, gamma = 2, one dimension: 0.25 * ln 2
        let mut probs = [[1.0 - 2.0 * FOCAL_P_MIN, FOCAL_P_MIN, FOCAL_P_MIN]; 4];
        probs[0] = [0.5, 0.25, 0.25];
        let labels = Labels {
            engagement: Level::Negative,
            stress: Level::Negative,
            motivation: Level::Negative,
            understanding: Level::Negative,
        };
        let pred = Prediction { probs };
        let loss = focal_loss(&pred, &labels, 2.0, &[[1.0; 3]; 4]);
        // other three dimensions contribute ~0 (p ~= 1)
        let expected = 0.25 * std::f64::consts::LN_2;
        assert!((loss - expected).abs() < 1e-12, "loss={loss}");
    }

    #[test]
    fn focal_near_certain_is_near_zero() {
        let probs = [[1.0 - 2e-7, 1e-7, 1e-7]; 4];
        let labels = Labels {
            engagement: Level::Negative,
            stress: Level::Negative,
            motivation: Level::Negative,
            understanding: Level::Negative,
        };
        let loss = focal_loss(&Prediction { probs }, &labels, 2.0, &[[1.0; 3]; 4]);
        assert!(loss >= 0.0);
        assert!(loss < 1e-12, "loss={loss}");
    }

    #[test]
    fn unused_embedding_rows_get_zero_gradient() {
        let mut p = tiny_params(14);
        // heads start at zero; give them weight so gradient flows upstream
        let mut rng = DetRng::new(77);
        for head in p.heads.iter_mut() {
            for v in head.w.data.iter_mut() {
                *v = rng.uniform(-0.3, 0.3);
            }
        }
        let aux = random_aux(3, 15);
        let trace = forward(&p, &[1, 2, 1], &aux, None).unwrap();
        let labels = Labels {
            engagement: Level::Neutral,
            stress: Level::Negative,
            motivation: Level::Positive,
            understanding: Level::Neutral,
        };
        let mut grads = p.zeros_like();
        backward(&trace, &p, &labels, 2.0, &[[1.0; 3]; 4], 1.0, &mut grads);
        // rows 0, 3, 4 untouched
        for row in [0usize, 3, 4] {
            assert!(grads.embedding.row(row).iter().all(|&g| g == 0.0));
        }
        assert!(grads.embedding.row(1).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn tensor_names_align_between_views() {
        let mut p = tiny_params(16);
        let names_a: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        let names_b: Vec<String> = p.tensors_mut().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names_a, names_b);
        let total: usize = p.tensors().iter().map(|(_, t)| t.len()).sum();
        assert_eq!(p.param_count(), total);
    }
}

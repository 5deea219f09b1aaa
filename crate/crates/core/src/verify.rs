//! Built-in verification suite: independent oracles for the gradient
//! computation, the DSP pipeline, and the metric implementations.
//!
//! The references here deliberately avoid the implementation paths they
//! check: the MFCC oracle uses a naive O(N^2) DFT and direct summation,
//! the gradient oracle uses central finite differences, and the metric
//! oracle is a table of hand-reduced rational values.

use crate::corpus::{Labels, Level};
use crate::eval::{accuracy, cohen_kappa, macro_f1, macro_precision, macro_recall, ConfusionMatrix};
use crate::fusion::features::PreparedRecord;
use crate::fusion::model::{ModelConfig, ModelParams};
use crate::fusion::train::{batch_loss, batch_loss_and_grads};
use crate::linalg::Mat;
use crate::prosody;
use crate::rng::DetRng;

/// Maximum allowed relative gradient error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Maximum allowed absolute MFCC deviation from the naive reference.
pub const MFCC_TOLERANCE: f64 = 1e-6;
/// Maximum allowed pitch error on pure tones, in Hz.
pub const PITCH_TOLERANCE_HZ: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "{} {} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Run the verification suite. `quick` runs the gradient check only.
/// `inject_grad_bug` perturbs one analytic gradient to prove the check
/// can fail (negative-test fixture).
pub fn run_all(quick: bool, inject_grad_bug: bool) -> Vec<CheckResult> {
    let mut out = vec![gradient_check(inject_grad_bug)];
    if !quick {
        out.push(dsp_mfcc_check());
        out.push(dsp_pitch_check());
        out.push(metric_oracle_check());
    }
    out
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

fn gradcheck_items(vocab: usize, rng: &mut DetRng) -> Vec<PreparedRecord> {
    let lengths = [5usize, 3, 4, 2];
    let level_mix = [
        [Level::Negative, Level::Neutral, Level::Positive, Level::Neutral],
        [Level::Neutral, Level::Negative, Level::Neutral, Level::Positive],
        [Level::Positive, Level::Neutral, Level::Negative, Level::Neutral],
        [Level::Neutral, Level::Positive, Level::Neutral, Level::Negative],
    ];
    lengths
        .iter()
        .zip(level_mix)
        .enumerate()
        .map(|(n, (&t_len, mix))| PreparedRecord {
            record_id: format!("g{n}"),
            token_ids: (0..t_len).map(|_| rng.below(vocab)).collect(),
            aux: (0..t_len)
                .map(|_| std::array::from_fn(|_| rng.uniform(-1.0, 1.0)))
                .collect(),
            labels: Labels {
                engagement: mix[0],
                stress: mix[1],
                motivation: mix[2],
                understanding: mix[3],
            },
        })
        .collect()
}

/// Analytic gradients of the mean batch focal loss vs central finite
/// differences over every parameter of a tiny model (H = 8, d_text = 8,
/// sequences <= 5, batch 4, 64-bit floats).
pub fn gradient_check(inject_bug: bool) -> CheckResult {
    let cfg = ModelConfig {
        d_text: 8,
        hidden: 8,
    };
    let vocab = 12;
    let mut rng = DetRng::new(0x6d0d);
    let embedding = Mat::uniform(vocab, cfg.d_text, -0.5, 0.5, &mut rng);
    let mut params = ModelParams::init(embedding, cfg, 0x6d0d);
    let items = gradcheck_items(vocab, &mut rng);
    let refs: Vec<&PreparedRecord> = items.iter().collect();
    let gamma = 2.0;
    let alpha = [[1.0, 1.3, 0.7]; 4];

    let mut analytic = params.zeros_like();
    batch_loss_and_grads(&params, &refs, gamma, &alpha, &mut analytic).expect("forward");

    if inject_bug {
        // negative-test fixture: corrupt one analytic value
        for (name, t) in analytic.tensors_mut() {
            if name == "layer1.fwd.w" {
                t[0] += 1e-3;
            }
        }
    }

    // Two step sizes: the small one stays clear of ReLU kinks, the large
    // one resolves tiny gradients above the rounding floor (loss
    // differences cancel rounding to ~1 ulp along the shared path). A
    // systematic backward error fails at both.
    let steps = [1e-5, 1e-3];
    let mut worst_err = 0.0f64;
    let mut worst_name = String::from("-");
    let tensor_count = params.tensors().len();
    for ti in 0..tensor_count {
        let len = params.tensors()[ti].1.len();
        let name = params.tensors()[ti].0.clone();
        for j in 0..len {
            let ga = analytic.tensors()[ti].1[j];
            let mut err = f64::INFINITY;
            for h in steps {
                {
                    let mut t = params.tensors_mut();
                    t[ti].1[j] += h;
                }
                let up = batch_loss(&params, &refs, gamma, &alpha).expect("forward");
                {
                    let mut t = params.tensors_mut();
                    t[ti].1[j] -= 2.0 * h;
                }
                let down = batch_loss(&params, &refs, gamma, &alpha).expect("forward");
                {
                    let mut t = params.tensors_mut();
                    t[ti].1[j] += h;
                }
                let fd = (up - down) / (2.0 * h);
                err = err.min((ga - fd).abs() / fd.abs().max(1e-8));
                if err <= GRAD_TOLERANCE {
                    break;
                }
            }
            if err > worst_err {
                worst_err = err;
                worst_name = name.clone();
            }
        }
    }

    CheckResult {
        name: "gradient_check",
        passed: worst_err <= GRAD_TOLERANCE,
        detail: format!("max rel err {worst_err:.3e} ({worst_name}), tolerance {GRAD_TOLERANCE:.0e}"),
    }
}

// ---------------------------------------------------------------------------
// DSP oracles
// ---------------------------------------------------------------------------

/// Naive O(N^2) reference MFCC: direct DFT, direct mel filter sums,
/// direct DCT-II. Mirrors the documented pipeline definition, not the
/// implementation.
pub fn naive_mfcc(frame: &[f64], sample_rate: u32) -> Vec<f64> {
    let n_fft = prosody::N_FFT;
    let n_mels = prosody::N_MELS;
    let n_coeffs = prosody::N_COEFFS;

    // pre-emphasis
    let mut emphasized: Vec<f64> = Vec::with_capacity(frame.len());
    for (i, &x) in frame.iter().enumerate() {
        emphasized.push(if i == 0 {
            x
        } else {
            x - prosody::PRE_EMPHASIS * frame[i - 1]
        });
    }
    // Hamming window
    let n = emphasized.len();
    for (i, x) in emphasized.iter_mut().enumerate() {
        let w = if n == 1 {
            1.0
        } else {
            0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0)).cos()
        };
        *x *= w;
    }
    // direct DFT magnitude over n_fft bins (zero-padded)
    let mut magnitude = vec![0.0; n_fft / 2 + 1];
    for (k, m) in magnitude.iter_mut().enumerate() {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &x) in emphasized.iter().enumerate() {
            let ang = 2.0 * std::f64::consts::PI * k as f64 * i as f64 / n_fft as f64;
            re += x * ang.cos();
            im -= x * ang.sin();
        }
        *m = (re * re + im * im).sqrt();
    }
    // mel filterbank by direct evaluation of the triangle formula
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let mel_inv = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_inv(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / n_fft as f64;
    let mut log_energy = vec![0.0; n_mels];
    for (m, le) in log_energy.iter_mut().enumerate() {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut acc = 0.0;
        for (k, &mag) in magnitude.iter().enumerate() {
            let f = k as f64 * bin_hz;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            acc += w * mag;
        }
        *le = acc.max(prosody::LOG_FLOOR).ln();
    }
    // direct orthonormal DCT-II
    (0..n_coeffs)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_mels as f64).sqrt()
            } else {
                (2.0 / n_mels as f64).sqrt()
            };
            let sum: f64 = log_energy
                .iter()
                .enumerate()
                .map(|(i, &x)| {
                    x * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64
                        / (2.0 * n_mels as f64))
                        .cos()
                })
                .sum();
            scale * sum
        })
        .collect()
}

/// MFCC pipeline vs the naive reference on 100 random frames.
pub fn dsp_mfcc_check() -> CheckResult {
    let mut rng = DetRng::new(0xd59);
    let mut max_diff = 0.0f64;
    for case in 0..100 {
        let frame: Vec<f64> = match case {
            0 => vec![0.0; 400],
            1 => (0..400)
                .map(|i| (2.0 * std::f64::consts::PI * 173.0 * i as f64 / 16000.0).sin())
                .collect(),
            _ => (0..400).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        };
        let fast = prosody::mfcc(&frame, 16_000);
        let naive = naive_mfcc(&frame, 16_000);
        for (a, b) in fast.iter().zip(&naive) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    CheckResult {
        name: "dsp_mfcc_oracle",
        passed: max_diff <= MFCC_TOLERANCE,
        detail: format!("max abs diff {max_diff:.3e}, tolerance {MFCC_TOLERANCE:.0e}"),
    }
}

/// Pitch estimator error over pure tones swept 80-400 Hz.
pub fn dsp_pitch_check() -> CheckResult {
    let sr = 16_000u32;
    let mut max_err = 0.0f64;
    let mut worst = 0.0f64;
    let mut rng = DetRng::new(0xf0);
    let mut freq = 80.0;
    while freq <= 400.0 {
        let phase = rng.uniform(0.0, std::f64::consts::PI);
        let frame: Vec<f64> = (0..400)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64 + phase).sin())
            .collect();
        let est = prosody::estimate_pitch(&frame, sr);
        let err = (est - freq).abs();
        if err > max_err {
            max_err = err;
            worst = freq;
        }
        freq += 1.0;
    }
    CheckResult {
        name: "dsp_pitch_sweep",
        passed: max_err <= PITCH_TOLERANCE_HZ,
        detail: format!("max err {max_err:.3} Hz at {worst:.0} Hz, tolerance {PITCH_TOLERANCE_HZ} Hz"),
    }
}

// ---------------------------------------------------------------------------
// Metric oracles
// ---------------------------------------------------------------------------

struct MetricCase {
    counts: [[u64; 3]; 3],
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    kappa: f64,
}

/// Hand-reduced rational expectations for six fixed confusion matrices.
fn metric_cases() -> Vec<MetricCase> {
    vec![
        // two balanced classes, one empty
        MetricCase {
            counts: [[4, 1, 0], [1, 4, 0], [0, 0, 0]],
            accuracy: 0.8,
            precision: 1.6 / 3.0,
            recall: 1.6 / 3.0,
            f1: 1.6 / 3.0,
            kappa: 0.6,
        },
        // perfect diagonal
        MetricCase {
            counts: [[3, 0, 0], [0, 5, 0], [0, 0, 2]],
            accuracy: 1.0,
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
            kappa: 1.0,
        },
        // everything predicted as class 0, balanced truth
        MetricCase {
            counts: [[5, 0, 0], [5, 0, 0], [5, 0, 0]],
            accuracy: 1.0 / 3.0,
            precision: 1.0 / 9.0,
            recall: 1.0 / 3.0,
            f1: 1.0 / 6.0,
            kappa: 0.0,
        },
        // mixed errors, P = R per class
        MetricCase {
            counts: [[2, 1, 0], [0, 3, 1], [1, 0, 2]],
            accuracy: 0.7,
            precision: 25.0 / 36.0,
            recall: 25.0 / 36.0,
            f1: 25.0 / 36.0,
            kappa: 6.0 / 11.0,
        },
        // everything predicted Neutral, imbalanced truth
        MetricCase {
            counts: [[0, 2, 0], [0, 6, 0], [0, 2, 0]],
            accuracy: 0.6,
            precision: 0.2,
            recall: 1.0 / 3.0,
            f1: 0.25,
            kappa: 0.0,
        },
        // uniform noise
        MetricCase {
            counts: [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
            accuracy: 1.0 / 3.0,
            precision: 1.0 / 3.0,
            recall: 1.0 / 3.0,
            f1: 1.0 / 3.0,
            kappa: 0.0,
        },
    ]
}

/// Accuracy, macro P/R/F1, and Cohen's kappa vs the hand-computed table,
/// equality within 1e-12.
pub fn metric_oracle_check() -> CheckResult {
    let mut max_diff = 0.0f64;
    let mut worst = String::from("-");
    for (i, case) in metric_cases().iter().enumerate() {
        let cm = ConfusionMatrix {
            counts: case.counts,
        };
        let checks = [
            ("accuracy", accuracy(&cm).unwrap(), case.accuracy),
            ("precision", macro_precision(&cm).unwrap(), case.precision),
            ("recall", macro_recall(&cm).unwrap(), case.recall),
            ("f1", macro_f1(&cm).unwrap(), case.f1),
            ("kappa", cohen_kappa(&cm).unwrap(), case.kappa),
        ];
        for (metric, got, want) in checks {
            let diff = (got - want).abs();
            if diff > max_diff {
                max_diff = diff;
                worst = format!("case {i} {metric}");
            }
        }
    }
    CheckResult {
        name: "metric_oracles",
        passed: max_diff <= 1e-12,
        detail: format!("max abs diff {max_diff:.3e} ({worst}), tolerance 1e-12"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::model::AUX_DIM;
    use std::time::Instant;

    #[test]
    fn gradient_check_passes_within_budget() {
        let start = Instant::now();
        let result = gradient_check(false);
        assert!(result.passed, "{}", result.line());
        assert!(start.elapsed().as_secs() < 30, "took {:?}", start.elapsed());
    }

    #[test]
    fn injected_bug_is_caught_and_named() {
        let result = gradient_check(true);
        assert!(!result.passed);
        assert!(result.detail.contains("layer1.fwd.w"), "{}", result.detail);
    }

    #[test]
    fn mfcc_oracle_within_tolerance() {
        let start = Instant::now();
        let result = dsp_mfcc_check();
        assert!(result.passed, "{}", result.line());
        assert!(start.elapsed().as_secs() < 30, "took {:?}", start.elapsed());
    }

    #[test]
    fn pitch_sweep_within_tolerance() {
        let result = dsp_pitch_check();
        assert!(result.passed, "{}", result.line());
    }

    #[test]
    fn metric_oracles_exact() {
        let result = metric_oracle_check();
        assert!(result.passed, "{}", result.line());
    }

    #[test]
    fn quick_mode_runs_gradcheck_only() {
        let results = run_all(true, false);
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].name, "gradient_check");
    }

    #[test]
    fn full_suite_is_green() {
        for r in run_all(false, false) {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn unused_aux_dim_sanity() {
        // gradcheck items must carry the full fused width
        let mut rng = DetRng::new(1);
        let items = gradcheck_items(5, &mut rng);
        for i in &items {
            for a in &i.aux {
                assert_eq!(a.len(), AUX_DIM);
            }
        }
    }
}

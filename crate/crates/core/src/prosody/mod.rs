//! Acoustic feature extraction: pitch, intensity, speech-rate proxy, and
//! MFCCs, with z-score normalization and token-level temporal alignment.
//! Reimplements the feature subset the pipeline needs instead of depending
//! on an external toolkit.

mod fft;
pub mod wav;

pub use fft::{fft_in_place, magnitude_spectrum};

use std::io::Write;

use crate::error::Result;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LEN_S: f64 = 0.025;
pub const HOP_S: f64 = 0.010;
pub const N_FFT: usize = 512;
pub const N_MELS: usize = 26;
pub const N_COEFFS: usize = 13;
pub const PRE_EMPHASIS: f64 = 0.97;
pub const PITCH_MIN_HZ: f64 = 50.0;
pub const PITCH_MAX_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.3;
pub const LOG_FLOOR: f64 = 1e-10;
pub const SILENCE_FLOOR_DB: f64 = -140.0;
/// Post-normalization value assigned to unvoiced (pitch = 0) frames.
pub const UNVOICED_SENTINEL: f64 = -3.0;
/// pitch + intensity + speech rate + 13 MFCCs.
pub const FEATURE_DIM: usize = 16;

/// Mono audio, samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Per-frame acoustic features. `pitch_hz == 0` means unvoiced.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyFrame {
    pub pitch_hz: f64,
    pub intensity_db: f64,
    pub mfcc: [f64; N_COEFFS],
}

/// Per-feature mean/std, computed on the training split only.
/// Feature order: pitch (voiced frames only), intensity, speech rate,
/// mfcc0..mfcc12.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

/// A clip's frame sequence plus clip-level speech rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyTrack {
    pub frames: Vec<ProsodyFrame>,
    /// Seconds between frame starts.
    pub frame_hop: f64,
    /// Analysis window length in seconds.
    pub frame_len: f64,
    /// Intensity-peak rate in peaks/second.
    pub speech_rate: f64,
    /// Present once `normalize` has been applied.
    pub norm: Option<NormStats>,
}

/// Slice a clip into raw (unwindowed) frames. Frame count is
/// floor((N - L) / H) + 1; clips shorter than one frame yield no frames.
pub fn frame_signal(clip: &AudioClip, frame_len_s: f64, hop_s: f64) -> Vec<Vec<f64>> {
    let l = (frame_len_s * clip.sample_rate as f64).round() as usize;
    let h = (hop_s * clip.sample_rate as f64).round() as usize;
    if l == 0 || h == 0 || clip.samples.len() < l {
        return Vec::new();
    }
    let count = (clip.samples.len() - l) / h + 1;
    (0..count)
        .map(|i| clip.samples[i * h..i * h + l].to_vec())
        .collect()
}

fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0)).cos())
        .collect()
}

/// Autocorrelation pitch estimate on a raw frame. Searches lags covering
/// 50-500 Hz; a normalized peak below the voicing threshold maps to 0
/// (unvoiced). Parabolic interpolation refines the winning lag.
pub fn estimate_pitch(frame: &[f64], sample_rate: u32) -> f64 {
    let n = frame.len();
    let sr = sample_rate as f64;
    let lag_min = (sr / PITCH_MAX_HZ).floor() as usize;
    let lag_max = ((sr / PITCH_MIN_HZ).ceil() as usize).min(n.saturating_sub(2));
    if lag_min < 1 || lag_min > lag_max {
        return 0.0;
    }

    // normalized autocorrelation r(t) in [-1, 1]
    let r: Vec<f64> = (lag_min..=lag_max)
        .map(|tau| {
            let m = n - tau;
            let mut num = 0.0;
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for i in 0..m {
                num += frame[i] * frame[i + tau];
                e0 += frame[i] * frame[i];
                e1 += frame[i + tau] * frame[i + tau];
            }
            let denom = (e0 * e1).sqrt();
            if denom > 0.0 {
                num / denom
            } else {
                0.0
            }
        })
        .collect();

    let r_max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if r_max < VOICING_THRESHOLD {
        return 0.0;
    }

    // Smallest local maximum within 5% of the global peak; this avoids
    // period-multiple (sub-octave) errors when r is near-flat across
    // multiples of the true period.
    let is_local_max = |i: usize| -> bool {
        let left_ok = i == 0 || r[i] >= r[i - 1];
        let right_ok = i + 1 >= r.len() || r[i] >= r[i + 1];
        left_ok && right_ok
    };
    let mut best = None;
    for i in 0..r.len() {
        if r[i] >= 0.95 * r_max && is_local_max(i) {
            best = Some(i);
            break;
        }
    }
    let peak = match best {
        Some(i) => i,
        None => return 0.0,
    };

    // parabolic interpolation around the peak lag
    let lag = (lag_min + peak) as f64;
    let refined = if peak > 0 && peak + 1 < r.len() {
        let (a, b, c) = (r[peak - 1], r[peak], r[peak + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            lag + 0.5 * (a - c) / denom
        } else {
            lag
        }
    } else {
        lag
    };

    (sr / refined).clamp(PITCH_MIN_HZ, PITCH_MAX_HZ)
}

/// Frame intensity: 20*log10(max(RMS, 1e-7)), so silence floors at -140 dBFS.
pub fn intensity(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return SILENCE_FLOOR_DB;
    }
    let rms = (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();
    20.0 * rms.max(1e-7).log10()
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank over `n_fft/2 + 1` magnitude bins, filters
/// spanning 0 Hz to Nyquist with equal mel spacing. Weights are evaluated
/// at exact bin frequencies (no bin snapping).
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate as f64 / n_fft as f64;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f >= lo && f <= mid && mid > lo {
                        (f - lo) / (mid - lo)
                    } else if f > mid && f <= hi && hi > mid {
                        (hi - f) / (hi - mid)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, keeping the first `n_out` coefficients.
pub fn dct2_orthonormal(xs: &[f64], n_out: usize) -> Vec<f64> {
    let n = xs.len();
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        let sum: f64 = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                x * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n as f64))
                    .cos()
            })
            .sum();
        out.push(scale * sum);
    }
    out
}

/// MFCC of one raw frame: pre-emphasis 0.97, Hamming window, zero-pad to
/// `n_fft`, magnitude spectrum, triangular mel filterbank, natural log with
/// a 1e-10 floor, orthonormal DCT-II keeping coefficients 0..n_coeffs-1.
pub fn mfcc_with(
    frame: &[f64],
    sample_rate: u32,
    n_fft: usize,
    n_mels: usize,
    n_coeffs: usize,
) -> Vec<f64> {
    let mut emphasized = Vec::with_capacity(frame.len());
    for (i, &x) in frame.iter().enumerate() {
        if i == 0 {
            emphasized.push(x);
        } else {
            emphasized.push(x - PRE_EMPHASIS * frame[i - 1]);
        }
    }
    let window = hamming(emphasized.len());
    for (x, w) in emphasized.iter_mut().zip(&window) {
        *x *= w;
    }
    let spectrum = magnitude_spectrum(&emphasized, n_fft);
    let filterbank = mel_filterbank(n_mels, n_fft, sample_rate);
    let log_energies: Vec<f64> = filterbank
        .iter()
        .map(|filt| {
            let e: f64 = filt.iter().zip(&spectrum).map(|(w, m)| w * m).sum();
            e.max(LOG_FLOOR).ln()
        })
        .collect();
    dct2_orthonormal(&log_energies, n_coeffs)
}

pub fn mfcc(frame: &[f64], sample_rate: u32) -> [f64; N_COEFFS] {
    let v = mfcc_with(frame, sample_rate, N_FFT, N_MELS, N_COEFFS);
    let mut out = [0.0; N_COEFFS];
    out.copy_from_slice(&v);
    out
}

/// Intensity-peak speech rate: local maxima of the 5-frame moving average
/// of the intensity contour that exceed mean + 0.5*std, divided by clip
/// duration in seconds.
pub fn speech_rate_from_contour(intensities: &[f64], duration_s: f64) -> f64 {
    if duration_s <= 0.0 || intensities.is_empty() {
        return 0.0;
    }
    let n = intensities.len();
    let smoothed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            intensities[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let mean = smoothed.iter().sum::<f64>() / n as f64;
    let var = smoothed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let threshold = mean + 0.5 * var.sqrt();
    let mut peaks = 0;
    for i in 0..n {
        let left = i == 0 || smoothed[i] > smoothed[i - 1];
        let right = i + 1 >= n || smoothed[i] >= smoothed[i + 1];
        if left && right && smoothed[i] > threshold {
            peaks += 1;
        }
    }
    peaks as f64 / duration_s
}

/// Run the full per-clip extraction: framing, pitch, intensity, MFCC, and
/// the clip-level speech rate.
pub fn extract_track(clip: &AudioClip) -> ProsodyTrack {
    let frames = frame_signal(clip, FRAME_LEN_S, HOP_S);
    let prosody_frames: Vec<ProsodyFrame> = frames
        .iter()
        .map(|f| ProsodyFrame {
            pitch_hz: estimate_pitch(f, clip.sample_rate),
            intensity_db: intensity(f),
            mfcc: mfcc(f, clip.sample_rate),
        })
        .collect();
    let intensities: Vec<f64> = prosody_frames.iter().map(|f| f.intensity_db).collect();
    let speech_rate = speech_rate_from_contour(&intensities, clip.duration_s());
    ProsodyTrack {
        frames: prosody_frames,
        frame_hop: HOP_S,
        frame_len: FRAME_LEN_S,
        speech_rate,
        norm: None,
    }
}

fn sample_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Compute per-feature stats over a set of (training-split) tracks.
/// Unvoiced frames are excluded from the pitch statistics; speech rate is
/// aggregated per track.
pub fn compute_norm_stats(tracks: &[&ProsodyTrack]) -> NormStats {
    let mut mean = [0.0; FEATURE_DIM];
    let mut std = [0.0; FEATURE_DIM];

    let voiced: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.frames.iter())
        .filter(|f| f.pitch_hz > 0.0)
        .map(|f| f.pitch_hz)
        .collect();
    (mean[0], std[0]) = sample_mean_std(&voiced);

    let ints: Vec<f64> = tracks
        .iter()
        .flat_map(|t| t.frames.iter().map(|f| f.intensity_db))
        .collect();
    (mean[1], std[1]) = sample_mean_std(&ints);

    let rates: Vec<f64> = tracks.iter().map(|t| t.speech_rate).collect();
    (mean[2], std[2]) = sample_mean_std(&rates);

    for c in 0..N_COEFFS {
        let vals: Vec<f64> = tracks
            .iter()
            .flat_map(|t| t.frames.iter().map(move |f| f.mfcc[c]))
            .collect();
        (mean[3 + c], std[3 + c]) = sample_mean_std(&vals);
    }

    NormStats { mean, std }
}

fn z_score(x: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        (x - mean) / std
    } else {
        x - mean
    }
}

/// Z-score every feature against training-split stats. Unvoiced pitch (0)
/// maps to the sentinel -3.0 instead of being z-scored.
pub fn normalize(track: &ProsodyTrack, stats: &NormStats) -> ProsodyTrack {
    let frames = track
        .frames
        .iter()
        .map(|f| {
            let pitch = if f.pitch_hz > 0.0 {
                z_score(f.pitch_hz, stats.mean[0], stats.std[0])
            } else {
                UNVOICED_SENTINEL
            };
            let mut mfcc = [0.0; N_COEFFS];
            for c in 0..N_COEFFS {
                mfcc[c] = z_score(f.mfcc[c], stats.mean[3 + c], stats.std[3 + c]);
            }
            ProsodyFrame {
                pitch_hz: pitch,
                intensity_db: z_score(f.intensity_db, stats.mean[1], stats.std[1]),
                mfcc,
            }
        })
        .collect();
    ProsodyTrack {
        frames,
        frame_hop: track.frame_hop,
        frame_len: track.frame_len,
        speech_rate: z_score(track.speech_rate, stats.mean[2], stats.std[2]),
        norm: Some(stats.clone()),
    }
}

fn frame_vector(frame: &ProsodyFrame, rate: f64) -> [f64; FEATURE_DIM] {
    let mut v = [0.0; FEATURE_DIM];
    v[0] = frame.pitch_hz;
    v[1] = frame.intensity_db;
    v[2] = rate;
    v[3..3 + N_COEFFS].copy_from_slice(&frame.mfcc);
    v
}

/// Clip-level mean feature vector (zeros for an empty track).
pub fn clip_mean_vector(track: &ProsodyTrack) -> [f64; FEATURE_DIM] {
    let mut acc = [0.0; FEATURE_DIM];
    if track.frames.is_empty() {
        acc[2] = track.speech_rate;
        return acc;
    }
    for f in &track.frames {
        let v = frame_vector(f, track.speech_rate);
        for (a, b) in acc.iter_mut().zip(&v) {
            *a += b;
        }
    }
    for a in acc.iter_mut() {
        *a /= track.frames.len() as f64;
    }
    acc
}

/// Mean-pool frames whose centers fall inside each token span (seconds,
/// half-open). Tokens with no frames get the clip-level mean vector.
/// Output length always equals the span count.
pub fn align_to_tokens(track: &ProsodyTrack, spans: &[(f64, f64)]) -> Vec<[f64; FEATURE_DIM]> {
    let fallback = clip_mean_vector(track);
    let centers: Vec<f64> = (0..track.frames.len())
        .map(|i| i as f64 * track.frame_hop + track.frame_len / 2.0)
        .collect();
    spans
        .iter()
        .map(|&(start, end)| {
            let mut acc = [0.0; FEATURE_DIM];
            let mut count = 0usize;
            for (i, &c) in centers.iter().enumerate() {
                if c >= start && c < end {
                    let v = frame_vector(&track.frames[i], track.speech_rate);
                    for (a, b) in acc.iter_mut().zip(&v) {
                        *a += b;
                    }
                    count += 1;
                }
            }
            if count == 0 {
                fallback
            } else {
                for a in acc.iter_mut() {
                    *a /= count as f64;
                }
                acc
            }
        })
        .collect()
}

/// Debug dump: `frame,pitch_hz,intensity_db,mfcc0..mfcc12`.
pub fn write_feature_csv<W: Write>(track: &ProsodyTrack, w: &mut W) -> Result<()> {
    let mfcc_cols: Vec<String> = (0..N_COEFFS).map(|c| format!("mfcc{c}")).collect();
    writeln!(w, "frame,pitch_hz,intensity_db,{}", mfcc_cols.join(","))?;
    for (i, f) in track.frames.iter().enumerate() {
        let mfcc: Vec<String> = f.mfcc.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(
            w,
            "{i},{:.6},{:.6},{}",
            f.pitch_hz,
            f.intensity_db,
            mfcc.join(",")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_clip(freq: f64, duration_s: f64, amplitude: f64) -> AudioClip {
        let sr = DEFAULT_SAMPLE_RATE;
        let n = (duration_s * sr as f64).round() as usize;
        let samples = (0..n)
            .map(|i| amplitude * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin())
            .collect();
        AudioClip {
            samples,
            sample_rate: sr,
        }
    }

    #[test]
    fn frame_count_one_second() {
        let clip = sine_clip(100.0, 1.0, 0.5);
        let frames = frame_signal(&clip, 0.025, 0.010);
        assert_eq!(frames.len(), 98); // floor((16000-400)/160)+1
        assert_eq!(frames[0].len(), 400);
    }

    #[test]
    fn frame_boundary_cases() {
        let clip = AudioClip {
            samples: vec![0.1; 400],
            sample_rate: 16_000,
        };
        assert_eq!(frame_signal(&clip, 0.025, 0.010).len(), 1);
        let empty = AudioClip {
            samples: vec![],
            sample_rate: 16_000,
        };
        assert!(frame_signal(&empty, 0.025, 0.010).is_empty());
        let short = AudioClip {
            samples: vec![0.1; 399],
            sample_rate: 16_000,
        };
        assert!(frame_signal(&short, 0.025, 0.010).is_empty());
    }

    #[test]
    fn pitch_pure_tone() {
        let clip = sine_clip(220.0, 0.05, 0.8);
        let f = estimate_pitch(&clip.samples[..400], 16_000);
        assert!((f - 220.0).abs() <= 2.0, "estimated {f}");
    }

    #[test]
    fn pitch_white_noise_unvoiced() {
        let mut rng = crate::rng::DetRng::new(11);
        let frame: Vec<f64> = (0..400).map(|_| rng.uniform(-0.5, 0.5)).collect();
        assert_eq!(estimate_pitch(&frame, 16_000), 0.0);
    }

    #[test]
    fn pitch_square_wave_no_octave_error() {
        // 100 Hz square wave at 16 kHz: period 160 samples.
        let frame: Vec<f64> = (0..400)
            .map(|i| if (i / 80) % 2 == 0 { 0.7 } else { -0.7 })
            .collect();
        let f = estimate_pitch(&frame, 16_000);
        assert!((f - 100.0).abs() <= 2.0, "estimated {f}");
    }

    #[test]
    fn pitch_zero_frame_unvoiced() {
        assert_eq!(estimate_pitch(&vec![0.0; 400], 16_000), 0.0);
    }

    #[test]
    fn intensity_cases() {
        assert_eq!(intensity(&vec![0.0; 100]), -140.0);
        assert!((intensity(&vec![1.0; 100])).abs() < 1e-12);
        // full-scale sine: RMS = 1/sqrt(2) -> -3.01 dBFS
        let clip = sine_clip(100.0, 0.1, 1.0);
        let db = intensity(&clip.samples[..1600]); // 10 full periods
        assert!((db + 3.0103).abs() < 0.05, "db={db}");
    }

    #[test]
    fn intensity_gain_covariant() {
        let clip = sine_clip(150.0, 0.05, 0.25);
        let frame = &clip.samples[..400];
        let scaled: Vec<f64> = frame.iter().map(|x| 2.5 * x).collect();
        let delta = intensity(&scaled) - intensity(frame);
        assert!((delta - 20.0 * 2.5f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn mfcc_zero_frame_is_dc_only() {
        let coeffs = mfcc(&vec![0.0; 400], 16_000);
        let expected_c0 = (N_MELS as f64).sqrt() * LOG_FLOOR.ln();
        assert!((coeffs[0] - expected_c0).abs() < 1e-9, "c0={}", coeffs[0]);
        for &c in &coeffs[1..] {
            assert!(c.abs() < 1e-9);
        }
    }

    #[test]
    fn mfcc_scaling_only_moves_c0() {
        let clip = sine_clip(173.0, 0.05, 0.4);
        let frame = &clip.samples[..400];
        let doubled: Vec<f64> = frame.iter().map(|x| 2.0 * x).collect();
        let a = mfcc(frame, 16_000);
        let b = mfcc(&doubled, 16_000);
        assert!((a[0] - b[0]).abs() > 1e-6, "c0 should change");
        for c in 1..N_COEFFS {
            assert!((a[c] - b[c]).abs() < 1e-6, "c{c} moved: {} vs {}", a[c], b[c]);
        }
    }

    #[test]
    fn speech_rate_silence_and_bursts() {
        let silent = AudioClip {
            samples: vec![0.0; 32_000],
            sample_rate: 16_000,
        };
        let track = extract_track(&silent);
        assert_eq!(track.speech_rate, 0.0);

        // 4 energy bursts over 2 seconds -> ~2 peaks/sec
        let sr = 16_000usize;
        let mut samples = vec![0.0; 2 * sr];
        for burst in 0..4 {
            let center = sr / 4 + burst * sr / 2;
            for i in 0..1600 {
                let idx = center + i;
                let t = i as f64 / sr as f64;
                let env = (std::f64::consts::PI * i as f64 / 1600.0).sin();
                samples[idx] = 0.8 * env * (2.0 * std::f64::consts::PI * 150.0 * t).sin();
            }
        }
        let clip = AudioClip {
            samples,
            sample_rate: 16_000,
        };
        let track = extract_track(&clip);
        assert!(
            (track.speech_rate - 2.0).abs() <= 0.5,
            "rate={}",
            track.speech_rate
        );
    }

    #[test]
    fn speech_rate_invariant_to_self_concatenation() {
        let sr = 16_000usize;
        let mut samples = vec![0.0; sr];
        for burst in 0..3 {
            let center = sr / 6 + burst * sr / 3;
            for i in 0..800 {
                let env = (std::f64::consts::PI * i as f64 / 800.0).sin();
                samples[center + i] =
                    0.6 * env * (2.0 * std::f64::consts::PI * 180.0 * (i as f64 / sr as f64)).sin();
            }
        }
        let clip = AudioClip {
            samples: samples.clone(),
            sample_rate: 16_000,
        };
        let doubled = AudioClip {
            samples: [samples.clone(), samples].concat(),
            sample_rate: 16_000,
        };
        let r1 = extract_track(&clip).speech_rate;
        let r2 = extract_track(&doubled).speech_rate;
        assert!(r1 > 0.0);
        assert!((r2 - r1).abs() / r1 <= 0.10, "r1={r1} r2={r2}");
    }

    #[test]
    fn normalize_sentinel_and_self_stats() {
        // amplitude-modulated tone so intensity has genuine spread
        let sr = DEFAULT_SAMPLE_RATE;
        let samples: Vec<f64> = (0..8000)
            .map(|i| {
                let t = i as f64 / sr as f64;
                let env = 0.5 + 0.4 * (2.0 * std::f64::consts::PI * 3.0 * t).sin();
                env * (2.0 * std::f64::consts::PI * 200.0 * t).sin()
            })
            .collect();
        let clip = AudioClip {
            samples,
            sample_rate: sr,
        };
        let mut track = extract_track(&clip);
        // splice in an unvoiced frame
        track.frames[0].pitch_hz = 0.0;
        let stats = compute_norm_stats(&[&track]);
        let normed = normalize(&track, &stats);
        assert_eq!(normed.frames[0].pitch_hz, UNVOICED_SENTINEL);

        // per-feature sample std of z-scored values is 1
        let ints: Vec<f64> = normed.frames.iter().map(|f| f.intensity_db).collect();
        let (m, s) = sample_mean_std(&ints);
        assert!(m.abs() < 1e-9, "mean={m}");
        assert!((s - 1.0).abs() < 1e-9, "std={s}");

        let voiced: Vec<f64> = normed
            .frames
            .iter()
            .map(|f| f.pitch_hz)
            .filter(|&p| p != UNVOICED_SENTINEL)
            .collect();
        let (_, ps) = sample_mean_std(&voiced);
        // constant-pitch tone may have zero variance; only check when spread exists
        if stats.std[0] > 0.0 {
            assert!((ps - 1.0).abs() < 1e-9, "pitch std={ps}");
        }
    }

    #[test]
    fn normalize_zero_std_passes_centered() {
        let track = ProsodyTrack {
            frames: vec![
                ProsodyFrame {
                    pitch_hz: 100.0,
                    intensity_db: -20.0,
                    mfcc: [1.0; N_COEFFS],
                };
                3
            ],
            frame_hop: HOP_S,
            frame_len: FRAME_LEN_S,
            speech_rate: 2.0,
            norm: None,
        };
        let stats = compute_norm_stats(&[&track]);
        let normed = normalize(&track, &stats);
        assert_eq!(normed.frames[0].intensity_db, 0.0);
        assert_eq!(normed.frames[0].pitch_hz, 0.0); // centered, std 0
    }

    #[test]
    fn align_whole_clip_is_clip_mean() {
        let clip = sine_clip(150.0, 0.5, 0.5);
        let track = extract_track(&clip);
        let aligned = align_to_tokens(&track, &[(0.0, 0.5)]);
        assert_eq!(aligned.len(), 1);
        let mean = clip_mean_vector(&track);
        for (a, b) in aligned[0].iter().zip(&mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn align_zero_duration_span_falls_back() {
        let clip = sine_clip(150.0, 0.3, 0.5);
        let track = extract_track(&clip);
        let aligned = align_to_tokens(&track, &[(0.1, 0.1)]);
        let mean = clip_mean_vector(&track);
        assert_eq!(aligned[0], mean);
    }

    #[test]
    fn align_stationary_halves_agree() {
        let clip = sine_clip(200.0, 1.0, 0.5);
        let track = extract_track(&clip);
        let aligned = align_to_tokens(&track, &[(0.0, 0.5), (0.5, 1.0)]);
        assert_eq!(aligned.len(), 2);
        for (a, b) in aligned[0].iter().zip(&aligned[1]) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn align_output_length_and_finiteness() {
        let clip = sine_clip(120.0, 0.4, 0.7);
        let track = extract_track(&clip);
        let spans: Vec<(f64, f64)> = (0..7).map(|i| (i as f64 * 0.05, i as f64 * 0.05 + 0.05)).collect();
        let aligned = align_to_tokens(&track, &spans);
        assert_eq!(aligned.len(), 7);
        for v in &aligned {
            for &x in v {
                assert!(x.is_finite());
            }
        }
    }

    #[test]
    fn feature_csv_header() {
        let clip = sine_clip(150.0, 0.1, 0.5);
        let track = extract_track(&clip);
        let mut out = Vec::new();
        write_feature_csv(&track, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("frame,pitch_hz,intensity_db,mfcc0,"));
        assert!(text.lines().next().unwrap().ends_with("mfcc12"));
    }
}

//! RIFF PCM WAV read/write: 16-bit mono 16 kHz only. Anything else is
//! rejected with a clear error.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::prosody::AudioClip;

pub const REQUIRED_SAMPLE_RATE: u32 = 16_000;

/// Quantize a sample in [-1, 1] to the 16-bit grid. The corpus generator
/// quantizes at synthesis time so that WAV round-trips are exact.
pub fn quantize(x: f64) -> f64 {
    let q = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
    q as f64 / 32767.0
}

pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    if clip.sample_rate != REQUIRED_SAMPLE_RATE {
        return Err(Error::Audio(format!(
            "only {REQUIRED_SAMPLE_RATE} Hz supported, got {}",
            clip.sample_rate
        )));
    }
    let n = clip.samples.len();
    let data_bytes = (n * 2) as u32;
    let mut buf = Vec::with_capacity(44 + n * 2);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_bytes).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes()); // PCM
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&clip.sample_rate.to_le_bytes());
    buf.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    buf.extend_from_slice(&2u16.to_le_bytes()); // block align
    buf.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_bytes.to_le_bytes());
    for &s in &clip.samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    parse_wav(&bytes).map_err(|msg| Error::Audio(format!("{}: {msg}", path.display())))
}

fn parse_wav(bytes: &[u8]) -> std::result::Result<AudioClip, String> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err("truncated chunk".into());
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err("fmt chunk too small".into());
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }
    let (format, channels, rate, bits) = fmt.ok_or("missing fmt chunk")?;
    if format != 1 {
        return Err(format!("unsupported format tag {format}, need PCM (1)"));
    }
    if channels != 1 {
        return Err(format!("unsupported channel count {channels}, need mono"));
    }
    if bits != 16 {
        return Err(format!("unsupported bit depth {bits}, need 16"));
    }
    if rate != REQUIRED_SAMPLE_RATE {
        return Err(format!("unsupported sample rate {rate}, need {REQUIRED_SAMPLE_RATE}"));
    }
    let data = data.ok_or("missing data chunk")?;
    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0)
        .map(|s| s.clamp(-1.0, 1.0))
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: rate,
    })
}

use super::{AudioClip, AudioError, Result};

fn format_err(field: &'static str, detail: impl Into<String>) -> AudioError {
    AudioError::Format {
        field,
        detail: detail.into(),
    }
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    sample_rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<Fmt> {
    if body.len() < 16 {
        return Err(format_err("fmt", format!("chunk is {} bytes, need 16", body.len())));
    }
    let audio_format = u16_at(body, 0);
    if audio_format != 1 {
        return Err(format_err(
            "audio_format",
            format!("{audio_format} is not PCM (1)"),
        ));
    }
    let channels = u16_at(body, 2);
    if channels != 1 {
        return Err(format_err("num_channels", format!("{channels} channels, need mono")));
    }
    let sample_rate = u32_at(body, 4);
    if sample_rate == 0 {
        return Err(format_err("sample_rate", "zero"));
    }
    let bits = u16_at(body, 14);
    if bits != 16 {
        return Err(format_err("bits_per_sample", format!("{bits}, need 16")));
    }
    Ok(Fmt { sample_rate })
}

/// Parses a 16-bit PCM mono RIFF/WAVE file. Samples are scaled by `1/32768`.
pub fn read_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(format_err("RIFF", "file shorter than the RIFF header"));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(format_err("RIFF", "missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(format_err("WAVE", "missing WAVE form type"));
    }
    let mut fmt = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len());
        match id {
            b"fmt " => {
                let end = body_end.ok_or_else(|| format_err("fmt", "chunk truncated"))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| format_err("fmt", "data chunk before fmt chunk"))?;
                let end = body_end.ok_or_else(|| {
                    format_err(
                        "data",
                        format!("declares {size} bytes, {} present", bytes.len() - body_start),
                    )
                })?;
                if size % 2 != 0 {
                    return Err(format_err("data", "odd byte count for 16-bit samples"));
                }
                let samples = bytes[body_start..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(AudioClip::new(samples, fmt.sample_rate));
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    Err(format_err(
        if fmt.is_some() { "data" } else { "fmt" },
        "chunk not found",
    ))
}

fn quantize(s: f32) -> i16 {
    // f32::round rounds half away from zero
    (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a clip as 16-bit PCM mono. Out-of-range samples are clamped.
pub fn write_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

//! Mono RIFF/WAVE files: 32-bit float or 16-bit PCM, little-endian, `fmt `
//! and `data` chunks only.

use std::fs::File;
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

use crate::synth::AudioBuffer;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;
const HEADER_LEN: u64 = 44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Float32,
    Pcm16,
}

impl SampleFormat {
    fn bytes(self) -> u16 {
        match self {
            SampleFormat::Float32 => 4,
            SampleFormat::Pcm16 => 2,
        }
    }

    fn tag(self) -> u16 {
        match self {
            SampleFormat::Float32 => FORMAT_FLOAT,
            SampleFormat::Pcm16 => FORMAT_PCM,
        }
    }
}

#[derive(Debug, Error)]
pub enum WavError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a WAV file: {0}")]
    Malformed(String),
    #[error("unsupported WAV: {0}")]
    Unsupported(String),
}

fn header(sample_rate: u32, format: SampleFormat, data_bytes: u32) -> [u8; HEADER_LEN as usize] {
    let bps = format.bytes();
    let mut h = [0u8; HEADER_LEN as usize];
    h[0..4].copy_from_slice(b"RIFF");
    h[4..8].copy_from_slice(&(36u32.saturating_add(data_bytes)).to_le_bytes());
    h[8..12].copy_from_slice(b"WAVE");
    h[12..16].copy_from_slice(b"fmt ");
    h[16..20].copy_from_slice(&16u32.to_le_bytes());
    h[20..22].copy_from_slice(&format.tag().to_le_bytes());
    h[22..24].copy_from_slice(&1u16.to_le_bytes());
    h[24..28].copy_from_slice(&sample_rate.to_le_bytes());
    h[28..32].copy_from_slice(&(sample_rate * bps as u32).to_le_bytes());
    h[32..34].copy_from_slice(&bps.to_le_bytes());
    h[34..36].copy_from_slice(&(bps * 8).to_le_bytes());
    h[36..40].copy_from_slice(b"data");
    h[40..44].copy_from_slice(&data_bytes.to_le_bytes());
    h
}

fn encode_sample(out: &mut Vec<u8>, s: f64, format: SampleFormat) {
    match format {
        SampleFormat::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        SampleFormat::Pcm16 => {
            let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
            out.extend_from_slice(&v.to_le_bytes())
        }
    }
}

pub fn encode_wav(buf: &AudioBuffer, format: SampleFormat) -> Vec<u8> {
    let data = buf.samples.len() * format.bytes() as usize;
    let mut out = Vec::with_capacity(HEADER_LEN as usize + data);
    out.extend_from_slice(&header(buf.sample_rate, format, data as u32));
    for &s in &buf.samples {
        encode_sample(&mut out, s, format);
    }
    out
}

pub fn write_wav(path: &Path, buf: &AudioBuffer, format: SampleFormat) -> Result<(), WavError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&encode_wav(buf, format))?;
    f.flush()?;
    Ok(())
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Parses a mono WAV (PCM 16, float 32, or their extensible forms); other
/// chunks are skipped. A data chunk that claims more bytes than the file
/// holds is read up to the end (as left by an interrupted writer).
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    let bad = |m: &str| WavError::Malformed(m.to_string());
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            if size < 16 || body + 16 > bytes.len() {
                return Err(bad("short fmt chunk"));
            }
            let mut tag = u16_at(bytes, body);
            let channels = u16_at(bytes, body + 2);
            let rate = u32_at(bytes, body + 4);
            let bits = u16_at(bytes, body + 14);
            if tag == FORMAT_EXTENSIBLE {
                if size < 40 || body + 26 > bytes.len() {
                    return Err(bad("short extensible fmt chunk"));
                }
                tag = u16_at(bytes, body + 24);
            }
            fmt = Some((tag, channels, rate, bits));
        } else if id == b"data" {
            let (tag, channels, rate, bits) = fmt.ok_or_else(|| bad("data before fmt"))?;
            if channels != 1 {
                return Err(WavError::Unsupported(format!("{channels} channels")));
            }
            if rate == 0 {
                return Err(bad("zero sample rate"));
            }
            let end = bytes.len().min(body.saturating_add(size));
            let data = &bytes[body..end];
            let samples = match (tag, bits) {
                (FORMAT_FLOAT, 32) => data
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect(),
                (FORMAT_PCM, 16) => data
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0)
                    .collect(),
                _ => return Err(WavError::Unsupported(format!("format {tag} at {bits} bits"))),
            };
            return Ok(AudioBuffer::new(rate, samples));
        }
        pos = body.saturating_add(size + (size & 1));
    }
    Err(bad("no data chunk"))
}

pub fn read_wav(path: &Path) -> Result<AudioBuffer, WavError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_wav(&bytes)
}

/// Appending WAV writer. The header is rewritten on every [`flush`], so the
/// file on disk is always a valid WAV up to the last flush.
///
/// [`flush`]: WavWriter::flush
pub struct WavWriter {
    file: BufWriter<File>,
    sample_rate: u32,
    format: SampleFormat,
    data_bytes: u64,
    scratch: Vec<u8>,
}

impl WavWriter {
    pub fn create(path: &Path, sample_rate: u32, format: SampleFormat) -> Result<Self, WavError> {
        let mut file = BufWriter::new(File::create(path)?);
        file.write_all(&header(sample_rate, format, 0))?;
        file.flush()?;
        Ok(WavWriter {
            file,
            sample_rate,
            format,
            data_bytes: 0,
            scratch: Vec::new(),
        })
    }

    pub fn write(&mut self, samples: &[f64]) -> Result<(), WavError> {
        self.scratch.clear();
        for &s in samples {
            encode_sample(&mut self.scratch, s, self.format);
        }
        self.file.write_all(&self.scratch)?;
        self.data_bytes += self.scratch.len() as u64;
        Ok(())
    }

    pub fn samples_written(&self) -> u64 {
        self.data_bytes / self.format.bytes() as u64
    }

    pub fn flush(&mut self) -> Result<(), WavError> {
        let h = header(self.sample_rate, self.format, self.data_bytes.min(u32::MAX as u64 - 36) as u32);
        self.file.flush()?;
        let f = self.file.get_mut();
        f.seek(SeekFrom::Start(0))?;
        f.write_all(&h)?;
        f.seek(SeekFrom::End(0))?;
        f.sync_data()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), WavError> {
        self.flush()
    }
}

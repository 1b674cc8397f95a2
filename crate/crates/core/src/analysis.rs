//! Measurements on rendered audio: short-time spectra, decay time, spectral
//! centroid.

use std::io::{self, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::synth::AudioBuffer;

/// Magnitudes below this read as the floor.
pub const DB_FLOOR: f64 = -120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("window {0} is not a power of two")]
    WindowNotPowerOfTwo(usize),
    #[error("hop {hop} must be in [1, {window}]")]
    BadHop { hop: usize, window: usize },
    #[error("fft length {fft_len} must be a power of two >= window {window}")]
    BadFftLength { fft_len: usize, window: usize },
    #[error("buffer of {len} samples is shorter than the {window}-sample window")]
    TooShort { len: usize, window: usize },
}

pub fn hann(len: usize) -> Vec<f64> {
    // Periodic form: frames overlap-add to a constant at hop = len / 2.
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / len as f64).cos())
        .collect()
}

pub fn to_db(magnitude: f64) -> f64 {
    if magnitude > 0.0 {
        (20.0 * magnitude.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Hann-windowed magnitude STFT. Magnitudes are normalized by the window
/// sum, so a full-scale sine reads 0.5 (-6 dB) at its bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub fft_len: usize,
    /// frames x bins, linear
    pub magnitude: Vec<Vec<f64>>,
}

pub fn spectrogram(buf: &AudioBuffer, window: usize, hop: usize) -> Result<Spectrogram, AnalysisError> {
    spectrogram_padded(buf, window, hop, window)
}

/// As [`spectrogram`], zero-padding each frame to `fft_len` for a finer bin
/// grid.
pub fn spectrogram_padded(
    buf: &AudioBuffer,
    window: usize,
    hop: usize,
    fft_len: usize,
) -> Result<Spectrogram, AnalysisError> {
    if !window.is_power_of_two() {
        return Err(AnalysisError::WindowNotPowerOfTwo(window));
    }
    if hop == 0 || hop > window {
        return Err(AnalysisError::BadHop { hop, window });
    }
    if !fft_len.is_power_of_two() || fft_len < window {
        return Err(AnalysisError::BadFftLength { fft_len, window });
    }
    let len = buf.samples.len();
    if len < window {
        return Err(AnalysisError::TooShort { len, window });
    }
    let w = hann(window);
    let norm = 1.0 / w.iter().sum::<f64>();
    let fft = FftPlanner::new().plan_fft_forward(fft_len);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let mut frame = vec![Complex::default(); fft_len];
    let bins = fft_len / 2 + 1;
    let count = 1 + (len - window) / hop;
    let mut magnitude = Vec::with_capacity(count);
    for f in 0..count {
        let s = &buf.samples[f * hop..f * hop + window];
        for (i, c) in frame.iter_mut().enumerate() {
            *c = if i < window {
                Complex::new(s[i] * w[i], 0.0)
            } else {
                Complex::default()
            };
        }
        fft.process_with_scratch(&mut frame, &mut scratch);
        magnitude.push(frame[..bins].iter().map(|c| c.norm() * norm).collect());
    }
    Ok(Spectrogram {
        sample_rate: buf.sample_rate,
        window,
        hop,
        fft_len,
        magnitude,
    })
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.magnitude.len()
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.fft_len as f64
    }

    /// Centre time of a frame in seconds.
    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.sample_rate as f64 + 0.5 * self.window as f64 / self.sample_rate as f64
    }

    pub fn db(&self) -> Vec<Vec<f64>> {
        self.magnitude
            .iter()
            .map(|row| row.iter().map(|&m| to_db(m)).collect())
            .collect()
    }

    pub fn peak_bin(&self, frame: usize) -> usize {
        argmax(&self.magnitude[frame])
    }

    /// Time-averaged magnitude per bin.
    pub fn mean_magnitude(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.bins()];
        for row in &self.magnitude {
            for (a, m) in acc.iter_mut().zip(row) {
                *a += m;
            }
        }
        let n = self.frames() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Time-averaged level per bin, dB.
    pub fn mean_db(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.bins()];
        for row in &self.magnitude {
            for (a, &m) in acc.iter_mut().zip(row) {
                *a += to_db(m);
            }
        }
        let n = self.frames().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Frequency (Hz) of the ridge with the highest average level in dB.
    /// Averaging in dB favours what stays loud over time, not just the
    /// attack, which is how a ridge reads on a log-scaled spectrogram.
    pub fn dominant_ridge(&self) -> f64 {
        self.bin_hz(argmax(&self.mean_db()))
    }

    /// dB values, one frame per row. The header row gives bin centres in Hz;
    /// the first column gives frame centres in seconds.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time_s")?;
        for b in 0..self.bins() {
            write!(w, ",{:.3}", self.bin_hz(b))?;
        }
        writeln!(w)?;
        for (f, row) in self.magnitude.iter().enumerate() {
            write!(w, "{:.6}", self.frame_time(f))?;
            for &m in row {
                write!(w, ",{:.2}", to_db(m))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Window, hop and zero-padding used for ridge tracking.
pub const RIDGE_WINDOW: usize = 2048;
pub const RIDGE_HOP: usize = 512;
pub const RIDGE_PAD: usize = 4;

/// Strongest frequency of the time-averaged short-time spectrum.
pub fn dominant_ridge(buf: &AudioBuffer) -> Result<f64, AnalysisError> {
    Ok(spectrogram_padded(buf, RIDGE_WINDOW, RIDGE_HOP, RIDGE_WINDOW * RIDGE_PAD)?.dominant_ridge())
}

/// Power-weighted mean frequency of the whole-buffer spectrum; `None` for
/// silence.
pub fn spectral_centroid(buf: &AudioBuffer) -> Option<f64> {
    let n = buf.samples.len();
    if n == 0 {
        return None;
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut x: Vec<Complex<f64>> = buf.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fft.process(&mut x);
    let df = buf.sample_rate as f64 / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, c) in x[..n / 2 + 1].iter().enumerate() {
        let p = c.norm_sqr();
        num += k as f64 * df * p;
        den += p;
    }
    (den > 0.0).then(|| num / den)
}

/// Start and end of the decay-curve segment fitted by [`estimate_t60`], in
/// dB below the total energy.
pub const T60_FIT_START_DB: f64 = -30.0;
pub const T60_FIT_END_DB: f64 = -60.0;

/// Reverberation-style T60 from the backward-integrated energy decay curve.
///
/// The energy that would follow the end of the buffer is estimated from the
/// power in the final 20 ms and the fitted decay rate and added back before fitting
/// (a few fixed-point passes), so truncated renders are not biased short.
/// The -30..-60 dB segment is fitted by least squares and extrapolated to
/// 60 dB. Returns `None` for silence or a decay too short to fit.
pub fn estimate_t60(buf: &AudioBuffer) -> Option<f64> {
    let s = &buf.samples;
    let sr = buf.sample_rate as f64;
    let n = s.len();
    if n < 4 {
        return None;
    }
    let mut edc = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += s[i] * s[i];
        edc[i] = acc;
    }
    if edc[0] <= 0.0 {
        return None;
    }
    let tail_len = ((0.02 * sr) as usize).clamp(1, n);
    let tail_mean = s[n - tail_len..].iter().map(|x| x * x).sum::<f64>() / tail_len as f64 * sr;
    let tail_secs = tail_len as f64 / sr;

    let mut extra = 0.0;
    let mut slope = 0.0;
    for _ in 0..5 {
        let e0 = edc[0] + extra;
        let level = |i: usize| 10.0 * ((edc[i] + extra) / e0).max(1e-300).log10();
        let i0 = (0..n).find(|&i| level(i) <= T60_FIT_START_DB)?;
        let i1 = (i0..n).find(|&i| level(i) <= T60_FIT_END_DB).unwrap_or(n - 1);
        if i1 < i0 + 2 {
            return None;
        }
        slope = fit_slope((i0..i1).map(|i| (i as f64 / sr, level(i))));
        if !(slope < 0.0) {
            return None;
        }
        let energy_rate = -slope / 10.0 * std::f64::consts::LN_10;
        // Power at the very end, undoing the decay across the tail window.
        let x = energy_rate * tail_secs;
        let end_power = tail_mean * x / x.exp_m1();
        extra = end_power / energy_rate;
    }
    Some(-60.0 / slope)
}

fn fit_slope(points: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in points {
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// RMS of consecutive non-overlapping windows (a partial last window is
/// dropped).
pub fn frame_rms(samples: &[f64], window: usize) -> Vec<f64> {
    samples
        .chunks_exact(window.max(1))
        .map(|c| (c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

/// RMS of the difference between two equal-length signals.
pub fn rms_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

//! Spectrogram heatmaps with labelled Hz / s axes.

use font8x8::UnicodeFonts;
use image::{Rgb, RgbImage};

use crate::analysis::{to_db, Spectrogram};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([20, 20, 20]);
const LEFT: u32 = 44;
const BOTTOM: u32 = 22;
const TOP: u32 = 14;
const RIGHT: u32 = 10;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    /// Upper edge of the frequency axis; Nyquist when `None`.
    pub max_hz: Option<f64>,
    /// Plot-area width in pixels; one column per frame when `None`.
    pub width: Option<u32>,
    pub height: u32,
    /// Colours span `[max - range, max]` dB of the whole spectrogram.
    pub dynamic_range_db: f64,
    pub title: Option<String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            max_hz: None,
            width: None,
            height: 256,
            dynamic_range_db: 80.0,
            title: None,
        }
    }
}

// Dark-to-bright perceptual ramp.
const RAMP: [[f64; 3]; 5] = [
    [0.0, 0.0, 4.0],
    [87.0, 16.0, 110.0],
    [188.0, 55.0, 84.0],
    [249.0, 142.0, 9.0],
    [252.0, 255.0, 164.0],
];

/// Maps `t` in [0, 1] onto the colour ramp.
pub fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (RAMP[i][k] + f * (RAMP[i + 1][k] - RAMP[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    for (k, ch) in text.chars().enumerate() {
        let Some(glyph) = font8x8::BASIC_FONTS.get(ch) else { continue };
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 1 {
                    let (px, py) = (x + (k * 8 + col) as i64, y + row as i64);
                    if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                        img.put_pixel(px as u32, py as u32, color);
                    }
                }
            }
        }
    }
}

fn text_width(text: &str) -> i64 {
    8 * text.chars().count() as i64
}

/// A round tick step giving roughly `target` ticks over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

fn hz_label(hz: f64) -> String {
    if hz >= 1000.0 {
        let k = hz / 1000.0;
        if k.fract().abs() < 1e-9 {
            format!("{k:.0}k")
        } else {
            format!("{k:.1}k")
        }
    } else {
        format!("{hz:.0}")
    }
}

fn seconds_label(s: f64, step: f64) -> String {
    if step >= 1.0 {
        format!("{s:.0}")
    } else if step >= 0.1 {
        format!("{s:.1}")
    } else {
        format!("{s:.2}")
    }
}

/// Renders a spectrogram as a heatmap, low frequencies at the bottom.
/// A silent input gives a uniform image.
pub fn spectrogram_image(spec: &Spectrogram, opts: &PlotOptions) -> RgbImage {
    let nyquist = spec.sample_rate as f64 / 2.0;
    let max_hz = opts.max_hz.unwrap_or(nyquist).min(nyquist).max(1.0);
    let frames = spec.frames().max(1);
    let pw = opts.width.unwrap_or(frames as u32).max(1);
    let ph = opts.height.max(1);
    let top = if opts.title.is_some() { TOP + 4 } else { TOP };
    let mut img = RgbImage::from_pixel(LEFT + pw + RIGHT, top + ph + BOTTOM, BG);

    let db = spec.db();
    let peak = db.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let hi = if peak.is_finite() { peak } else { to_db(0.0) };
    let lo = hi - opts.dynamic_range_db.max(1.0);
    let df = spec.bin_hz(1);
    for x in 0..pw {
        let frame = ((x as usize * frames) / pw as usize).min(frames - 1);
        let row = db.get(frame);
        for y in 0..ph {
            let hz = max_hz * (1.0 - (y as f64 + 0.5) / ph as f64);
            let bin = ((hz / df).round() as usize).min(spec.bins() - 1);
            let v = row.map_or(lo, |r| r[bin]);
            img.put_pixel(LEFT + x, top + y, colormap((v - lo) / (hi - lo)));
        }
    }

    // axes
    for y in top..top + ph + 1 {
        img.put_pixel(LEFT - 1, y, INK);
    }
    for x in LEFT - 1..LEFT + pw {
        img.put_pixel(x, top + ph, INK);
    }
    let step = tick_step(max_hz, 5.0);
    let mut hz = 0.0;
    while hz <= max_hz + 1e-9 {
        let y = top as i64 + ((1.0 - hz / max_hz) * ph as f64).round() as i64;
        for dx in 2..5 {
            img.put_pixel(LEFT - dx, y.min((top + ph) as i64) as u32, INK);
        }
        let label = hz_label(hz);
        draw_text(&mut img, LEFT as i64 - 6 - text_width(&label), y - 4, &label, INK);
        hz += step;
    }
    draw_text(&mut img, 2, 2, "Hz", INK);

    let seconds = frames as f64 * spec.hop as f64 / spec.sample_rate as f64;
    if seconds > 0.0 {
        let step = tick_step(seconds, 4.0);
        let mut t = 0.0;
        while t <= seconds + 1e-9 {
            let x = LEFT as i64 + ((t / seconds) * pw as f64).round() as i64;
            let x = x.min((LEFT + pw - 1) as i64);
            for dy in 1..4 {
                img.put_pixel(x as u32, top + ph + dy, INK);
            }
            let label = seconds_label(t, step);
            draw_text(&mut img, x - text_width(&label) / 2, (top + ph + 5) as i64, &label, INK);
            t += step;
        }
    }
    let w = img.width() as i64;
    draw_text(&mut img, w - 9, (top + ph + 12) as i64, "s", INK);
    if let Some(title) = &opts.title {
        draw_text(&mut img, LEFT as i64 + (pw as i64 - text_width(title)) / 2, 3, title, INK);
    }
    img
}

/// Places panels left to right with a gap.
pub fn hstack(panels: &[RgbImage], gap: u32) -> RgbImage {
    let w = panels.iter().map(|p| p.width()).sum::<u32>() + gap * panels.len().saturating_sub(1) as u32;
    let h = panels.iter().map(|p| p.height()).max().unwrap_or(1);
    let mut out = RgbImage::from_pixel(w.max(1), h, BG);
    let mut x0 = 0;
    for p in panels {
        image::imageops::replace(&mut out, p, x0 as i64, 0);
        x0 += p.width() + gap;
    }
    out
}

//! The 12-material contact sheet: one strike per material on a common
//! plate, ordered by increasing stiffness.

use image::RgbImage;
use serde::Serialize;

use crate::analysis::{dominant_ridge, estimate_t60, spectral_centroid, spectrogram, AnalysisError};
use crate::material::MaterialTable;
use crate::plate::{build_modal_model, PlateError, PlateGeometry};
use crate::plot::{hstack, spectrogram_image, PlotOptions};
use crate::synth::{render_closed_form, AudioBuffer, ExcitationEvent, SynthError};

pub const SHEET_LENGTH_X: f64 = 0.15;
pub const SHEET_LENGTH_Y: f64 = 0.11;
pub const SHEET_DURATION: f64 = 1.5;
pub const SHEET_SAMPLE_RATE: f64 = 48_000.0;
pub const SHEET_MAX_HZ: f64 = 12_000.0;

#[derive(Debug, thiserror::Error)]
pub enum SheetError {
    #[error(transparent)]
    Plate(#[from] PlateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Serialize)]
pub struct SheetEntry {
    pub material: String,
    pub young_modulus: f64,
    pub thickness: f64,
    pub modes: usize,
    pub f11_hz: f64,
    /// Strongest frequency of the time-averaged spectrum.
    pub ridge_hz: f64,
    pub t60_s: Option<f64>,
    pub centroid_hz: Option<f64>,
}

/// Renders a centre strike for every material, each at its default
/// thickness, stiffest last.
pub fn contact_sheet(table: &MaterialTable) -> Result<Vec<(SheetEntry, AudioBuffer)>, SheetError> {
    table
        .sorted_by_stiffness()
        .into_iter()
        .map(|m| {
            let g = PlateGeometry::new(SHEET_LENGTH_X, SHEET_LENGTH_Y, m.default_thickness)?;
            let model = build_modal_model(g, m, g.center(), g.default_listening_point(), SHEET_SAMPLE_RATE)?;
            let buf = render_closed_form(&model, &ExcitationEvent::new(0.0, 1.0, g.center()), SHEET_DURATION)?;
            let entry = SheetEntry {
                material: m.name.clone(),
                young_modulus: m.young_modulus,
                thickness: m.default_thickness,
                modes: model.modes.len(),
                f11_hz: model.fundamental().frequency,
                ridge_hz: dominant_ridge(&buf)?,
                t60_s: estimate_t60(&buf),
                centroid_hz: spectral_centroid(&buf),
            };
            Ok((entry, buf))
        })
        .collect()
}

pub fn contact_sheet_image(sheet: &[(SheetEntry, AudioBuffer)]) -> Result<RgbImage, SheetError> {
    let panels = sheet
        .iter()
        .map(|(e, buf)| {
            let s = spectrogram(buf, 1024, 256)?;
            Ok(spectrogram_image(
                &s,
                &PlotOptions {
                    max_hz: Some(SHEET_MAX_HZ),
                    width: Some(140),
                    height: 240,
                    title: Some(e.material.clone()),
                    ..PlotOptions::default()
                },
            ))
        })
        .collect::<Result<Vec<_>, SheetError>>()?;
    Ok(hstack(&panels, 6))
}

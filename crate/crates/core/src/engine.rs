//! Tap handling shared by the network service and the command line: material
//! resolution, plate placement, cached modal models, result reports.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use nalgebra::Point3;
use serde::Serialize;
use thiserror::Error;

use crate::material::{MaterialError, MaterialProperties, MaterialTable};
use crate::osc::TapRequest;
use crate::plate::{build_modal_model, ModalModel, PlateError, PlateGeometry, PlatePoint};
use crate::scene::{resolve_material, SceneError, SharedMaskBuffer};
use crate::synth::{render_closed_form, AudioBuffer, ExcitationEvent, SynthError};
use crate::wav::{encode_wav, SampleFormat};

/// Keeps mapped taps off the silent plate edges.
const EDGE_MARGIN: f64 = 0.02;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Plate(#[from] PlateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("world taps need a scene; none is loaded")]
    NoScene,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Plate footprint, m.
    pub length_x: f64,
    pub length_y: f64,
    /// Overrides the per-material default thickness.
    pub thickness: Option<f64>,
    pub sample_rate: f64,
    /// Length of the rendered clip returned for each tap, s.
    pub clip_duration: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            length_x: 0.22,
            length_y: 0.22,
            thickness: None,
            sample_rate: 48_000.0,
            clip_duration: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ModelKey {
    material: String,
    lx: u64,
    ly: u64,
    h: u64,
    sr: u64,
}

/// A resolved tap, ready to render.
#[derive(Debug, Clone)]
pub struct Tap {
    pub material: String,
    pub tally: BTreeMap<String, usize>,
    pub model: Arc<ModalModel>,
    pub point: PlatePoint,
    pub force: f64,
}

impl Tap {
    pub fn event(&self) -> ExcitationEvent {
        ExcitationEvent::new(0.0, self.force, self.point)
    }

    /// `ln(1000) / alpha` of the least-damped mode this strike excites.
    pub fn t60_estimate(&self) -> Option<f64> {
        let gains = self.model.gains_at(self.point).ok()?;
        self.model
            .modes
            .iter()
            .zip(gains)
            .filter(|(_, g)| g.abs() > 1e-9)
            .map(|(m, _)| m.decay_rate)
            .min_by(f64::total_cmp)
            .map(|a| 1000f64.ln() / a)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub modes: usize,
    pub f11_hz: f64,
    pub length_x: f64,
    pub length_y: f64,
    pub thickness: f64,
    pub excitation: [f64; 2],
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TapReport {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub material: String,
    pub tally: BTreeMap<String, usize>,
    pub t60_estimate_s: Option<f64>,
    pub wav_b64: String,
    pub model: ModelSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    #[serde(rename = "type")]
    pub kind: &'static str,
    pub message: String,
}

impl ErrorReport {
    pub fn new(message: impl ToString) -> Self {
        ErrorReport {
            kind: "error",
            message: message.to_string(),
        }
    }
}

pub struct Engine {
    table: Arc<MaterialTable>,
    masks: Option<SharedMaskBuffer>,
    config: EngineConfig,
    plate_material: Mutex<Option<String>>,
    cache: Mutex<HashMap<ModelKey, Arc<ModalModel>>>,
}

impl Engine {
    pub fn new(table: Arc<MaterialTable>, masks: Option<SharedMaskBuffer>, config: EngineConfig) -> Self {
        Engine {
            table,
            masks,
            config,
            plate_material: Mutex::new(None),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn table(&self) -> &MaterialTable {
        &self.table
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// Material whose default thickness is used for subsequent world taps.
    pub fn set_plate_material(&self, name: &str) -> Result<(), EngineError> {
        let m = self.table.lookup_by_name(name)?;
        *self.plate_material.lock().unwrap_or_else(|e| e.into_inner()) = Some(m.name.clone());
        Ok(())
    }

    pub fn cached_models(&self) -> usize {
        self.cache.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    fn geometry(&self, thickness_from: &MaterialProperties) -> Result<PlateGeometry, EngineError> {
        let h = self.config.thickness.unwrap_or(thickness_from.default_thickness);
        Ok(PlateGeometry::new(self.config.length_x, self.config.length_y, h)?)
    }

    /// The modal model for `material` on `geometry`, built once and reused.
    pub fn model(&self, material: &MaterialProperties, geometry: PlateGeometry) -> Result<Arc<ModalModel>, EngineError> {
        let key = ModelKey {
            material: material.name.clone(),
            lx: geometry.length_x.to_bits(),
            ly: geometry.length_y.to_bits(),
            h: geometry.thickness.to_bits(),
            sr: self.config.sample_rate.to_bits(),
        };
        if let Some(m) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(m.clone());
        }
        let model = Arc::new(build_modal_model(
            geometry,
            material,
            geometry.reference_tap(),
            geometry.default_listening_point(),
            self.config.sample_rate,
        )?);
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, model.clone());
        Ok(model)
    }

    /// Resolves the material and plate placement of a tap.
    pub fn resolve(&self, req: &TapRequest) -> Result<Tap, EngineError> {
        match req {
            TapRequest::Material { material, force } => {
                let m = self.table.lookup_by_name(material)?;
                let geometry = self.geometry(m)?;
                Ok(Tap {
                    material: m.name.clone(),
                    tally: BTreeMap::new(),
                    model: self.model(m, geometry)?,
                    point: geometry.reference_tap(),
                    force: *force,
                })
            }
            TapRequest::World { x, y, z, force } => {
                let masks = self.masks.as_ref().ok_or(EngineError::NoScene)?.snapshot();
                let res = resolve_material(&masks, &Point3::new(*x, *y, *z), &self.table)?;
                let m = self.table.lookup_by_name(&res.material)?;
                let plate_from = match &*self.plate_material.lock().unwrap_or_else(|e| e.into_inner()) {
                    Some(name) => self.table.lookup_by_name(name)?.clone(),
                    None => m.clone(),
                };
                let geometry = self.geometry(&plate_from)?;
                let point = match res.winner_image_fraction(&masks) {
                    Some((fu, fv)) => geometry.at_fraction(
                        fu.clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN),
                        fv.clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN),
                    ),
                    None => geometry.reference_tap(),
                };
                Ok(Tap {
                    material: m.name.clone(),
                    tally: res.tally,
                    model: self.model(m, geometry)?,
                    point,
                    force: *force,
                })
            }
        }
    }

    pub fn render(&self, tap: &Tap) -> Result<AudioBuffer, EngineError> {
        Ok(render_closed_form(&tap.model, &tap.event(), self.config.clip_duration)?)
    }

    /// Resolves, renders and packages a tap for a client.
    pub fn report(&self, req: &TapRequest) -> Result<TapReport, EngineError> {
        let tap = self.resolve(req)?;
        let audio = self.render(&tap)?;
        let wav = encode_wav(&audio, SampleFormat::Float32);
        let g = tap.model.geometry;
        Ok(TapReport {
            kind: "result",
            material: tap.material.clone(),
            tally: tap.tally.clone(),
            t60_estimate_s: tap.t60_estimate(),
            wav_b64: base64::engine::general_purpose::STANDARD.encode(wav),
            model: ModelSummary {
                modes: tap.model.modes.len(),
                f11_hz: tap.model.fundamental().frequency,
                length_x: g.length_x,
                length_y: g.length_y,
                thickness: g.thickness,
                excitation: [tap.point.x, tap.point.y],
                sample_rate: tap.model.sample_rate,
            },
        })
    }
}

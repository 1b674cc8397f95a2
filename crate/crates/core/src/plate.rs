//! Modal description of a thin, simply supported rectangular plate.
//!
//! Frequencies follow Kirchhoff–Love theory,
//! `f_mn = (pi/2) sqrt(D / (rho h)) ((m/Lx)^2 + (n/Ly)^2)` with
//! `D = E h^3 / (12 (1 - nu^2))`, mode shapes are
//! `sin(m pi x / Lx) sin(n pi y / Ly)` and each mode decays at
//! `alpha = damping_const + damping_freq * f`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::material::MaterialProperties;

/// Highest rendered mode frequency as a fraction of the sample rate.
pub const MODE_CUTOFF_RATIO: f64 = 0.45;
pub const MIN_SAMPLE_RATE: f64 = 8000.0;
/// Default listening point as fractions of (Lx, Ly); off every low-order
/// nodal line.
pub const DEFAULT_LISTENING_FRACTION: (f64, f64) = (0.53, 0.47);
/// Default strike, away from the nodal lines of low modes (a centre strike
/// silences every even mode).
pub const REFERENCE_TAP_FRACTION: (f64, f64) = (0.31, 0.27);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlateError {
    #[error("{field} must be finite and > 0, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("poisson ratio {0} outside [0, 1)")]
    PoissonOutOfRange(f64),
    #[error("point ({x}, {y}) lies outside the {lx} x {ly} m plate")]
    PointOutside { x: f64, y: f64, lx: f64, ly: f64 },
    #[error("mode indices must be >= 1, got ({m}, {n})")]
    BadModeIndex { m: u32, n: u32 },
    #[error("fundamental {fundamental:.3} Hz exceeds the {max_frequency:.3} Hz limit; no modes")]
    EmptyModel { fundamental: f64, max_frequency: f64 },
    #[error("sample rate {0} Hz is below the 8000 Hz minimum")]
    SampleRateTooLow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateGeometry {
    /// m
    pub length_x: f64,
    /// m
    pub length_y: f64,
    /// m
    pub thickness: f64,
}

impl PlateGeometry {
    pub fn new(length_x: f64, length_y: f64, thickness: f64) -> Result<Self, PlateError> {
        let g = PlateGeometry {
            length_x,
            length_y,
            thickness,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), PlateError> {
        for (field, value) in [
            ("length_x", self.length_x),
            ("length_y", self.length_y),
            ("thickness", self.thickness),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PlateError::NonPositive { field, value });
            }
        }
        if !self.is_thin() {
            log::warn!(
                "plate thickness {} m exceeds 0.2 x min side; thin-plate theory is a poor fit",
                self.thickness
            );
        }
        Ok(())
    }

    pub fn is_thin(&self) -> bool {
        self.thickness <= 0.2 * self.length_x.min(self.length_y)
    }

    pub fn center(&self) -> PlatePoint {
        PlatePoint::new(0.5 * self.length_x, 0.5 * self.length_y)
    }

    /// Point at the given fractions of the plate sides.
    pub fn at_fraction(&self, fx: f64, fy: f64) -> PlatePoint {
        PlatePoint::new(fx * self.length_x, fy * self.length_y)
    }

    pub fn default_listening_point(&self) -> PlatePoint {
        let (fx, fy) = DEFAULT_LISTENING_FRACTION;
        self.at_fraction(fx, fy)
    }

    pub fn reference_tap(&self) -> PlatePoint {
        let (fx, fy) = REFERENCE_TAP_FRACTION;
        self.at_fraction(fx, fy)
    }

    pub fn contains(&self, p: PlatePoint) -> bool {
        (0.0..=self.length_x).contains(&p.x) && (0.0..=self.length_y).contains(&p.y)
    }

    fn check_point(&self, p: PlatePoint) -> Result<(), PlateError> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(PlateError::PointOutside {
                x: p.x,
                y: p.y,
                lx: self.length_x,
                ly: self.length_y,
            })
        }
    }
}

/// A position on the plate surface, in metres from the (0, 0) corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatePoint {
    pub x: f64,
    pub y: f64,
}

impl PlatePoint {
    pub const fn new(x: f64, y: f64) -> Self {
        PlatePoint { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub m: u32,
    pub n: u32,
    /// Hz
    pub frequency: f64,
    /// 1/s
    pub decay_rate: f64,
    /// Mode shape at the excitation point times mode shape at the listening
    /// point.
    pub gain: f64,
}

/// `sin(pi * t)`, exact at integer and half-integer `t`, so nodal lines and
/// antinodes come out as exact zeros and ones.
pub(crate) fn sin_pi(t: f64) -> f64 {
    let r = t - 2.0 * (t / 2.0).round();
    if r == 0.0 || r.abs() == 1.0 {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r == -0.5 {
        -1.0
    } else {
        (PI * r).sin()
    }
}

/// Bending stiffness `E h^3 / (12 (1 - nu^2))` in N·m.
pub fn flexural_rigidity(young_modulus: f64, thickness: f64, poisson_ratio: f64) -> Result<f64, PlateError> {
    if !(young_modulus.is_finite() && young_modulus > 0.0) {
        return Err(PlateError::NonPositive {
            field: "young_modulus",
            value: young_modulus,
        });
    }
    if !(thickness.is_finite() && thickness > 0.0) {
        return Err(PlateError::NonPositive {
            field: "thickness",
            value: thickness,
        });
    }
    if !(poisson_ratio.is_finite() && (0.0..1.0).contains(&poisson_ratio)) {
        return Err(PlateError::PoissonOutOfRange(poisson_ratio));
    }
    Ok(young_modulus * thickness.powi(3) / (12.0 * (1.0 - poisson_ratio * poisson_ratio)))
}

/// `(pi/2) sqrt(D / (rho h))`: multiply by `(m/Lx)^2 + (n/Ly)^2` to get f_mn.
fn frequency_scale(geometry: &PlateGeometry, material: &MaterialProperties) -> Result<f64, PlateError> {
    let d = flexural_rigidity(material.young_modulus, geometry.thickness, material.poisson_ratio)?;
    if !(material.density.is_finite() && material.density > 0.0) {
        return Err(PlateError::NonPositive {
            field: "density",
            value: material.density,
        });
    }
    Ok(0.5 * PI * (d / (material.density * geometry.thickness)).sqrt())
}

fn wavenumber_term(geometry: &PlateGeometry, m: u32, n: u32) -> f64 {
    let a = m as f64 / geometry.length_x;
    let b = n as f64 / geometry.length_y;
    a * a + b * b
}

/// All `(m, n, f_mn)` with `f_mn <= max_frequency`, ascending by frequency
/// (degenerate frequencies ordered by `(m, n)`).
pub fn modal_frequencies(
    geometry: &PlateGeometry,
    material: &MaterialProperties,
    max_frequency: f64,
) -> Result<Vec<(u32, u32, f64)>, PlateError> {
    geometry.validate()?;
    let scale = frequency_scale(geometry, material)?;
    let fundamental = scale * wavenumber_term(geometry, 1, 1);
    if !(fundamental <= max_frequency) {
        return Err(PlateError::EmptyModel {
            fundamental,
            max_frequency,
        });
    }
    let mut out = Vec::new();
    let mut m = 1u32;
    while scale * wavenumber_term(geometry, m, 1) <= max_frequency {
        let mut n = 1u32;
        loop {
            let f = scale * wavenumber_term(geometry, m, n);
            if f > max_frequency {
                break;
            }
            out.push((m, n, f));
            n += 1;
        }
        m += 1;
    }
    out.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    Ok(out)
}

/// Linear-in-frequency decay rate in 1/s.
pub fn modal_damping(frequency: f64, material: &MaterialProperties) -> f64 {
    debug_assert!(frequency > 0.0);
    material.damping_const + material.damping_freq * frequency
}

pub fn mode_shape(geometry: &PlateGeometry, m: u32, n: u32, point: PlatePoint) -> Result<f64, PlateError> {
    if m == 0 || n == 0 {
        return Err(PlateError::BadModeIndex { m, n });
    }
    geometry.check_point(point)?;
    Ok(mode_shape_unchecked(geometry, m, n, point))
}

fn mode_shape_unchecked(geometry: &PlateGeometry, m: u32, n: u32, p: PlatePoint) -> f64 {
    sin_pi(m as f64 * p.x / geometry.length_x) * sin_pi(n as f64 * p.y / geometry.length_y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalModel {
    pub modes: Vec<Mode>,
    /// N·m
    pub flexural_rigidity: f64,
    pub material_name: String,
    pub geometry: PlateGeometry,
    pub sample_rate: f64,
    pub excitation_point: PlatePoint,
    pub listening_point: PlatePoint,
}

pub fn build_modal_model(
    geometry: PlateGeometry,
    material: &MaterialProperties,
    excitation_point: PlatePoint,
    listening_point: PlatePoint,
    sample_rate: f64,
) -> Result<ModalModel, PlateError> {
    if !(sample_rate >= MIN_SAMPLE_RATE) {
        return Err(PlateError::SampleRateTooLow(sample_rate));
    }
    geometry.validate()?;
    geometry.check_point(excitation_point)?;
    geometry.check_point(listening_point)?;
    let modes = modal_frequencies(&geometry, material, MODE_CUTOFF_RATIO * sample_rate)?
        .into_iter()
        .map(|(m, n, frequency)| Mode {
            m,
            n,
            frequency,
            decay_rate: modal_damping(frequency, material),
            gain: mode_shape_unchecked(&geometry, m, n, excitation_point)
                * mode_shape_unchecked(&geometry, m, n, listening_point),
        })
        .collect();
    Ok(ModalModel {
        modes,
        flexural_rigidity: flexural_rigidity(
            material.young_modulus,
            geometry.thickness,
            material.poisson_ratio,
        )?,
        material_name: material.name.clone(),
        geometry,
        sample_rate,
        excitation_point,
        listening_point,
    })
}

impl ModalModel {
    /// The lowest mode, (1, 1).
    pub fn fundamental(&self) -> &Mode {
        &self.modes[0]
    }

    /// Per-mode gains for an excitation at `point`, heard at this model's
    /// listening point.
    pub fn gains_at(&self, point: PlatePoint) -> Result<Vec<f64>, PlateError> {
        self.geometry.check_point(point)?;
        Ok(self
            .modes
            .iter()
            .map(|md| self.gain_unchecked(md, point))
            .collect())
    }

    pub(crate) fn gain_unchecked(&self, md: &Mode, point: PlatePoint) -> f64 {
        mode_shape_unchecked(&self.geometry, md.m, md.n, point)
            * mode_shape_unchecked(&self.geometry, md.m, md.n, self.listening_point)
    }

    pub fn check_point(&self, p: PlatePoint) -> Result<(), PlateError> {
        self.geometry.check_point(p)
    }

    /// `ln(1000) / alpha` of the least-damped mode with a non-zero gain, or
    /// `None` for a silent model.
    pub fn t60_estimate(&self) -> Option<f64> {
        self.modes
            .iter()
            .filter(|m| m.gain.abs() > 1e-9)
            .map(|m| m.decay_rate)
            .min_by(f64::total_cmp)
            .map(|a| 1000f64.ln() / a)
    }

    /// Plain-text mode table, one line per mode: `m n f alpha gain`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let _ = writeln!(s, "# material {}", self.material_name);
        let _ = writeln!(
            s,
            "# plate {} x {} x {} m, D = {:.6e} N m, sample_rate {} Hz",
            g.length_x, g.length_y, g.thickness, self.flexural_rigidity, self.sample_rate
        );
        let _ = writeln!(
            s,
            "# excitation ({}, {}) listening ({}, {})",
            self.excitation_point.x, self.excitation_point.y, self.listening_point.x, self.listening_point.y
        );
        let _ = writeln!(s, "# m n frequency_hz decay_per_s gain");
        for md in &self.modes {
            let _ = writeln!(
                s,
                "{} {} {:.6} {:.6} {:.9}",
                md.m, md.n, md.frequency, md.decay_rate, md.gain
            );
        }
        s
    }
}

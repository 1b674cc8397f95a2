//! Material property table and the label-color dictionary.
//!
//! A table is loaded from a TOML file holding one `[[material]]` table per
//! entry (see `data/materials.toml` for the shipped defaults and the README
//! for the grammar). Loading validates every entry and builds two indexes,
//! by name and by label color, that must resolve to the same entry set.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

/// The material table shipped with the crate.
pub const DEFAULT_DB: &str = include_str!("../data/materials.toml");

/// An 8-bit RGB triple, as found in segmentation label images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }
}

impl fmt::Display for Rgb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [r, g, b] = self.0;
        write!(f, "#{r:02X}{g:02X}{b:02X}")
    }
}

impl FromStr for Rgb {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let hex = s
            .strip_prefix('#')
            .ok_or_else(|| format!("color `{s}` must start with '#'"))?;
        if hex.len() != 6 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(format!("color `{s}` is not of the form #RRGGBB"));
        }
        let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
        Ok(Rgb([channel(0), channel(2), channel(4)]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialProperties {
    pub name: String,
    /// kg/m³
    pub density: f64,
    /// N/m²
    pub young_modulus: f64,
    pub poisson_ratio: f64,
    /// Constant loss, 1/s.
    pub damping_const: f64,
    /// Frequency loss; multiplies a frequency in Hz to give 1/s.
    pub damping_freq: f64,
    pub label_color: Rgb,
    /// m
    pub default_thickness: f64,
}

impl MaterialProperties {
    /// Plate wave-speed factor `sqrt(E / (rho (1 - nu^2)))`; at fixed plate
    /// geometry the fundamental scales linearly with it.
    pub fn stiffness_speed(&self) -> f64 {
        (self.young_modulus / (self.density * (1.0 - self.poisson_ratio.powi(2)))).sqrt()
    }

    /// Checks the per-entry invariants, naming the first offending field.
    pub fn validate(&self) -> Result<(), MaterialError> {
        let invalid = |field: &'static str, reason: String| MaterialError::Invalid {
            material: self.name.clone(),
            field,
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty".into()));
        }
        let positive = [
            ("density", self.density),
            ("young_modulus", self.young_modulus),
            ("thickness", self.default_thickness),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {value}")));
            }
        }
        let nu = self.poisson_ratio;
        if !(nu.is_finite() && (0.0..=0.5).contains(&nu)) {
            return Err(invalid("poisson", format!("must lie in [0, 0.5], got {nu}")));
        }
        for (field, value) in [
            ("damping_const", self.damping_const),
            ("damping_freq", self.damping_freq),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {value}")));
            }
        }
        if self.damping_const == 0.0 && self.damping_freq == 0.0 {
            return Err(invalid(
                "damping_const",
                "damping_const and damping_freq cannot both be zero".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MaterialError {
    #[error("failed to read material db {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no materials defined")]
    Empty,
    #[error("material `{material}`: invalid {field}: {reason}")]
    Invalid {
        material: String,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate material name `{0}`")]
    DuplicateName(String),
    #[error("duplicate label color {color} (materials `{first}` and `{second}`)")]
    DuplicateColor {
        color: Rgb,
        first: String,
        second: String,
    },
    #[error("unknown label color {0}")]
    UnknownColor(Rgb),
    #[error("unknown material `{name}` (available: {available})")]
    UnknownName { name: String, available: String },
}

/// Validated, immutable material table.
#[derive(Debug, Clone)]
pub struct MaterialTable {
    entries: Vec<MaterialProperties>,
    by_name: HashMap<String, usize>,
    by_color: HashMap<Rgb, usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDb {
    #[serde(default)]
    material: Vec<RawMaterial>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    name: String,
    color: String,
    density: f64,
    young_modulus: f64,
    poisson: f64,
    damping_const: f64,
    damping_freq: f64,
    thickness: f64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl MaterialTable {
    /// Builds a table from already-constructed entries, enforcing every
    /// invariant.
    pub fn new(entries: Vec<MaterialProperties>) -> Result<Self, MaterialError> {
        if entries.is_empty() {
            return Err(MaterialError::Empty);
        }
        let mut by_name = HashMap::new();
        let mut by_color: HashMap<Rgb, usize> = HashMap::new();
        for (i, entry) in entries.iter().enumerate() {
            entry.validate()?;
            if by_name.insert(entry.name.to_lowercase(), i).is_some() {
                return Err(MaterialError::DuplicateName(entry.name.clone()));
            }
            if let Some(&prev) = by_color.get(&entry.label_color) {
                return Err(MaterialError::DuplicateColor {
                    color: entry.label_color,
                    first: entries[prev].name.clone(),
                    second: entry.name.clone(),
                });
            }
            by_color.insert(entry.label_color, i);
        }
        Ok(MaterialTable {
            entries,
            by_name,
            by_color,
        })
    }

    /// Parses the TOML material-db format.
    pub fn parse(text: &str) -> Result<Self, MaterialError> {
        let raw: RawDb = toml::from_str(text).map_err(|e| MaterialError::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })?;
        let mut entries = Vec::with_capacity(raw.material.len());
        for m in raw.material {
            let label_color = m.color.parse().map_err(|reason| MaterialError::Invalid {
                material: m.name.clone(),
                field: "color",
                reason,
            })?;
            entries.push(MaterialProperties {
                name: m.name,
                density: m.density,
                young_modulus: m.young_modulus,
                poisson_ratio: m.poisson,
                damping_const: m.damping_const,
                damping_freq: m.damping_freq,
                label_color,
                default_thickness: m.thickness,
            });
        }
        Self::new(entries)
    }

    /// The 12-material table compiled into the crate.
    pub fn shipped() -> Self {
        Self::parse(DEFAULT_DB).expect("shipped material db is valid")
    }

    pub fn entries(&self) -> &[MaterialProperties] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup_by_color(&self, rgb: Rgb) -> Result<&MaterialProperties, MaterialError> {
        self.by_color
            .get(&rgb)
            .map(|&i| &self.entries[i])
            .ok_or(MaterialError::UnknownColor(rgb))
    }

    /// Case-insensitive name lookup.
    pub fn lookup_by_name(&self, name: &str) -> Result<&MaterialProperties, MaterialError> {
        self.by_name
            .get(&name.to_lowercase())
            .map(|&i| &self.entries[i])
            .ok_or_else(|| MaterialError::UnknownName {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Entries sorted by increasing Young's modulus; equal moduli are ordered
    /// by plate wave speed.
    pub fn sorted_by_stiffness(&self) -> Vec<&MaterialProperties> {
        let mut v: Vec<_> = self.entries.iter().collect();
        v.sort_by(|a, b| {
            a.young_modulus
                .total_cmp(&b.young_modulus)
                .then(a.stiffness_speed().total_cmp(&b.stiffness_speed()))
        });
        v
    }
}

/// Reads and validates a material-db file.
pub fn load_material_db(path: impl AsRef<Path>) -> Result<MaterialTable, MaterialError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MaterialError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    MaterialTable::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = r##"
[[material]]
name = "Glass"
color = "#0000FF"
density = 2500.0
young_modulus = 7.2e10
poisson = 0.2
damping_const = 4.4
damping_freq = 3.5e-4
thickness = 0.005
"##;

    #[test]
    fn shipped_table_matches_published_values() {
        let t = MaterialTable::shipped();
        assert_eq!(t.len(), 12);
        let expect = [
            ("Cardboard", 689.0, 5.0e8, 0.33),
            ("Ceramic", 2600.0, 2.0e11, 0.25),
            ("Cork", 240.0, 1.0e8, 0.30),
            ("Fabric", 1500.0, 1.0e6, 0.30),
            ("Glass", 2500.0, 7.2e10, 0.20),
            ("Leather", 860.0, 1.0e8, 0.40),
            ("Metal", 7800.0, 2.0e11, 0.30),
            ("Paper", 800.0, 5.0e8, 0.33),
            ("Plastic", 1100.0, 2.5e9, 0.35),
            ("Rubber", 1100.0, 1.0e7, 0.50),
            ("Stone", 2700.0, 5.0e10, 0.25),
            ("Wood", 700.0, 1.0e10, 0.30),
        ];
        for (name, rho, e, nu) in expect {
            let m = t.lookup_by_name(name).unwrap();
            assert_eq!(m.density.to_bits(), f64::to_bits(rho), "{name}");
            assert_eq!(m.young_modulus.to_bits(), f64::to_bits(e), "{name}");
            assert_eq!(m.poisson_ratio.to_bits(), f64::to_bits(nu), "{name}");
        }
    }

    #[test]
    fn every_shipped_color_round_trips() {
        let t = MaterialTable::shipped();
        for e in t.entries() {
            assert_eq!(t.lookup_by_color(e.label_color).unwrap(), e);
            assert_eq!(t.lookup_by_name(&e.name).unwrap(), e);
        }
    }

    #[test]
    fn soft_materials_are_more_damped_than_hard() {
        let t = MaterialTable::shipped();
        let soft = ["Fabric", "Cork", "Leather", "Cardboard", "Rubber", "Paper"];
        let hard = ["Glass", "Metal", "Ceramic", "Stone", "Wood", "Plastic"];
        for s in soft {
            let s = t.lookup_by_name(s).unwrap();
            for h in hard {
                let h = t.lookup_by_name(h).unwrap();
                assert!(s.damping_const > h.damping_const, "{} vs {}", s.name, h.name);
                assert!(s.damping_freq > h.damping_freq, "{} vs {}", s.name, h.name);
            }
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        assert_eq!(MaterialTable::parse("").unwrap_err(), MaterialError::Empty);
        assert_eq!(
            MaterialTable::parse("").unwrap_err().to_string(),
            "no materials defined"
        );
    }

    #[test]
    fn duplicate_color_is_rejected() {
        let text = format!(
            "{}\n{}",
            ONE.replace("#0000FF", "#804000"),
            ONE.replace("Glass", "Other").replace("#0000FF", "#804000")
        );
        match MaterialTable::parse(&text).unwrap_err() {
            MaterialError::DuplicateColor { color, .. } => {
                assert_eq!(color, Rgb::new(128, 64, 0))
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_name_is_rejected() {
        let text = format!("{ONE}\n{}", ONE.replace("#0000FF", "#00FF00"));
        assert!(matches!(
            MaterialTable::parse(&text),
            Err(MaterialError::DuplicateName(_))
        ));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = format!("{ONE}\n[[material]]\nname = \"X\"\ndensity = = 3\n");
        match MaterialTable::parse(&text).unwrap_err() {
            MaterialError::Parse { line, .. } => {
                let bad = text.lines().position(|l| l.contains("= = 3")).unwrap() + 1;
                assert_eq!(line, bad)
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validation_names_field_and_entry() {
        let err = MaterialTable::parse(&ONE.replace("poisson = 0.2", "poisson = 0.7")).unwrap_err();
        assert_eq!(
            err,
            MaterialError::Invalid {
                material: "Glass".into(),
                field: "poisson",
                reason: "must lie in [0, 0.5], got 0.7".into()
            }
        );
        let err = MaterialTable::parse(
            &ONE.replace("damping_const = 4.4", "damping_const = 0.0")
                .replace("damping_freq = 3.5e-4", "damping_freq = 0.0"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("cannot both be zero"));
        let err = MaterialTable::parse(&ONE.replace("density = 2500.0", "density = -1.0")).unwrap_err();
        assert!(err.to_string().contains("density"));
    }

    #[test]
    fn unknown_color_carries_value() {
        let t = MaterialTable::shipped();
        assert_eq!(
            t.lookup_by_color(Rgb::new(0, 0, 0)).unwrap_err(),
            MaterialError::UnknownColor(Rgb::new(0, 0, 0))
        );
    }

    #[test]
    fn unknown_name_lists_available() {
        let t = MaterialTable::shipped();
        let msg = t.lookup_by_name("unobtainium").unwrap_err().to_string();
        assert!(msg.contains("Glass") && msg.contains("Wood"));
    }

    #[test]
    fn hex_colors_parse_and_print() {
        let c: Rgb = "#80ff00".parse().unwrap();
        assert_eq!(c, Rgb::new(128, 255, 0));
        assert_eq!(c.to_string(), "#80FF00");
        assert!("80FF00".parse::<Rgb>().is_err());
        assert!("#80FF0".parse::<Rgb>().is_err());
    }

    #[test]
    fn stiffness_order_breaks_modulus_ties_by_wave_speed() {
        let t = MaterialTable::shipped();
        let names: Vec<_> = t.sorted_by_stiffness().iter().map(|m| m.name.clone()).collect();
        let pos = |n: &str| names.iter().position(|x| x == n).unwrap();
        assert!(pos("Metal") < pos("Ceramic"));
        assert!(pos("Fabric") == 0);
    }
}

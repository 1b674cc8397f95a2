//! OSC 1.0 messages (no bundles) and the tap requests carried over OSC or
//! WebSocket JSON.

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscError {
    #[error("string {0:?} is not ASCII")]
    NonAscii(String),
    #[error("string contains NUL")]
    InteriorNul,
    #[error("address {0:?} must start with '/'")]
    BadAddress(String),
    #[error("malformed packet: {0}")]
    Malformed(&'static str),
    #[error("unsupported type tag '{0}'")]
    UnsupportedType(char),
    #[error("bundles are not supported")]
    Bundle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
    Blob(Vec<u8>),
}

impl OscArg {
    fn tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
            OscArg::Blob(_) => b'b',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscMessage {
    pub address: String,
    pub args: Vec<OscArg>,
}

impl OscMessage {
    pub fn new(address: impl Into<String>, args: Vec<OscArg>) -> Self {
        OscMessage {
            address: address.into(),
            args,
        }
    }

    /// The type-tag string, e.g. `",sf"`.
    pub fn type_tags(&self) -> String {
        std::iter::once(',')
            .chain(self.args.iter().map(|a| a.tag() as char))
            .collect()
    }
}

fn pad4(n: usize) -> usize {
    (n + 3) & !3
}

fn push_str(out: &mut Vec<u8>, s: &str) -> Result<(), OscError> {
    if !s.is_ascii() {
        return Err(OscError::NonAscii(s.to_string()));
    }
    if s.contains('\0') {
        return Err(OscError::InteriorNul);
    }
    out.extend_from_slice(s.as_bytes());
    // At least one NUL, then pad to a multiple of four.
    let end = out.len() - s.len() + pad4(s.len() + 1);
    out.resize(end, 0);
    Ok(())
}

pub fn encode_osc(msg: &OscMessage) -> Result<Vec<u8>, OscError> {
    if !msg.address.starts_with('/') {
        return Err(OscError::BadAddress(msg.address.clone()));
    }
    let mut out = Vec::with_capacity(64);
    push_str(&mut out, &msg.address)?;
    push_str(&mut out, &msg.type_tags())?;
    for a in &msg.args {
        match a {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Str(s) => push_str(&mut out, s)?,
            OscArg::Blob(b) => {
                let len = i32::try_from(b.len()).map_err(|_| OscError::Malformed("blob too large"))?;
                out.extend_from_slice(&len.to_be_bytes());
                out.extend_from_slice(b);
                out.resize(pad4(out.len()), 0);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], OscError> {
        let end = self.pos.checked_add(n).ok_or(OscError::Malformed("length overflow"))?;
        let s = self.buf.get(self.pos..end).ok_or(OscError::Malformed("truncated argument"))?;
        self.pos = end;
        Ok(s)
    }

    fn word(&mut self) -> Result<[u8; 4], OscError> {
        let s = self.take(4)?;
        Ok([s[0], s[1], s[2], s[3]])
    }

    fn string(&mut self) -> Result<&'a str, OscError> {
        let rest = &self.buf[self.pos..];
        let len = rest
            .iter()
            .position(|&b| b == 0)
            .ok_or(OscError::Malformed("unterminated string"))?;
        let padded = self.take(pad4(len + 1))?;
        if padded[len..].iter().any(|&b| b != 0) {
            return Err(OscError::Malformed("bad string padding"));
        }
        let s = std::str::from_utf8(&padded[..len]).map_err(|_| OscError::Malformed("string not ASCII"))?;
        if !s.is_ascii() {
            return Err(OscError::Malformed("string not ASCII"));
        }
        Ok(s)
    }
}

/// Decodes one message. Never panics; anything that is not a well-formed
/// OSC 1.0 message of the supported types is an error.
pub fn decode_osc(bytes: &[u8]) -> Result<OscMessage, OscError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(4) {
        return Err(OscError::Malformed("length is not a positive multiple of 4"));
    }
    if bytes.starts_with(b"#bundle\0") {
        return Err(OscError::Bundle);
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let address = r.string()?;
    if !address.starts_with('/') {
        return Err(OscError::Malformed("address must start with '/'"));
    }
    if r.pos == bytes.len() {
        return Err(OscError::Malformed("missing type tags"));
    }
    let tags = r.string()?;
    let tags = tags.strip_prefix(',').ok_or(OscError::Malformed("type tags must start with ','"))?;
    let mut args = Vec::with_capacity(tags.len());
    for t in tags.chars() {
        args.push(match t {
            'i' => OscArg::Int(i32::from_be_bytes(r.word()?)),
            'f' => OscArg::Float(f32::from_be_bytes(r.word()?)),
            's' => OscArg::Str(r.string()?.to_string()),
            'b' => {
                let n = i32::from_be_bytes(r.word()?);
                let n = usize::try_from(n).map_err(|_| OscError::Malformed("negative blob size"))?;
                let data = r.take(pad4(n))?;
                if data[n..].iter().any(|&b| b != 0) {
                    return Err(OscError::Malformed("bad blob padding"));
                }
                OscArg::Blob(data[..n].to_vec())
            }
            other => return Err(OscError::UnsupportedType(other)),
        });
    }
    if r.pos != bytes.len() {
        return Err(OscError::Malformed("trailing bytes"));
    }
    Ok(OscMessage {
        address: address.to_string(),
        args,
    })
}

pub const ADDR_TAP_WORLD: &str = "/tap/world";
pub const ADDR_TAP_MATERIAL: &str = "/tap/material";
pub const ADDR_CONFIG_MATERIAL: &str = "/config/material";

/// A tap at a world-space point, or on a named material.
#[derive(Debug, Clone, PartialEq)]
pub enum TapRequest {
    World { x: f64, y: f64, z: f64, force: f64 },
    Material { material: String, force: f64 },
}

impl TapRequest {
    pub fn force(&self) -> f64 {
        match self {
            TapRequest::World { force, .. } | TapRequest::Material { force, .. } => *force,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Tap(TapRequest),
    /// Material whose default thickness sets the plate for later world taps.
    SetPlateMaterial(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error("unknown address {0}")]
    UnknownAddress(String),
    #[error("{address} expects arguments {expected}, got {got}")]
    Arguments {
        address: &'static str,
        expected: &'static str,
        got: String,
    },
    #[error("force must be in (0, 1], got {0}")]
    Force(f64),
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("bad request: {0}")]
    Json(String),
}

fn check_force(f: f64) -> Result<f64, RequestError> {
    if f > 0.0 && f <= 1.0 {
        Ok(f)
    } else {
        Err(RequestError::Force(f))
    }
}

impl Command {
    pub fn from_osc(msg: &OscMessage) -> Result<Command, RequestError> {
        use OscArg::*;
        let bad = |address, expected| RequestError::Arguments {
            address,
            expected,
            got: msg.type_tags(),
        };
        match msg.address.as_str() {
            ADDR_TAP_WORLD => match msg.args.as_slice() {
                [Float(x), Float(y), Float(z), Float(f)] => {
                    let (x, y, z) = (*x as f64, *y as f64, *z as f64);
                    if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                        return Err(RequestError::NonFinite);
                    }
                    Ok(Command::Tap(TapRequest::World {
                        x,
                        y,
                        z,
                        force: check_force(*f as f64)?,
                    }))
                }
                _ => Err(bad(ADDR_TAP_WORLD, ",ffff")),
            },
            ADDR_TAP_MATERIAL => match msg.args.as_slice() {
                [Str(m), Float(f)] => Ok(Command::Tap(TapRequest::Material {
                    material: m.clone(),
                    force: check_force(*f as f64)?,
                })),
                _ => Err(bad(ADDR_TAP_MATERIAL, ",sf")),
            },
            ADDR_CONFIG_MATERIAL => match msg.args.as_slice() {
                [Str(m)] => Ok(Command::SetPlateMaterial(m.clone())),
                _ => Err(bad(ADDR_CONFIG_MATERIAL, ",s")),
            },
            other => Err(RequestError::UnknownAddress(other.to_string())),
        }
    }

    pub fn to_osc(&self) -> OscMessage {
        match self {
            Command::Tap(TapRequest::World { x, y, z, force }) => OscMessage::new(
                ADDR_TAP_WORLD,
                vec![
                    OscArg::Float(*x as f32),
                    OscArg::Float(*y as f32),
                    OscArg::Float(*z as f32),
                    OscArg::Float(*force as f32),
                ],
            ),
            Command::Tap(TapRequest::Material { material, force }) => OscMessage::new(
                ADDR_TAP_MATERIAL,
                vec![OscArg::Str(material.clone()), OscArg::Float(*force as f32)],
            ),
            Command::SetPlateMaterial(m) => OscMessage::new(ADDR_CONFIG_MATERIAL, vec![OscArg::Str(m.clone())]),
        }
    }
}

#[derive(Deserialize)]
struct JsonTap {
    #[serde(rename = "type")]
    kind: String,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    material: Option<String>,
    force: Option<f64>,
}

impl TapRequest {
    /// Parses `{"type":"tap", "x":…, "y":…, "z":…, "force":…}` or
    /// `{"type":"tap", "material":…, "force":…}`. `force` defaults to 1.
    pub fn from_json(text: &str) -> Result<TapRequest, RequestError> {
        let j: JsonTap = serde_json::from_str(text).map_err(|e| RequestError::Json(e.to_string()))?;
        if j.kind != "tap" {
            return Err(RequestError::Json(format!("unknown request type {:?}", j.kind)));
        }
        let force = check_force(j.force.unwrap_or(1.0))?;
        match (j.x, j.y, j.z, j.material) {
            (Some(x), Some(y), Some(z), None) => {
                if !(x.is_finite() && y.is_finite() && z.is_finite()) {
                    return Err(RequestError::NonFinite);
                }
                Ok(TapRequest::World { x, y, z, force })
            }
            (None, None, None, Some(material)) => Ok(TapRequest::Material { material, force }),
            _ => Err(RequestError::Json(
                "a tap needs either x, y and z or material, not both".into(),
            )),
        }
    }
}

//! Material lookup at a world-space point from a short history of
//! color-coded segmentation masks.
//!
//! Camera convention: +z forward, +x right, +y down, pixel centres at
//! integer coordinates.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::material::{MaterialTable, Rgb};

pub const MASK_HISTORY: usize = 5;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    BadIntrinsics(String),
    #[error("invalid pose: {0}")]
    BadPose(String),
    #[error("mask has {got} pixels, expected {width}x{height}")]
    MaskSize { width: u32, height: u32, got: usize },
    #[error("mask timestamp {got} is not after the newest buffered {newest}")]
    StaleTimestamp { newest: f64, got: f64 },
    #[error("no mask voted for a material ({masks} masks skipped)")]
    NoVotes { masks: usize },
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn file_err(path: &Path, message: impl ToString) -> SceneError {
    SceneError::File {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, SceneError> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(SceneError::BadIntrinsics(format!(
                "focal lengths must be > 0 (fx {}, fy {})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(SceneError::BadIntrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    camera_to_world: Matrix4<f64>,
}

impl CameraPose {
    pub fn new(camera_to_world: Matrix4<f64>) -> Result<Self, SceneError> {
        let r: Matrix3<f64> = camera_to_world.fixed_view::<3, 3>(0, 0).into();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) {
            return Err(SceneError::BadPose(format!("rotation not orthonormal (error {err:.2e})")));
        }
        if r.determinant() <= 0.0 {
            return Err(SceneError::BadPose("rotation has negative determinant".into()));
        }
        let last = camera_to_world.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(SceneError::BadPose("last row must be (0, 0, 0, 1)".into()));
        }
        if camera_to_world.iter().any(|v| !v.is_finite()) {
            return Err(SceneError::BadPose("non-finite entry".into()));
        }
        Ok(CameraPose { camera_to_world })
    }

    pub fn identity() -> Self {
        CameraPose {
            camera_to_world: Matrix4::identity(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        let mut m = rotation.to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        CameraPose { camera_to_world: m }
    }

    /// Row-major 16 values.
    pub fn from_row_major(v: &[f64]) -> Result<Self, SceneError> {
        if v.len() != 16 {
            return Err(SceneError::BadPose(format!("expected 16 values, got {}", v.len())));
        }
        Self::new(Matrix4::from_row_slice(v))
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.camera_to_world.transpose().iter().copied().collect()
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.camera_to_world
    }

    fn rotation(&self) -> Matrix3<f64> {
        self.camera_to_world.fixed_view::<3, 3>(0, 0).into()
    }

    fn translation(&self) -> Vector3<f64> {
        self.camera_to_world.fixed_view::<3, 1>(0, 3).into()
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation().transpose() * (p.coords - self.translation()))
    }

    pub fn camera_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation() * p.coords + self.translation())
    }
}

/// Real-valued pixel coordinates of `point`; may lie outside the image.
pub fn project_world_to_pixel(
    point: &Point3<f64>,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> Result<(f64, f64), SceneError> {
    let c = pose.world_to_camera(point);
    if !(c.z > 0.0) {
        return Err(SceneError::BehindCamera(c.z));
    }
    Ok((intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy))
}

/// World point seen at pixel `(u, v)` at camera-space depth `depth`.
pub fn unproject_pixel(u: f64, v: f64, depth: f64, pose: &CameraPose, intr: &CameraIntrinsics) -> Point3<f64> {
    let c = Point3::new((u - intr.cx) / intr.fx * depth, (v - intr.cy) / intr.fy * depth, depth);
    pose.camera_to_world(&c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    pub width: u32,
    pub height: u32,
    /// Row-major.
    pub pixels: Vec<Rgb>,
    /// s
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl SegmentationMask {
    pub fn new(
        pixels: Vec<Rgb>,
        timestamp: f64,
        intrinsics: CameraIntrinsics,
        pose: CameraPose,
    ) -> Result<Self, SceneError> {
        intrinsics.validate()?;
        let (width, height) = (intrinsics.width, intrinsics.height);
        if pixels.len() != width as usize * height as usize {
            return Err(SceneError::MaskSize {
                width,
                height,
                got: pixels.len(),
            });
        }
        Ok(SegmentationMask {
            width,
            height,
            pixels,
            timestamp,
            intrinsics,
            pose,
        })
    }

    pub fn get(&self, u: i64, v: i64) -> Option<Rgb> {
        if u < 0 || v < 0 || u >= self.width as i64 || v >= self.height as i64 {
            return None;
        }
        Some(self.pixels[v as usize * self.width as usize + u as usize])
    }
}

/// Most frequent color among the in-bounds pixels of the 3x3 block centred on
/// `(u, v)`. Ties go to the color with a pixel nearest the centre, then to
/// the lexicographically smallest RGB.
pub fn sample_neighborhood(mask: &SegmentationMask, u: i64, v: i64) -> Option<Rgb> {
    // (color, count, nearest squared distance)
    let mut seen: [(Rgb, u8, u8); 9] = [(Rgb::new(0, 0, 0), 0, 0); 9];
    let mut kinds = 0;
    for dv in -1..=1i64 {
        for du in -1..=1i64 {
            let Some(c) = mask.get(u + du, v + dv) else {
                continue;
            };
            let d = (du * du + dv * dv) as u8;
            match seen[..kinds].iter_mut().find(|s| s.0 == c) {
                Some(s) => {
                    s.1 += 1;
                    s.2 = s.2.min(d);
                }
                None => {
                    seen[kinds] = (c, 1, d);
                    kinds += 1;
                }
            }
        }
    }
    seen[..kinds]
        .iter()
        .min_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0 .0.cmp(&b.0 .0)))
        .map(|s| s.0)
}

/// Up to [`MASK_HISTORY`] masks, oldest first, with strictly increasing
/// timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskBuffer {
    masks: VecDeque<SegmentationMask>,
}

impl MaskBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_mask(&mut self, mask: SegmentationMask) -> Result<(), SceneError> {
        if let Some(newest) = self.masks.back() {
            if !(mask.timestamp > newest.timestamp) {
                return Err(SceneError::StaleTimestamp {
                    newest: newest.timestamp,
                    got: mask.timestamp,
                });
            }
        }
        if self.masks.len() == MASK_HISTORY {
            self.masks.pop_front();
        }
        self.masks.push_back(mask);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn masks(&self) -> impl DoubleEndedIterator<Item = &SegmentationMask> + ExactSizeIterator {
        self.masks.iter()
    }

    pub fn newest(&self) -> Option<&SegmentationMask> {
        self.masks.back()
    }
}

/// How one mask contributed to a resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskVote {
    Material { name: String, u: f64, v: f64 },
    BehindCamera,
    OutOfFrame,
    Unmapped(Rgb),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub material: String,
    pub tally: BTreeMap<String, usize>,
    /// One entry per mask, oldest first.
    pub votes: Vec<MaskVote>,
}

impl Resolution {
    pub fn vote_count(&self) -> usize {
        self.tally.values().sum()
    }

    /// Pixel position, as fractions of the image size, at which the newest
    /// mask that voted for the winner saw the point.
    pub fn winner_image_fraction(&self, buffer: &MaskBuffer) -> Option<(f64, f64)> {
        self.votes
            .iter()
            .zip(buffer.masks())
            .rev()
            .find_map(|(v, m)| match v {
                MaskVote::Material { name, u, v } if *name == self.material => {
                    Some((u / m.width as f64, v / m.height as f64))
                }
                _ => None,
            })
    }
}

pub fn mask_vote(mask: &SegmentationMask, point: &Point3<f64>, table: &MaterialTable) -> MaskVote {
    let Ok((u, v)) = project_world_to_pixel(point, &mask.pose, &mask.intrinsics) else {
        return MaskVote::BehindCamera;
    };
    let (ui, vi) = (u.round(), v.round());
    if !(ui >= 0.0 && vi >= 0.0 && ui < mask.width as f64 && vi < mask.height as f64) {
        return MaskVote::OutOfFrame;
    }
    let Some(rgb) = sample_neighborhood(mask, ui as i64, vi as i64) else {
        return MaskVote::OutOfFrame;
    };
    match table.lookup_by_color(rgb) {
        Ok(m) => MaskVote::Material {
            name: m.name.clone(),
            u,
            v,
        },
        Err(_) => MaskVote::Unmapped(rgb),
    }
}

/// Plurality vote over the buffered masks. Ties go to the candidate whose
/// latest vote is most recent.
pub fn resolve_material(
    buffer: &MaskBuffer,
    point: &Point3<f64>,
    table: &MaterialTable,
) -> Result<Resolution, SceneError> {
    let votes: Vec<MaskVote> = buffer.masks().map(|m| mask_vote(m, point, table)).collect();
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    let mut last_seen: HashMap<&str, usize> = HashMap::new();
    for (i, v) in votes.iter().enumerate() {
        if let MaskVote::Material { name, .. } = v {
            *tally.entry(name.clone()).or_default() += 1;
            last_seen.insert(name, i);
        }
    }
    let winner = tally
        .iter()
        .max_by_key(|(name, &count)| (count, last_seen[name.as_str()]))
        .map(|(name, _)| name.clone())
        .ok_or(SceneError::NoVotes { masks: votes.len() })?;
    Ok(Resolution {
        material: winner,
        tally,
        votes,
    })
}

/// A mask buffer with one writer and many readers; readers work on
/// immutable snapshots.
#[derive(Debug, Default, Clone)]
pub struct SharedMaskBuffer {
    inner: Arc<RwLock<Arc<MaskBuffer>>>,
}

impl SharedMaskBuffer {
    pub fn new(buffer: MaskBuffer) -> Self {
        SharedMaskBuffer {
            inner: Arc::new(RwLock::new(Arc::new(buffer))),
        }
    }

    pub fn snapshot(&self) -> Arc<MaskBuffer> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn push_mask(&self, mask: SegmentationMask) -> Result<(), SceneError> {
        let mut guard = self.inner.write().unwrap_or_else(|e| e.into_inner());
        let mut next = (**guard).clone();
        next.push_mask(mask)?;
        *guard = Arc::new(next);
        Ok(())
    }
}

/// Sidecar metadata stored next to each mask PNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub timestamp: f64,
    /// Row-major 4x4.
    pub camera_to_world: Vec<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl MaskMeta {
    pub fn of(mask: &SegmentationMask) -> Self {
        let k = mask.intrinsics;
        MaskMeta {
            timestamp: mask.timestamp,
            camera_to_world: mask.pose.to_row_major(),
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

pub const BACKDROP_FILE: &str = "backdrop.png";

/// A scene directory: `*.png` masks, each with a same-named `*.toml`
/// sidecar, and an optional `backdrop.png` photo.
#[derive(Debug, Clone)]
pub struct Scene {
    /// Sorted by timestamp.
    pub masks: Vec<SegmentationMask>,
    /// Mask file stems, parallel to `masks`.
    pub names: Vec<String>,
    pub backdrop: Option<PathBuf>,
}

impl Scene {
    /// The newest [`MASK_HISTORY`] masks as a buffer.
    pub fn buffer(&self) -> MaskBuffer {
        let mut b = MaskBuffer::new();
        for m in &self.masks {
            // Already sorted and deduplicated by load.
            let _ = b.push_mask(m.clone());
        }
        b
    }
}

fn read_mask(png: &Path, meta_path: &Path) -> Result<SegmentationMask, SceneError> {
    let text = fs::read_to_string(meta_path).map_err(|e| file_err(meta_path, e))?;
    let meta: MaskMeta = toml::from_str(&text).map_err(|e| file_err(meta_path, e.message()))?;
    let img = image::open(png).map_err(|e| file_err(png, e))?.to_rgb8();
    if img.width() != meta.width || img.height() != meta.height {
        return Err(file_err(
            png,
            format!(
                "image is {}x{} but metadata says {}x{}",
                img.width(),
                img.height(),
                meta.width,
                meta.height
            ),
        ));
    }
    let intr = CameraIntrinsics::new(meta.fx, meta.fy, meta.cx, meta.cy, meta.width, meta.height)
        .map_err(|e| file_err(meta_path, e))?;
    let pose = CameraPose::from_row_major(&meta.camera_to_world).map_err(|e| file_err(meta_path, e))?;
    let pixels = img.pixels().map(|p| Rgb(p.0)).collect();
    SegmentationMask::new(pixels, meta.timestamp, intr, pose)
}

pub fn load_scene_dir(dir: &Path) -> Result<Scene, SceneError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| file_err(dir, e))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if path.file_name().and_then(|n| n.to_str()) == Some(BACKDROP_FILE) {
            continue;
        }
        let meta = path.with_extension("toml");
        if !meta.exists() {
            log::warn!("{}: no sidecar metadata, skipped", path.display());
            continue;
        }
        let mask = read_mask(&path, &meta)?;
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        found.push((mask, stem));
    }
    if found.is_empty() {
        return Err(file_err(dir, "no masks found"));
    }
    found.sort_by(|a, b| a.0.timestamp.total_cmp(&b.0.timestamp));
    if let Some(w) = found.windows(2).find(|w| w[0].0.timestamp == w[1].0.timestamp) {
        return Err(file_err(dir, format!("masks {} and {} share a timestamp", w[0].1, w[1].1)));
    }
    let backdrop = dir.join(BACKDROP_FILE);
    let (masks, names) = found.into_iter().unzip();
    Ok(Scene {
        masks,
        names,
        backdrop: backdrop.exists().then_some(backdrop),
    })
}

pub fn save_mask(dir: &Path, stem: &str, mask: &SegmentationMask) -> Result<(), SceneError> {
    let png = dir.join(format!("{stem}.png"));
    let raw: Vec<u8> = mask.pixels.iter().flat_map(|p| p.0).collect();
    image::save_buffer(&png, &raw, mask.width, mask.height, image::ColorType::Rgb8)
        .map_err(|e| file_err(&png, e))?;
    let meta = dir.join(format!("{stem}.toml"));
    let text = toml::to_string(&MaskMeta::of(mask)).map_err(|e| file_err(&meta, e))?;
    fs::write(&meta, text).map_err(|e| file_err(&meta, e))?;
    Ok(())
}

/// Synthetic scenes with a known layout, for tests and demos.
pub mod fixtures {
    use super::*;

    pub const WIDTH: u32 = 960;
    pub const HEIGHT: u32 = 540;
    pub const FOCAL: f64 = 700.0;
    /// Depth of the tapped wall plane, m.
    pub const PLANE_Z: f64 = 2.0;
    pub const FRAME_INTERVAL: f64 = 0.2;
    const COLS: usize = 4;
    const ROWS: usize = 3;
    const CELL_W: f64 = 0.5;
    const CELL_H: f64 = 0.4;
    // Unlabelled border around each cell.
    const GAP: f64 = 0.03;

    pub fn intrinsics() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: FOCAL,
            fy: FOCAL,
            cx: WIDTH as f64 / 2.0,
            cy: HEIGHT as f64 / 2.0,
            width: WIDTH,
            height: HEIGHT,
        }
    }

    /// Scripted camera path: a slow pan with a little yaw and bob.
    pub fn path_pose(k: usize) -> CameraPose {
        let s = k as f64 - 2.0;
        let rot = Rotation3::from_euler_angles(0.004 * s, 0.015 * s, 0.002 * s);
        CameraPose::from_parts(rot, Vector3::new(0.06 * s, 0.02 * (k % 2) as f64, 0.03 * s))
    }

    fn render(k: usize, label: impl Fn(f64, f64) -> Rgb) -> SegmentationMask {
        let intr = intrinsics();
        let pose = path_pose(k);
        let mut pixels = Vec::with_capacity((WIDTH * HEIGHT) as usize);
        let origin = pose.camera_to_world(&Point3::origin());
        for v in 0..HEIGHT {
            for u in 0..WIDTH {
                let far = unproject_pixel(u as f64, v as f64, 1.0, &pose, &intr);
                let dir = far - origin;
                let t = (PLANE_Z - origin.z) / dir.z;
                let hit = origin + dir * t;
                pixels.push(label(hit.x, hit.y));
            }
        }
        SegmentationMask::new(pixels, k as f64 * FRAME_INTERVAL, intr, pose).expect("fixture mask")
    }

    fn cell_of(x: f64, y: f64) -> Option<usize> {
        let gx = (x + COLS as f64 * CELL_W / 2.0) / CELL_W;
        let gy = (y + ROWS as f64 * CELL_H / 2.0) / CELL_H;
        if !(gx >= 0.0 && gy >= 0.0 && gx < COLS as f64 && gy < ROWS as f64) {
            return None;
        }
        let (fx, fy) = (gx.fract() * CELL_W, gy.fract() * CELL_H);
        if !(GAP..=CELL_W - GAP).contains(&fx) || !(GAP..=CELL_H - GAP).contains(&fy) {
            return None;
        }
        Some(gy as usize * COLS + gx as usize)
    }

    /// World-space centre of the cell holding the `index`-th material.
    pub fn cell_center(index: usize) -> Point3<f64> {
        let (c, r) = (index % COLS, index / COLS);
        Point3::new(
            (c as f64 + 0.5) * CELL_W - COLS as f64 * CELL_W / 2.0,
            (r as f64 + 0.5) * CELL_H - ROWS as f64 * CELL_H / 2.0,
            PLANE_Z,
        )
    }

    /// Up to twelve materials of `table` in a 4x3 grid of cells on the
    /// plane z = 2 m, seen by five frames along [`path_pose`]. Gaps
    /// between cells are black (unmapped).
    pub fn grid_scene(table: &MaterialTable) -> Vec<SegmentationMask> {
        (0..MASK_HISTORY).map(|k| grid_scene_frame(table, k)).collect()
    }

    /// Where the grid scene places `name`.
    pub fn grid_point(table: &MaterialTable, name: &str) -> Option<Point3<f64>> {
        table
            .entries()
            .iter()
            .take(COLS * ROWS)
            .position(|m| m.name.eq_ignore_ascii_case(name))
            .map(cell_center)
    }

    /// Wood on the left of a boundary that moves between frames, Plastic on
    /// the right. At x = 0 three frames see Wood and two see Plastic.
    pub fn split_scene(table: &MaterialTable) -> Vec<SegmentationMask> {
        let wood = table.lookup_by_name("Wood").expect("Wood").label_color;
        let plastic = table.lookup_by_name("Plastic").expect("Plastic").label_color;
        let boundary = [0.12, -0.15, 0.2, -0.1, 0.15];
        (0..MASK_HISTORY)
            .map(|k| render(k, |x, _| if x < boundary[k] { wood } else { plastic }))
            .collect()
    }

    /// A photo-like backdrop for the grid scene as seen from the newest
    /// frame: softly shaded cells on a dark wall.
    pub fn grid_backdrop(table: &MaterialTable) -> image::RgbImage {
        let newest = grid_scene_frame(table, MASK_HISTORY - 1);
        image::RgbImage::from_fn(WIDTH, HEIGHT, |u, v| {
            let c = newest.pixels[(v * WIDTH + u) as usize].0;
            let shade = 0.75 + 0.25 * ((u as f64 * 0.05).sin() * (v as f64 * 0.07).cos());
            let base = if c == [0, 0, 0] { [40, 38, 36] } else { c };
            image::Rgb(base.map(|x| (x as f64 * 0.6 * shade + 50.0).min(255.0) as u8))
        })
    }

    fn grid_scene_frame(table: &MaterialTable, k: usize) -> SegmentationMask {
        let colors: Vec<Rgb> = table.entries().iter().take(COLS * ROWS).map(|m| m.label_color).collect();
        render(k, |x, y| {
            cell_of(x, y)
                .and_then(|i| colors.get(i).copied())
                .unwrap_or(Rgb::new(0, 0, 0))
        })
    }

    /// Writes a scene directory (`mask_000.png` + `mask_000.toml`, …).
    pub fn write_scene(dir: &Path, masks: &[SegmentationMask], backdrop: Option<&image::RgbImage>) -> Result<(), SceneError> {
        fs::create_dir_all(dir)?;
        for (i, m) in masks.iter().enumerate() {
            save_mask(dir, &format!("mask_{i:03}"), m)?;
        }
        if let Some(img) = backdrop {
            let p = dir.join(BACKDROP_FILE);
            img.save(&p).map_err(|e| file_err(&p, e))?;
        }
        Ok(())
    }
}

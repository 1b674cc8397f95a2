//! Brute-force material recount: projects with a fully inverted 4x4 pose,
//! sorts every 3x3 neighbourhood and tallies by hand.

use std::collections::HashMap;

use nalgebra::{Point3, Rotation3, Vector3, Vector4};
use rand::Rng;
use sonomat::material::{MaterialTable, Rgb};
use sonomat::scene::{CameraIntrinsics, CameraPose, MaskBuffer, SegmentationMask};

pub fn pixel_of(mask: &SegmentationMask, p: &Point3<f64>) -> Option<(f64, f64)> {
    let inv = mask.pose.matrix().try_inverse()?;
    let c = inv * Vector4::new(p.x, p.y, p.z, 1.0);
    if c.z <= 0.0 {
        return None;
    }
    let k = &mask.intrinsics;
    Some((k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy))
}

/// Label under pixel (u, v): most frequent colour of the in-bounds 3x3
/// block; ties by the nearest occurrence to the centre, then smallest RGB.
pub fn neighbourhood_label(mask: &SegmentationMask, u: i64, v: i64) -> Option<Rgb> {
    let mut samples: Vec<(Rgb, i64)> = Vec::new();
    for dv in [-1i64, 0, 1] {
        for du in [-1i64, 0, 1] {
            let (x, y) = (u + du, v + dv);
            if x >= 0 && y >= 0 && x < mask.width as i64 && y < mask.height as i64 {
                samples.push((mask.pixels[(y * mask.width as i64 + x) as usize], du * du + dv * dv));
            }
        }
    }
    let mut best: Option<(usize, i64, Rgb)> = None;
    for &(c, _) in &samples {
        let count = samples.iter().filter(|s| s.0 == c).count();
        let near = samples.iter().filter(|s| s.0 == c).map(|s| s.1).min().unwrap();
        let better = match best {
            None => true,
            Some((bc, bn, brgb)) => count > bc || (count == bc && (near < bn || (near == bn && c.0 < brgb.0))),
        };
        if better {
            best = Some((count, near, c));
        }
    }
    best.map(|b| b.2)
}

/// Winner and tally; `None` when no mask votes. Among tied counts the
/// material voted by the newest mask wins.
pub fn recount(masks: &[SegmentationMask], p: &Point3<f64>, table: &MaterialTable) -> Option<(String, HashMap<String, usize>)> {
    let colors: HashMap<Rgb, String> = table.entries().iter().map(|e| (e.label_color, e.name.clone())).collect();
    let mut tally: HashMap<String, usize> = HashMap::new();
    let mut latest: HashMap<String, usize> = HashMap::new();
    for (i, m) in masks.iter().enumerate() {
        let Some((u, v)) = pixel_of(m, p) else { continue };
        let (u, v) = (u.round(), v.round());
        if u < 0.0 || v < 0.0 || u >= m.width as f64 || v >= m.height as f64 {
            continue;
        }
        let Some(rgb) = neighbourhood_label(m, u as i64, v as i64) else { continue };
        if let Some(name) = colors.get(&rgb) {
            *tally.entry(name.clone()).or_insert(0) += 1;
            latest.insert(name.clone(), i);
        }
    }
    let top = *tally.values().max()?;
    let winner = tally
        .iter()
        .filter(|(_, &c)| c == top)
        .max_by_key(|(n, _)| latest[*n])
        .map(|(n, _)| n.clone())?;
    Some((winner, tally))
}

fn random_pose(rng: &mut impl Rng, spread: f64) -> CameraPose {
    let rot = Rotation3::from_euler_angles(
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
        rng.gen_range(-spread..spread),
    );
    let t = Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
    CameraPose::from_parts(rot, t)
}

fn random_mask(rng: &mut impl Rng, palette: &[Rgb], t: f64) -> SegmentationMask {
    let (w, h) = (rng.gen_range(6..20u32), rng.gen_range(5..14u32));
    let intr = CameraIntrinsics::new(
        rng.gen_range(5.0..25.0),
        rng.gen_range(5.0..25.0),
        w as f64 / 2.0 + rng.gen_range(-1.0..1.0),
        h as f64 / 2.0 + rng.gen_range(-1.0..1.0),
        w,
        h,
    )
    .unwrap();
    // coarse patches so neighbourhoods are often (but not always) uniform
    let cell = rng.gen_range(1..4u32);
    let cols = w.div_ceil(cell);
    let patches: Vec<Rgb> = (0..cols * h.div_ceil(cell)).map(|_| palette[rng.gen_range(0..palette.len())]).collect();
    let pixels = (0..h)
        .flat_map(|v| (0..w).map(move |u| (u, v)))
        .map(|(u, v)| patches[((v / cell) * cols + u / cell) as usize])
        .collect();
    let pose = if rng.gen_bool(0.1) {
        // facing away
        CameraPose::from_parts(Rotation3::from_euler_angles(0.0, std::f64::consts::PI, 0.0), Vector3::zeros())
    } else {
        random_pose(rng, 0.25)
    };
    SegmentationMask::new(pixels, t, intr, pose).unwrap()
}

pub struct Scenario {
    pub buffer: MaskBuffer,
    /// The masks the buffer should have kept, oldest first.
    pub kept: Vec<SegmentationMask>,
    pub point: Point3<f64>,
}

/// One to seven small random masks (so some get evicted) over a palette of
/// four materials plus two unmapped colours, and a point in front of the
/// cameras.
pub fn random_scenario(rng: &mut impl Rng, table: &MaterialTable) -> Scenario {
    let mut palette: Vec<Rgb> = ["Glass", "Wood", "Metal", "Cork"]
        .iter()
        .map(|n| table.lookup_by_name(n).unwrap().label_color)
        .collect();
    palette.push(Rgb::new(0, 0, 0));
    palette.push(Rgb::new(1, 2, 3));
    let n = rng.gen_range(1..=7);
    let mut masks: Vec<SegmentationMask> = (0..n).map(|k| random_mask(rng, &palette, k as f64 * 0.2)).collect();
    let mut buffer = MaskBuffer::new();
    for m in &masks {
        buffer.push_mask(m.clone()).unwrap();
    }
    let kept = masks.split_off(masks.len().saturating_sub(5));
    let point = Point3::new(rng.gen_range(-0.4..0.4), rng.gen_range(-0.3..0.3), rng.gen_range(0.8..2.5));
    Scenario { buffer, kept, point }
}

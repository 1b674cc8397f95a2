//! Builds the synthetic grid scene, then resolves world points by majority
//! vote over the mask history.

use nalgebra::Point3;
use sonomat::material::MaterialTable;
use sonomat::scene::{fixtures, project_world_to_pixel, resolve_material, MaskBuffer, MaskVote};

fn main() {
    let table = MaterialTable::shipped();
    let mut buffer = MaskBuffer::new();
    for mask in fixtures::grid_scene(&table) {
        buffer.push_mask(mask).unwrap();
    }
    println!("{} masks in history", buffer.len());

    for name in ["Wood", "Glass", "Metal"] {
        let p = fixtures::grid_point(&table, name).unwrap();
        let newest = buffer.newest().unwrap();
        let px = project_world_to_pixel(&p, &newest.pose, &newest.intrinsics);
        let r = resolve_material(&buffer, &p, &table).unwrap();
        println!("{name:<6} at {:?} -> {} {:?} (newest frame pixel {:?})", p.coords.as_slice(), r.material, r.tally, px);
    }

    let behind = Point3::new(0.0, 0.0, -50.0);
    match resolve_material(&buffer, &behind, &table) {
        Ok(r) => println!("far point -> {}", r.material),
        Err(e) => {
            println!("far point: {e}");
        }
    }
    let r = resolve_material(&buffer, &fixtures::grid_point(&table, "Stone").unwrap(), &table).unwrap();
    let out = r.votes.iter().filter(|v| !matches!(v, MaskVote::Material { .. })).count();
    println!("Stone: {} votes, {} masks abstained", r.vote_count(), out);
}

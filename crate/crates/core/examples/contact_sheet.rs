//! Renders the 12-material contact sheet as a PNG plus a per-material
//! summary.

use sonomat::material::MaterialTable;
use sonomat::sheet::{contact_sheet, contact_sheet_image};

fn main() {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("contact_sheet.png"));
    let sheet = contact_sheet(&MaterialTable::shipped()).unwrap();
    for (e, _) in &sheet {
        println!(
            "{:<10} {:>6} modes  ridge {:>7.1} Hz  T60 {:>6}  centroid {:>6}",
            e.material,
            e.modes,
            e.ridge_hz,
            e.t60_s.map_or("-".into(), |t| format!("{t:.2} s")),
            e.centroid_hz.map_or("-".into(), |c| format!("{c:.0}"))
        );
    }
    contact_sheet_image(&sheet).unwrap().save(&out).unwrap();
    println!("wrote {}", out.display());
}

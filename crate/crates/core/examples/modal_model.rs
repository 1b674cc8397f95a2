//! Builds the modal model of a struck glass plate and prints the lowest
//! modes with their decay times.
//!
//!     cargo run --example modal_model -- Metal

use sonomat::material::MaterialTable;
use sonomat::plate::{build_modal_model, PlateGeometry};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "Glass".into());
    let table = MaterialTable::shipped();
    let material = table.lookup_by_name(&name).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2)
    });
    let g = PlateGeometry::new(0.22, 0.22, 0.005).unwrap();
    let model = build_modal_model(g, material, g.reference_tap(), g.default_listening_point(), 48_000.0).unwrap();
    println!(
        "{}: {} modes below {:.0} Hz, f11 {:.2} Hz, T60 ~ {:.2} s",
        material.name,
        model.modes.len(),
        0.45 * model.sample_rate,
        model.fundamental().frequency,
        model.t60_estimate().unwrap_or(f64::NAN)
    );
    println!("{:>3} {:>3} {:>10} {:>9} {:>10}", "m", "n", "f (Hz)", "T60 (s)", "gain");
    for md in model.modes.iter().take(12) {
        println!(
            "{:>3} {:>3} {:>10.2} {:>9.3} {:>10.3e}",
            md.m,
            md.n,
            md.frequency,
            6.9078 / md.decay_rate,
            md.gain
        );
    }
}

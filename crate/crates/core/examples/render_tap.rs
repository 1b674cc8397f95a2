//! Renders one strike per material to WAV files in the temp directory and
//! measures each clip.

use sonomat::analysis::{dominant_ridge, estimate_t60, spectral_centroid};
use sonomat::material::MaterialTable;
use sonomat::plate::{build_modal_model, PlateGeometry};
use sonomat::synth::{render_closed_form, ExcitationEvent};
use sonomat::wav::{write_wav, SampleFormat};

fn main() {
    let dir = std::env::temp_dir();
    let table = MaterialTable::shipped();
    let g = PlateGeometry::new(0.22, 0.22, 0.005).unwrap();
    let tap = g.reference_tap();
    for name in ["Glass", "Wood", "Metal", "Rubber"] {
        let m = table.lookup_by_name(name).unwrap();
        let model = build_modal_model(g, m, tap, g.default_listening_point(), 48_000.0).unwrap();
        let buf = render_closed_form(&model, &ExcitationEvent::new(0.0, 1.0, tap), 1.5).unwrap();
        let path = dir.join(format!("tap_{}.wav", name.to_lowercase()));
        write_wav(&path, &buf, SampleFormat::Pcm16).unwrap();
        println!(
            "{name:<7} ridge {:>7.1} Hz  T60 {:>5.2} s  centroid {:>6.0} Hz  -> {}",
            dominant_ridge(&buf).unwrap(),
            estimate_t60(&buf).unwrap_or(f64::NAN),
            spectral_centroid(&buf).unwrap_or(f64::NAN),
            path.display()
        );
    }
}

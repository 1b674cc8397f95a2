//! Drives a resonator bank block by block, as the audio thread does, with
//! strikes landing mid-block, and compares against the offline render.

use sonomat::analysis::rms_error;
use sonomat::material::MaterialTable;
use sonomat::plate::{build_modal_model, PlateGeometry};
use sonomat::synth::{peak, render_closed_form_raw, BlockEvent, ExcitationEvent, ResonatorBank};

const BLOCK: usize = 128;

fn main() {
    let table = MaterialTable::shipped();
    let g = PlateGeometry::new(0.22, 0.22, 0.005).unwrap();
    let model = build_modal_model(g, table.lookup_by_name("Wood").unwrap(), g.reference_tap(), g.default_listening_point(), 48_000.0).unwrap();

    // two strikes, the second softer and elsewhere
    let a = g.reference_tap();
    let b = g.at_fraction(0.7, 0.6);
    let strikes = [(1000usize, 1.0, a), (13_000, 0.4, b)];
    let len = 24_000;

    // Raw modal sums run well past full scale; scale the bank so its
    // output never hits the clamp.
    let offline: Vec<ExcitationEvent> = strikes.iter().map(|&(at, f, p)| ExcitationEvent::new(at as f64 / 48_000.0, f, p)).collect();
    let reference = render_closed_form_raw(&model, &offline, len as f64 / 48_000.0).unwrap();
    let gain = 0.9 / peak(&reference);
    let mut bank = ResonatorBank::new(&model, 48_000.0).unwrap();
    bank.set_output_gain(gain);

    let mut out = Vec::with_capacity(len);
    let mut block = [0.0; BLOCK];
    for start in (0..len).step_by(BLOCK) {
        let events: Vec<BlockEvent> = strikes
            .iter()
            .filter(|s| (start..start + BLOCK).contains(&s.0))
            .map(|&(at, force, plate_point)| BlockEvent {
                offset: at - start,
                force,
                plate_point,
            })
            .collect();
        bank.render_block(&events, &mut block).unwrap();
        out.extend_from_slice(&block);
        if start % (BLOCK * 40) == 0 {
            println!("t {:>6.3} s  active modes {:>4}", start as f64 / 48_000.0, bank.active_modes());
        }
    }

    let scaled: Vec<f64> = reference.iter().map(|x| x * gain).collect();
    println!("gain {gain:.3}, rms difference from offline render: {:.2e}", rms_error(&out[..len], &scaled));
}

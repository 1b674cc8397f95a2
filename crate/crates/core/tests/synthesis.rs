use std::f64::consts::PI;
use std::time::Instant;

use sonomat::analysis::{estimate_t60, frame_rms, rms_error, spectral_centroid};
use sonomat::material::MaterialTable;
use sonomat::plate::{build_modal_model, ModalModel, Mode, PlateGeometry, PlatePoint};
use sonomat::synth::{
    peak, render_closed_form, render_closed_form_raw, render_streamed, BlockEvent, ExcitationEvent, ResonatorBank,
};

fn model(name: &str, exc: (f64, f64)) -> ModalModel {
    let g = PlateGeometry::new(0.22, 0.22, 0.005).unwrap();
    let m = MaterialTable::shipped().lookup_by_name(name).unwrap().clone();
    build_modal_model(g, &m, g.at_fraction(exc.0, exc.1), g.default_listening_point(), 48_000.0).unwrap()
}

/// Sum of damped sines evaluated term by term.
fn direct_sum(model: &ModalModel, at: PlatePoint, force: f64, onset: f64, len: usize) -> Vec<f64> {
    let gains = model.gains_at(at).unwrap();
    let sr = model.sample_rate;
    (0..len)
        .map(|i| {
            let t = i as f64 / sr - onset;
            if t < 0.0 {
                return 0.0;
            }
            model
                .modes
                .iter()
                .zip(&gains)
                .map(|(m, g)| g * (-m.decay_rate * t).exp() * (2.0 * PI * m.frequency * t).sin())
                .sum::<f64>()
                * force
        })
        .collect()
}

#[test]
fn closed_form_equals_direct_mode_sum() {
    let m = model("Glass", (0.31, 0.27));
    let at = m.excitation_point;
    let raw = render_closed_form_raw(&m, &[ExcitationEvent::new(0.0, 0.7, at)], 0.25).unwrap();
    let want = direct_sum(&m, at, 0.7, 0.0, raw.len());
    let p = peak(&want);
    for (i, (a, b)) in raw.iter().zip(&want).enumerate() {
        assert!((a - b).abs() < 1e-9 * p.max(1.0), "sample {i}: {a} vs {b}");
    }
}

#[test]
fn streamed_matches_closed_form() {
    for name in ["Glass", "Wood", "Metal", "Plastic", "Cork"] {
        let m = model(name, (0.31, 0.27));
        let ev = ExcitationEvent::new(0.0, 1.0, m.excitation_point);
        let closed = render_closed_form(&m, &ev, 1.0).unwrap();
        for block in [64, 256, 1000, 4096] {
            let streamed = render_streamed(&m, &[ev], 1.0, block).unwrap();
            assert_eq!(streamed.samples.len(), closed.samples.len());
            let err = rms_error(&streamed.samples, &closed.samples) / closed.peak();
            assert!(err < 1e-3, "{name} block {block}: {err}");
        }
    }
}

#[test]
fn two_strikes_superpose() {
    let m = model("Glass", (0.31, 0.27));
    let at = m.excitation_point;
    let (a, b) = (ExcitationEvent::new(0.0, 0.5, at), ExcitationEvent::new(0.2, 0.5, at));
    let both = render_closed_form_raw(&m, &[a, b], 1.0).unwrap();
    let first = direct_sum(&m, at, 0.5, 0.0, both.len());
    let second = direct_sum(&m, at, 0.5, 0.2, both.len());
    let p = peak(&both);
    for i in 0..both.len() {
        assert!((both[i] - first[i] - second[i]).abs() < 1e-8 * p, "sample {i}");
    }
    // and the streamed bank agrees with the two-strike closed form
    let streamed = render_streamed(&m, &[a, b], 1.0, 256).unwrap();
    let scale = if p > 0.9 { 0.9 / p } else { 1.0 };
    let closed: Vec<f64> = both.iter().map(|s| s * scale).collect();
    assert!(rms_error(&streamed.samples, &closed) < 1e-3 * peak(&closed));
}

#[test]
fn strike_lands_on_its_sample_inside_a_block() {
    let m = model("Wood", (0.31, 0.27));
    let mut bank = ResonatorBank::new(&m, 48_000.0).unwrap();
    let mut out = vec![0.0; 256];
    let ev = BlockEvent {
        offset: 100,
        force: 1.0,
        plate_point: m.excitation_point,
    };
    bank.render_block(&[ev], &mut out).unwrap();
    assert!(out[..100].iter().all(|&s| s == 0.0));
    // sin(0) at the strike sample itself, up to rounding
    assert!(out[100].abs() < 1e-12);
    assert!(out[101].abs() > 0.1);
}

#[test]
fn zero_events_leave_bank_silent() {
    let m = model("Glass", (0.31, 0.27));
    let mut bank = ResonatorBank::new(&m, 48_000.0).unwrap();
    let mut out = vec![1.0; 512];
    for _ in 0..10 {
        bank.render_block(&[], &mut out).unwrap();
        assert!(out.iter().all(|&s| s == 0.0));
    }
    assert!(bank.state().all(|(a, b)| a == 0.0 && b == 0.0));
    assert!(bank.is_silent());
}

#[test]
fn per_mode_envelope_shrinks_by_exp_minus_alpha() {
    let m = model("Metal", (0.31, 0.27));
    let mut bank = ResonatorBank::new(&m, 48_000.0).unwrap();
    let mut out = vec![0.0; 64];
    let ev = BlockEvent {
        offset: 0,
        force: 1.0,
        plate_point: m.excitation_point,
    };
    bank.render_block(&[ev], &mut out).unwrap();
    let before: Vec<f64> = bank.envelopes().collect();
    bank.render_block(&[], &mut out).unwrap();
    for ((e0, e1), mode) in before.iter().zip(bank.envelopes()).zip(&m.modes) {
        if *e0 < 1e-20 {
            continue;
        }
        // squared amplitude, 64 samples
        let want = (-2.0 * mode.decay_rate * 64.0 / 48_000.0).exp();
        assert!((e1 / e0 - want).abs() < 1e-9, "{} vs {}", e1 / e0, want);
    }
}

#[test]
fn energy_decays_after_the_strike() {
    let window = 2048;
    for name in ["Glass", "Wood", "Metal", "Stone", "Plastic", "Ceramic", "Cork", "Paper"] {
        let m = model(name, (0.31, 0.27));
        let buf = render_closed_form(&m, &ExcitationEvent::new(0.0, 1.0, m.excitation_point), 1.5).unwrap();
        let rms = frame_rms(&buf.samples[window..], window);
        for w in rms.windows(2) {
            if w[0] < 1e-9 {
                break;
            }
            assert!(w[1] <= w[0] * 1.01, "{name}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn raw_render_is_linear() {
    let m = model("Glass", (0.31, 0.27));
    let at = m.excitation_point;
    let full = render_closed_form_raw(&m, &[ExcitationEvent::new(0.0, 1.0, at)], 0.5).unwrap();
    let light = render_closed_form_raw(&m, &[ExcitationEvent::new(0.0, 0.2, at)], 0.5).unwrap();
    for (a, b) in full.iter().zip(&light) {
        assert!((0.2 * a - b).abs() < 1e-12);
    }
    assert!((peak(&light) / peak(&full) - 0.2).abs() < 1e-12);
}

#[test]
fn glass_center_tap_decay_follows_least_damped_mode() {
    let m = model("Glass", (0.5, 0.5));
    let buf = render_closed_form(&m, &ExcitationEvent::new(0.0, 1.0, m.excitation_point), 1.5).unwrap();
    let gains = m.gains_at(m.excitation_point).unwrap();
    let alpha_min = m
        .modes
        .iter()
        .zip(&gains)
        .filter(|(_, g)| g.abs() > 1e-6)
        .map(|(md, _)| md.decay_rate)
        .fold(f64::INFINITY, f64::min);
    let want = 60.0 / (20.0 * std::f64::consts::E.log10() * alpha_min);
    let got = estimate_t60(&buf).unwrap();
    assert!((got - want).abs() / want < 0.10, "{got} vs {want}");
}

#[test]
fn soft_materials_ring_shorter_and_darker() {
    let t60 = |n: &str| {
        let m = model(n, (0.31, 0.27));
        let b = render_closed_form(&m, &ExcitationEvent::new(0.0, 1.0, m.excitation_point), 1.5).unwrap();
        (estimate_t60(&b).unwrap(), spectral_centroid(&b).unwrap())
    };
    let (fabric, cork, glass) = (t60("Fabric"), t60("Cork"), t60("Glass"));
    assert!(fabric.0 < cork.0 && cork.0 < glass.0, "{fabric:?} {cork:?} {glass:?}");
    assert!(fabric.1 < glass.1);
}

#[test]
fn two_hundred_modes_render_faster_than_real_time() {
    let g = PlateGeometry::new(0.22, 0.22, 0.005).unwrap();
    let mut m = model("Glass", (0.31, 0.27));
    m.modes = (0..200)
        .map(|k| Mode {
            m: 1 + k % 20,
            n: 1 + k / 20,
            frequency: 100.0 + 97.0 * k as f64,
            decay_rate: 3.0,
            gain: 0.0,
        })
        .collect();
    let at = g.at_fraction(0.31, 0.27);
    let t = Instant::now();
    let mut bank = ResonatorBank::new(&m, 48_000.0).unwrap();
    let mut out = vec![0.0; 256];
    let mut ev = Some(BlockEvent {
        offset: 0,
        force: 1.0,
        plate_point: at,
    });
    for _ in 0..48_000 / 256 + 1 {
        bank.render_block(ev.take().as_slice(), &mut out).unwrap();
    }
    assert_eq!(bank.active_modes(), 200);
    assert!(t.elapsed().as_secs_f64() < 1.0, "{:?}", t.elapsed());
}

#[test]
fn probe_peak_matches_direct_sum_and_leaves_bank_untouched() {
    for name in ["Glass", "Fabric", "Cork"] {
        let m = model(name, (0.31, 0.27));
        let at = m.geometry.at_fraction(0.31, 0.27);
        let want = peak(&direct_sum(&m, at, 0.7, 0.0, 480));
        let bank = ResonatorBank::new(&m, 48_000.0).unwrap();
        let got = bank.probe_peak(0.7, at, 480);
        assert!((got - want).abs() <= 1e-6 * want, "{name}: {got} vs {want}");
        assert!(bank.is_silent());
    }
}

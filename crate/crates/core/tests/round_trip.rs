//! Rendering a pulse list and peak-picking it again.

use proptest::prelude::*;
use rirgeo::bench_harness::{random_room, ExperimentSettings};
use rirgeo::{detect_peaks, enumerate_pulses, render_rir, DetectorParams, Pulse, RoomConfig};

const FS: f64 = 44100.0;
const C: f64 = 343.0;

fn tol() -> f64 {
    C * 5.0 / FS
}

/// Every clearly visible true arrival has a peak within the tolerance;
/// returns how many were checked. Visible means at least twice the detection
/// threshold (a fractional delay lowers the sampled peak to about 0.6 of the
/// amplitude) and no five times stronger arrival within 8 samples, whose
/// sidelobes can swallow it.
fn check_round_trip(room: &RoomConfig) -> usize {
    let pulses = enumerate_pulses(room, 2).unwrap();
    let last = pulses.iter().map(|p| p.toa).fold(0.0, f64::max);
    let rir = render_rir(&pulses, FS, (last * FS) as usize + 64).unwrap();
    let params = DetectorParams {
        max_count: usize::MAX,
        ..DetectorParams::default()
    };
    let set = detect_peaks(&rir, C, &params).unwrap();
    let peak = rir.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut checked = 0;
    for p in &pulses {
        let masked = pulses
            .iter()
            .any(|q| q.amplitude > 5.0 * p.amplitude && ((q.toa - p.toa) * FS).abs() < 8.0);
        if p.amplitude <= 2.0 * params.min_rel_amp * peak || masked {
            continue;
        }
        checked += 1;
        assert!(
            set.entries()
                .iter()
                .any(|e| (e.d - p.path_length).abs() <= tol()),
            "arrival at {} m not detected",
            p.path_length
        );
    }
    for w in set.entries().windows(2) {
        assert!(w[0].d < w[1].d);
    }
    checked
}

#[test]
fn single_pulse_at_sample_1000() {
    let pulse = Pulse {
        index: None,
        order: None,
        toa: 1000.0 / FS,
        path_length: 1000.0 / FS * C,
        amplitude: 1.0,
    };
    let rir = render_rir(&[pulse], FS, 2048).unwrap();
    let set = detect_peaks(&rir, C, &DetectorParams::default()).unwrap();
    assert_eq!(set.len(), 1);
    assert!((set.entries()[0].d - 7.778).abs() < tol());
    assert!((set.entries()[0].a - 1.0).abs() < 1e-9);
}

#[test]
fn example_room_first_arrivals() {
    let room = RoomConfig::new(
        [4.0, 5.0, 3.0],
        [1.0, 2.0, 1.5],
        [2.5, 4.0, 1.2],
        [0.8, 0.6, 0.7, 0.9, 0.5, 0.4],
        C,
    )
    .unwrap();
    assert_eq!(check_round_trip(&room), 25);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_rooms_round_trip(index in 0usize..10_000, seed in 0u64..1000) {
        let settings = ExperimentSettings { seed, ..ExperimentSettings::default() };
        check_round_trip(&random_room(&settings, index));
    }
}

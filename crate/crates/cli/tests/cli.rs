use rirgeo::degeneracy::aligned_errors;
use rirgeo::io::read_json;
use rirgeo::{Pulse, RoomConfig, RoomEstimate};
use std::path::Path;
use std::process::Command;

fn rirgeo(args: &[&str], dir: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_rirgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "rirgeo {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn room() -> RoomConfig {
    RoomConfig::new(
        [4.0, 5.0, 3.0],
        [1.0, 2.0, 1.5],
        [2.5, 4.0, 1.2],
        [0.8, 0.6, 0.7, 0.9, 0.5, 0.4],
        343.0,
    )
    .unwrap()
}

fn write_room(dir: &Path) {
    std::fs::write(
        dir.join("room.json"),
        serde_json::to_string(&room()).unwrap(),
    )
    .unwrap();
}

#[test]
fn synth_then_estimate_from_pulses() {
    let dir = tempfile::tempdir().unwrap();
    write_room(dir.path());
    rirgeo(
        &[
            "synth",
            "--room",
            "room.json",
            "--order",
            "2",
            "--pulses",
            "p.json",
        ],
        dir.path(),
    );
    let pulses: Vec<Pulse> = read_json(&dir.path().join("p.json")).unwrap();
    assert_eq!(pulses.len(), 25);

    rirgeo(
        &["estimate", "--pulses", "p.json", "--out", "est.json"],
        dir.path(),
    );
    let est: RoomEstimate = read_json(&dir.path().join("est.json")).unwrap();
    let err = aligned_errors(&room(), &est.estimate.config);
    assert!(err.max_position_error < 1e-9, "{err:?}");
    assert!(err.max_beta_error < 1e-9, "{err:?}");
}

#[test]
fn synth_wav_then_estimate_from_wav() {
    let dir = tempfile::tempdir().unwrap();
    write_room(dir.path());
    rirgeo(
        &[
            "synth",
            "--room",
            "room.json",
            "--order",
            "2",
            "--fs",
            "44100",
            "--wav",
            "r.wav",
            "--pulses",
            "p.json",
        ],
        dir.path(),
    );
    rirgeo(
        &[
            "estimate",
            "--wav",
            "r.wav",
            "--delta-samples",
            "5",
            "--out",
            "est.json",
        ],
        dir.path(),
    );
    let est: RoomEstimate = read_json(&dir.path().join("est.json")).unwrap();
    let err = aligned_errors(&room(), &est.estimate.config);
    assert!(!err.failed, "{err:?}");
    assert!(err.geometry_rmse < 0.01, "{err:?}");
}

#[test]
fn degeneracy_lists_whole_orbit() {
    let dir = tempfile::tempdir().unwrap();
    write_room(dir.path());
    let out = rirgeo(&["degeneracy", "--room", "room.json", "--list"], dir.path());
    let members: Vec<RoomConfig> = out
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(members.len(), 384);
    assert!(members
        .iter()
        .all(|m| aligned_errors(&room(), m).max_position_error < 1e-12));
}

#[test]
fn experiment_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    rirgeo(
        &[
            "experiment",
            "--rooms",
            "4",
            "--seed",
            "3",
            "--mode",
            "exact",
            "--toa-jitter",
            "1",
            "--spurious",
            "2",
            "--report",
            "r.csv",
        ],
        dir.path(),
    );
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("quantity,rmse,n_rooms,n_failed,failure_rate")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("4")));
}

#[test]
fn estimate_requires_an_input() {
    let out = Command::new(env!("CARGO_BIN_EXE_rirgeo"))
        .args(["estimate", "--out", "x.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

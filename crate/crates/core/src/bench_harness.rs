//! Monte-Carlo evaluation: random rooms, the full estimation pipeline per
//! room, and pooled RMSE / failure-rate tables.

use crate::acoustic_model::{
    enumerate_pulses, perturb_pulses, render_rir, Perturbation, Pulse, RoomConfig,
    DEFAULT_KERNEL_HALF_WIDTH,
};
use crate::degeneracy::{aligned_errors, ErrorReport};
use crate::geometry_estimator::{estimate_room, EstimateError, EstimatedConfig};
use crate::pulse_extraction::{detect_peaks, pulses_to_pathlengths, DetectorParams, PathLengthSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentMode {
    /// Path lengths taken straight from the (perturbed) pulse list.
    ExactPulses,
    /// Pulses rendered to a sampled RIR, then peak-picked.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    pub n_rooms: usize,
    pub dims_low: [f64; 3],
    pub dims_high: [f64; 3],
    pub beta_range: (f64, f64),
    /// Source and receiver keep at least this distance from every wall.
    pub wall_margin: f64,
    pub fs: f64,
    pub rir_len: usize,
    pub c: f64,
    pub delta_samples: f64,
    /// TOA jitter is in seconds.
    pub perturbation: Perturbation,
    pub seed: u64,
    pub mode: ExperimentMode,
    /// Exact mode merges path lengths closer than this (meters).
    pub exact_resolution: f64,
    pub min_rel_amp: f64,
    pub max_peaks: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            n_rooms: 200,
            dims_low: [2.0, 5.0, 7.0],
            dims_high: [4.0, 10.0, 11.0],
            beta_range: (0.0, 1.0),
            wall_margin: 0.1,
            fs: 44100.0,
            rir_len: 127_890,
            c: 343.0,
            delta_samples: 5.0,
            perturbation: Perturbation::default(),
            seed: 0,
            mode: ExperimentMode::Sampled,
            exact_resolution: 1e-9,
            min_rel_amp: 1e-4,
            max_peaks: 64,
        }
    }
}

impl ExperimentSettings {
    /// Path-length tolerance `c * delta / fs`.
    pub fn tol(&self) -> f64 {
        self.c * self.delta_samples / self.fs
    }

    pub fn validate(&self) -> Result<(), String> {
        for a in 0..3 {
            if !(self.dims_low[a] > 2.0 * self.wall_margin && self.dims_low[a] < self.dims_high[a])
            {
                return Err(format!("dimension range {a} is empty or too small"));
            }
        }
        let (lo, hi) = self.beta_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(format!("beta range ({lo}, {hi}) not inside [0, 1]"));
        }
        if !(self.fs > 0.0 && self.c > 0.0 && self.delta_samples > 0.0) {
            return Err("fs, c and delta_samples must be positive".into());
        }
        Ok(())
    }
}

fn room_rng(seed: u64, index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((index as u64) << 2 | stream);
    rng
}

/// Room `index` of the experiment; depends only on `(seed, index)`.
pub fn random_room(settings: &ExperimentSettings, index: usize) -> RoomConfig {
    let mut rng = room_rng(settings.seed, index, 0);
    let mut dims = [0.0; 3];
    for a in 0..3 {
        dims[a] = rng.gen_range(settings.dims_low[a]..=settings.dims_high[a]);
    }
    let m = settings.wall_margin;
    let point = |rng: &mut ChaCha8Rng| {
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = rng.gen_range(m..dims[a] - m);
        }
        p
    };
    let source = point(&mut rng);
    let receiver = point(&mut rng);
    let (lo, hi) = settings.beta_range;
    let mut betas = [0.0; 6];
    for b in &mut betas {
        *b = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    }
    RoomConfig {
        dims,
        source,
        receiver,
        betas,
        c: settings.c,
    }
}

/// What happened to one room.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomOutcome {
    pub index: usize,
    pub truth: RoomConfig,
    /// Stage that stopped the pipeline, if any.
    pub error: Option<String>,
    pub estimate: Option<EstimatedConfig>,
    pub errors: Option<ErrorReport>,
    /// Recovered coefficients fell outside `[0, 1 + slack]`.
    pub invalid_betas: bool,
    /// Spurious arrivals that no genuine pulse masks.
    pub n_spurious_distinct: usize,
    /// How many of those the estimate lists as erroneous.
    pub n_spurious_reported: usize,
    pub failed: bool,
}

impl RoomOutcome {
    pub fn spurious_all_reported(&self) -> bool {
        self.n_spurious_reported == self.n_spurious_distinct
    }
}

fn stage_failure(index: usize, truth: RoomConfig, msg: String) -> RoomOutcome {
    RoomOutcome {
        index,
        truth,
        error: Some(msg),
        estimate: None,
        errors: None,
        invalid_betas: false,
        n_spurious_distinct: 0,
        n_spurious_reported: 0,
        failed: true,
    }
}

fn perturbation_seed(seed: u64, index: usize) -> u64 {
    room_rng(seed, index, 1).gen()
}

/// Upper bound on the path length of any order-2 arrival.
fn second_order_bound(room: &RoomConfig) -> f64 {
    3.0 * room.dims.iter().map(|l| l * l).sum::<f64>().sqrt()
}

fn path_lengths(
    settings: &ExperimentSettings,
    room: &RoomConfig,
    pulses: &[Pulse],
) -> Result<PathLengthSet, String> {
    match settings.mode {
        ExperimentMode::ExactPulses => pulses_to_pathlengths(
            pulses,
            settings.c,
            settings.tol(),
            settings.exact_resolution,
        )
        .map_err(|e| format!("extract: {e}")),
        ExperimentMode::Sampled => {
            let rir = render_rir(pulses, settings.fs, settings.rir_len)
                .map_err(|e| format!("render: {e}"))?;
            let end = (second_order_bound(room) / settings.c * settings.fs).ceil() as usize
                + 2 * DEFAULT_KERNEL_HALF_WIDTH;
            let params = DetectorParams {
                delta_samples: settings.delta_samples,
                max_count: settings.max_peaks,
                min_rel_amp: settings.min_rel_amp,
                window_end: Some(end),
            };
            detect_peaks(&rir, settings.c, &params).map_err(|e| format!("detect: {e}"))
        }
    }
}

/// Pulses (after perturbation) and the path lengths the estimator sees for
/// room `index`, with stage-prefixed errors.
pub fn room_input(
    settings: &ExperimentSettings,
    truth: &RoomConfig,
    index: usize,
) -> Result<(Vec<Pulse>, PathLengthSet), String> {
    let clean = enumerate_pulses(truth, 2).map_err(|e| format!("enumerate: {e}"))?;
    let pulses = if settings.perturbation.is_identity() {
        clean
    } else {
        perturb_pulses(
            &clean,
            &settings.perturbation,
            perturbation_seed(settings.seed, index),
        )
        .map_err(|e| format!("perturb: {e}"))?
    };
    let set = path_lengths(settings, truth, &pulses)?;
    Ok((pulses, set))
}

/// Runs the whole pipeline on room `index`.
pub fn run_room(settings: &ExperimentSettings, index: usize) -> RoomOutcome {
    let truth = random_room(settings, index);
    let tol = settings.tol();
    let (pulses, set) = match room_input(settings, &truth, index) {
        Ok(s) => s,
        Err(e) => return stage_failure(index, truth, e),
    };
    let room = match estimate_room(&set, tol) {
        Ok(r) => r,
        Err(e @ EstimateError::Classification(_)) => {
            return stage_failure(index, truth, format!("classify: {e}"))
        }
        Err(e) => return stage_failure(index, truth, format!("estimate: {e}")),
    };
    let est = room.estimate;
    let coef = room.coefficients;
    let errors = aligned_errors(&truth, &est.config);

    let genuine: Vec<f64> = pulses
        .iter()
        .filter(|p| p.index.is_some())
        .map(|p| p.toa * settings.c)
        .collect();
    let distinct: Vec<f64> = pulses
        .iter()
        .filter(|p| p.index.is_none())
        .map(|p| p.toa * settings.c)
        .filter(|d| genuine.iter().all(|g| (g - d).abs() > tol))
        .collect();
    let reported = distinct
        .iter()
        .filter(|&&d| {
            est.diagnostics
                .erroneous
                .iter()
                .any(|e| (e.d - d).abs() <= tol)
        })
        .count();

    RoomOutcome {
        index,
        truth,
        error: None,
        failed: errors.failed || !coef.valid,
        invalid_betas: !coef.valid,
        estimate: Some(est),
        errors: Some(errors),
        n_spurious_distinct: distinct.len(),
        n_spurious_reported: reported,
    }
}

/// Pooled results over one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub settings: ExperimentSettings,
    pub n_rooms: usize,
    pub n_failed: usize,
    pub failure_rate: f64,
    /// RMSE pooled over the components of all non-failed rooms.
    pub geometry_rmse: f64,
    pub receiver_rmse: f64,
    pub source_rmse: f64,
    pub beta_rmse: f64,
    /// Largest aligned error over dims and positions, non-failed rooms.
    pub max_position_error: f64,
    pub max_beta_error: f64,
    /// Fraction of non-failed rooms listing every distinct spurious arrival
    /// as erroneous.
    pub spurious_reported_rate: f64,
    pub rooms: Vec<RoomOutcome>,
}

pub fn run_experiment(settings: &ExperimentSettings) -> ExperimentTable {
    let rooms: Vec<RoomOutcome> = (0..settings.n_rooms)
        .into_par_iter()
        .map(|i| run_room(settings, i))
        .collect();
    summarize(settings, rooms)
}

fn summarize(settings: &ExperimentSettings, rooms: Vec<RoomOutcome>) -> ExperimentTable {
    let ok: Vec<&ErrorReport> = rooms
        .iter()
        .filter(|r| !r.failed)
        .filter_map(|r| r.errors.as_ref())
        .collect();
    let pooled = |f: fn(&ErrorReport) -> f64| {
        if ok.is_empty() {
            return f64::NAN;
        }
        // equal component counts per room: pooled RMSE is the RMS of per-room RMSEs
        (ok.iter().map(|e| f(e).powi(2)).sum::<f64>() / ok.len() as f64).sqrt()
    };
    let n_failed = rooms.iter().filter(|r| r.failed).count();
    let n_ok = rooms.len() - n_failed;
    let with_spurious_ok = rooms.iter().filter(|r| !r.failed).count();
    let reported = rooms
        .iter()
        .filter(|r| !r.failed && r.spurious_all_reported())
        .count();
    ExperimentTable {
        settings: settings.clone(),
        n_rooms: rooms.len(),
        n_failed,
        failure_rate: if rooms.is_empty() {
            0.0
        } else {
            n_failed as f64 / rooms.len() as f64
        },
        geometry_rmse: pooled(|e| e.geometry_rmse),
        receiver_rmse: pooled(|e| e.receiver_rmse),
        source_rmse: pooled(|e| e.source_rmse),
        beta_rmse: pooled(|e| e.beta_rmse),
        max_position_error: ok.iter().map(|e| e.max_position_error).fold(0.0, f64::max),
        max_beta_error: ok.iter().map(|e| e.max_beta_error).fold(0.0, f64::max),
        spurious_reported_rate: if n_ok == 0 {
            0.0
        } else {
            reported as f64 / with_spurious_ok as f64
        },
        rooms,
    }
}

impl ExperimentTable {
    /// `quantity,rmse,n_rooms,n_failed,failure_rate`, one row per quantity.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,rmse,n_rooms,n_failed,failure_rate\n");
        for (name, v) in [
            ("geometry", self.geometry_rmse),
            ("receiver", self.receiver_rmse),
            ("source", self.source_rmse),
            ("reflection_coefficients", self.beta_rmse),
        ] {
            let _ = writeln!(
                out,
                "{name},{v},{},{},{}",
                self.n_rooms, self.n_failed, self.failure_rate
            );
        }
        out
    }

    /// Per-stage failure counts, for quick inspection.
    pub fn failure_stages(&self) -> Vec<(String, usize)> {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for r in self.rooms.iter().filter(|r| r.failed) {
            let stage = match &r.error {
                Some(e) => e.split(':').next().unwrap_or("").to_string(),
                None if r.invalid_betas => "betas".to_string(),
                None => "rmse".to_string(),
            };
            match counts.iter_mut().find(|(s, _)| *s == stage) {
                Some((_, n)) => *n += 1,
                None => counts.push((stage, 1)),
            }
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(n: usize) -> ExperimentSettings {
        ExperimentSettings {
            n_rooms: n,
            mode: ExperimentMode::ExactPulses,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn rooms_are_deterministic_and_in_range() {
        let s = exact(0);
        assert_eq!(random_room(&s, 3), random_room(&s, 3));
        assert_ne!(random_room(&s, 3), random_room(&s, 4));
        for i in 0..1000 {
            let r = random_room(&s, i);
            r.validate().unwrap();
            for a in 0..3 {
                assert!(r.dims[a] >= s.dims_low[a] && r.dims[a] <= s.dims_high[a]);
                for p in [r.source, r.receiver] {
                    assert!(p[a] >= 0.1 && p[a] <= r.dims[a] - 0.1);
                }
            }
        }
    }

    #[test]
    fn exact_mode_small_run() {
        let t = run_experiment(&exact(20));
        assert_eq!(t.n_failed, 0, "{:?}", t.failure_stages());
        assert!(t.geometry_rmse < 1e-6);
        assert!(t.beta_rmse < 1e-6);
    }

    #[test]
    fn identical_settings_identical_table() {
        let mut s = exact(12);
        s.perturbation.n_spurious = 3;
        s.perturbation.toa_jitter = 1.0 / 44100.0;
        assert_eq!(run_experiment(&s), run_experiment(&s));
    }

    #[test]
    fn csv_layout() {
        let t = run_experiment(&exact(3));
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "quantity,rmse,n_rooms,n_failed,failure_rate");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("reflection_coefficients,"));
    }

    #[test]
    fn settings_validation() {
        let mut s = exact(1);
        assert!(s.validate().is_ok());
        s.beta_range = (0.5, 1.5);
        assert!(s.validate().is_err());
    }
}

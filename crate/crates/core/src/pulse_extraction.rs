//! From a sampled RIR, or from an exact pulse list, to a sorted set of
//! unlabeled path lengths with amplitudes.

use crate::acoustic_model::{Pulse, SampledRir};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractionError {
    #[error("empty pulse list")]
    EmptyPulses,
    #[error("empty signal")]
    EmptySignal,
    #[error("no peak above {threshold} found in the signal")]
    NoPeak { threshold: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One unlabeled arrival: path length in meters and amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub d: f64,
    pub a: f64,
}

/// Unlabeled arrivals sorted by path length, with the path-length tolerance
/// used by every later matching step.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLengthSet {
    entries: Vec<PathEntry>,
    pub c: f64,
    pub tol: f64,
}

impl PathLengthSet {
    /// Sorts `entries` and merges those closer than `resolution`, keeping the
    /// one with the larger amplitude.
    pub fn new(
        mut entries: Vec<PathEntry>,
        c: f64,
        tol: f64,
        resolution: f64,
    ) -> Result<Self, ExtractionError> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(ExtractionError::InvalidParameter(format!(
                "tolerance {tol} must be positive"
            )));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(ExtractionError::InvalidParameter(format!(
                "speed of sound {c} must be positive"
            )));
        }
        if entries.iter().any(|e| !(e.d > 0.0 && e.d.is_finite())) {
            return Err(ExtractionError::InvalidParameter(
                "path lengths must be positive and finite".into(),
            ));
        }
        entries.sort_by(|x, y| x.d.total_cmp(&y.d));
        let mut merged: Vec<PathEntry> = Vec::with_capacity(entries.len());
        for e in entries {
            match merged.last_mut() {
                Some(last) if e.d - last.d < resolution || e.d == last.d => {
                    if e.a > last.a {
                        *last = e;
                    }
                }
                _ => merged.push(e),
            }
        }
        Ok(PathLengthSet {
            entries: merged,
            c,
            tol,
        })
    }

    pub fn entries(&self) -> &[PathEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path_lengths(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.d).collect()
    }

    /// JSON array of `{"d": .., "a": ..}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.entries).expect("path entries serialize")
    }
}

/// Exact-mode bypass of peak detection: `d = toa * c`.
///
/// Entries closer than `resolution` are merged (larger amplitude kept).
pub fn pulses_to_pathlengths(
    pulses: &[Pulse],
    c: f64,
    tol: f64,
    resolution: f64,
) -> Result<PathLengthSet, ExtractionError> {
    if pulses.is_empty() {
        return Err(ExtractionError::EmptyPulses);
    }
    let entries = pulses
        .iter()
        .map(|p| PathEntry {
            d: p.toa * c,
            a: p.amplitude,
        })
        .collect();
    PathLengthSet::new(entries, c, tol, resolution)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Matching tolerance in samples; the set's tolerance is `delta_samples / fs * c`.
    pub delta_samples: f64,
    /// Keep at most this many peaks (largest amplitudes).
    pub max_count: usize,
    /// Peaks below `min_rel_amp * max|x|` are ignored.
    pub min_rel_amp: f64,
    /// Only samples before this index are scanned.
    pub window_end: Option<usize>,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            delta_samples: 5.0,
            max_count: 64,
            min_rel_amp: 0.005,
            window_end: None,
        }
    }
}

/// Local maxima of `|x|` with 3-point parabolic sub-sample refinement.
///
/// The parabola is fitted to the samples multiplied by the sign of the centre
/// sample, so a neighbour of opposite sign pulls the vertex away from it
/// instead of being folded up by the absolute value.
pub fn detect_peaks(
    rir: &SampledRir,
    c: f64,
    params: &DetectorParams,
) -> Result<PathLengthSet, ExtractionError> {
    if rir.is_empty() {
        return Err(ExtractionError::EmptySignal);
    }
    if !(rir.fs > 0.0 && rir.fs.is_finite()) {
        return Err(ExtractionError::InvalidParameter(format!(
            "sampling rate {} must be positive",
            rir.fs
        )));
    }
    if !(params.delta_samples > 0.0) {
        return Err(ExtractionError::InvalidParameter(
            "delta_samples must be positive".into(),
        ));
    }
    let end = params.window_end.unwrap_or(rir.len()).min(rir.len());
    let x = &rir.samples[..end];
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = params.min_rel_amp * peak;
    if peak == 0.0 {
        return Err(ExtractionError::NoPeak { threshold });
    }

    let mut found: Vec<PathEntry> = Vec::new();
    for n in 0..x.len() {
        let here = x[n].abs();
        if here <= threshold {
            continue;
        }
        let left = if n > 0 { x[n - 1].abs() } else { 0.0 };
        let right = if n + 1 < x.len() { x[n + 1].abs() } else { 0.0 };
        if !(here > left && here >= right) {
            continue;
        }
        let (offset, height) = refine(x, n);
        let position = n as f64 + offset;
        found.push(PathEntry {
            d: position / rir.fs * c,
            a: height,
        });
    }
    if found.is_empty() {
        return Err(ExtractionError::NoPeak { threshold });
    }
    if found.len() > params.max_count {
        found.sort_by(|p, q| q.a.total_cmp(&p.a));
        found.truncate(params.max_count);
    }
    let tol = params.delta_samples / rir.fs * c;
    // maxima are at least two samples apart; nothing to merge
    PathLengthSet::new(found, c, tol, 0.0)
}

/// Vertex offset in `[-0.5, 0.5]` and height of the parabola through the
/// sign-aligned samples around `n`.
fn refine(x: &[f64], n: usize) -> (f64, f64) {
    let s = x[n].signum();
    let y0 = x[n] * s;
    if n == 0 || n + 1 >= x.len() {
        return (0.0, y0);
    }
    let ym = x[n - 1] * s;
    let yp = x[n + 1] * s;
    let denom = ym - 2.0 * y0 + yp;
    if denom >= 0.0 {
        return (0.0, y0);
    }
    let offset = (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
    let height = y0 - 0.25 * (ym - yp) * offset;
    (offset, height)
}

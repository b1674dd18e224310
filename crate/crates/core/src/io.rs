//! File formats: room and pulse JSON, RIRs as 32-bit float WAV or as CSV
//! with a `<file>.json` sidecar holding `{"fs": ..}`.

use crate::acoustic_model::{Pulse, RoomConfig, SampledRir};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Wav { path: PathBuf, source: hound::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn json_err(path: &Path) -> impl FnOnce(serde_json::Error) -> IoError + '_ {
    move |source| IoError::Json {
        path: path.to_path_buf(),
        source,
    }
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> IoError + '_ {
    move |source| IoError::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Reads and validates a room configuration.
pub fn read_room(path: &Path) -> Result<RoomConfig, IoError> {
    let room: RoomConfig = read_json(path)?;
    room.validate().map_err(|e| IoError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok(room)
}

pub fn read_pulses(path: &Path) -> Result<Vec<Pulse>, IoError> {
    read_json(path)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    fs: f64,
}

/// Writes mono 32-bit float WAV, or CSV plus sidecar when the extension is
/// `.csv`.
pub fn write_rir(path: &Path, rir: &SampledRir) -> Result<(), IoError> {
    if is_csv(path) {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        for s in &rir.samples {
            writeln!(w, "{s:e}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
        return write_json(&sidecar(path), &Sidecar { fs: rir.fs });
    }
    let rate = rir.fs.round();
    if rate != rir.fs || rate <= 0.0 || rate > u32::MAX as f64 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!("WAV needs an integer sampling rate, got {}", rir.fs),
        });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err(path))?;
    for &s in &rir.samples {
        w.write_sample(s as f32).map_err(wav_err(path))?;
    }
    w.finalize().map_err(wav_err(path))
}

/// Reads a WAV or CSV RIR. `fs_override` replaces the rate from the header or
/// sidecar; a CSV without sidecar requires it.
pub fn read_rir(path: &Path, fs_override: Option<f64>) -> Result<SampledRir, IoError> {
    if is_csv(path) {
        let file = fs::File::open(path).map_err(io_err(path))?;
        let mut samples = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(path))?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t.parse().map_err(|_| IoError::Format {
                path: path.to_path_buf(),
                msg: format!("line {}: not a number: {t:?}", n + 1),
            })?;
            samples.push(v);
        }
        let fs = match fs_override {
            Some(fs) => fs,
            None => {
                let side = sidecar(path);
                let s: Sidecar = read_json(&side)?;
                s.fs
            }
        };
        return Ok(SampledRir { samples, fs });
    }
    let mut r = hound::WavReader::open(path).map_err(wav_err(path))?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(IoError::Format {
            path: path.to_path_buf(),
            msg: format!("expected mono, got {} channels", spec.channels),
        });
    }
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    Ok(SampledRir {
        samples,
        fs: fs_override.unwrap_or(spec.sample_rate as f64),
    })
}

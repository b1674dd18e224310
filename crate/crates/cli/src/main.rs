use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rirgeo::acoustic_model::render_rir;
use rirgeo::bench_harness::{run_experiment, ExperimentMode, ExperimentSettings};
use rirgeo::degeneracy::{equivalents, DegeneracyTransform};
use rirgeo::geometry_estimator::estimate_room;
use rirgeo::io::{read_pulses, read_rir, read_room, write_json, write_rir};
use rirgeo::pulse_extraction::{detect_peaks, pulses_to_pathlengths, DetectorParams};
use rirgeo::{enumerate_pulses, Perturbation};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "rirgeo",
    version,
    about = "Room geometry from a single impulse response"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image-source pulses (and optionally a rendered RIR) for a room.
    Synth(SynthArgs),
    /// Estimate room, positions and reflection coefficients.
    Estimate(EstimateArgs),
    /// Configurations indistinguishable from a room by their RIR.
    Degeneracy(DegeneracyArgs),
    /// Monte-Carlo run over random rooms.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    room: PathBuf,
    #[arg(long, default_value_t = 2)]
    order: i32,
    #[arg(long, default_value_t = 44100.0)]
    fs: f64,
    /// RIR length in samples; default covers the last arrival.
    #[arg(long)]
    len: Option<usize>,
    /// Also render the RIR (`.wav`, or `.csv` with a sidecar).
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    pulses: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, conflicts_with = "wav", required_unless_present = "wav")]
    pulses: Option<PathBuf>,
    #[arg(long)]
    wav: Option<PathBuf>,
    /// Sampling rate; overrides the file header. Also converts the
    /// tolerance to meters for pulse input.
    #[arg(long)]
    fs: Option<f64>,
    #[arg(long, default_value_t = 343.0)]
    c: f64,
    #[arg(long, default_value_t = 5.0)]
    delta_samples: f64,
    /// Peaks below this fraction of the largest are ignored.
    #[arg(long, default_value_t = 0.005)]
    min_rel_amp: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DegeneracyArgs {
    #[arg(long)]
    room: PathBuf,
    /// Print every member as one JSON line.
    #[arg(long)]
    list: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 200)]
    rooms: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Sampled)]
    mode: Mode,
    /// TOA jitter half-width in samples.
    #[arg(long, default_value_t = 0.0)]
    toa_jitter: f64,
    #[arg(long, default_value_t = 0)]
    spurious: usize,
    #[arg(long, default_value_t = 0)]
    dropped: usize,
    /// `.csv` writes the RMSE table, anything else the full JSON report.
    #[arg(long)]
    report: PathBuf,
}

fn synth(a: SynthArgs) -> Result<()> {
    let room = read_room(&a.room)?;
    let pulses = enumerate_pulses(&room, a.order)?;
    write_json(&a.pulses, &pulses)?;
    if let Some(wav) = &a.wav {
        let last = pulses.iter().map(|p| p.toa).fold(0.0, f64::max);
        let len = a.len.unwrap_or((last * a.fs).ceil() as usize + 256);
        let rir = render_rir(&pulses, a.fs, len)?;
        write_rir(wav, &rir)?;
    }
    println!("{} pulses up to order {}", pulses.len(), a.order);
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let set = match (&a.pulses, &a.wav) {
        (Some(p), _) => {
            let pulses = read_pulses(p)?;
            let fs = a.fs.unwrap_or(44100.0);
            pulses_to_pathlengths(&pulses, a.c, a.c * a.delta_samples / fs, 1e-9)?
        }
        (None, Some(w)) => {
            let rir = read_rir(w, a.fs)?;
            let params = DetectorParams {
                delta_samples: a.delta_samples,
                min_rel_amp: a.min_rel_amp,
                ..DetectorParams::default()
            };
            detect_peaks(&rir, a.c, &params)?
        }
        (None, None) => bail!("either --pulses or --wav is required"),
    };
    let est = estimate_room(&set, set.tol).context("estimation failed")?;
    write_json(&a.out, &est)?;
    let cfg = &est.estimate.config;
    println!("dims     {:?}", cfg.dims);
    println!("source   {:?}", cfg.source);
    println!("receiver {:?}", cfg.receiver);
    println!("betas    {:?}", est.coefficients.betas);
    println!(
        "{} erroneous entries, {}/{} predictions matched",
        est.estimate.diagnostics.erroneous.len(),
        est.fit.matched,
        est.fit.predicted
    );
    Ok(())
}

fn degeneracy(a: DegeneracyArgs) -> Result<()> {
    let room = read_room(&a.room)?;
    let members = equivalents(&room);
    if a.list {
        for m in &members {
            println!("{}", serde_json::to_string(m)?);
        }
    } else {
        println!(
            "{} distinct configurations ({} transforms)",
            members.len(),
            DegeneracyTransform::all().len()
        );
    }
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let defaults = ExperimentSettings::default();
    let settings = ExperimentSettings {
        n_rooms: a.rooms,
        seed: a.seed,
        mode: match a.mode {
            Mode::Exact => ExperimentMode::ExactPulses,
            Mode::Sampled => ExperimentMode::Sampled,
        },
        perturbation: Perturbation {
            toa_jitter: a.toa_jitter / defaults.fs,
            n_spurious: a.spurious,
            n_dropped: a.dropped,
            ..Perturbation::default()
        },
        ..defaults
    };
    settings.validate().map_err(anyhow::Error::msg)?;
    let table = run_experiment(&settings);
    let csv = table.to_csv();
    if a.report
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        std::fs::write(&a.report, &csv)
            .with_context(|| format!("writing {}", a.report.display()))?;
    } else {
        write_json(&a.report, &table)?;
    }
    print!("{csv}");
    println!(
        "spurious reported in {:.3} of solved rooms",
        table.spurious_reported_rate
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate(a),
        Command::Degeneracy(a) => degeneracy(a),
        Command::Experiment(a) => experiment(a),
    }
}

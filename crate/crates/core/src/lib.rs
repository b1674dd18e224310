//! Room geometry, source/receiver positions and wall reflection coefficients
//! from the arrival times and amplitudes of a single room impulse response.
//!
//! The crate is organised as a pipeline:
//!
//! * [`acoustic_model`]: image-source forward model, band-limited rendering
//!   and a perturbation surrogate for non-specular effects.
//! * [`pulse_extraction`]: sampled RIR (or exact pulse list) to a sorted set
//!   of unlabeled path lengths.
//! * [`reflection_classifier`]: splits the path lengths into the direct path,
//!   first-order reflections per wall pair, single-direction and
//!   multi-direction second-order reflections.
//! * [`geometry_estimator`]: per-axis fit of wall distance and
//!   source/receiver coordinates, joint selection and refinement of the room,
//!   plus reflection coefficients.
//! * [`degeneracy`]: the group of configurations sharing one RIR.
//! * [`bench_harness`]: random rooms, end-to-end runs and RMSE tables.

pub mod acoustic_model;
pub mod bench_harness;
pub mod degeneracy;
pub mod geometry_estimator;
pub mod io;
pub mod pulse_extraction;
pub mod reflection_classifier;

use serde::{Deserialize, Serialize};
use std::fmt;

pub use acoustic_model::{
    enumerate_pulses, image_source_position, perturb_pulses, reflection_order, render_rir,
    ImageIndex, ModelError, Perturbation, Pulse, RoomConfig, SampledRir,
};
pub use bench_harness::{
    random_room, run_experiment, ExperimentMode, ExperimentSettings, ExperimentTable, RoomOutcome,
};
pub use degeneracy::{aligned_errors, equivalents, DegeneracyTransform, ErrorReport};
pub use geometry_estimator::{
    estimate_configuration, estimate_reflection_coefficients, estimate_room, fit_direction,
    forward_fit, refine_geometry, refit_merged_coefficients, solve_direction, unclaimed_entries,
    CoefficientEstimate, DirectionSolution, EstimateError, EstimatedConfig, ForwardFit,
    RoomEstimate,
};
pub use pulse_extraction::{
    detect_peaks, pulses_to_pathlengths, DetectorParams, ExtractionError, PathEntry, PathLengthSet,
};
pub use reflection_classifier::{
    classification_hypotheses, classify_reflections, theorem1_holds, ClassifiedReflections,
    ClassifyError,
};

/// Cartesian axis of the room frame, also used to label a parallel wall pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(s)
    }
}

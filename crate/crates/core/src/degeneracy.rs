//! The group of room configurations that share one impulse response.
//!
//! Relabelling the axes (6 ways), mirroring each axis about its mid-plane
//! (8 ways) and exchanging source and receiver (2 ways) leave every arrival
//! time and amplitude unchanged, giving 96 configurations per RIR.
//!
//! The exchange also works one axis at a time: swapping `x_s` and `x_r` maps
//! image `(m, q=0)` to `(-m, 0)` and fixes `q=1`, so order, distance and
//! coefficient exponents are unchanged. With per-axis exchange the group has
//! 6 * 4^3 = 384 elements; the 96 above are those exchanging all axes or none.

use crate::acoustic_model::RoomConfig;
use serde::{Deserialize, Serialize};

/// New axis `a` is old axis `perm[a]`, mirrored if `mirror[a]`, with source
/// and receiver coordinates exchanged if `swap[a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DegeneracyTransform {
    pub perm: [usize; 3],
    pub mirror: [bool; 3],
    pub swap: [bool; 3],
}

fn bits(mask: u8) -> [bool; 3] {
    [mask & 1 != 0, mask & 2 != 0, mask & 4 != 0]
}

const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

impl DegeneracyTransform {
    pub const IDENTITY: DegeneracyTransform = DegeneracyTransform {
        perm: [0, 1, 2],
        mirror: [false; 3],
        swap: [false; 3],
    };

    /// Exchanges source and receiver outright.
    pub const SWAP_SR: DegeneracyTransform = DegeneracyTransform {
        perm: [0, 1, 2],
        mirror: [false; 3],
        swap: [true; 3],
    };

    /// All 384 transforms, identity first.
    pub fn all() -> Vec<DegeneracyTransform> {
        let mut out = Vec::with_capacity(384);
        for swap_mask in 0..8u8 {
            for perm in PERMUTATIONS {
                for mask in 0..8u8 {
                    out.push(DegeneracyTransform {
                        perm,
                        mirror: bits(mask),
                        swap: bits(swap_mask),
                    });
                }
            }
        }
        out
    }

    /// The 96 transforms that exchange source and receiver on all axes or
    /// on none, identity first.
    pub fn whole_swap() -> Vec<DegeneracyTransform> {
        Self::all()
            .into_iter()
            .filter(|t| t.swaps_whole())
            .collect()
    }

    pub fn swaps_whole(&self) -> bool {
        self.swap[0] == self.swap[1] && self.swap[1] == self.swap[2]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &DegeneracyTransform) -> DegeneracyTransform {
        let mut perm = [0; 3];
        let mut mirror = [false; 3];
        let mut swap = [false; 3];
        for a in 0..3 {
            perm[a] = other.perm[self.perm[a]];
            mirror[a] = self.mirror[a] ^ other.mirror[self.perm[a]];
            swap[a] = self.swap[a] ^ other.swap[self.perm[a]];
        }
        DegeneracyTransform { perm, mirror, swap }
    }

    pub fn inverse(&self) -> DegeneracyTransform {
        let mut perm = [0; 3];
        let mut mirror = [false; 3];
        let mut swap = [false; 3];
        for a in 0..3 {
            perm[self.perm[a]] = a;
        }
        for a in 0..3 {
            mirror[a] = self.mirror[perm[a]];
            swap[a] = self.swap[perm[a]];
        }
        DegeneracyTransform { perm, mirror, swap }
    }

    pub fn apply(&self, config: &RoomConfig) -> RoomConfig {
        apply(self, config)
    }
}

pub fn apply(t: &DegeneracyTransform, config: &RoomConfig) -> RoomConfig {
    let mut out = *config;
    for a in 0..3 {
        let b = t.perm[a];
        let l = config.dims[b];
        out.dims[a] = l;
        let (near, far) = config.beta_pair(b);
        let (mut s, mut r) = (config.source[b], config.receiver[b]);
        if t.swap[a] {
            std::mem::swap(&mut s, &mut r);
        }
        if t.mirror[a] {
            out.source[a] = l - s;
            out.receiver[a] = l - r;
            out.betas[2 * a] = far;
            out.betas[2 * a + 1] = near;
        } else {
            out.source[a] = s;
            out.receiver[a] = r;
            out.betas[2 * a] = near;
            out.betas[2 * a + 1] = far;
        }
    }
    out
}

fn close(a: &RoomConfig, b: &RoomConfig, eps: f64) -> bool {
    let near = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| (p - q).abs() <= eps);
    near(&a.dims, &b.dims)
        && near(&a.source, &b.source)
        && near(&a.receiver, &b.receiver)
        && near(&a.betas, &b.betas)
        && a.c == b.c
}

/// Distinct members of the orbit of `config` (duplicates within 1e-12).
pub fn equivalents(config: &RoomConfig) -> Vec<RoomConfig> {
    let mut out: Vec<RoomConfig> = Vec::with_capacity(384);
    for t in DegeneracyTransform::all() {
        let c = apply(&t, config);
        if !out.iter().any(|o| close(o, &c, 1e-12)) {
            out.push(c);
        }
    }
    out
}

/// Orbit member with the lexicographically smallest (dims, source, receiver).
pub fn canonical(config: &RoomConfig) -> RoomConfig {
    let key = |c: &RoomConfig| {
        let mut k = Vec::with_capacity(9);
        k.extend(c.dims);
        k.extend(c.source);
        k.extend(c.receiver);
        k
    };
    DegeneracyTransform::all()
        .iter()
        .map(|t| apply(t, config))
        .min_by(|a, b| {
            key(a)
                .iter()
                .zip(key(b))
                .map(|(x, y)| x.total_cmp(&y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("group is non-empty")
}

/// Errors of an estimate against the best-aligned orbit member of the truth,
/// searched over all 384 transforms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub geometry_rmse: f64,
    pub receiver_rmse: f64,
    pub source_rmse: f64,
    pub beta_rmse: f64,
    /// Largest absolute error over dims and both positions.
    pub max_position_error: f64,
    pub max_beta_error: f64,
    pub transform: DegeneracyTransform,
    /// Some RMSE exceeds 1.
    pub failed: bool,
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (s / a.len() as f64).sqrt()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Alignment minimises geometry + receiver + source RMSE; coefficients
/// follow the chosen wall relabelling.
pub fn aligned_errors(truth: &RoomConfig, est: &RoomConfig) -> ErrorReport {
    let mut best: Option<(f64, ErrorReport)> = None;
    for t in DegeneracyTransform::all() {
        let c = apply(&t, truth);
        let geometry_rmse = rmse(&c.dims, &est.dims);
        let receiver_rmse = rmse(&c.receiver, &est.receiver);
        let source_rmse = rmse(&c.source, &est.source);
        let score = geometry_rmse + receiver_rmse + source_rmse;
        if best.as_ref().is_some_and(|(s, _)| *s <= score) {
            continue;
        }
        let beta_rmse = rmse(&c.betas, &est.betas);
        let max_position_error = max_abs(&c.dims, &est.dims)
            .max(max_abs(&c.source, &est.source))
            .max(max_abs(&c.receiver, &est.receiver));
        let report = ErrorReport {
            geometry_rmse,
            receiver_rmse,
            source_rmse,
            beta_rmse,
            max_position_error,
            max_beta_error: max_abs(&c.betas, &est.betas),
            transform: t,
            failed: [geometry_rmse, receiver_rmse, source_rmse, beta_rmse]
                .iter()
                .any(|&e| e > 1.0),
        };
        best = Some((score, report));
    }
    best.expect("group is non-empty").1
}

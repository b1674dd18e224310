//! Wall distances, source/receiver coordinates and wall reflection
//! coefficients from classified reflections.
//!
//! Along one axis write `u = s - r` and `v = s + r` for the source and
//! receiver coordinates and `W` for the squared offset on the other two axes.
//! With `d_a` the reflection off the wall at 0, `d_b` off the wall at `L` and
//! `d_c` the double bounce starting from the far image (`s - 2L`):
//!
//! ```text
//! d_0^2 = u^2 + W            d_a^2 = v^2 + W
//! d_b^2 = (2L - v)^2 + W     d_c^2 = (2L - u)^2 + W
//! ```
//!
//! With `A = d_a^2 - d_0^2`, `C = d_c^2 - d_0^2`, `D = d_b^2 - d_a^2` this
//! gives `L^2 = (C^2 - D^2) / (8(C - D) - 16A)`, then `u` and `v` linearly.
//! The other double bounce (`s + 2L`) is predicted at
//! `sqrt(d_0^2 + 4L^2 + 4Lu)`.
//!
//! With sampled or jittered arrivals three path lengths are too few, so the
//! search fits `(L, u, v)` to all four arrivals of an axis by least squares
//! ([`fit_direction`]) and picks the three axes jointly by how well the
//! resulting room predicts every arrival.

use crate::acoustic_model::{
    enumerate_pulses, image_source_position, ImageIndex, Pulse, RoomConfig,
};
use crate::pulse_extraction::{PathEntry, PathLengthSet};
use crate::reflection_classifier::{
    classification_hypotheses, ClassifiedReflections, ClassifyError,
};
use crate::Axis;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Starting misfit, in tolerances, above which an axis fit is abandoned.
const START_MISFIT: f64 = 4.0;

/// Slack above 1 accepted for a recovered reflection coefficient.
pub const BETA_SLACK: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("inconsistent hypothesis: {0}")]
    InconsistentHypothesis(String),
    #[error("no verifiable solution along axis {}", axes_list(.unsolved))]
    DirectionUnsolved {
        unsolved: Vec<Axis>,
        solved: Vec<(Axis, DirectionSolution)>,
    },
    #[error("estimated configuration invalid: {0}")]
    InvalidResult(String),
    #[error(transparent)]
    Classification(#[from] ClassifyError),
}

fn axes_list(axes: &[Axis]) -> String {
    axes.iter()
        .map(Axis::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Closed-form solution along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionSolution {
    /// Wall-pair distance.
    pub length: f64,
    /// Source minus receiver coordinate.
    pub u: f64,
    /// Source plus receiver coordinate.
    pub v: f64,
    /// Squared source-receiver offset on the other two axes.
    pub w: f64,
    /// Predicted length of the second double bounce.
    pub sibling_pred: f64,
}

impl DirectionSolution {
    pub fn source(&self) -> f64 {
        0.5 * (self.v + self.u)
    }

    pub fn receiver(&self) -> f64 {
        0.5 * (self.v - self.u)
    }
}

pub fn solve_direction(
    d0: f64,
    da: f64,
    db: f64,
    dc: f64,
) -> Result<DirectionSolution, EstimateError> {
    let bad = |m: String| Err(EstimateError::InconsistentHypothesis(m));
    if [d0, da, db, dc]
        .iter()
        .any(|d| !(*d > 0.0 && d.is_finite()))
    {
        return bad("path lengths must be positive".into());
    }
    let (d0s, das, dbs, dcs) = (d0 * d0, da * da, db * db, dc * dc);
    let a = das - d0s;
    let c = dcs - d0s;
    let d = dbs - das;
    let denom = 8.0 * (c - d) - 16.0 * a;
    if denom.abs() < 1e-12 {
        return bad("degenerate denominator".into());
    }
    let l2 = (c * c - d * d) / denom;
    if !(l2 > 0.0) {
        return bad(format!("non-positive squared wall distance {l2}"));
    }
    let length = l2.sqrt();
    let u = (4.0 * l2 - c) / (4.0 * length);
    let v = (4.0 * l2 - d) / (4.0 * length);
    let w = d0s - u * u;
    if w < 0.0 {
        return bad(format!("negative cross-axis distance {w}"));
    }
    let (s, r) = (0.5 * (v + u), 0.5 * (v - u));
    if !(s > 0.0 && s < length && r > 0.0 && r < length) {
        return bad(format!("source {s} or receiver {r} outside (0, {length})"));
    }
    let sib2 = d0s + 4.0 * l2 + 4.0 * length * u;
    if !(sib2 > 0.0) {
        return bad("no real sibling reflection".into());
    }
    Ok(DirectionSolution {
        length,
        u,
        v,
        w,
        sibling_pred: sib2.sqrt(),
    })
}

/// Least-squares solution along one axis from all four of its arrivals:
/// the near and far first-order reflections `da`, `db` and the double
/// bounces `dp` (`s - 2L` image) and `dq` (`s + 2L` image).
///
/// With `X = d^2 - d_0^2` the double bounces give `X = 4L^2 -+ 4Lu`, which
/// fixes `L` and `u` without the ill-conditioned division of the
/// three-arrival form; `v` follows from the first-order pair. Gauss-Newton
/// on the path lengths then spreads timing noise over all four, unless the
/// starting point already misses an arrival by more than
/// `max_start_misfit`. Returns the solution and the largest path-length
/// misfit.
pub fn fit_direction(
    d0: f64,
    da: f64,
    db: f64,
    dp: f64,
    dq: f64,
    max_start_misfit: f64,
) -> Result<(DirectionSolution, f64), EstimateError> {
    let bad = |m: String| Err(EstimateError::InconsistentHypothesis(m));
    if [d0, da, db, dp, dq]
        .iter()
        .any(|d| !(*d > 0.0 && d.is_finite()))
    {
        return bad("path lengths must be positive".into());
    }
    let d0s = d0 * d0;
    let meas = [da, db, dp, dq];
    let x = meas.map(|d| d * d - d0s);
    let l2 = (x[2] + x[3]) / 8.0;
    if !(l2 > 0.0) {
        return bad(format!("non-positive squared wall distance {l2}"));
    }
    let mut l = l2.sqrt();
    let mut u = (x[3] - x[2]) / (8.0 * l);
    let va = (x[0] + u * u).max(0.0).sqrt();
    let vb = 2.0 * l - (x[1] + u * u).max(0.0).sqrt();
    let mut v = 0.5 * (va + vb);

    let predict = |l: f64, u: f64, v: f64| -> Option<([f64; 4], [[f64; 3]; 4])> {
        let w = 2.0 * l - v;
        let xs = [
            v * v - u * u,
            w * w - u * u,
            4.0 * l * l - 4.0 * l * u,
            4.0 * l * l + 4.0 * l * u,
        ];
        let grads = [
            [0.0, -2.0 * u, 2.0 * v],
            [4.0 * w, -2.0 * u, -2.0 * w],
            [8.0 * l - 4.0 * u, -4.0 * l, 0.0],
            [8.0 * l + 4.0 * u, 4.0 * l, 0.0],
        ];
        let mut pred = [0.0; 4];
        let mut jac = [[0.0; 3]; 4];
        for k in 0..4 {
            let sq = d0s + xs[k];
            if !(sq > 0.0) {
                return None;
            }
            pred[k] = sq.sqrt();
            jac[k] = grads[k].map(|g| g / (2.0 * pred[k]));
        }
        Some((pred, jac))
    };

    // noise moves the optimum by a fraction of the misfit; far-off starts
    // are not worth iterating
    match predict(l, u, v) {
        Some((pred, _)) if (0..4).all(|k| (pred[k] - meas[k]).abs() <= max_start_misfit) => {}
        _ => return bad("initial misfit too large".into()),
    }
    for _ in 0..20 {
        let Some((pred, jac)) = predict(l, u, v) else {
            return bad("no real arrival for the fitted axis".into());
        };
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for k in 0..4 {
            let r = meas[k] - pred[k];
            for i in 0..3 {
                jtr[i] += jac[k][i] * r;
                for j in 0..3 {
                    jtj[i][j] += jac[k][i] * jac[k][j];
                }
            }
        }
        let Some(step) = solve3(jtj, jtr) else { break };
        l += step[0];
        u += step[1];
        v += step[2];
        if step.iter().all(|s| s.abs() < 1e-13 * l.max(1.0)) {
            break;
        }
    }

    let Some((pred, _)) = predict(l, u, v) else {
        return bad("no real arrival for the fitted axis".into());
    };
    let misfit = (0..4)
        .map(|k| (pred[k] - meas[k]).abs())
        .fold(0.0, f64::max);
    let w = d0s - u * u;
    if !(l > 0.0) || w < 0.0 {
        return bad(format!(
            "wall distance {l} or cross-axis distance {w} invalid"
        ));
    }
    let (s, r) = (0.5 * (v + u), 0.5 * (v - u));
    if !(s > 0.0 && s < l && r > 0.0 && r < l) {
        return bad(format!("source {s} or receiver {r} outside (0, {l})"));
    }
    Ok((
        DirectionSolution {
            length: l,
            u,
            v,
            w,
            sibling_pred: pred[3],
        },
        misfit,
    ))
}

/// Solves a symmetric 3x3 system by Gaussian elimination with partial
/// pivoting; `None` when singular.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Arrivals used to solve one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub axis: Axis,
    pub solution: DirectionSolution,
    /// Reflection taken as the wall at coordinate 0.
    pub near: PathEntry,
    /// Reflection taken as the wall at coordinate `L`.
    pub far: PathEntry,
    /// Double bounce of the `s - 2L` image.
    pub double_near: PathEntry,
    /// Double bounce of the `s + 2L` image.
    pub double_far: PathEntry,
    /// Largest path-length misfit of the four arrivals after the fit.
    pub misfit: f64,
    /// A double bounce was taken from outside the single-direction set
    /// (coincident arrivals).
    pub widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub directions: Vec<DirectionReport>,
    /// Arrivals not explained by the solution: unused single-direction
    /// candidates and classifier leftovers.
    pub erroneous: Vec<PathEntry>,
    /// `sqrt(u_x^2 + u_y^2 + u_z^2) - d_0`.
    pub direct_residual: f64,
    /// Per axis, `W - (sum of the other two u^2)`.
    pub cross_residuals: [f64; 3],
    /// Raw first-order coefficients before clamping to `[0, 1]`.
    pub raw_betas: [f64; 6],
}

/// Estimated room plus the evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConfig {
    #[serde(flatten)]
    pub config: RoomConfig,
    pub diagnostics: Diagnostics,
}

impl EstimatedConfig {
    pub fn direction(&self, axis: Axis) -> &DirectionReport {
        self.diagnostics
            .directions
            .iter()
            .find(|d| d.axis == axis)
            .expect("all three axes are solved")
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    axis: Axis,
    near: PathEntry,
    far: PathEntry,
    double_near: PathEntry,
    double_far: PathEntry,
    widened: bool,
    misfit: f64,
    solution: DirectionSolution,
}

/// Axis candidates kept for the joint choice.
const AXIS_CANDIDATES: usize = 4;

/// Every pair of pool arrivals tried as the two double bounces of `axis`,
/// best misfit first. The same entry may serve as both when the source and
/// receiver are level on this axis.
fn axis_candidates(
    d0: f64,
    cls: &ClassifiedReflections,
    axis: Axis,
    pool: &[PathEntry],
    tol: f64,
    widened: bool,
) -> Vec<Candidate> {
    let fo = cls.first_order(axis);
    let (near, far) = (fo[0], fo[1]);
    let mut out: Vec<Candidate> = Vec::new();
    for (pi, dp) in pool.iter().enumerate() {
        for dq in &pool[pi..] {
            // in the widened pool an arrival may not stand in for its own axis
            if widened && [dp, dq].iter().any(|e| **e == near || **e == far) {
                continue;
            }
            let Ok((solution, misfit)) =
                fit_direction(d0, near.d, far.d, dp.d, dq.d, START_MISFIT * tol)
            else {
                continue;
            };
            if misfit > tol {
                continue;
            }
            out.push(Candidate {
                axis,
                near,
                far,
                double_near: *dp,
                double_far: *dq,
                widened,
                misfit,
                solution,
            });
        }
    }
    out.sort_by(|a, b| a.misfit.total_cmp(&b.misfit));
    out
}

/// Solves all three axes and picks one double-bounce pair per axis.
///
/// Each axis keeps its [`AXIS_CANDIDATES`] best pairs from the
/// single-direction set whose four arrivals [`fit_direction`] explains
/// within `tol`, plus as many from every classified arrival (coincident
/// arrivals can hide a double bounce inside another class). A combination must satisfy the direct path,
/// `u_x^2 + u_y^2 + u_z^2 = d_0^2` within `tol`. Among those the one whose
/// forward model explains the most classified arrivals wins, then the one
/// reusing fewest arrivals, then the smallest forward-model residual.
pub fn estimate_configuration(
    cls: &ClassifiedReflections,
    tol: f64,
) -> Result<EstimatedConfig, EstimateError> {
    for axis in Axis::ALL {
        if cls.first_order(axis).len() != 2 {
            return Err(EstimateError::InvalidResult(format!(
                "axis {axis} needs two first-order reflections"
            )));
        }
    }
    let d0 = cls.d0.d;
    let mut wide: Vec<PathEntry> = cls.s2_single.clone();
    wide.extend(&cls.s2_multi);
    wide.extend(&cls.leftovers);
    for axis in Axis::ALL {
        wide.extend(cls.first_order(axis));
    }
    wide.sort_by(|a, b| a.d.total_cmp(&b.d));
    wide.dedup();

    let per_axis: Vec<Vec<Candidate>> = Axis::ALL
        .iter()
        .map(|&axis| {
            let mut c = axis_candidates(d0, cls, axis, &cls.s2_single, tol, false);
            c.truncate(AXIS_CANDIDATES);
            let fresh: Vec<Candidate> = axis_candidates(d0, cls, axis, &wide, tol, true)
                .into_iter()
                .filter(|w| {
                    !c.iter()
                        .any(|p| p.double_near == w.double_near && p.double_far == w.double_far)
                })
                .take(AXIS_CANDIDATES)
                .collect();
            c.extend(fresh);
            c
        })
        .collect();
    let unsolved: Vec<Axis> = Axis::ALL
        .into_iter()
        .filter(|a| per_axis[a.index()].is_empty())
        .collect();
    if !unsolved.is_empty() {
        return Err(EstimateError::DirectionUnsolved {
            unsolved,
            solved: per_axis
                .iter()
                .filter_map(|c| c.first().map(|c| (c.axis, c.solution)))
                .collect(),
        });
    }

    let mut best: Option<((std::cmp::Reverse<usize>, usize, f64), [Candidate; 3])> = None;
    for cx in &per_axis[0] {
        for cy in &per_axis[1] {
            for cz in &per_axis[2] {
                let combo = [*cx, *cy, *cz];
                let u2: f64 = combo.iter().map(|c| c.solution.u * c.solution.u).sum();
                let direct = (u2.sqrt() - d0).abs();
                if direct > tol {
                    continue;
                }
                let Ok(config) = assemble_config(&combo, cls) else {
                    continue;
                };
                let fit = forward_fit(&config, &classified_entries(cls), tol);
                let key = (
                    std::cmp::Reverse(fit.score()),
                    reuse_count(&combo, cls),
                    fit.residual + direct,
                );
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    best = Some((key, combo));
                }
            }
        }
    }
    let Some((_, combo)) = best else {
        // every axis has fits but none agree on the direct path: name the
        // least supported axis
        let worst = per_axis
            .iter()
            .max_by(|a, b| a[0].misfit.total_cmp(&b[0].misfit))
            .map(|c| c[0].axis)
            .expect("three axes");
        return Err(EstimateError::DirectionUnsolved {
            unsolved: vec![worst],
            solved: per_axis
                .iter()
                .filter(|c| c[0].axis != worst)
                .map(|c| (c[0].axis, c[0].solution))
                .collect(),
        });
    };

    let config = assemble_config(&combo, cls)?;
    let reports: Vec<DirectionReport> = combo.iter().map(report).collect();
    let us = combo.map(|c| c.solution.u);
    let direct_residual = (us[0] * us[0] + us[1] * us[1] + us[2] * us[2]).sqrt() - d0;
    let mut cross_residuals = [0.0; 3];
    for r in &reports {
        let a = r.axis.index();
        let others: f64 = (0..3).filter(|&b| b != a).map(|b| us[b] * us[b]).sum();
        cross_residuals[a] = r.solution.w - others;
    }

    let consumed: Vec<PathEntry> = reports
        .iter()
        .flat_map(|r| [r.double_near, r.double_far])
        .collect();
    let mut erroneous: Vec<PathEntry> = cls
        .s2_single
        .iter()
        .filter(|e| !consumed.contains(e))
        .chain(&cls.leftovers)
        .copied()
        .collect();
    erroneous.sort_by(|a, b| a.d.total_cmp(&b.d));

    Ok(EstimatedConfig {
        config,
        diagnostics: Diagnostics {
            raw_betas: first_order_betas(&reports),
            directions: reports,
            erroneous,
            direct_residual,
            cross_residuals,
        },
    })
}

/// Arrivals serving more than one role in a combination: a double bounce
/// that is also a first-order or multi-direction reflection, or that
/// serves twice.
fn reuse_count(combo: &[Candidate; 3], cls: &ClassifiedReflections) -> usize {
    let mut seen: Vec<PathEntry> = Vec::with_capacity(6);
    let mut reused = 0;
    for c in combo {
        for e in [c.double_near, c.double_far] {
            let other_role = cls.s2_multi.contains(&e)
                || Axis::ALL.iter().any(|&a| cls.first_order(a).contains(&e));
            if seen.contains(&e) || other_role {
                reused += 1;
            } else {
                seen.push(e);
            }
        }
    }
    reused
}

fn classified_entries(cls: &ClassifiedReflections) -> Vec<PathEntry> {
    let mut all = vec![cls.d0];
    for axis in Axis::ALL {
        all.extend(cls.first_order(axis));
    }
    all.extend(&cls.s2_single);
    all.extend(&cls.s2_multi);
    all.extend(&cls.leftovers);
    all.sort_by(|a, b| a.d.total_cmp(&b.d));
    all.dedup();
    all
}

/// Room from one candidate per axis, in axis order, coefficients clamped.
fn assemble_config(
    combo: &[Candidate; 3],
    cls: &ClassifiedReflections,
) -> Result<RoomConfig, EstimateError> {
    let mut dims = [0.0; 3];
    let mut source = [0.0; 3];
    let mut receiver = [0.0; 3];
    let mut betas = [0.0; 6];
    for c in combo {
        let a = c.axis.index();
        dims[a] = c.solution.length;
        source[a] = c.solution.source();
        receiver[a] = c.solution.receiver();
        betas[2 * a] = (4.0 * PI * c.near.d * c.near.a).clamp(0.0, 1.0);
        betas[2 * a + 1] = (4.0 * PI * c.far.d * c.far.a).clamp(0.0, 1.0);
    }
    let config = RoomConfig {
        dims,
        source,
        receiver,
        betas,
        c: cls.c,
    };
    config
        .validate()
        .map_err(|e| EstimateError::InvalidResult(e.to_string()))?;
    Ok(config)
}

fn report(c: &Candidate) -> DirectionReport {
    DirectionReport {
        axis: c.axis,
        solution: c.solution,
        near: c.near,
        far: c.far,
        double_near: c.double_near,
        double_far: c.double_far,
        misfit: c.misfit,
        widened: c.widened,
    }
}

fn first_order_betas(reports: &[DirectionReport]) -> [f64; 6] {
    let mut betas = [0.0; 6];
    for r in reports {
        let a = r.axis.index();
        betas[2 * a] = 4.0 * PI * r.near.d * r.near.a;
        betas[2 * a + 1] = 4.0 * PI * r.far.d * r.far.a;
    }
    betas
}

/// Reflection coefficients with their second-order cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    /// `(x1, x2, y1, y2, z1, z2)` from first-order amplitudes, unclamped.
    pub betas: [f64; 6],
    /// Measured minus predicted amplitude of each double bounce used,
    /// ordered by axis, `s - 2L` image first.
    pub second_order_residuals: Vec<f64>,
    /// `4 pi d_0 a_0`; 1 for an exactly scaled RIR.
    pub direct_gain: f64,
    /// Every coefficient lies in `[0, 1 + BETA_SLACK]`.
    pub valid: bool,
}

pub fn estimate_reflection_coefficients(
    cls: &ClassifiedReflections,
    est: &EstimatedConfig,
) -> CoefficientEstimate {
    let betas = first_order_betas(&est.diagnostics.directions);
    let mut residuals = Vec::with_capacity(6);
    let mut reports = est.diagnostics.directions.clone();
    reports.sort_by_key(|r| r.axis);
    for r in &reports {
        let a = r.axis.index();
        let product = betas[2 * a] * betas[2 * a + 1];
        for e in [r.double_near, r.double_far] {
            residuals.push(e.a - product / (4.0 * PI * e.d));
        }
    }
    let valid = betas.iter().all(|&b| (0.0..=1.0 + BETA_SLACK).contains(&b));
    CoefficientEstimate {
        betas,
        second_order_residuals: residuals,
        direct_gain: 4.0 * PI * cls.d0.d * cls.d0.a,
        valid,
    }
}

/// How well a configuration's arrivals up to second order explain a set of
/// path lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardFit {
    /// Predicted arrivals with a measured entry within tolerance.
    pub matched: usize,
    pub predicted: usize,
    /// Distinct entries matched to some prediction.
    pub explained: usize,
    /// Sum of distances from matched predictions to their entries.
    pub residual: f64,
}

/// Matches each predicted arrival of `config` (order <= 2) to an entry
/// within `tol`, closest pairs first and one prediction per entry where
/// possible; a prediction with no free entry shares its nearest one.
pub fn forward_fit(config: &RoomConfig, entries: &[PathEntry], tol: f64) -> ForwardFit {
    let cl = claims(config, entries, tol);
    let mut claimed: Vec<usize> = cl.iter().map(|(_, k)| *k).collect();
    claimed.sort_unstable();
    claimed.dedup();
    ForwardFit {
        matched: cl.len(),
        predicted: predicted_lengths(config).len(),
        explained: claimed.len(),
        residual: cl
            .iter()
            .map(|(p, k)| (p.path_length - entries[*k].d).abs())
            .sum(),
    }
}

impl ForwardFit {
    /// Selection score: a false solution often predicts coinciding arrivals
    /// that all land on few entries, so both directions count.
    pub fn score(&self) -> usize {
        self.matched + self.explained
    }
}

fn predicted_lengths(config: &RoomConfig) -> Vec<f64> {
    enumerate_pulses(config, 2)
        .map(|p| p.iter().map(|p| p.path_length).collect())
        .unwrap_or_default()
}

/// Exponents of the six coefficients in a pulse amplitude, `(x1, x2, y1,
/// y2, z1, z2)` order.
fn beta_exponents(index: &ImageIndex) -> [i32; 6] {
    let mut e = [0; 6];
    for a in 0..3 {
        let m = index.m[a];
        let q = index.p[a] as i32;
        e[2 * a] = (m - q).abs();
        e[2 * a + 1] = m.abs();
    }
    e
}

/// Re-fits the coefficients of walls whose first-order arrival shares its
/// entry with other predicted arrivals, since the merged peak carries their
/// amplitude too.
///
/// Every predicted pulse up to second order is assigned to its nearest entry
/// within `tol`, pulses on one entry add, and the flagged coefficients are
/// fitted by least squares on `4 pi d a` over all such entries. Each pulse
/// amplitude is linear in every single coefficient, so coordinate descent
/// solves each step exactly. The other coefficients stay at their
/// first-order values.
pub fn refit_merged_coefficients(
    config: &RoomConfig,
    entries: &[PathEntry],
    tol: f64,
    betas: [f64; 6],
) -> [f64; 6] {
    let Ok(pulses) = enumerate_pulses(config, 2) else {
        return betas;
    };
    // per entry: (target, [(weight, exponents)])
    let mut groups: Vec<(usize, Vec<(f64, [i32; 6])>)> = Vec::new();
    let mut first_order_entry = [usize::MAX; 6];
    for p in &pulses {
        let Some(index) = p.index else { continue };
        let k = entries.partition_point(|e| e.d < p.path_length);
        let Some(k) = [k.checked_sub(1), Some(k)]
            .into_iter()
            .flatten()
            .filter(|&k| k < entries.len())
            .min_by(|&a, &b| {
                (entries[a].d - p.path_length)
                    .abs()
                    .total_cmp(&(entries[b].d - p.path_length).abs())
            })
            .filter(|&k| (entries[k].d - p.path_length).abs() <= tol)
        else {
            continue;
        };
        let exps = beta_exponents(&index);
        if p.order == Some(1) {
            if let Some(w) = exps.iter().position(|&x| x == 1) {
                first_order_entry[w] = k;
            }
        }
        let term = (entries[k].d / p.path_length, exps);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, terms)) => terms.push(term),
            None => groups.push((k, vec![term])),
        }
    }
    let merged: Vec<usize> = (0..6)
        .filter(|&w| {
            groups
                .iter()
                .any(|(k, terms)| *k == first_order_entry[w] && terms.len() > 1)
        })
        .collect();
    if merged.is_empty() {
        return betas;
    }
    let mut b = betas.map(|x| x.max(0.0));
    let eval = |b: &[f64; 6], exps: &[i32; 6], skip: usize| -> f64 {
        (0..6)
            .filter(|&i| i != skip)
            .map(|i| b[i].powi(exps[i]))
            .product()
    };
    for _ in 0..200 {
        let mut change = 0.0f64;
        for &w in &merged {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, terms) in &groups {
                let target = 4.0 * PI * entries[*k].d * entries[*k].a;
                let mut rest = 0.0;
                let mut g = 0.0;
                for (weight, exps) in terms {
                    let v = weight * eval(&b, exps, w);
                    match exps[w] {
                        0 => rest += v,
                        _ => g += v,
                    }
                }
                num += g * (target - rest);
                den += g * g;
            }
            if den > 0.0 {
                let next = (num / den).max(0.0);
                change = change.max((next - b[w]).abs());
                b[w] = next;
            }
        }
        if change < 1e-12 {
            break;
        }
    }
    b
}

/// Predicted arrivals up to second order paired with entries within `tol`:
/// `(pulse, entry index)`. Pairs are taken closest first with each entry
/// used once; a prediction left over takes its nearest entry anyway, as
/// arrivals closer than a sample share one peak.
fn claims(config: &RoomConfig, entries: &[PathEntry], tol: f64) -> Vec<(Pulse, usize)> {
    let Ok(pulses) = enumerate_pulses(config, 2) else {
        return Vec::new();
    };
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (pi, p) in pulses.iter().enumerate() {
        let lo = entries.partition_point(|e| e.d < p.path_length - tol);
        for (k, e) in entries.iter().enumerate().skip(lo) {
            let r = (e.d - p.path_length).abs();
            if e.d > p.path_length + tol {
                break;
            }
            if r <= tol {
                pairs.push((r, pi, k));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut of_pulse: Vec<Option<usize>> = vec![None; pulses.len()];
    let mut entry_used = vec![false; entries.len()];
    for &(_, pi, k) in &pairs {
        if of_pulse[pi].is_none() && !entry_used[k] {
            of_pulse[pi] = Some(k);
            entry_used[k] = true;
        }
    }
    for &(_, pi, k) in &pairs {
        if of_pulse[pi].is_none() {
            of_pulse[pi] = Some(k);
        }
    }
    pulses
        .into_iter()
        .zip(of_pulse)
        .filter_map(|(p, k)| k.map(|k| (p, k)))
        .collect()
}

/// Entries no predicted arrival of `config` claims (see [`forward_fit`]).
pub fn unclaimed_entries(config: &RoomConfig, entries: &[PathEntry], tol: f64) -> Vec<PathEntry> {
    let claimed: Vec<usize> = claims(config, entries, tol)
        .into_iter()
        .map(|(_, k)| k)
        .collect();
    (0..entries.len())
        .filter(|k| !claimed.contains(k))
        .map(|k| entries[k])
        .collect()
}

/// Gauss-Newton refinement of dimensions and positions against every entry
/// claimed by a predicted arrival up to second order. The per-axis solves
/// each see four arrivals; this spreads timing noise over all of them. The
/// input is returned when a step fails to reduce the misfit or leaves the
/// room invalid.
pub fn refine_geometry(config: &RoomConfig, entries: &[PathEntry], tol: f64) -> RoomConfig {
    let cost = |c: &RoomConfig| -> (usize, f64) {
        let cl = claims(c, entries, tol);
        let ss = cl
            .iter()
            .map(|(p, k)| (p.path_length - entries[*k].d).powi(2))
            .sum();
        (cl.len(), ss)
    };
    let mut cur = *config;
    let mut cur_cost = cost(&cur);
    for _ in 0..10 {
        let cl = claims(&cur, entries, tol);
        if cl.len() < 9 {
            break;
        }
        let mut jac = DMatrix::<f64>::zeros(cl.len(), 9);
        let mut res = DVector::<f64>::zeros(cl.len());
        for (row, (p, k)) in cl.iter().enumerate() {
            let Some(index) = p.index else { continue };
            let img = image_source_position(&cur, &index);
            res[row] = entries[*k].d - p.path_length;
            for a in 0..3 {
                let g = (img[a] - cur.receiver[a]) / p.path_length;
                let q = index.p[a] as f64;
                jac[(row, a)] = g * 2.0 * index.m[a] as f64;
                jac[(row, 3 + a)] = g * (1.0 - 2.0 * q);
                jac[(row, 6 + a)] = -g;
            }
        }
        let jt = jac.transpose();
        let Some(step) = (&jt * &jac).lu().solve(&(&jt * &res)) else {
            break;
        };
        let mut next = cur;
        for a in 0..3 {
            next.dims[a] += step[a];
            next.source[a] += step[3 + a];
            next.receiver[a] += step[6 + a];
        }
        if next.validate().is_err() {
            break;
        }
        let next_cost = cost(&next);
        // more claims first, then a smaller misfit
        if next_cost.0 < cur_cost.0 || (next_cost.0 == cur_cost.0 && next_cost.1 >= cur_cost.1) {
            break;
        }
        cur = next;
        cur_cost = next_cost;
    }
    cur
}

/// Full estimate from one set of path lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomEstimate {
    pub classes: ClassifiedReflections,
    pub estimate: EstimatedConfig,
    pub coefficients: CoefficientEstimate,
    pub fit: ForwardFit,
}

/// Classifies, solves every ranked classification and keeps the solution
/// whose forward model fits best (see [`ForwardFit::score`], then valid
/// coefficients, then smallest residual, then classifier rank). The winner
/// is refined with [`refine_geometry`], and its erroneous list becomes the
/// entries no predicted arrival claims. If no classification solves, the
/// error of the best-ranked one is returned.
pub fn estimate_room(set: &PathLengthSet, tol: f64) -> Result<RoomEstimate, EstimateError> {
    let hypotheses = classification_hypotheses(set)?;
    let mut first_err: Option<EstimateError> = None;
    let mut best: Option<RoomEstimate> = None;
    for cls in hypotheses {
        let mut est = match estimate_configuration(&cls, tol) {
            Ok(e) => e,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        let fit = forward_fit(&est.config, set.entries(), tol);
        let mut coefficients = estimate_reflection_coefficients(&cls, &est);
        let refit = refit_merged_coefficients(&est.config, set.entries(), tol, coefficients.betas);
        if refit != coefficients.betas {
            coefficients.betas = refit;
            coefficients.valid = refit.iter().all(|&b| (0.0..=1.0 + BETA_SLACK).contains(&b));
            est.config.betas = refit.map(|b| b.clamp(0.0, 1.0));
        }
        let better = match &best {
            None => true,
            Some(b) => {
                fit.score() > b.fit.score()
                    || (fit.score() == b.fit.score()
                        && (coefficients.valid && !b.coefficients.valid
                            || (coefficients.valid == b.coefficients.valid
                                && fit.residual < b.fit.residual)))
            }
        };
        if better {
            // nothing can score higher than explaining every prediction and entry
            let complete =
                fit.matched == fit.predicted && fit.explained == set.len() && coefficients.valid;
            best = Some(RoomEstimate {
                classes: cls,
                estimate: est,
                coefficients,
                fit,
            });
            if complete {
                break;
            }
        }
    }
    let Some(mut best) = best else {
        return Err(first_err.expect("at least one hypothesis was tried"));
    };
    let config = refine_geometry(&best.estimate.config, set.entries(), tol);
    best.estimate.config = config;
    best.fit = forward_fit(&config, set.entries(), tol);
    best.estimate.diagnostics.erroneous = unclaimed_entries(&config, set.entries(), tol);
    Ok(best)
}

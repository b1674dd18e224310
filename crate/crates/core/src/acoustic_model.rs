//! Image-source forward model of a shoebox room.
//!
//! Every reflection path is labelled by an [`ImageIndex`] `(p, m)`. Along each
//! axis the image coordinate is `2 m L + (1 - 2 q) s`, the number of bounces
//! is `|2 m - q|`, and the near/far walls of that axis contribute
//! `beta_near^|m - q| * beta_far^|m|` to the pulse amplitude. The pressure
//! amplitude of a pulse is that product divided by `4 pi d`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;
use thiserror::Error;

/// Default half-width of the windowed-sinc rendering kernel, in samples.
pub const DEFAULT_KERNEL_HALF_WIDTH: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid room configuration: {0}")]
    InvalidConfig(String),
    #[error("max_order must be non-negative")]
    NegativeOrder,
    #[error("pulse {index} at toa {toa} s lies beyond the signal end ({duration} s)")]
    PulseBeyondSignal {
        index: usize,
        toa: f64,
        duration: f64,
    },
    #[error("invalid rendering parameters: {0}")]
    InvalidRendering(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("cannot drop {requested} pulses, only {available} non-direct pulses exist")]
    TooManyDropped { requested: usize, available: usize },
}

/// A rectangular room with one omnidirectional source and one receiver.
///
/// Coefficients are ordered `(x1, x2, y1, y2, z1, z2)`, where `*1` is the wall
/// at coordinate 0 and `*2` the wall at coordinate `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomConfig {
    pub dims: [f64; 3],
    pub source: [f64; 3],
    pub receiver: [f64; 3],
    pub betas: [f64; 6],
    pub c: f64,
}

impl RoomConfig {
    pub fn new(
        dims: [f64; 3],
        source: [f64; 3],
        receiver: [f64; 3],
        betas: [f64; 6],
        c: f64,
    ) -> Result<Self, ModelError> {
        let config = RoomConfig {
            dims,
            source,
            receiver,
            betas,
            c,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.c.is_finite() && self.c > 0.0) {
            return bad(format!("speed of sound {} must be positive", self.c));
        }
        for a in 0..3 {
            let l = self.dims[a];
            if !(l.is_finite() && l > 0.0) {
                return bad(format!("dimension {a} = {l} must be positive"));
            }
            for (name, p) in [("source", self.source), ("receiver", self.receiver)] {
                if !(p[a] > 0.0 && p[a] < l) {
                    return bad(format!("{name} coordinate {a} = {} outside (0, {l})", p[a]));
                }
            }
        }
        for (w, &b) in self.betas.iter().enumerate() {
            if !(0.0..=1.0).contains(&b) {
                return bad(format!("reflection coefficient {w} = {b} outside [0, 1]"));
            }
        }
        if distance(self.source, self.receiver) == 0.0 {
            return bad("source and receiver coincide".into());
        }
        Ok(())
    }

    /// Coefficients `(near, far)` of the wall pair along `axis`.
    pub fn beta_pair(&self, axis: usize) -> (f64, f64) {
        (self.betas[2 * axis], self.betas[2 * axis + 1])
    }
}

/// Label of one image source: `p` holds the mirror flags `(q, j, k)`, `m` the
/// integer lattice offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageIndex {
    pub p: [u8; 3],
    pub m: [i32; 3],
}

impl ImageIndex {
    pub const DIRECT: ImageIndex = ImageIndex {
        p: [0, 0, 0],
        m: [0, 0, 0],
    };

    pub fn new(p: [u8; 3], m: [i32; 3]) -> Self {
        ImageIndex { p, m }
    }

    /// Bounces along one axis.
    pub fn axis_order(&self, axis: usize) -> u32 {
        (2 * self.m[axis] - self.p[axis] as i32).unsigned_abs()
    }

    pub fn order(&self) -> u32 {
        (0..3).map(|a| self.axis_order(a)).sum()
    }

    /// Axes on which this path bounces at least once.
    pub fn directions(&self) -> Vec<usize> {
        (0..3).filter(|&a| self.axis_order(a) > 0).collect()
    }
}

pub fn reflection_order(index: &ImageIndex) -> u32 {
    index.order()
}

pub fn image_source_position(config: &RoomConfig, index: &ImageIndex) -> [f64; 3] {
    let mut out = [0.0; 3];
    for a in 0..3 {
        let q = index.p[a] as f64;
        out[a] = 2.0 * index.m[a] as f64 * config.dims[a] + (1.0 - 2.0 * q) * config.source[a];
    }
    out
}

/// Product of wall coefficients for one image source.
pub fn beta_product(config: &RoomConfig, index: &ImageIndex) -> f64 {
    let mut prod = 1.0;
    for a in 0..3 {
        let (near, far) = config.beta_pair(a);
        let m = index.m[a];
        let q = index.p[a] as i32;
        prod *= near.powi((m - q).abs()) * far.powi(m.abs());
    }
    prod
}

/// One arrival of the RIR.
///
/// `index` and `order` are `None` for arrivals without a known image source,
/// such as spurious peaks or path lengths read from a measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PulseRecord", into = "PulseRecord")]
pub struct Pulse {
    pub index: Option<ImageIndex>,
    pub order: Option<u32>,
    pub toa: f64,
    pub path_length: f64,
    pub amplitude: f64,
}

impl Pulse {
    pub fn is_direct(&self) -> bool {
        self.order == Some(0)
    }
}

#[derive(Serialize, Deserialize)]
struct PulseRecord {
    #[serde(default)]
    p: Option<[u8; 3]>,
    #[serde(default)]
    m: Option<[i32; 3]>,
    #[serde(default)]
    order: Option<u32>,
    toa: f64,
    path_length: f64,
    amplitude: f64,
}

impl From<PulseRecord> for Pulse {
    fn from(r: PulseRecord) -> Self {
        let index = match (r.p, r.m) {
            (Some(p), Some(m)) => Some(ImageIndex { p, m }),
            _ => None,
        };
        Pulse {
            order: r.order.or(index.map(|i| i.order())),
            index,
            toa: r.toa,
            path_length: r.path_length,
            amplitude: r.amplitude,
        }
    }
}

impl From<Pulse> for PulseRecord {
    fn from(p: Pulse) -> Self {
        PulseRecord {
            p: p.index.map(|i| i.p),
            m: p.index.map(|i| i.m),
            order: p.order,
            toa: p.toa,
            path_length: p.path_length,
            amplitude: p.amplitude,
        }
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Arrival-time order with ties broken by image index; unlabeled pulses sort
/// after labeled ones at equal time.
pub fn pulse_order(a: &Pulse, b: &Pulse) -> Ordering {
    a.toa
        .total_cmp(&b.toa)
        .then_with(|| match (a.index, b.index) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        })
}

/// All image-source pulses with reflection order `<= max_order`, sorted by
/// arrival time.
pub fn enumerate_pulses(config: &RoomConfig, max_order: i32) -> Result<Vec<Pulse>, ModelError> {
    config.validate()?;
    if max_order < 0 {
        return Err(ModelError::NegativeOrder);
    }
    let n = max_order;
    // (q, m) choices per axis with at most n bounces on that axis
    let per_axis: Vec<(u8, i32)> = (0..=1u8)
        .flat_map(|q| (-n..=n).map(move |m| (q, m)))
        .filter(|&(q, m)| (2 * m - q as i32).abs() <= n)
        .collect();

    let mut pulses = Vec::new();
    for &(qx, mx) in &per_axis {
        for &(qy, my) in &per_axis {
            for &(qz, mz) in &per_axis {
                let index = ImageIndex::new([qx, qy, qz], [mx, my, mz]);
                let order = index.order();
                if order > n as u32 {
                    continue;
                }
                let d = distance(image_source_position(config, &index), config.receiver);
                pulses.push(Pulse {
                    index: Some(index),
                    order: Some(order),
                    toa: d / config.c,
                    path_length: d,
                    amplitude: beta_product(config, &index) / (4.0 * PI * d),
                });
            }
        }
    }
    pulses.sort_by(pulse_order);
    Ok(pulses)
}

/// A uniformly sampled impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRir {
    pub samples: Vec<f64>,
    pub fs: f64,
}

impl SampledRir {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Hann-windowed sinc, zero outside `|x| < half_width`.
pub fn windowed_sinc(x: f64, half_width: usize) -> f64 {
    let hw = half_width as f64;
    if x.abs() >= hw {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x / hw).cos());
    let sinc = if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    sinc * window
}

pub fn render_rir(pulses: &[Pulse], fs: f64, length: usize) -> Result<SampledRir, ModelError> {
    render_rir_with_kernel(pulses, fs, length, DEFAULT_KERNEL_HALF_WIDTH)
}

/// Sums `amplitude * kernel(n - toa * fs)` over all pulses.
pub fn render_rir_with_kernel(
    pulses: &[Pulse],
    fs: f64,
    length: usize,
    half_width: usize,
) -> Result<SampledRir, ModelError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(ModelError::InvalidRendering(format!(
            "sampling rate {fs} must be positive"
        )));
    }
    if half_width == 0 {
        return Err(ModelError::InvalidRendering(
            "kernel half-width must be at least one sample".into(),
        ));
    }
    let duration = length as f64 / fs;
    let mut samples = vec![0.0; length];
    for (i, pulse) in pulses.iter().enumerate() {
        if !(pulse.toa >= 0.0 && pulse.toa < duration) {
            return Err(ModelError::PulseBeyondSignal {
                index: i,
                toa: pulse.toa,
                duration,
            });
        }
        let centre = pulse.toa * fs;
        let lo = (centre - half_width as f64).ceil().max(0.0) as usize;
        let hi = ((centre + half_width as f64).floor() as usize).min(length - 1);
        for (n, s) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *s += pulse.amplitude * windowed_sinc(n as f64 - centre, half_width);
        }
    }
    Ok(SampledRir { samples, fs })
}

/// Parameters of the scattering surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Half-width of the uniform TOA shift, seconds.
    pub toa_jitter: f64,
    /// Half-width of the uniform relative amplitude scaling.
    pub amp_jitter: f64,
    pub n_spurious: usize,
    pub n_dropped: usize,
}

impl Perturbation {
    pub fn is_identity(&self) -> bool {
        self.toa_jitter == 0.0
            && self.amp_jitter == 0.0
            && self.n_spurious == 0
            && self.n_dropped == 0
    }
}

/// Jitters, thins and pollutes a pulse list.
///
/// The direct path is the order-0 pulse if one is labelled, otherwise the
/// earliest arrival. It is jittered but never dropped. Spurious pulses are
/// unlabeled, placed uniformly between the earliest and latest arrival, with
/// amplitudes uniform over the range of the non-direct amplitudes.
pub fn perturb_pulses(
    pulses: &[Pulse],
    perturbation: &Perturbation,
    seed: u64,
) -> Result<Vec<Pulse>, ModelError> {
    let Perturbation {
        toa_jitter,
        amp_jitter,
        n_spurious,
        n_dropped,
    } = *perturbation;
    if !(toa_jitter >= 0.0 && amp_jitter >= 0.0 && toa_jitter.is_finite() && amp_jitter.is_finite())
    {
        return Err(ModelError::InvalidPerturbation(
            "jitter parameters must be finite and non-negative".into(),
        ));
    }
    if perturbation.is_identity() || pulses.is_empty() {
        if n_dropped > 0 {
            return Err(ModelError::TooManyDropped {
                requested: n_dropped,
                available: 0,
            });
        }
        return Ok(pulses.to_vec());
    }

    let direct = pulses.iter().position(Pulse::is_direct).unwrap_or_else(|| {
        (0..pulses.len())
            .min_by(|&a, &b| pulses[a].toa.total_cmp(&pulses[b].toa))
            .unwrap()
    });
    let available = pulses.len() - 1;
    if n_dropped > available {
        return Err(ModelError::TooManyDropped {
            requested: n_dropped,
            available,
        });
    }
    // path_length / toa is the same for every pulse of one list
    let speed = pulses
        .iter()
        .find(|p| p.toa > 0.0)
        .map(|p| p.path_length / p.toa)
        .unwrap_or(1.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut out: Vec<Pulse> = pulses
        .iter()
        .map(|p| {
            let mut q = *p;
            if toa_jitter > 0.0 {
                q.toa = (q.toa + rng.gen_range(-toa_jitter..=toa_jitter)).max(0.0);
                q.path_length = q.toa * speed;
            }
            if amp_jitter > 0.0 {
                q.amplitude *= 1.0 + rng.gen_range(-amp_jitter..=amp_jitter);
            }
            q
        })
        .collect();

    if n_dropped > 0 {
        let others: Vec<usize> = (0..out.len()).filter(|&i| i != direct).collect();
        let mut drop: Vec<usize> = sample(&mut rng, others.len(), n_dropped)
            .into_iter()
            .map(|k| others[k])
            .collect();
        drop.sort_unstable();
        for i in drop.into_iter().rev() {
            out.remove(i);
        }
    }

    if n_spurious > 0 {
        let t_lo = out.iter().map(|p| p.toa).fold(f64::INFINITY, f64::min);
        let t_hi = out.iter().map(|p| p.toa).fold(f64::NEG_INFINITY, f64::max);
        let non_direct = out.iter().filter(|p| !p.is_direct()).map(|p| p.amplitude);
        let (a_lo, a_hi) = non_direct.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| {
            (lo.min(a), hi.max(a))
        });
        let (a_lo, a_hi) = if a_lo.is_finite() {
            (a_lo, a_hi)
        } else {
            (0.0, out[0].amplitude)
        };
        for _ in 0..n_spurious {
            let toa = if t_hi > t_lo {
                rng.gen_range(t_lo..t_hi)
            } else {
                t_lo
            };
            let amplitude = if a_hi > a_lo {
                rng.gen_range(a_lo..=a_hi)
            } else {
                a_lo
            };
            out.push(Pulse {
                index: None,
                order: None,
                toa,
                path_length: toa * speed,
                amplitude,
            });
        }
    }

    out.sort_by(pulse_order);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_room() -> RoomConfig {
        RoomConfig::new(
            [4.0, 5.0, 3.0],
            [1.0, 2.0, 1.5],
            [2.5, 4.0, 1.2],
            [0.8, 0.6, 0.7, 0.9, 0.5, 0.4],
            343.0,
        )
        .unwrap()
    }

    #[test]
    fn order_examples() {
        assert_eq!(reflection_order(&ImageIndex::DIRECT), 0);
        assert_eq!(reflection_order(&ImageIndex::new([1, 0, 0], [0, 0, 0])), 1);
        assert_eq!(reflection_order(&ImageIndex::new([0, 0, 0], [-1, 0, 0])), 2);
    }

    #[test]
    fn image_positions() {
        let room = example_room();
        assert_eq!(
            image_source_position(&room, &ImageIndex::DIRECT),
            room.source
        );
        let flip = image_source_position(&room, &ImageIndex::new([1, 0, 0], [0, 0, 0]));
        assert_eq!(flip, [-1.0, 2.0, 1.5]);
        let shifted = image_source_position(&room, &ImageIndex::new([0, 0, 0], [-1, 0, 0]));
        assert_eq!(shifted, [-7.0, 2.0, 1.5]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = example_room();
        let mut c = ok;
        c.source[0] = 4.0;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.betas[3] = 1.2;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.c = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.dims[2] = -1.0;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.receiver = c.source;
        assert!(enumerate_pulses(&c, 2).is_err());
        assert_eq!(enumerate_pulses(&ok, -1), Err(ModelError::NegativeOrder));
    }

    #[test]
    fn pulse_counts() {
        let room = example_room();
        assert_eq!(enumerate_pulses(&room, 0).unwrap().len(), 1);
        assert_eq!(enumerate_pulses(&room, 1).unwrap().len(), 7);
        let p2 = enumerate_pulses(&room, 2).unwrap();
        assert_eq!(p2.len(), 25);
        let count = |o: u32| p2.iter().filter(|p| p.order == Some(o)).count();
        assert_eq!((count(0), count(1), count(2)), (1, 6, 18));
        let single = p2
            .iter()
            .filter(|p| p.order == Some(2) && p.index.unwrap().directions().len() == 1)
            .count();
        assert_eq!(single, 6);
        // order 3: 1 + 6 + 18 + (6 single + 24 two-axis + 8 three-axis)
        assert_eq!(enumerate_pulses(&room, 3).unwrap().len(), 63);
    }

    #[test]
    fn example_room_path_lengths() {
        let room = example_room();
        let pulses = enumerate_pulses(&room, 2).unwrap();
        assert_relative_eq!(pulses[0].path_length, 6.34f64.sqrt(), epsilon = 1e-12);
        let find = |p: [u8; 3], m: [i32; 3]| {
            pulses
                .iter()
                .find(|x| x.index == Some(ImageIndex::new(p, m)))
                .unwrap()
                .path_length
        };
        assert_relative_eq!(find([1, 0, 0], [0, 0, 0]), 16.34f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(find([1, 0, 0], [1, 0, 0]), 24.34f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(find([0, 0, 0], [1, 0, 0]), 46.34f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(
            find([0, 0, 0], [-1, 0, 0]),
            94.34f64.sqrt(),
            epsilon = 1e-12
        );
        for p in &pulses {
            assert_relative_eq!(p.path_length, p.toa * 343.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn amplitudes_follow_wall_products() {
        let room = example_room();
        let pulses = enumerate_pulses(&room, 2).unwrap();
        let amp = |p: [u8; 3], m: [i32; 3]| {
            let x = pulses
                .iter()
                .find(|x| x.index == Some(ImageIndex::new(p, m)))
                .unwrap();
            x.amplitude * 4.0 * PI * x.path_length
        };
        assert_relative_eq!(amp([0, 0, 0], [0, 0, 0]), 1.0, epsilon = 1e-12);
        assert_relative_eq!(amp([1, 0, 0], [0, 0, 0]), 0.8, epsilon = 1e-12);
        assert_relative_eq!(amp([1, 0, 0], [1, 0, 0]), 0.6, epsilon = 1e-12);
        assert_relative_eq!(amp([0, 0, 0], [1, 0, 0]), 0.48, epsilon = 1e-12);
        assert_relative_eq!(amp([1, 1, 0], [0, 1, 0]), 0.8 * 0.9, epsilon = 1e-12);
        assert_relative_eq!(amp([0, 0, 1], [0, 0, 1]), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn ties_broken_by_index() {
        // source and receiver on the mid-plane make the two z walls equidistant
        let room = RoomConfig::new(
            [4.0, 5.0, 3.0],
            [1.0, 2.0, 1.5],
            [2.5, 4.0, 1.5],
            [1.0; 6],
            343.0,
        )
        .unwrap();
        let pulses = enumerate_pulses(&room, 2).unwrap();
        for w in pulses.windows(2) {
            assert_ne!(pulse_order(&w[0], &w[1]), Ordering::Greater);
        }
    }

    #[test]
    fn render_empty_and_single() {
        let rir = render_rir(&[], 44100.0, 64).unwrap();
        assert!(rir.samples.iter().all(|&s| s == 0.0));

        let pulse = Pulse {
            index: None,
            order: None,
            toa: 10.0 / 1000.0,
            path_length: 3.43,
            amplitude: 0.25,
        };
        let rir = render_rir(&[pulse], 1000.0, 100).unwrap();
        assert_relative_eq!(rir.samples[10], 0.25, epsilon = 1e-15);
        for (n, &s) in rir.samples.iter().enumerate() {
            if n != 10 {
                assert!(s.abs() < 1e-15, "sample {n} = {s}");
            }
        }
        // fractional position leaks into neighbours
        let half = Pulse {
            toa: 10.5 / 1000.0,
            ..pulse
        };
        let rir = render_rir(&[half], 1000.0, 100).unwrap();
        assert!(rir.samples[10] > 0.1 && rir.samples[11] > 0.1);
        assert_relative_eq!(rir.samples[10], rir.samples[11], epsilon = 1e-15);
    }

    #[test]
    fn render_rejects_late_pulse() {
        let pulse = Pulse {
            index: None,
            order: None,
            toa: 1.0,
            path_length: 343.0,
            amplitude: 1.0,
        };
        let err = render_rir(&[pulse], 100.0, 100).unwrap_err();
        assert!(matches!(
            err,
            ModelError::PulseBeyondSignal { index: 0, .. }
        ));
    }

    #[test]
    fn perturbation_identity_and_counts() {
        let pulses = enumerate_pulses(&example_room(), 2).unwrap();
        let same = perturb_pulses(&pulses, &Perturbation::default(), 3).unwrap();
        assert_eq!(same, pulses);

        let spur = Perturbation {
            n_spurious: 5,
            ..Default::default()
        };
        let out = perturb_pulses(&pulses, &spur, 3).unwrap();
        assert_eq!(out.len(), 30);
        assert_eq!(out.iter().filter(|p| p.index.is_none()).count(), 5);
        assert_eq!(out, perturb_pulses(&pulses, &spur, 3).unwrap());

        let drop = Perturbation {
            n_dropped: 4,
            ..Default::default()
        };
        let out = perturb_pulses(&pulses, &drop, 9).unwrap();
        assert_eq!(out.len(), 21);
        assert!(out.iter().any(Pulse::is_direct));

        let too_many = Perturbation {
            n_dropped: 25,
            ..Default::default()
        };
        assert!(matches!(
            perturb_pulses(&pulses, &too_many, 1),
            Err(ModelError::TooManyDropped {
                requested: 25,
                available: 24
            })
        ));
    }

    #[test]
    fn toa_jitter_is_bounded() {
        let fs = 44100.0;
        let c = 343.0;
        let pulses = enumerate_pulses(&example_room(), 2).unwrap();
        let jit = Perturbation {
            toa_jitter: 2.0 / fs,
            ..Default::default()
        };
        let out = perturb_pulses(&pulses, &jit, 11).unwrap();
        let bound = 2.0 * c / fs; // ~0.01556 m
        for p in &out {
            let orig = pulses.iter().find(|q| q.index == p.index).unwrap();
            assert!((p.path_length - orig.path_length).abs() <= bound + 1e-12);
            assert_relative_eq!(p.path_length, p.toa * c, max_relative = 1e-12);
        }
    }

    #[test]
    fn pulse_json_shape() {
        let pulses = enumerate_pulses(&example_room(), 1).unwrap();
        let v = serde_json::to_value(pulses[1]).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        for k in ["p", "m", "order", "toa", "path_length", "amplitude"] {
            assert!(keys.contains(&k));
        }
        let back: Pulse = serde_json::from_value(v).unwrap();
        assert_eq!(back, pulses[1]);
        let unlabeled: Pulse =
            serde_json::from_str(r#"{"toa":0.01,"path_length":3.43,"amplitude":0.1}"#).unwrap();
        assert!(unlabeled.index.is_none());
    }

    #[test]
    fn room_json_keys() {
        let room = example_room();
        let s = serde_json::to_string(&room).unwrap();
        assert_eq!(
            s,
            r#"{"dims":[4.0,5.0,3.0],"source":[1.0,2.0,1.5],"receiver":[2.5,4.0,1.2],"betas":[0.8,0.6,0.7,0.9,0.5,0.4],"c":343.0}"#
        );
    }
}

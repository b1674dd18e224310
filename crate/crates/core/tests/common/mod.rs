//! Image sources by reflecting the source across arbitrary planes, one wall
//! at a time. Independent of the lattice formula in the library.

#![allow(dead_code)]

use rand::Rng;
use rirgeo::RoomConfig;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy)]
pub struct Plane {
    /// Unit normal.
    pub n: [f64; 3],
    /// Any point on the plane.
    pub p: [f64; 3],
    pub beta: f64,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub fn mirror(x: [f64; 3], plane: &Plane) -> [f64; 3] {
    let h = dot(
        [x[0] - plane.p[0], x[1] - plane.p[1], x[2] - plane.p[2]],
        plane.n,
    );
    [
        x[0] - 2.0 * h * plane.n[0],
        x[1] - 2.0 * h * plane.n[1],
        x[2] - 2.0 * h * plane.n[2],
    ]
}

/// The six walls in `(x=0, x=L, y=0, y=L, z=0, z=L)` order.
pub fn shoebox_planes(room: &RoomConfig) -> Vec<Plane> {
    let mut out = Vec::with_capacity(6);
    for a in 0..3 {
        let mut n = [0.0; 3];
        n[a] = 1.0;
        let mut far = [0.0; 3];
        far[a] = room.dims[a];
        out.push(Plane {
            n,
            p: [0.0; 3],
            beta: room.betas[2 * a],
        });
        out.push(Plane {
            n,
            p: far,
            beta: room.betas[2 * a + 1],
        });
    }
    out
}

/// `(path length, amplitude, wall sequence)` of every image reached by at
/// most `max_order` reflections with no wall hit twice in a row. Images that
/// coincide (commuting reflections) are kept once.
pub fn unfold(
    source: [f64; 3],
    receiver: [f64; 3],
    planes: &[Plane],
    max_order: usize,
) -> Vec<(f64, f64, Vec<usize>)> {
    let mut images: Vec<([f64; 3], f64, Vec<usize>)> = vec![(source, 1.0, vec![])];
    let mut frontier = images.clone();
    for _ in 0..max_order {
        let mut next = Vec::new();
        for (img, gain, seq) in &frontier {
            for (w, plane) in planes.iter().enumerate() {
                if seq.last() == Some(&w) {
                    continue;
                }
                let m = mirror(*img, plane);
                if images
                    .iter()
                    .chain(&next)
                    .any(|(q, _, _)| dist(*q, m) < 1e-9)
                {
                    continue;
                }
                let mut s = seq.clone();
                s.push(w);
                next.push((m, gain * plane.beta, s));
            }
        }
        images.extend(next.iter().cloned());
        frontier = next;
    }
    let mut out: Vec<(f64, f64, Vec<usize>)> = images
        .into_iter()
        .map(|(img, gain, seq)| {
            let d = dist(img, receiver);
            (d, gain / (4.0 * PI * d), seq)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Shoebox footprint `[lx, ly]` with floor at `z = 0` and a ceiling through
/// `(0, 0, h)` tilted by `angle` radians about the y axis.
pub fn sloped_room(lx: f64, ly: f64, h: f64, angle: f64, betas: [f64; 6]) -> Vec<Plane> {
    vec![
        Plane {
            n: [1.0, 0.0, 0.0],
            p: [0.0; 3],
            beta: betas[0],
        },
        Plane {
            n: [1.0, 0.0, 0.0],
            p: [lx, 0.0, 0.0],
            beta: betas[1],
        },
        Plane {
            n: [0.0, 1.0, 0.0],
            p: [0.0; 3],
            beta: betas[2],
        },
        Plane {
            n: [0.0, 1.0, 0.0],
            p: [0.0, ly, 0.0],
            beta: betas[3],
        },
        Plane {
            n: [0.0, 0.0, 1.0],
            p: [0.0; 3],
            beta: betas[4],
        },
        Plane {
            n: [-angle.sin(), 0.0, angle.cos()],
            p: [0.0, 0.0, h],
            beta: betas[5],
        },
    ]
}

/// Random sloped-ceiling room: footprint `[2, 4] x [5, 10]`, lowest ceiling
/// height in `[7, 11]`, tilt uniform in 10 to 30 degrees, coefficients in
/// `[0.3, 1]`. Source and receiver keep 0.3 m from every wall.
pub fn random_sloped_room(rng: &mut impl Rng) -> (Vec<Plane>, [f64; 3], [f64; 3]) {
    let lx = rng.gen_range(2.0..4.0);
    let ly = rng.gen_range(5.0..10.0);
    let h = rng.gen_range(7.0..11.0);
    let angle = rng.gen_range(10.0f64..30.0).to_radians();
    let betas: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.3..1.0));
    let planes = sloped_room(lx, ly, h, angle, betas);
    let mut point = || {
        [
            rng.gen_range(0.3..lx - 0.3),
            rng.gen_range(0.3..ly - 0.3),
            rng.gen_range(0.3..h - 0.3),
        ]
    };
    let s = point();
    let r = point();
    (planes, s, r)
}

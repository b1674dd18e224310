//! Labels unlabeled path lengths as direct path, first-order reflections per
//! wall pair, and single- or multi-direction second-order reflections.
//!
//! The test underneath is the parallelogram identity: if `d_i` and `d_j`
//! bounce on different wall pairs, the path that bounces on both has
//! `d_ij^2 + d_0^2 = d_i^2 + d_j^2`. Two reflections off the same wall pair
//! have no such partner.
//!
//! A pass starts from a hypothesis `(d_0, d_x)` for the direct path and the
//! earliest first-order reflection, calls that wall pair `x`, and then:
//!
//! 1. collects every `d_i` whose partner with `d_x` is present; these are the
//!    four `y`/`z` first-order reflections (plus chance matches),
//! 2. splits them into two pairs whose four cross partners are all present;
//!    the pair holding the smallest `d_i` becomes `y`,
//! 3. picks the second `x` reflection as the entry that explains the most
//!    cross-direction partners,
//! 4. takes the partners of all twelve cross-direction pairs as
//!    multi-direction reflections,
//! 5. keeps the rest as single-direction candidates.
//!
//! Chance matches within the tolerance are common, so every hypothesis
//! among the earliest arrivals is run and the resulting labellings are
//! ranked by how completely and tightly their cross partners are found.
//! A chance match sits anywhere in the tolerance window while a genuine one
//! sits near its centre, so the summed residual separates them well.
//!
//! Arrivals closer than a sample merge into one detected peak, so a lookup
//! that finds no unused entry may reuse one already assigned.

use crate::pulse_extraction::{PathEntry, PathLengthSet};
use crate::Axis;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Arrivals considered for the `(d_0, d_x)` hypothesis.
pub const HYPOTHESIS_WINDOW: usize = 6;
/// Fewest multi-direction partners (of twelve) a pass must find.
pub const MIN_MULTI: usize = 10;
/// Fewest single-direction candidates a pass must leave.
pub const MIN_SINGLE: usize = 4;
/// Cap on the candidate list searched for the `y`/`z` split.
const MAX_CANDIDATES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("need at least {needed} path lengths, got {got}")]
    TooFewEntries { needed: usize, got: usize },
    #[error(
        "no hypothesis among the first {window} arrivals gave consistent sets ({tried} tried)"
    )]
    ClassificationFailed { window: usize, tried: usize },
}

/// Result of one successful classification pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedReflections {
    pub d0: PathEntry,
    pub sx1: Vec<PathEntry>,
    pub sy1: Vec<PathEntry>,
    pub sz1: Vec<PathEntry>,
    pub s2_single: Vec<PathEntry>,
    pub s2_multi: Vec<PathEntry>,
    pub leftovers: Vec<PathEntry>,
    /// Speed of sound the path lengths were computed with.
    pub c: f64,
}

impl ClassifiedReflections {
    /// The two first-order reflections of `axis`, ascending.
    pub fn first_order(&self, axis: Axis) -> &[PathEntry] {
        match axis {
            Axis::X => &self.sx1,
            Axis::Y => &self.sy1,
            Axis::Z => &self.sz1,
        }
    }

    pub fn total_len(&self) -> usize {
        1 + self.sx1.len()
            + self.sy1.len()
            + self.sz1.len()
            + self.s2_single.len()
            + self.s2_multi.len()
            + self.leftovers.len()
    }
}

/// `|sqrt(d_i^2 + d_j^2 - d_0^2) - d_ij| <= tol`.
pub fn theorem1_holds(d_i: f64, d_j: f64, d_ij: f64, d_0: f64, tol: f64) -> bool {
    match partner_length(d_i, d_j, d_0) {
        Some(p) => (p - d_ij).abs() <= tol,
        None => false,
    }
}

/// Path length of the reflection combining `a` and `b`, if real.
fn partner_length(a: f64, b: f64, d0: f64) -> Option<f64> {
    let s = a * a + b * b - d0 * d0;
    (s >= 0.0).then(|| s.sqrt())
}

/// Best-ranked consistent classification.
pub fn classify_reflections(set: &PathLengthSet) -> Result<ClassifiedReflections, ClassifyError> {
    Ok(classification_hypotheses(set)?.swap_remove(0))
}

/// Every consistent classification, best first. Ranking counts missing
/// cross-direction partners, then partners shared with another role, then
/// the summed residual; ties keep arrival order of the hypotheses. Lets a
/// caller fall through to the next candidate when the geometry solve
/// rejects one.
pub fn classification_hypotheses(
    set: &PathLengthSet,
) -> Result<Vec<ClassifiedReflections>, ClassifyError> {
    let mut ranked: Vec<(Cost, ClassifiedReflections)> = Vec::new();
    let mut tried = 0;
    for (i0, i1) in hypotheses(set.len()) {
        tried += 1;
        ranked.extend(classify_pass(set, i0, i1));
    }
    if ranked.is_empty() {
        check_size(set)?;
        return Err(ClassifyError::ClassificationFailed {
            window: HYPOTHESIS_WINDOW,
            tried,
        });
    }
    // stable: equal costs keep hypothesis order
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<ClassifiedReflections> = Vec::with_capacity(ranked.len());
    for (_, c) in ranked {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

fn check_size(set: &PathLengthSet) -> Result<(), ClassifyError> {
    let needed = 7 + MIN_MULTI + MIN_SINGLE;
    if set.len() < needed {
        return Err(ClassifyError::TooFewEntries {
            needed,
            got: set.len(),
        });
    }
    Ok(())
}

/// `(d_0, d_x)` index pairs: each new arrival is paired with every earlier one.
fn hypotheses(n: usize) -> impl Iterator<Item = (usize, usize)> {
    let k = n.min(HYPOTHESIS_WINDOW);
    (1..k).flat_map(|i1| (0..i1).map(move |i0| (i0, i1)))
}

struct Pass<'a> {
    e: &'a [PathEntry],
    i0: usize,
    d0: f64,
    tol: f64,
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    idx: usize,
    resid: f64,
    shared: bool,
}

/// Ranking of a labelling. Residuals are in units of the tolerance, so a
/// missing partner costs as much as the worst accepted match and a reused
/// entry half that.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost {
    missing: usize,
    shared: usize,
    resid: f64,
}

const SHARE_WEIGHT: f64 = 0.5;

impl Cost {
    const ZERO: Cost = Cost {
        missing: 0,
        shared: 0,
        resid: 0.0,
    };

    fn add(&mut self, hit: Option<Hit>, tol: f64) {
        match hit {
            Some(h) => {
                self.shared += h.shared as usize;
                self.resid += h.resid / tol;
            }
            None => self.missing += 1,
        }
    }

    fn value(&self) -> f64 {
        self.missing as f64 + SHARE_WEIGHT * self.shared as f64 + self.resid
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl Pass<'_> {
    fn d(&self, i: usize) -> f64 {
        self.e[i].d
    }

    /// Closest entry after `d_0` within tolerance of `target`. Entries in
    /// `taken` are used only when nothing else fits.
    fn find(&self, target: f64, taken: &[usize]) -> Option<Hit> {
        let mut live: Option<Hit> = None;
        let mut shared: Option<Hit> = None;
        // entries are sorted; scan only the tolerance window
        let lo = self.e.partition_point(|x| x.d < target - self.tol);
        for k in lo.max(self.i0 + 1)..self.e.len() {
            if self.e[k].d > target + self.tol {
                break;
            }
            let resid = (self.e[k].d - target).abs();
            if resid > self.tol {
                continue;
            }
            let is_shared = taken.contains(&k);
            let slot = if is_shared { &mut shared } else { &mut live };
            if slot.is_none_or(|h| resid < h.resid) {
                *slot = Some(Hit {
                    idx: k,
                    resid,
                    shared: is_shared,
                });
            }
        }
        live.or(shared)
    }

    /// Entry matching the double bounce off the wall pairs of `a` and `b`.
    /// When `d_a` is close to `d_0` that bounce merges with `b` itself, so
    /// `a` and `b` count as taken rather than excluded.
    fn partner(&self, a: usize, b: usize, taken: &[usize]) -> Option<Hit> {
        let target = partner_length(self.d(a), self.d(b), self.d0)?;
        let hit = self.find(target, taken)?;
        let own = hit.idx == a || hit.idx == b;
        Some(Hit {
            shared: hit.shared || own,
            ..hit
        })
    }
}

/// Candidate `y`/`z` split: two same-axis pairs.
struct Split {
    pairs: [[usize; 2]; 2],
    cost: Cost,
}

/// A full first-order labelling with its cross partners.
struct Labelling {
    x: [usize; 2],
    y: [usize; 2],
    z: [usize; 2],
    multi: Vec<usize>,
    cost: Cost,
}

/// Splits kept per hypothesis for the `x` far-wall search.
const SPLITS_KEPT: usize = 48;
/// Far-wall `x` candidates kept per split.
const X_FAR_KEPT: usize = 3;

fn classify_pass(set: &PathLengthSet, i0: usize, ix: usize) -> Vec<(Cost, ClassifiedReflections)> {
    let e = set.entries();
    let pass = Pass {
        e,
        i0,
        d0: e[i0].d,
        tol: set.tol,
    };

    // step 1: candidates pairing with d_x, those with an unshared partner
    // first
    let mut found: Vec<(bool, usize)> = (ix + 1..e.len())
        .filter_map(|i| pass.partner(i, ix, &[]).map(|h| (h.shared, i)))
        .collect();
    if found.len() < 4 {
        return Vec::new();
    }
    found.sort();
    found.truncate(MAX_CANDIDATES);
    let found: Vec<usize> = found.into_iter().map(|(_, i)| i).collect();

    // step 2: y/z splits with all four cross partners present
    let splits = best_splits(&pass, ix, &found);

    // step 3 and 4: second x reflection, then all twelve cross partners
    let mut out = Vec::new();
    for split in &splits {
        let [p, q] = split.pairs;
        let dy = [p[0], p[1], q[0], q[1]]
            .into_iter()
            .min_by(|&a, &b| e[a].d.total_cmp(&e[b].d))
            .expect("four members");
        let (y, z) = if p.contains(&dy) { (p, q) } else { (q, p) };
        let mut labs: Vec<Labelling> = (ix + 1..e.len())
            .map(|x_far| label(&pass, [ix, x_far], y, z))
            .filter(|lab| 12 - lab.cost.missing >= MIN_MULTI)
            .collect();
        labs.sort_by(|a, b| {
            a.cost
                .partial_cmp(&b.cost)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for lab in labs.iter().take(X_FAR_KEPT) {
            if let Some(cls) = assemble(set, i0, lab) {
                out.push((lab.cost, cls));
            }
        }
    }
    out
}

fn label(pass: &Pass<'_>, x: [usize; 2], y: [usize; 2], z: [usize; 2]) -> Labelling {
    let mut taken: Vec<usize> = Vec::with_capacity(18);
    let mut cost = Cost::ZERO;
    for k in [x[0], x[1], y[0], y[1], z[0], z[1]] {
        if taken.contains(&k) {
            cost.shared += 1;
        } else {
            taken.push(k);
        }
    }
    let mut multi = Vec::with_capacity(12);
    for (ga, gb) in [(x, y), (x, z), (y, z)] {
        for a in ga {
            for b in gb {
                let hit = pass.partner(a, b, &taken);
                cost.add(hit, pass.tol);
                if let Some(h) = hit {
                    taken.push(h.idx);
                    multi.push(h.idx);
                }
            }
        }
    }
    Labelling {
        x,
        y,
        z,
        multi,
        cost,
    }
}

/// Step 5: sets from a labelling. Single-direction candidates come after
/// every axis's far wall.
fn assemble(set: &PathLengthSet, i0: usize, lab: &Labelling) -> Option<ClassifiedReflections> {
    let e = set.entries();
    let first: Vec<usize> = [lab.x, lab.y, lab.z].concat();
    let sorted_pair = |mut v: [usize; 2]| {
        v.sort_by(|&a, &b| e[a].d.total_cmp(&e[b].d));
        v.map(|k| e[k]).to_vec()
    };
    let sx1 = sorted_pair(lab.x);
    let sy1 = sorted_pair(lab.y);
    let sz1 = sorted_pair(lab.z);
    let earliest_single = [&sx1, &sy1, &sz1]
        .iter()
        .map(|s| s[1].d)
        .fold(f64::INFINITY, f64::min);

    let mut multi: Vec<usize> = lab
        .multi
        .iter()
        .copied()
        .filter(|k| !first.contains(k))
        .collect();
    multi.sort_unstable();
    multi.dedup();

    let mut s2_single = Vec::new();
    let mut leftovers: Vec<PathEntry> = e[..i0].to_vec();
    for k in i0 + 1..e.len() {
        if first.contains(&k) || multi.contains(&k) {
            continue;
        }
        if e[k].d > earliest_single {
            s2_single.push(e[k]);
        } else {
            leftovers.push(e[k]);
        }
    }
    if s2_single.len() < MIN_SINGLE {
        return None;
    }
    Some(ClassifiedReflections {
        d0: e[i0],
        sx1,
        sy1,
        sz1,
        s2_single,
        s2_multi: multi.into_iter().map(|k| e[k]).collect(),
        leftovers,
        c: set.c,
    })
}

/// Two same-axis pairs from the candidates whose cross partners are present,
/// at most one missing; the lowest-cost few are kept. When first-order
/// reflections of two wall pairs merge, one entry may sit in both pairs.
fn best_splits(pass: &Pass<'_>, ix: usize, found: &[usize]) -> Vec<Split> {
    let n = found.len();
    let mut best: Vec<Split> = Vec::new();
    let mut consider = |p: [usize; 2], q: [usize; 2]| {
        if let Some(split) = score_split(pass, ix, p, q) {
            if best.len() == SPLITS_KEPT && best.last().is_some_and(|w| !(split.cost < w.cost)) {
                return;
            }
            let at = best.partition_point(|s| !(split.cost < s.cost));
            best.insert(at, split);
            best.truncate(SPLITS_KEPT);
        }
    };
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let m = [found[a], found[b], found[c]];
                for d in c + 1..n {
                    let m4 = [m[0], m[1], m[2], found[d]];
                    for [p, q] in [[[0, 1], [2, 3]], [[0, 2], [1, 3]], [[0, 3], [1, 2]]] {
                        consider([m4[p[0]], m4[p[1]]], [m4[q[0]], m4[q[1]]]);
                    }
                }
                // one member doubled
                for k in 0..3 {
                    let [u, v] = [m[(k + 1) % 3], m[(k + 2) % 3]];
                    consider([m[k], u], [m[k], v]);
                }
            }
        }
    }
    // d_x merged with a y or z reflection
    if pass.partner(ix, ix, &[]).is_some() {
        for a in 0..n {
            for b in 0..n {
                for c in b + 1..n {
                    if a != b && a != c {
                        consider([ix, found[a]], [found[b], found[c]]);
                    }
                }
            }
        }
    }
    best
}

fn score_split(pass: &Pass<'_>, ix: usize, p: [usize; 2], q: [usize; 2]) -> Option<Split> {
    let members = [p[0], p[1], q[0], q[1]];
    let mut taken: Vec<usize> = vec![ix];
    let mut cost = Cost::ZERO;
    for &k in &members {
        if taken.contains(&k) {
            cost.shared += 1;
        } else {
            taken.push(k);
        }
    }
    for u in p {
        for v in q {
            let hit = pass.partner(u, v, &taken);
            cost.add(hit, pass.tol);
            if let Some(h) = hit {
                taken.push(h.idx);
            }
            if cost.missing > 1 {
                return None;
            }
        }
    }
    for k in members.into_iter().filter(|&k| k != ix) {
        cost.add(pass.partner(ix, k, &taken), pass.tol);
    }
    Some(Split {
        pairs: [p, q],
        cost,
    })
}

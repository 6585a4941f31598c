use std::cmp::Ordering;

use crate::domain::{ActivityLabel, Point, NUM_LABELS};
use crate::scalar::Scalar;

use super::LabelVector;

/// Activation turning a normalized distance into a confidence in (0, 1].
#[inline]
pub fn phi<F: Scalar>(d: F) -> F {
    F::one() / (F::one() + d * d)
}

/// Largest pairwise distance in a point set (0 for fewer than two points).
///
/// The farthest pair lies on the convex hull, so only hull vertices are
/// compared.
pub fn diameter<F: Scalar>(points: &[Point<F>]) -> F {
    if points.len() < 2 {
        return F::zero();
    }
    let hull = convex_hull(points);
    let mut best = F::zero();
    for (i, a) in hull.iter().enumerate() {
        for b in &hull[i + 1..] {
            let d = a.dist2(b);
            if d > best {
                best = d;
            }
        }
    }
    best.sqrt()
}

/// Andrew's monotone chain; collinear points are dropped.
fn convex_hull<F: Scalar>(points: &[Point<F>]) -> Vec<Point<F>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap_or(Ordering::Equal)
            .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
    });
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &Point<F>, a: &Point<F>, b: &Point<F>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Point<F>> = Vec::with_capacity(2 * pts.len());
    for p in pts.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= F::zero() {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= F::zero() {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Per-label confidence `phi(d_l)`, where `d_l` is the distance from the
/// query to the nearest candidate of label `l`, divided by the candidate
/// set's diameter and clipped to `[0, 1]`. Labels without a candidate get 0.
pub fn neighbor_confidence<F: Scalar>(
    query: Point<F>,
    candidates: &[(Point<F>, ActivityLabel)],
) -> LabelVector<F> {
    let mut out = [F::zero(); NUM_LABELS];
    if candidates.is_empty() {
        return out;
    }
    let pts: Vec<Point<F>> = candidates.iter().map(|(p, _)| *p).collect();
    let scale = diameter(&pts);
    let mut nearest: [Option<F>; NUM_LABELS] = [None; NUM_LABELS];
    for (p, l) in candidates {
        let d = p.dist(&query);
        let slot = &mut nearest[l.index()];
        if slot.map_or(true, |cur| d < cur) {
            *slot = Some(d);
        }
    }
    for (o, n) in out.iter_mut().zip(nearest) {
        if let Some(d) = n {
            let norm = if scale > F::zero() {
                (d / scale).min(F::one())
            } else {
                F::zero()
            };
            *o = phi(norm);
        }
    }
    out
}

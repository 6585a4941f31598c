//! Brute-force recomputation of every feature statistic, straight from the
//! raw records with no tables or indexes.

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate, Weekday};
use tripsense::domain::{ActivityDay, ActivityLabel, Point, Timestamp, UserId};
use tripsense::features::CoreLocations;
use tripsense::quantize::Quantizer;
use tripsense::NUM_LABELS;

const DAY: i64 = 86_400;

#[derive(Clone, Debug)]
pub enum Cells {
    Grid { ox: f64, oy: f64, w: f64, h: f64 },
    Voronoi(Vec<(f64, f64)>),
    Disc(f64),
}

impl Cells {
    pub fn of(q: &Quantizer<f64>) -> Self {
        match q {
            Quantizer::Grid(g) => Cells::Grid {
                ox: g.origin.x,
                oy: g.origin.y,
                w: g.cell_width,
                h: g.cell_height,
            },
            Quantizer::Voronoi(v) => Cells::Voronoi(v.centroids.iter().map(|c| (c.x, c.y)).collect()),
            Quantizer::Circular(c) => Cells::Disc(c.radius),
        }
    }

    fn nearest(centroids: &[(f64, f64)], p: (f64, f64)) -> usize {
        let d = |c: &(f64, f64)| (c.0 - p.0) * (c.0 - p.0) + (c.1 - p.1) * (c.1 - p.1);
        let mut best = 0;
        for i in 1..centroids.len() {
            if d(&centroids[i]) < d(&centroids[best]) {
                best = i;
            }
        }
        best
    }

    /// Whether `p` falls in the cell of `query`.
    pub fn together(&self, p: (f64, f64), query: (f64, f64)) -> bool {
        match self {
            Cells::Grid { ox, oy, w, h } => {
                ((p.0 - ox) / w).floor() == ((query.0 - ox) / w).floor()
                    && ((p.1 - oy) / h).floor() == ((query.1 - oy) / h).floor()
            }
            Cells::Voronoi(c) => Self::nearest(c, p) == Self::nearest(c, query),
            Cells::Disc(r) => {
                let dx = p.0 - query.0;
                let dy = p.1 - query.1;
                dx * dx + dy * dy <= r * r
            }
        }
    }
}

fn is_weekend(day: i64) -> bool {
    let date = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap() + chrono::Duration::days(day);
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Nearest slot boundary index, exact halves going down.
fn boundary(t: Timestamp, w: i64) -> i64 {
    let lo = t.div_euclid(w);
    let below = t - lo * w;
    let above = w - below;
    if above < below {
        lo + 1
    } else {
        lo
    }
}

/// Temporal bins (weekend flag, slot of day) of an interval.
pub fn bins(t0: Timestamp, t1: Timestamp, slot_minutes: i64) -> BTreeSet<(bool, i64)> {
    let w = slot_minutes * 60;
    (boundary(t0, w)..=boundary(t1, w))
        .map(|a| {
            let t = a * w;
            (is_weekend(t.div_euclid(DAY)), t.rem_euclid(DAY) / w)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct Rec {
    pub user: UserId,
    pub p: (f64, f64),
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub label: ActivityLabel,
}

pub struct Oracle {
    pub cells: Cells,
    pub slot_minutes: i64,
    /// Labelled training stops ordered by user then start.
    pub records: Vec<Rec>,
    pub days: Vec<ActivityDay<f64>>,
    pub pois: Vec<((f64, f64), ActivityLabel)>,
}

pub struct Query<'a> {
    pub p: (f64, f64),
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub previous: Option<(ActivityLabel, Timestamp)>,
    pub core: &'a CoreLocations<f64>,
    /// Training record the query is, for leave-one-out rows.
    pub own: Option<usize>,
}

fn normalized(counts: &[f64; NUM_LABELS]) -> [f64; NUM_LABELS] {
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return [0.0; NUM_LABELS];
    }
    counts.map(|c| c / total)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)).sqrt()
}

fn confidence(query: (f64, f64), cands: &[((f64, f64), ActivityLabel)]) -> [f64; NUM_LABELS] {
    let mut out = [0.0; NUM_LABELS];
    let mut diam: f64 = 0.0;
    for a in cands {
        for b in cands {
            diam = diam.max(dist(a.0, b.0));
        }
    }
    for l in ActivityLabel::ALL {
        let nearest = cands
            .iter()
            .filter(|c| c.1 == l)
            .map(|c| dist(c.0, query))
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            let d = if diam > 0.0 { (nearest / diam).min(1.0) } else { 0.0 };
            out[l.index()] = 1.0 / (1.0 + d * d);
        }
    }
    out
}

impl Oracle {
    pub fn new(
        quantizer: &Quantizer<f64>,
        slot_minutes: i64,
        days: &[ActivityDay<f64>],
        pois: &[tripsense::domain::PoiRecord<f64>],
    ) -> Self {
        let mut records: Vec<Rec> = days
            .iter()
            .flat_map(|d| &d.stops)
            .filter_map(|s| {
                s.label.map(|label| Rec {
                    user: s.user_id.clone(),
                    p: (s.x, s.y),
                    t0: s.t_start,
                    t1: s.t_end,
                    label,
                })
            })
            .collect();
        records.sort_by(|a, b| (&a.user, a.t0).cmp(&(&b.user, b.t0)));
        Oracle {
            cells: Cells::of(quantizer),
            slot_minutes,
            records,
            days: days.to_vec(),
            pois: pois
                .iter()
                .filter_map(|p| p.mapped_label.map(|l| ((p.position.x, p.position.y), l)))
                .collect(),
        }
    }

    fn is_own(&self, own: Option<usize>, i: usize) -> bool {
        own == Some(i)
    }

    pub fn temporal(&self, q: &Query) -> [f64; NUM_LABELS] {
        let qb = bins(q.t0, q.t1, self.slot_minutes);
        let mut c = [0.0; NUM_LABELS];
        for (i, r) in self.records.iter().enumerate() {
            if self.is_own(q.own, i) {
                continue;
            }
            let shared = bins(r.t0, r.t1, self.slot_minutes).intersection(&qb).count();
            c[r.label.index()] += shared as f64;
        }
        normalized(&c)
    }

    fn members(&self, q: &Query) -> Vec<((f64, f64), ActivityLabel)> {
        self.records
            .iter()
            .enumerate()
            .filter(|(i, r)| !self.is_own(q.own, *i) && self.cells.together(r.p, q.p))
            .map(|(_, r)| (r.p, r.label))
            .collect()
    }

    fn poi_members(&self, q: &Query) -> Vec<((f64, f64), ActivityLabel)> {
        self.pois.iter().filter(|(p, _)| self.cells.together(*p, q.p)).copied().collect()
    }

    pub fn spatial(&self, q: &Query) -> [f64; NUM_LABELS] {
        let mut c = [0.0; NUM_LABELS];
        for (_, l) in self.members(q) {
            c[l.index()] += 1.0;
        }
        normalized(&c)
    }

    pub fn contextual(&self, q: &Query) -> [f64; NUM_LABELS] {
        let mut c = [0.0; NUM_LABELS];
        for (_, l) in self.poi_members(q) {
            c[l.index()] += 1.0;
        }
        normalized(&c)
    }

    pub fn historical_confidence(&self, q: &Query) -> [f64; NUM_LABELS] {
        confidence(q.p, &self.members(q))
    }

    pub fn contextual_confidence(&self, q: &Query) -> [f64; NUM_LABELS] {
        confidence(q.p, &self.poi_members(q))
    }

    /// Consecutive labelled pair count within user-days, skipping the pair
    /// that ends at the excluded record.
    pub fn pair_count(&self, weekend: bool, from: ActivityLabel, to: ActivityLabel, skip: Option<&Rec>) -> u64 {
        let mut n = 0;
        for d in &self.days {
            if is_weekend(d.day) != weekend {
                continue;
            }
            for w in d.stops.windows(2) {
                let (Some(a), Some(b)) = (w[0].label, w[1].label) else { continue };
                if let Some(r) = skip {
                    if w[1].user_id == r.user && w[1].t_start == r.t0 {
                        continue;
                    }
                }
                if a == from && b == to {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn transition(&self, q: &Query) -> [f64; NUM_LABELS] {
        let uniform = [1.0 / NUM_LABELS as f64; NUM_LABELS];
        let Some((from, t_end)) = q.previous else { return uniform };
        if q.t0 - t_end > DAY {
            return uniform;
        }
        let weekend = is_weekend(q.t0.div_euclid(DAY));
        let skip = q.own.map(|i| &self.records[i]);
        let mut c = [0.0; NUM_LABELS];
        for to in ActivityLabel::ALL {
            c[to.index()] = self.pair_count(weekend, from, to, skip) as f64;
        }
        if c.iter().all(|&v| v == 0.0) {
            return uniform;
        }
        normalized(&c)
    }

    pub fn features(&self, q: &Query, missing_work_km: f64) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(self.temporal(q));
        v.extend(self.spatial(q));
        v.extend(self.contextual(q));
        v.extend(self.transition(q));
        v.extend(self.historical_confidence(q));
        v.extend(self.contextual_confidence(q));
        let home = q.core.home;
        v.push(dist(q.p, (home.x, home.y)) / 1000.0);
        v.push(q.core.work.map_or(missing_work_km, |w: Point<f64>| dist(q.p, (w.x, w.y)) / 1000.0));
        v.push((q.t1 - q.t0) as f64 / 3600.0);
        v
    }

    /// Leave-one-out query of training record `i`; its predecessor is the
    /// user's preceding record.
    pub fn training_query<'a>(&self, i: usize, core: &'a CoreLocations<f64>) -> Query<'a> {
        let r = &self.records[i];
        let previous = (i > 0 && self.records[i - 1].user == r.user).then(|| {
            let p = &self.records[i - 1];
            (p.label, p.t1)
        });
        Query {
            p: r.p,
            t0: r.t0,
            t1: r.t1,
            previous,
            core,
            own: Some(i),
        }
    }
}

//! Spatial cells (rectangular grid, Voronoi, instance-centred circles) and
//! time-slot alignment.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    ActivityPoint, CellId, Point, SlotWidth, StopPoint, TimeSlot, Timestamp, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed rectangular cells `[x0 + i*w, x0 + (i+1)*w) x [y0 + j*h, y0 + (j+1)*h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridQuantizer<F> {
    pub origin: Point<F>,
    pub cell_width: F,
    pub cell_height: F,
}

impl<F: Scalar> GridQuantizer<F> {
    pub fn new(origin: Point<F>, cell_width: F, cell_height: F) -> Result<Self> {
        if !(cell_width > F::zero() && cell_height > F::zero()) {
            return Err(Error::param("grid cell sides must be positive"));
        }
        Ok(GridQuantizer {
            origin,
            cell_width,
            cell_height,
        })
    }

    pub fn cell(&self, p: Point<F>) -> CellId {
        let i = ((p.x - self.origin.x) / self.cell_width).floor();
        let j = ((p.y - self.origin.y) / self.cell_height).floor();
        CellId::Grid(
            i.to_i64().unwrap_or(i64::MIN),
            j.to_i64().unwrap_or(i64::MIN),
        )
    }
}

/// Nearest-centroid cells around k-means centroids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoronoiQuantizer<F> {
    pub centroids: Vec<Point<F>>,
}

impl<F: Scalar> VoronoiQuantizer<F> {
    pub fn from_centroids(centroids: Vec<Point<F>>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::param("Voronoi quantizer needs at least one centroid"));
        }
        Ok(VoronoiQuantizer { centroids })
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, p: Point<F>) -> usize {
        nearest_index(&self.centroids, p)
    }

    pub fn cell(&self, p: Point<F>) -> CellId {
        CellId::Voronoi(self.nearest(p) as u32)
    }
}

fn nearest_index<F: Scalar>(centres: &[Point<F>], p: Point<F>) -> usize {
    let mut best = 0;
    let mut best_d = F::infinity();
    for (i, c) in centres.iter().enumerate() {
        let d = c.dist2(&p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Lloyd's k-means with k-means++ seeding; the centroids define the
/// Voronoi cells.
pub fn fit_voronoi<F: Scalar>(points: &[Point<F>], k: usize, seed: u64) -> Result<VoronoiQuantizer<F>> {
    const MAX_ITER: usize = 300;

    if points.is_empty() {
        return Err(Error::param("cannot fit Voronoi cells on an empty point set"));
    }
    if k == 0 {
        return Err(Error::param("cluster count must be at least 1"));
    }
    let mut seen = HashSet::new();
    let distinct: Vec<Point<F>> = points
        .iter()
        .filter(|p| seen.insert((p.x.as_f64().to_bits(), p.y.as_f64().to_bits())))
        .copied()
        .collect();
    if k > distinct.len() {
        return Err(Error::param(format!(
            "cluster count {k} exceeds the {} distinct points",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(distinct[rng.gen_range(0..distinct.len())]);
    let mut d2: Vec<f64> = distinct
        .iter()
        .map(|p| p.dist2(&centroids[0]).as_f64())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    chosen = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.expect("positive total weight")
        } else {
            // unreachable while k <= distinct points, kept for float edge cases
            d2.iter().position(|&w| w > 0.0).unwrap_or(0)
        };
        let c = distinct[next];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(&distinct) {
            let d = p.dist2(&c).as_f64();
            if d < *w {
                *w = d;
            }
        }
    }

    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITER {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let n = nearest_index(&centroids, *p);
            if n != *a {
                *a = n;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (&a, p) in assignment.iter().zip(points) {
            let s = &mut sums[a];
            s.0 += p.x.as_f64();
            s.1 += p.y.as_f64();
            s.2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s.2 > 0 {
                let n = s.2 as f64;
                *c = Point::new(F::lit(s.0 / n), F::lit(s.1 / n));
            }
        }
    }
    VoronoiQuantizer::from_centroids(centroids)
}

/// Instance-centred cells: the cell of a query is the closed disc of
/// `radius` around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularQuantizer<F> {
    pub radius: F,
}

impl<F: Scalar> CircularQuantizer<F> {
    pub fn new(radius: F) -> Result<Self> {
        if !(radius > F::zero()) {
            return Err(Error::param("circle radius must be positive"));
        }
        Ok(CircularQuantizer { radius })
    }

    /// Indices of `population` within `radius` of `centre`, ascending.
    pub fn neighborhood(&self, centre: Point<F>, population: &[Point<F>]) -> Vec<usize> {
        let r2 = self.radius * self.radius;
        population
            .iter()
            .enumerate()
            .filter(|(_, p)| p.dist2(&centre) <= r2)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantizer<F> {
    Grid(GridQuantizer<F>),
    Voronoi(VoronoiQuantizer<F>),
    Circular(CircularQuantizer<F>),
}

/// Quantizer parameters before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuantizerSpec {
    Grid { cell_width: f64, cell_height: f64 },
    Voronoi { clusters: usize },
    Circular { radius: f64 },
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        QuantizerSpec::Grid {
            cell_width: 800.0,
            cell_height: 800.0,
        }
    }
}

impl QuantizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            QuantizerSpec::Grid {
                cell_width,
                cell_height,
            } if !(cell_width > 0.0 && cell_height > 0.0) => {
                Err(Error::param("grid cell sides must be positive"))
            }
            QuantizerSpec::Voronoi { clusters: 0 } => Err(Error::param("cluster count must be positive")),
            QuantizerSpec::Circular { radius } if !(radius > 0.0) => {
                Err(Error::param("circle radius must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Builds the quantizer; Voronoi centroids are fitted on `points`.
    ///
    /// When fewer distinct points than requested clusters exist, the cluster
    /// count is reduced to the number of distinct points.
    pub fn fit<F: Scalar>(&self, points: &[Point<F>], seed: u64) -> Result<Quantizer<F>> {
        self.validate()?;
        Ok(match *self {
            QuantizerSpec::Grid {
                cell_width,
                cell_height,
            } => Quantizer::Grid(GridQuantizer::new(
                Point::new(F::zero(), F::zero()),
                F::lit(cell_width),
                F::lit(cell_height),
            )?),
            QuantizerSpec::Voronoi { clusters } => {
                let distinct = points
                    .iter()
                    .map(|p| (p.x.as_f64().to_bits(), p.y.as_f64().to_bits()))
                    .collect::<HashSet<_>>()
                    .len();
                Quantizer::Voronoi(fit_voronoi(points, clusters.min(distinct.max(1)), seed)?)
            }
            QuantizerSpec::Circular { radius } => {
                Quantizer::Circular(CircularQuantizer::new(F::lit(radius))?)
            }
        })
    }
}

impl<F: Scalar> Quantizer<F> {
    /// Cell of a point under a fixed tessellation; `None` for circular cells,
    /// which exist only relative to a query instance.
    pub fn fixed_cell(&self, p: Point<F>) -> Option<CellId> {
        match self {
            Quantizer::Grid(g) => Some(g.cell(p)),
            Quantizer::Voronoi(v) => Some(v.cell(p)),
            Quantizer::Circular(_) => None,
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self, Quantizer::Circular(_))
    }

    /// Quantizes a stop; `instance` is the stop's index in its population and
    /// names the cell under the circular quantizer.
    pub fn quantize(
        &self,
        stop: &StopPoint<F>,
        instance: u32,
        width: SlotWidth,
    ) -> Result<ActivityPoint<F>> {
        let cell_id = self
            .fixed_cell(stop.position())
            .unwrap_or(CellId::Instance(instance));
        Ok(ActivityPoint {
            origin: stop.clone(),
            cell_id,
            slots: time_slots(stop.t_start, stop.t_end, width)?,
            label: stop.label,
        })
    }
}

/// Membership lookup of a point set under a quantizer: all members sharing
/// the query's fixed cell, or all members within the circle radius.
#[derive(Clone, Debug)]
pub struct CellIndex<F> {
    points: Vec<Point<F>>,
    lookup: CellLookup<F>,
}

#[derive(Clone, Debug)]
enum CellLookup<F> {
    Fixed {
        quantizer: Quantizer<F>,
        cells: BTreeMap<CellId, Vec<u32>>,
    },
    Disc {
        radius: F,
        buckets: HashMap<(i64, i64), Vec<u32>>,
    },
}

impl<F: Scalar> CellIndex<F> {
    pub fn new(quantizer: &Quantizer<F>, points: Vec<Point<F>>) -> Self {
        let lookup = match quantizer {
            Quantizer::Circular(c) => {
                let mut buckets: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
                for (i, p) in points.iter().enumerate() {
                    buckets.entry(bucket_of(*p, c.radius)).or_default().push(i as u32);
                }
                CellLookup::Disc {
                    radius: c.radius,
                    buckets,
                }
            }
            q => {
                let mut cells: BTreeMap<CellId, Vec<u32>> = BTreeMap::new();
                for (i, p) in points.iter().enumerate() {
                    let c = q.fixed_cell(*p).expect("fixed quantizer");
                    cells.entry(c).or_default().push(i as u32);
                }
                CellLookup::Fixed {
                    quantizer: q.clone(),
                    cells,
                }
            }
        };
        CellIndex { points, lookup }
    }

    pub fn points(&self) -> &[Point<F>] {
        &self.points
    }

    /// Members of the query's cell in ascending index order, minus `exclude`.
    pub fn members(&self, query: Point<F>, exclude: Option<u32>) -> Vec<u32> {
        let mut out = match &self.lookup {
            CellLookup::Fixed { quantizer, cells } => quantizer
                .fixed_cell(query)
                .and_then(|c| cells.get(&c))
                .cloned()
                .unwrap_or_default(),
            CellLookup::Disc { radius, buckets } => {
                let r2 = *radius * *radius;
                let (bx, by) = bucket_of(query, *radius);
                let mut v = Vec::new();
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if let Some(b) = buckets.get(&(bx + dx, by + dy)) {
                            v.extend(
                                b.iter()
                                    .copied()
                                    .filter(|&i| self.points[i as usize].dist2(&query) <= r2),
                            );
                        }
                    }
                }
                v.sort_unstable();
                v
            }
        };
        if let Some(e) = exclude {
            out.retain(|&i| i != e);
        }
        out
    }
}

fn bucket_of<F: Scalar>(p: Point<F>, size: F) -> (i64, i64) {
    (
        (p.x / size).floor().to_i64().unwrap_or(0),
        (p.y / size).floor().to_i64().unwrap_or(0),
    )
}

/// Rounds a timestamp to the nearest slot boundary (ties down) and returns
/// the boundary as an absolute slot count.
fn nearest_boundary(t: Timestamp, width: i64) -> i64 {
    let q = t.div_euclid(width);
    let r = t - q * width;
    if 2 * r > width {
        q + 1
    } else {
        q
    }
}

/// Slot set of an interval: every slot from the boundary nearest the start
/// to the boundary nearest the end, inclusive. 8:53-9:08 with 10-minute
/// slots gives {8:50, 9:00, 9:10}.
pub fn time_slots(t_start: Timestamp, t_end: Timestamp, width: SlotWidth) -> Result<Vec<TimeSlot>> {
    if t_start >= t_end {
        return Err(Error::param(format!(
            "interval start {t_start} is not before end {t_end}"
        )));
    }
    let w = width.seconds();
    let first = nearest_boundary(t_start, w);
    let last = nearest_boundary(t_end, w);
    Ok((first..=last)
        .map(|a| {
            let t = a * w;
            TimeSlot {
                day_index: t.div_euclid(SECONDS_PER_DAY),
                slot_index: (t.rem_euclid(SECONDS_PER_DAY) / w) as u32,
            }
        })
        .collect())
}

//! Empirical-probability features of a stop and the fixed-layout feature
//! vector fed to the tree ensembles.
//!
//! Layout (L = 16 labels, 99 values in total):
//!
//! | offset | block |
//! |---|---|
//! | 0   | temporal activity frequency |
//! | 16  | spatial activity frequency |
//! | 32  | contextual (POI) activity frequency |
//! | 48  | transition probability from the previous activity |
//! | 64  | historical neighbor confidence |
//! | 80  | contextual neighbor confidence |
//! | 96  | distance to home, distance to work (km) |
//! | 98  | duration (hours) |
//!
//! Statistics queried on behalf of a training stop leave that stop out, so
//! training rows see the same kind of evidence a new stop would.

mod frequency;
mod neighbor;
mod stats;
mod transition;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, DayType, Point, StopPoint, UserId, NUM_LABELS};
use crate::error::{Error, Result};
use crate::quantize::time_slots;
use crate::scalar::Scalar;

pub use frequency::{normalize, slot_keys, temporal_counts, FrequencyTable, LabelCounts, SlotKey};
pub use neighbor::{diameter, neighbor_confidence, phi};
pub use stats::{HistoryRecord, PoiIndex, PopulationStats};
pub use transition::{transition_feature, uniform, PreviousActivity, TransitionMatrices, PREVIOUS_ACTIVITY_WINDOW};

pub type LabelVector<F> = [F; NUM_LABELS];

/// Length of a feature vector: six label blocks, two core distances and the duration.
pub const FEATURE_LEN: usize = 6 * NUM_LABELS + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureBlock {
    Temporal,
    Spatial,
    Contextual,
    Transition,
    HistoricalNeighbor,
    ContextualNeighbor,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 6] = [
        FeatureBlock::Temporal,
        FeatureBlock::Spatial,
        FeatureBlock::Contextual,
        FeatureBlock::Transition,
        FeatureBlock::HistoricalNeighbor,
        FeatureBlock::ContextualNeighbor,
    ];

    pub fn range(self) -> std::ops::Range<usize> {
        let start = self as usize * NUM_LABELS;
        start..start + NUM_LABELS
    }
}

pub const HOME_DISTANCE: usize = 6 * NUM_LABELS;
pub const WORK_DISTANCE: usize = HOME_DISTANCE + 1;
pub const DURATION: usize = HOME_DISTANCE + 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector<F>(Vec<F>);

impl<F: Scalar> FeatureVector<F> {
    pub fn from_vec(v: Vec<F>) -> Result<Self> {
        if v.len() != FEATURE_LEN {
            return Err(Error::Invariant(format!(
                "feature vector has {} entries, expected {FEATURE_LEN}",
                v.len()
            )));
        }
        Ok(FeatureVector(v))
    }

    pub fn as_slice(&self) -> &[F] {
        &self.0
    }

    pub fn block(&self, b: FeatureBlock) -> &[F] {
        &self.0[b.range()]
    }

    pub fn home_km(&self) -> F {
        self.0[HOME_DISTANCE]
    }

    pub fn work_km(&self) -> F {
        self.0[WORK_DISTANCE]
    }

    pub fn duration_hours(&self) -> F {
        self.0[DURATION]
    }

    pub fn into_vec(self) -> Vec<F> {
        self.0
    }
}

/// Home and work anchors of one user for the core-distance block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreLocations<F> {
    pub home: Point<F>,
    pub work: Option<Point<F>>,
}

/// Euclidean distances to home and work in km; a missing work location
/// yields `missing_km`.
pub fn core_distances<F: Scalar>(p: Point<F>, core: &CoreLocations<F>, missing_km: F) -> [F; 2] {
    let km = F::lit(1000.0);
    [
        p.dist(&core.home) / km,
        core.work.map_or(missing_km, |w| p.dist(&w) / km),
    ]
}

/// A stop to featurize.
#[derive(Clone, Copy, Debug)]
pub struct FeatureQuery<'a, F> {
    pub stop: &'a StopPoint<F>,
    pub previous: Option<PreviousActivity>,
    pub core: &'a CoreLocations<F>,
    /// Index of the stop's own record when it is part of the statistics.
    pub own_record: Option<u32>,
}

/// Statistics of one population plus the shared POI index.
#[derive(Clone, Copy, Debug)]
pub struct FeatureContext<'a, F: Scalar> {
    pub stats: &'a PopulationStats<F>,
    pub pois: &'a PoiIndex<F>,
    /// Stand-in work distance for users without a work location, in km.
    pub missing_work_km: F,
}

impl<'a, F: Scalar> FeatureContext<'a, F> {
    pub fn new(stats: &'a PopulationStats<F>, pois: &'a PoiIndex<F>, missing_work_km: F) -> Result<Self> {
        stats::check_same_quantizer(stats, pois)?;
        Ok(FeatureContext {
            stats,
            pois,
            missing_work_km,
        })
    }

    pub fn assemble(&self, q: &FeatureQuery<'_, F>) -> Result<FeatureVector<F>> {
        let stop = q.stop;
        let pos = stop.position();
        if !pos.is_finite() {
            return Err(Error::param("stop coordinates must be finite"));
        }
        let slots = time_slots(stop.t_start, stop.t_end, self.stats.slot_width())?;
        let keys = slot_keys(&slots);
        let day_type = DayType::of_day(stop.day());

        let excluded_pair = q.own_record.and_then(|i| {
            let r = &self.stats.records()[i as usize];
            match (r.previous_in_day, q.previous) {
                (Some(a), Some(p)) if a == p.label => Some(r.label),
                _ => None,
            }
        });

        let mut v = Vec::with_capacity(FEATURE_LEN);
        v.extend(self.stats.temporal_frequency(&keys, q.own_record));
        v.extend(self.stats.spatial_frequency(pos, q.own_record));
        v.extend(self.pois.contextual_frequency(pos));
        v.extend(transition_feature::<F>(
            self.stats.transitions(),
            q.previous,
            stop.t_start,
            day_type,
            excluded_pair,
        ));
        v.extend(self.stats.historical_confidence(pos, q.own_record));
        v.extend(self.pois.contextual_confidence(pos));
        v.extend(core_distances(pos, q.core, self.missing_work_km));
        v.push(stop.duration_hours());
        FeatureVector::from_vec(v)
    }

    /// Leave-one-out feature rows for every record of the population.
    ///
    /// The previous activity of a record is the user's preceding record.
    pub fn training_samples(
        &self,
        cores: &BTreeMap<UserId, CoreLocations<F>>,
    ) -> Result<(Vec<FeatureVector<F>>, Vec<ActivityLabel>)> {
        let records = self.stats.records();
        let rows: Result<Vec<FeatureVector<F>>> = (0..records.len())
            .into_par_iter()
            .map(|i| {
                let r = &records[i];
                let core = cores.get(&r.user_id).ok_or_else(|| {
                    Error::InsufficientData(format!("no profile for user {}", r.user_id))
                })?;
                let previous = (i > 0 && records[i - 1].user_id == r.user_id).then(|| PreviousActivity {
                    label: records[i - 1].label,
                    t_end: records[i - 1].t_end,
                });
                let stop = StopPoint {
                    user_id: r.user_id.clone(),
                    x: r.position.x,
                    y: r.position.y,
                    lon: f64::NAN,
                    lat: f64::NAN,
                    t_start: r.t_start,
                    t_end: r.t_end,
                    label: Some(r.label),
                };
                self.assemble(&FeatureQuery {
                    stop: &stop,
                    previous,
                    core,
                    own_record: Some(i as u32),
                })
            })
            .collect();
        Ok((rows?, records.iter().map(|r| r.label).collect()))
    }
}

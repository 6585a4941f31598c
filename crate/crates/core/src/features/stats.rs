use serde::{Deserialize, Serialize};

use crate::domain::{ActivityDay, ActivityLabel, CellId, Point, PoiRecord, SlotWidth, Timestamp, UserId, NUM_LABELS};
use crate::error::{Error, Result};
use crate::quantize::{time_slots, CellIndex, Quantizer};
use crate::scalar::Scalar;

use super::frequency::{normalize, slot_keys, temporal_counts, FrequencyTable, LabelCounts, SlotKey};
use super::neighbor::neighbor_confidence;
use super::transition::TransitionMatrices;
use super::LabelVector;

/// One labelled training stop held by a population.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord<F> {
    pub user_id: UserId,
    pub position: Point<F>,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub label: ActivityLabel,
    /// Label of the preceding stop in the same user-day, if any.
    pub previous_in_day: Option<ActivityLabel>,
}

/// Every empirical statistic of one user population: spatial and temporal
/// label frequencies, historical points for neighbor confidence, and the
/// transition matrices.
///
/// Records are ordered by user, then start time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(
    from = "StatsRepr<F>",
    into = "StatsRepr<F>",
    bound(serialize = "F: Scalar", deserialize = "F: Scalar")
)]
pub struct PopulationStats<F: Scalar> {
    quantizer: Quantizer<F>,
    slot_width: SlotWidth,
    records: Vec<HistoryRecord<F>>,
    spatial: FrequencyTable<CellId>,
    temporal: FrequencyTable<SlotKey>,
    transitions: TransitionMatrices,
    keys: Vec<Vec<SlotKey>>,
    index: CellIndex<F>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
struct StatsRepr<F: Scalar> {
    quantizer: Quantizer<F>,
    slot_width: SlotWidth,
    records: Vec<HistoryRecord<F>>,
    spatial: FrequencyTable<CellId>,
    temporal: FrequencyTable<SlotKey>,
    transitions: TransitionMatrices,
}

impl<F: Scalar> From<StatsRepr<F>> for PopulationStats<F> {
    fn from(r: StatsRepr<F>) -> Self {
        let keys = r
            .records
            .iter()
            .map(|rec| slot_keys(&time_slots(rec.t_start, rec.t_end, r.slot_width).unwrap_or_default()))
            .collect();
        let index = CellIndex::new(&r.quantizer, r.records.iter().map(|x| x.position).collect());
        PopulationStats {
            quantizer: r.quantizer,
            slot_width: r.slot_width,
            records: r.records,
            spatial: r.spatial,
            temporal: r.temporal,
            transitions: r.transitions,
            keys,
            index,
        }
    }
}

impl<F: Scalar> From<PopulationStats<F>> for StatsRepr<F> {
    fn from(s: PopulationStats<F>) -> Self {
        StatsRepr {
            quantizer: s.quantizer,
            slot_width: s.slot_width,
            records: s.records,
            spatial: s.spatial,
            temporal: s.temporal,
            transitions: s.transitions,
        }
    }
}

impl<F: Scalar> PopulationStats<F> {
    /// Builds statistics from the labelled stops of `days`. Unlabelled stops
    /// are ignored.
    pub fn build<'a>(
        days: impl IntoIterator<Item = &'a ActivityDay<F>>,
        quantizer: &Quantizer<F>,
        slot_width: SlotWidth,
    ) -> Result<Self> {
        let mut days: Vec<&ActivityDay<F>> = days.into_iter().collect();
        days.sort_by(|a, b| (&a.user_id, a.day).cmp(&(&b.user_id, b.day)));

        let transitions = TransitionMatrices::build(days.iter().copied());
        let mut records = Vec::new();
        for day in &days {
            let mut prev: Option<ActivityLabel> = None;
            for s in &day.stops {
                let Some(label) = s.label else {
                    prev = None;
                    continue;
                };
                records.push(HistoryRecord {
                    user_id: s.user_id.clone(),
                    position: s.position(),
                    t_start: s.t_start,
                    t_end: s.t_end,
                    label,
                    previous_in_day: prev,
                });
                prev = Some(label);
            }
        }
        records.sort_by(|a, b| (&a.user_id, a.t_start).cmp(&(&b.user_id, b.t_start)));

        let mut spatial = FrequencyTable::new();
        let mut temporal = FrequencyTable::new();
        for r in &records {
            if let Some(c) = quantizer.fixed_cell(r.position) {
                spatial.add(c, r.label, 1);
            }
            for k in slot_keys(&time_slots(r.t_start, r.t_end, slot_width)?) {
                temporal.add(k, r.label, 1);
            }
        }
        Ok(StatsRepr {
            quantizer: quantizer.clone(),
            slot_width,
            records,
            spatial,
            temporal,
            transitions,
        }
        .into())
    }

    pub fn records(&self) -> &[HistoryRecord<F>] {
        &self.records
    }

    pub fn record_keys(&self, i: usize) -> &[SlotKey] {
        &self.keys[i]
    }

    pub fn transitions(&self) -> &TransitionMatrices {
        &self.transitions
    }

    pub fn temporal_table(&self) -> &FrequencyTable<SlotKey> {
        &self.temporal
    }

    pub fn spatial_table(&self) -> &FrequencyTable<CellId> {
        &self.spatial
    }

    pub fn quantizer(&self) -> &Quantizer<F> {
        &self.quantizer
    }

    pub fn slot_width(&self) -> SlotWidth {
        self.slot_width
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Label frequency in the query's cell, leaving out record `exclude`.
    pub fn spatial_frequency(&self, query: Point<F>, exclude: Option<u32>) -> LabelVector<F> {
        let counts = match self.quantizer.fixed_cell(query) {
            Some(cell) => {
                let mut c = self.spatial.counts(&cell);
                if let Some(e) = exclude {
                    let r = &self.records[e as usize];
                    if self.quantizer.fixed_cell(r.position) == Some(cell) {
                        c[r.label.index()] -= 1;
                    }
                }
                c
            }
            None => self.count_labels(&self.index.members(query, exclude)),
        };
        normalize(&counts)
    }

    fn count_labels(&self, members: &[u32]) -> LabelCounts {
        let mut c = [0u64; NUM_LABELS];
        for &m in members {
            c[self.records[m as usize].label.index()] += 1;
        }
        c
    }

    /// Slot-overlap weighted label frequency for a query's temporal bins.
    pub fn temporal_frequency(&self, keys: &[SlotKey], exclude: Option<u32>) -> LabelVector<F> {
        let mut counts = temporal_counts(&self.temporal, keys);
        if let Some(e) = exclude {
            let own = &self.keys[e as usize];
            let overlap = keys.iter().filter(|k| own.binary_search(k).is_ok()).count() as u64;
            counts[self.records[e as usize].label.index()] -= overlap;
        }
        normalize(&counts)
    }

    pub fn historical_confidence(&self, query: Point<F>, exclude: Option<u32>) -> LabelVector<F> {
        let cands: Vec<(Point<F>, ActivityLabel)> = self
            .index
            .members(query, exclude)
            .into_iter()
            .map(|m| {
                let r = &self.records[m as usize];
                (r.position, r.label)
            })
            .collect();
        neighbor_confidence(query, &cands)
    }
}

/// POIs with a mapped activity label, indexed under the same quantizer as
/// the population statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(
    from = "PoiRepr<F>",
    into = "PoiRepr<F>",
    bound(serialize = "F: Scalar", deserialize = "F: Scalar")
)]
pub struct PoiIndex<F: Scalar> {
    quantizer: Quantizer<F>,
    pois: Vec<(Point<F>, ActivityLabel)>,
    contextual: FrequencyTable<CellId>,
    index: CellIndex<F>,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
struct PoiRepr<F: Scalar> {
    quantizer: Quantizer<F>,
    pois: Vec<(Point<F>, ActivityLabel)>,
}

impl<F: Scalar> From<PoiRepr<F>> for PoiIndex<F> {
    fn from(r: PoiRepr<F>) -> Self {
        let mut contextual = FrequencyTable::new();
        for (p, l) in &r.pois {
            if let Some(c) = r.quantizer.fixed_cell(*p) {
                contextual.add(c, *l, 1);
            }
        }
        let index = CellIndex::new(&r.quantizer, r.pois.iter().map(|(p, _)| *p).collect());
        PoiIndex {
            quantizer: r.quantizer,
            pois: r.pois,
            contextual,
            index,
        }
    }
}

impl<F: Scalar> From<PoiIndex<F>> for PoiRepr<F> {
    fn from(p: PoiIndex<F>) -> Self {
        PoiRepr {
            quantizer: p.quantizer,
            pois: p.pois,
        }
    }
}

impl<F: Scalar> PoiIndex<F> {
    /// Unmapped POIs are dropped.
    pub fn build(pois: &[PoiRecord<F>], quantizer: &Quantizer<F>) -> Self {
        PoiRepr {
            quantizer: quantizer.clone(),
            pois: pois
                .iter()
                .filter_map(|p| p.mapped_label.map(|l| (p.position, l)))
                .collect(),
        }
        .into()
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    pub fn points(&self) -> &[(Point<F>, ActivityLabel)] {
        &self.pois
    }

    pub fn contextual_table(&self) -> &FrequencyTable<CellId> {
        &self.contextual
    }

    pub fn contextual_frequency(&self, query: Point<F>) -> LabelVector<F> {
        match self.quantizer.fixed_cell(query) {
            Some(cell) => self.contextual.probabilities(&cell),
            None => {
                let mut c = [0u64; NUM_LABELS];
                for m in self.index.members(query, None) {
                    c[self.pois[m as usize].1.index()] += 1;
                }
                normalize(&c)
            }
        }
    }

    pub fn contextual_confidence(&self, query: Point<F>) -> LabelVector<F> {
        let cands: Vec<(Point<F>, ActivityLabel)> = self
            .index
            .members(query, None)
            .into_iter()
            .map(|m| self.pois[m as usize])
            .collect();
        neighbor_confidence(query, &cands)
    }
}

pub(crate) fn check_same_quantizer<F: Scalar>(stats: &PopulationStats<F>, pois: &PoiIndex<F>) -> Result<()> {
    if stats.quantizer != pois.quantizer {
        return Err(Error::Invariant(
            "POI index and population statistics use different quantizers".into(),
        ));
    }
    Ok(())
}

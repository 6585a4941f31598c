use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ActivityLabel, DayType, TimeSlot, NUM_LABELS};
use crate::scalar::Scalar;

use super::LabelVector;

pub type LabelCounts = [u64; NUM_LABELS];

/// Per-bin label counts. Probabilities are derived by row normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    from = "Vec<(K, LabelCounts)>",
    into = "Vec<(K, LabelCounts)>",
    bound(serialize = "K: Ord + Clone + Serialize", deserialize = "K: Ord + Deserialize<'de>")
)]
pub struct FrequencyTable<K: Ord> {
    bins: BTreeMap<K, LabelCounts>,
}

impl<K: Ord> Default for FrequencyTable<K> {
    fn default() -> Self {
        FrequencyTable {
            bins: BTreeMap::new(),
        }
    }
}

impl<K: Ord> From<Vec<(K, LabelCounts)>> for FrequencyTable<K> {
    fn from(v: Vec<(K, LabelCounts)>) -> Self {
        FrequencyTable {
            bins: v.into_iter().collect(),
        }
    }
}

impl<K: Ord> From<FrequencyTable<K>> for Vec<(K, LabelCounts)> {
    fn from(t: FrequencyTable<K>) -> Self {
        t.bins.into_iter().collect()
    }
}

impl<K: Ord> FrequencyTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, bin: K, label: ActivityLabel, n: u64) {
        self.bins.entry(bin).or_insert([0; NUM_LABELS])[label.index()] += n;
    }

    pub fn counts(&self, bin: &K) -> LabelCounts {
        self.bins.get(bin).copied().unwrap_or([0; NUM_LABELS])
    }

    pub fn probabilities<F: Scalar>(&self, bin: &K) -> LabelVector<F> {
        normalize(&self.counts(bin))
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &LabelCounts)> {
        self.bins.iter()
    }
}

/// Normalized label frequencies; the zero vector when nothing was counted.
pub fn normalize<F: Scalar>(counts: &LabelCounts) -> LabelVector<F> {
    let total: u64 = counts.iter().sum();
    let mut out = [F::zero(); NUM_LABELS];
    if total > 0 {
        let t = F::lit(total as f64);
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = F::lit(c as f64) / t;
        }
    }
    out
}

/// Time-of-day slot together with its day type: the temporal bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotKey {
    pub day_type: DayType,
    pub slot: u32,
}

/// Distinct temporal bins touched by a slot set, ascending.
pub fn slot_keys(slots: &[TimeSlot]) -> Vec<SlotKey> {
    let mut keys: Vec<SlotKey> = slots
        .iter()
        .map(|s| SlotKey {
            day_type: DayType::of_day(s.day_index),
            slot: s.slot_index,
        })
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Label counts where every training point adds one per temporal bin it
/// shares with the query; `keys` must be the query's distinct bins.
pub fn temporal_counts(table: &FrequencyTable<SlotKey>, keys: &[SlotKey]) -> LabelCounts {
    let mut acc = [0u64; NUM_LABELS];
    for k in keys {
        for (a, c) in acc.iter_mut().zip(table.counts(k)) {
            *a += c;
        }
    }
    acc
}

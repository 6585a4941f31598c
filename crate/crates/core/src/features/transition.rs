use serde::{Deserialize, Serialize};

use crate::domain::{ActivityDay, ActivityLabel, DayType, Timestamp, NUM_LABELS, SECONDS_PER_DAY};
use crate::scalar::Scalar;

use super::frequency::{normalize, LabelCounts};
use super::LabelVector;

/// First-order label transition counts, one table per day type.
///
/// Rows are normalized on read; a source label never observed yields the
/// uniform row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrices {
    weekday: Vec<LabelCounts>,
    weekend: Vec<LabelCounts>,
}

/// The most recent earlier activity of the same user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviousActivity {
    pub label: ActivityLabel,
    pub t_end: Timestamp,
}

/// A previous activity counts only if it ended within this window before
/// the query starts.
pub const PREVIOUS_ACTIVITY_WINDOW: i64 = SECONDS_PER_DAY;

impl TransitionMatrices {
    pub fn new() -> Self {
        TransitionMatrices {
            weekday: vec![[0; NUM_LABELS]; NUM_LABELS],
            weekend: vec![[0; NUM_LABELS]; NUM_LABELS],
        }
    }

    /// Counts consecutive labelled pairs within each user-day.
    pub fn build<'a, F: 'a>(days: impl IntoIterator<Item = &'a ActivityDay<F>>) -> Self {
        let mut m = Self::new();
        for day in days {
            let dt = day.day_type();
            for w in day.stops.windows(2) {
                if let (Some(a), Some(b)) = (w[0].label, w[1].label) {
                    m.add(dt, a, b);
                }
            }
        }
        m
    }

    pub fn add(&mut self, day_type: DayType, from: ActivityLabel, to: ActivityLabel) {
        self.table_mut(day_type)[from.index()][to.index()] += 1;
    }

    fn table(&self, day_type: DayType) -> &[LabelCounts] {
        match day_type {
            DayType::Weekday => &self.weekday,
            DayType::Weekend => &self.weekend,
        }
    }

    fn table_mut(&mut self, day_type: DayType) -> &mut Vec<LabelCounts> {
        match day_type {
            DayType::Weekday => &mut self.weekday,
            DayType::Weekend => &mut self.weekend,
        }
    }

    pub fn count(&self, day_type: DayType, from: ActivityLabel, to: ActivityLabel) -> u64 {
        self.table(day_type)[from.index()][to.index()]
    }

    pub fn row<F: Scalar>(&self, day_type: DayType, from: ActivityLabel) -> LabelVector<F> {
        self.row_without(day_type, from, None)
    }

    /// Row with one observation of `from -> excluded` removed, used when the
    /// query itself contributed that pair.
    pub fn row_without<F: Scalar>(
        &self,
        day_type: DayType,
        from: ActivityLabel,
        excluded: Option<ActivityLabel>,
    ) -> LabelVector<F> {
        let mut counts = self.table(day_type)[from.index()];
        if let Some(e) = excluded {
            let c = &mut counts[e.index()];
            *c = c.saturating_sub(1);
        }
        if counts.iter().all(|&c| c == 0) {
            return uniform();
        }
        normalize(&counts)
    }
}

pub fn uniform<F: Scalar>() -> LabelVector<F> {
    [F::one() / F::from_count(NUM_LABELS); NUM_LABELS]
}

/// Transition block of the feature vector.
pub fn transition_feature<F: Scalar>(
    matrices: &TransitionMatrices,
    previous: Option<PreviousActivity>,
    query_start: Timestamp,
    day_type: DayType,
    excluded: Option<ActivityLabel>,
) -> LabelVector<F> {
    match previous {
        Some(p) if query_start - p.t_end <= PREVIOUS_ACTIVITY_WINDOW => {
            matrices.row_without(day_type, p.label, excluded)
        }
        _ => uniform(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{StopPoint, UserId};
    use ActivityLabel::*;

    fn stop(label: ActivityLabel, h: i64) -> StopPoint<f64> {
        StopPoint {
            user_id: UserId::from("u"),
            x: 0.0,
            y: 0.0,
            lon: 0.0,
            lat: 0.0,
            t_start: h * 3600,
            t_end: h * 3600 + 1800,
            label: Some(label),
        }
    }

    // day 0 (1970-01-01) was a Thursday
    fn weekday(labels: &[ActivityLabel]) -> ActivityDay<f64> {
        ActivityDay {
            user_id: UserId::from("u"),
            day: 0,
            stops: labels.iter().enumerate().map(|(i, &l)| stop(l, i as i64)).collect(),
        }
    }

    #[test]
    fn single_sequence_rows() {
        let m = TransitionMatrices::build([&weekday(&[Home, Work, Home])]);
        let r: LabelVector<f64> = m.row(DayType::Weekday, Home);
        assert_eq!(r[Work.index()], 1.0);
        let r: LabelVector<f64> = m.row(DayType::Weekday, Work);
        assert_eq!(r[Home.index()], 1.0);
        let r: LabelVector<f64> = m.row(DayType::Weekday, Shopping);
        assert!(r.iter().all(|&v| v == 1.0 / 16.0));
        let r: LabelVector<f64> = m.row(DayType::Weekend, Home);
        assert!(r.iter().all(|&v| v == 1.0 / 16.0));
    }

    #[test]
    fn previous_window() {
        let m = TransitionMatrices::build([&weekday(&[Home, Work, Home])]);
        let prev = PreviousActivity {
            label: Home,
            t_end: 0,
        };
        let within: LabelVector<f64> =
            transition_feature(&m, Some(prev), 24 * 3600, DayType::Weekday, None);
        assert_eq!(within[Work.index()], 1.0);
        let late: LabelVector<f64> =
            transition_feature(&m, Some(prev), 25 * 3600, DayType::Weekday, None);
        assert!(late.iter().all(|&v| v == 1.0 / 16.0));
        let none: LabelVector<f64> = transition_feature(&m, None, 0, DayType::Weekday, None);
        assert!(none.iter().all(|&v| v == 1.0 / 16.0));
    }

    #[test]
    fn excluding_only_observation_gives_uniform() {
        let m = TransitionMatrices::build([&weekday(&[Home, Work])]);
        let r: LabelVector<f64> = m.row_without(DayType::Weekday, Home, Some(Work));
        assert!(r.iter().all(|&v| v == 1.0 / 16.0));
    }
}

//! Chronological and streaming evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::domain::{ActivityDay, ActivityLabel, CollapsedLabel, PoiRecord, StopPoint, UserId, UserProfile, NUM_LABELS};
use crate::error::{Error, Result};
use crate::fusion::{FusionModel, FusionParams, FusionStrategy, PopulationKind, PreviousLabels, TrainingReport};
use crate::quantize::QuantizerSpec;
use crate::scalar::Scalar;

/// Per user: the first `k` days train, the next day tests.
#[derive(Clone, Debug, PartialEq)]
pub struct ChronoSplit<F> {
    pub k: usize,
    pub train: Vec<ActivityDay<F>>,
    pub test: Vec<ActivityDay<F>>,
    /// Users with fewer than `k + 1` days.
    pub excluded: Vec<UserId>,
}

pub fn chrono_split<F: Clone>(days: &[ActivityDay<F>], k: usize) -> Result<ChronoSplit<F>> {
    if k < 1 {
        return Err(Error::param("k must be at least 1"));
    }
    let mut per_user: BTreeMap<&UserId, Vec<&ActivityDay<F>>> = BTreeMap::new();
    for d in days {
        per_user.entry(&d.user_id).or_default().push(d);
    }
    let mut split = ChronoSplit {
        k,
        train: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
    };
    for (user, mut ds) in per_user {
        ds.sort_by_key(|d| d.day);
        if ds.len() < k + 1 {
            split.excluded.push(user.clone());
            continue;
        }
        split.train.extend(ds[..k].iter().map(|d| (*d).clone()));
        split.test.push(ds[k].clone());
    }
    if !split.excluded.is_empty() {
        warn!(k, users = split.excluded.len(), "users with too few days excluded from split");
    }
    Ok(split)
}

/// Truth-by-prediction counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn sixteen() -> Self {
        Self::new(ActivityLabel::ALL.iter().map(|l| l.name().to_owned()).collect())
    }

    pub fn four() -> Self {
        Self::new(CollapsedLabel::ALL.iter().map(|l| l.name().to_owned()).collect())
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let t = self.total();
        (t > 0).then(|| self.correct() as f64 / t as f64)
    }

    /// Diagonal over row sum; `None` for classes absent from the truth.
    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        let row: u64 = self.counts[class].iter().sum();
        (row > 0).then(|| self.counts[class][class] as f64 / row as f64)
    }

    pub fn render(&self) -> String {
        let codes: Vec<String> = self
            .labels
            .iter()
            .map(|n| n.parse::<ActivityLabel>().map_or_else(|_| short(n), |l| l.code().to_owned()))
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:>6}", "");
        for c in &codes {
            let _ = write!(out, "{c:>6}");
        }
        let _ = writeln!(out, "{:>8}", "acc%");
        for (i, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{:>6}", codes[i]);
            for v in row {
                let _ = write!(out, "{v:>6}");
            }
            match self.class_accuracy(i) {
                Some(a) => {
                    let _ = writeln!(out, "{:>8.2}", a * 100.0);
                }
                None => {
                    let _ = writeln!(out, "{:>8}", "-");
                }
            }
        }
        if let Some(a) = self.accuracy() {
            let _ = writeln!(out, "overall accuracy {:.2}% ({}/{})", a * 100.0, self.correct(), self.total());
        }
        out
    }
}

fn short(name: &str) -> String {
    name.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.chars().next().unwrap_or('?'))
        .collect::<String>()
        .to_uppercase()
}

/// One test stop with the decisions made for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub user_id: UserId,
    pub day: i64,
    pub t_start: i64,
    pub truth: ActivityLabel,
    pub predicted: ActivityLabel,
    pub members: [Option<ActivityLabel>; 4],
    pub by_strategy: Vec<(FusionStrategy, ActivityLabel)>,
    pub seen: bool,
    /// The user's own days in the training data.
    pub user_training_days: usize,
}

/// Confusion matrices with 16 labels and with the 4 collapsed classes, the
/// latter obtained by collapsing truth and prediction of the same decisions.
pub fn confusion_pair<'a>(pairs: impl IntoIterator<Item = (ActivityLabel, ActivityLabel)> + 'a) -> (ConfusionMatrix, ConfusionMatrix) {
    let mut m16 = ConfusionMatrix::sixteen();
    let mut m4 = ConfusionMatrix::four();
    for (t, p) in pairs {
        m16.add(t.index(), p.index());
        m4.add(t.collapse().index(), p.collapse().index());
    }
    (m16, m4)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: String,
    pub tested: u64,
    pub accuracy16: Option<f64>,
    pub accuracy4: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: serde_json::Value,
    pub k: usize,
    pub strategy: FusionStrategy,
    pub users_tested: usize,
    pub users_excluded: Vec<UserId>,
    pub test_stops: usize,
    pub training: TrainingReport,
    pub majority_label: ActivityLabel,
    pub majority_accuracy: f64,
    pub confusion16: ConfusionMatrix,
    pub confusion4: ConfusionMatrix,
    pub accuracy16: f64,
    pub accuracy4: f64,
    /// Individual population models and every fusion strategy.
    pub methods: Vec<MethodAccuracy>,
}

impl EvalReport {
    /// Per-method accuracy table for 16 and 4 classes.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<40} {:>10}", "method", "accuracy(%)");
        for (title, pick) in [("16 classes", 16), ("4 classes", 4)] {
            let _ = writeln!(out, "--- {title} ---");
            for m in &self.methods {
                let acc = if pick == 16 { m.accuracy16 } else { m.accuracy4 };
                let cell = acc.map_or_else(|| "-".to_owned(), |a| format!("{:.2}", a * 100.0));
                let _ = writeln!(out, "{:<40} {:>10}", m.method, cell);
            }
        }
        let _ = writeln!(
            out,
            "majority baseline ({}) {:.2}%, k={}, test stops {}, users {}",
            self.majority_label,
            self.majority_accuracy * 100.0,
            self.k,
            self.test_stops,
            self.users_tested
        );
        out
    }

    pub fn render(&self) -> String {
        format!(
            "{}\n16-class confusion matrix ({}):\n{}\n4-class confusion matrix:\n{}",
            self.render_table(),
            self.strategy.name(),
            self.confusion16.render(),
            self.confusion4.render()
        )
    }
}

fn method_name(kind: PopulationKind) -> &'static str {
    match kind {
        PopulationKind::CrossUser => "cross-users",
        PopulationKind::Gender => "gender",
        PopulationKind::Age => "age",
        PopulationKind::User => "user",
    }
}

fn strategy_title(s: FusionStrategy) -> &'static str {
    match s {
        FusionStrategy::Wmv => "decisions ensemble (weighted majority)",
        FusionStrategy::ScoreStack => "scores ensemble (classifier)",
        FusionStrategy::DecisionStack => "decisions ensemble (classifier)",
    }
}

fn method_accuracies(decisions: &[DecisionRecord]) -> Vec<MethodAccuracy> {
    let mut out = Vec::new();
    let summarize = |name: String, pairs: Vec<(ActivityLabel, ActivityLabel)>| {
        let (m16, m4) = confusion_pair(pairs);
        MethodAccuracy {
            method: name,
            tested: m16.total(),
            accuracy16: m16.accuracy(),
            accuracy4: m4.accuracy(),
        }
    };
    for kind in PopulationKind::ALL {
        let pairs = decisions
            .iter()
            .filter_map(|d| d.members[kind.index()].map(|p| (d.truth, p)))
            .collect();
        out.push(summarize(method_name(kind).to_owned(), pairs));
    }
    let strategies: BTreeSet<u8> = decisions
        .iter()
        .flat_map(|d| d.by_strategy.iter().map(|(s, _)| *s as u8))
        .collect();
    for s in [FusionStrategy::ScoreStack, FusionStrategy::DecisionStack, FusionStrategy::Wmv] {
        if !strategies.contains(&(s as u8)) {
            continue;
        }
        let pairs = decisions
            .iter()
            .filter_map(|d| d.by_strategy.iter().find(|(x, _)| *x == s).map(|(_, p)| (d.truth, *p)))
            .collect();
        out.push(summarize(strategy_title(s).to_owned(), pairs));
    }
    out
}

/// Most frequent training label; ties go to the lower label index.
pub fn majority_label<'a, F: 'a>(days: impl IntoIterator<Item = &'a ActivityDay<F>>) -> Option<ActivityLabel> {
    let mut counts = [0u64; NUM_LABELS];
    let mut any = false;
    for d in days {
        for s in &d.stops {
            if let Some(l) = s.label {
                counts[l.index()] += 1;
                any = true;
            }
        }
    }
    any.then(|| ActivityLabel::ALL[crate::forest::argmax(&counts)])
}

fn predict_days<F: Scalar>(
    model: &FusionModel<F>,
    test: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    previous: PreviousLabels,
    training_days: &BTreeMap<UserId, usize>,
) -> Result<Vec<DecisionRecord>> {
    use rayon::prelude::*;
    let per_day: Result<Vec<Vec<DecisionRecord>>> = test
        .par_iter()
        .map(|day| {
            let profile = profiles
                .get(&day.user_id)
                .ok_or_else(|| Error::InsufficientData(format!("no profile for user {}", day.user_id)))?;
            let stops: Vec<StopPoint<F>> = day.stops.iter().filter(|s| s.label.is_some()).cloned().collect();
            let preds = model.predict_stops(profile, &stops, None, previous)?;
            Ok(stops
                .iter()
                .zip(preds)
                .map(|(s, p)| DecisionRecord {
                    user_id: s.user_id.clone(),
                    day: day.day,
                    t_start: s.t_start,
                    truth: s.label.expect("filtered to labelled stops"),
                    predicted: p.label,
                    members: p.members,
                    by_strategy: p.by_strategy,
                    seen: p.seen,
                    user_training_days: training_days.get(&s.user_id).copied().unwrap_or(0),
                })
                .collect())
        })
        .collect();
    Ok(per_day?.into_iter().flatten().collect())
}

fn days_per_user<F>(days: &[ActivityDay<F>]) -> BTreeMap<UserId, usize> {
    let mut m = BTreeMap::new();
    for d in days {
        *m.entry(d.user_id.clone()).or_insert(0) += 1;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub previous: PreviousLabels,
    /// Also fit the meta-ensembles of strategies other than the configured
    /// one, so the report covers every strategy.
    pub all_strategies: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            previous: PreviousLabels::Validated,
            all_strategies: true,
        }
    }
}

/// Trains on the first `k` days of each user and tests on the next day.
pub fn evaluate<F: Scalar>(
    days: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    pois: &[PoiRecord<F>],
    params: &FusionParams,
    k: usize,
    options: &EvalOptions,
    config: serde_json::Value,
) -> Result<(EvalReport, Vec<DecisionRecord>)> {
    let split = chrono_split(days, k)?;
    let test_stops = split.test.iter().flat_map(|d| &d.stops).filter(|s| s.label.is_some()).count();
    if test_stops == 0 {
        return Err(Error::InsufficientData(format!("no test stops for k={k}")));
    }
    let extra: Vec<FusionStrategy> = if options.all_strategies {
        vec![FusionStrategy::Wmv, FusionStrategy::ScoreStack, FusionStrategy::DecisionStack]
    } else {
        Vec::new()
    };
    let (model, training) =
        FusionModel::train_with_strategies(&split.train, profiles, pois, params, serde_json::Value::Null, &extra)?;
    let decisions = predict_days(&model, &split.test, profiles, options.previous, &days_per_user(&split.train))?;
    let majority = majority_label(&split.train).ok_or_else(|| Error::InsufficientData("no training labels".into()))?;
    let (confusion16, confusion4) = confusion_pair(decisions.iter().map(|d| (d.truth, d.predicted)));
    let majority_hits = decisions.iter().filter(|d| d.truth == majority).count();
    let accuracy16 = confusion16.accuracy().unwrap_or(0.0);
    let accuracy4 = confusion4.accuracy().unwrap_or(0.0);
    if accuracy4 + 1e-12 < accuracy16 {
        return Err(Error::Invariant(format!(
            "collapsed accuracy {accuracy4} below 16-class accuracy {accuracy16}"
        )));
    }
    info!(k, accuracy16, accuracy4, "chronological evaluation finished");
    let report = EvalReport {
        config,
        k,
        strategy: params.strategy,
        users_tested: split.test.len(),
        users_excluded: split.excluded,
        test_stops: decisions.len(),
        training,
        majority_label: majority,
        majority_accuracy: majority_hits as f64 / decisions.len() as f64,
        methods: method_accuracies(&decisions),
        confusion16,
        confusion4,
        accuracy16,
        accuracy4,
    };
    Ok((report, decisions))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamOptions {
    /// Calendar days used for training only before the first test day.
    pub warmup_days: usize,
    /// Buckets with this many users or fewer are not reported.
    pub min_bucket_users: usize,
    pub previous: PreviousLabels,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            warmup_days: 3,
            min_bucket_users: 30,
            previous: PreviousLabels::Validated,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub tested: u64,
    pub correct: u64,
}

impl Tally {
    pub fn add(&mut self, hit: bool) {
        self.tested += 1;
        self.correct += u64::from(hit);
    }

    pub fn merge(&mut self, other: &Tally) {
        self.tested += other.tested;
        self.correct += other.correct;
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.tested > 0).then(|| self.correct as f64 / self.tested as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamDay {
    pub day: i64,
    pub seen: Tally,
    pub unseen: Tally,
    pub seen_users: usize,
    pub unseen_users: usize,
    /// Accuracy over all test decisions from the first test day to this one.
    pub cumulative_seen: Option<f64>,
    pub cumulative_unseen: Option<f64>,
    pub cumulative_all: Option<f64>,
}

/// Accuracy by number of the user's own training days at test time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingDayBucket {
    pub training_days: usize,
    pub users: usize,
    pub tally: Tally,
    pub reported: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub config: serde_json::Value,
    pub options: StreamOptions,
    pub days: Vec<StreamDay>,
    pub buckets: Vec<TrainingDayBucket>,
}

impl StreamReport {
    pub fn final_seen(&self) -> Option<f64> {
        self.days.last().and_then(|d| d.cumulative_seen)
    }

    pub fn final_unseen(&self) -> Option<f64> {
        self.days.last().and_then(|d| d.cumulative_unseen)
    }

    /// Accumulative accuracy curves, one row per test day.
    pub fn curves_csv(&self) -> String {
        let mut out = String::from(
            "day,date,seen_tested,seen_correct,unseen_tested,unseen_correct,seen_users,unseen_users,cumulative_seen,cumulative_unseen,cumulative_all\n",
        );
        let fmt = |v: Option<f64>| v.map_or_else(String::new, |a| format!("{a:.6}"));
        for d in &self.days {
            let date = chrono::DateTime::from_timestamp(d.day * crate::domain::SECONDS_PER_DAY, 0)
                .map(|t| t.date_naive().to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                d.day,
                date,
                d.seen.tested,
                d.seen.correct,
                d.unseen.tested,
                d.unseen.correct,
                d.seen_users,
                d.unseen_users,
                fmt(d.cumulative_seen),
                fmt(d.cumulative_unseen),
                fmt(d.cumulative_all)
            );
        }
        out
    }

    pub fn buckets_csv(&self) -> String {
        let mut out = String::from("training_days,users,tested,correct,accuracy,reported\n");
        for b in &self.buckets {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                b.training_days,
                b.users,
                b.tally.tested,
                b.tally.correct,
                b.tally.accuracy().map_or_else(String::new, |a| format!("{a:.6}")),
                b.reported
            );
        }
        out
    }
}

/// Replays the calendar: every day after the warm-up is predicted by models
/// trained from scratch on all earlier days, then joins the training data.
pub fn stream_evaluate<F: Scalar>(
    days: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    pois: &[PoiRecord<F>],
    params: &FusionParams,
    options: &StreamOptions,
    config: serde_json::Value,
) -> Result<(StreamReport, Vec<DecisionRecord>)> {
    let calendar: BTreeSet<i64> = days.iter().map(|d| d.day).collect();
    let calendar: Vec<i64> = calendar.into_iter().collect();
    let mut report = StreamReport {
        config,
        options: *options,
        days: Vec::new(),
        buckets: Vec::new(),
    };
    let mut log = Vec::new();
    if calendar.len() <= options.warmup_days {
        warn!(days = calendar.len(), "not enough calendar days for a streaming run");
        return Ok((report, log));
    }
    let (mut cum_seen, mut cum_unseen) = (Tally::default(), Tally::default());
    for &d in &calendar[options.warmup_days.max(1)..] {
        let train: Vec<ActivityDay<F>> = days.iter().filter(|x| x.day < d).cloned().collect();
        let test: Vec<ActivityDay<F>> = days.iter().filter(|x| x.day == d).cloned().collect();
        let (model, _) = FusionModel::train(&train, profiles, pois, params, serde_json::Value::Null)?;
        let decisions = predict_days(&model, &test, profiles, options.previous, &days_per_user(&train))?;
        let mut day = StreamDay {
            day: d,
            seen: Tally::default(),
            unseen: Tally::default(),
            seen_users: 0,
            unseen_users: 0,
            cumulative_seen: None,
            cumulative_unseen: None,
            cumulative_all: None,
        };
        let mut seen_users = BTreeSet::new();
        let mut unseen_users = BTreeSet::new();
        for r in &decisions {
            let hit = r.truth == r.predicted;
            if r.seen {
                day.seen.add(hit);
                seen_users.insert(&r.user_id);
            } else {
                day.unseen.add(hit);
                unseen_users.insert(&r.user_id);
            }
        }
        day.seen_users = seen_users.len();
        day.unseen_users = unseen_users.len();
        cum_seen.merge(&day.seen);
        cum_unseen.merge(&day.unseen);
        let mut all = cum_seen.clone();
        all.merge(&cum_unseen);
        day.cumulative_seen = cum_seen.accuracy();
        day.cumulative_unseen = cum_unseen.accuracy();
        day.cumulative_all = all.accuracy();
        info!(day = d, tested = decisions.len(), "streaming day evaluated");
        report.days.push(day);
        log.extend(decisions);
    }
    let mut buckets: BTreeMap<usize, (BTreeSet<&UserId>, Tally)> = BTreeMap::new();
    for r in &log {
        let b = buckets.entry(r.user_training_days).or_default();
        b.0.insert(&r.user_id);
        b.1.add(r.truth == r.predicted);
    }
    report.buckets = buckets
        .into_iter()
        .map(|(training_days, (users, tally))| TrainingDayBucket {
            training_days,
            users: users.len(),
            reported: users.len() > options.min_bucket_users,
            tally,
        })
        .collect();
    Ok((report, log))
}

/// Default values of the experiment grids: rectangle sizes, Voronoi cluster
/// counts, circle radii and slot widths.
pub const GRID_CELL_SIZES_M: [f64; 5] = [200.0, 400.0, 600.0, 800.0, 1000.0];
pub const GRID_VORONOI_CLUSTERS: [usize; 6] = [100, 200, 400, 600, 800, 1000];
pub const GRID_CIRCLE_RADII_M: [f64; 6] = [100.0, 150.0, 200.0, 300.0, 400.0, 500.0];
pub const GRID_SLOT_MINUTES: [u32; 6] = [10, 20, 40, 60, 90, 120];

/// Every quantizer setting crossed with every slot width.
pub fn parameter_grid(base: &FusionParams) -> Vec<FusionParams> {
    let mut quantizers: Vec<QuantizerSpec> = GRID_CELL_SIZES_M
        .iter()
        .map(|&s| QuantizerSpec::Grid {
            cell_width: s,
            cell_height: s,
        })
        .collect();
    quantizers.extend(GRID_VORONOI_CLUSTERS.iter().map(|&k| QuantizerSpec::Voronoi { clusters: k }));
    quantizers.extend(GRID_CIRCLE_RADII_M.iter().map(|&r| QuantizerSpec::Circular { radius: r }));
    let mut out = Vec::new();
    for q in quantizers {
        for &m in &GRID_SLOT_MINUTES {
            out.push(FusionParams {
                quantizer: q.clone(),
                slot_width: crate::domain::SlotWidth::new(m).expect("grid slot widths divide a day"),
                ..base.clone()
            });
        }
    }
    out
}

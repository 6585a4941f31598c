//! Population models and their fusion.
//!
//! One ensemble is trained per user population: everybody, each gender,
//! each age band and each user with training history. Every population gets
//! its own statistic tables, so both the features and the trees of a model
//! derive only from that population's stops. At prediction time the models
//! that apply to the query user vote (weighted majority) or feed a
//! meta-ensemble with their scores or their decisions (stacking).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use crate::domain::{
    ActivityDay, ActivityLabel, AgeBand, AgeBands, Gender, Point, PoiRecord, SlotWidth, StopPoint, UserId, UserProfile,
    NUM_LABELS,
};
use crate::error::{Error, Result};
use crate::features::{
    diameter, CoreLocations, FeatureContext, FeatureQuery, LabelVector, PoiIndex, PopulationStats, PreviousActivity,
};
use crate::forest::{argmax, Ensemble, EnsembleMode, ForestParams, Samples};
use crate::quantize::{Quantizer, QuantizerSpec};
use crate::scalar::Scalar;

pub const BUNDLE_VERSION: u32 = 1;

/// Number of population kinds, and of slots in a stacked input.
pub const NUM_KINDS: usize = 4;

/// Stacked meta-input length.
pub const STACK_LEN: usize = NUM_KINDS * NUM_LABELS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationKind {
    CrossUser,
    Gender,
    Age,
    User,
}

impl PopulationKind {
    /// Stacking and weight order.
    pub const ALL: [PopulationKind; NUM_KINDS] = [
        PopulationKind::CrossUser,
        PopulationKind::Gender,
        PopulationKind::Age,
        PopulationKind::User,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Selector {
    CrossUser,
    Gender(Gender),
    Age(AgeBand),
    User(UserId),
}

impl Selector {
    pub fn kind(&self) -> PopulationKind {
        match self {
            Selector::CrossUser => PopulationKind::CrossUser,
            Selector::Gender(_) => PopulationKind::Gender,
            Selector::Age(_) => PopulationKind::Age,
            Selector::User(_) => PopulationKind::User,
        }
    }

    pub fn admits(&self, profile: &UserProfile<impl Scalar>) -> bool {
        match self {
            Selector::CrossUser => true,
            Selector::Gender(g) => profile.gender == *g,
            Selector::Age(b) => profile.age_band == *b,
            Selector::User(u) => profile.user_id == *u,
        }
    }

    fn describe(&self, bands: &AgeBands) -> String {
        match self {
            Selector::CrossUser => "cross_user".into(),
            Selector::Gender(g) => format!("gender={}", g.name()),
            Selector::Age(b) => format!("age={}", bands.describe(*b)),
            Selector::User(u) => format!("user={u}"),
        }
    }

    fn seed_offset(&self) -> u64 {
        let text = serde_json::to_string(self).unwrap_or_default();
        text.bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    #[default]
    Wmv,
    ScoreStack,
    DecisionStack,
}

impl FusionStrategy {
    pub fn name(self) -> &'static str {
        match self {
            FusionStrategy::Wmv => "wmv",
            FusionStrategy::ScoreStack => "score_stack",
            FusionStrategy::DecisionStack => "decision_stack",
        }
    }

    pub fn is_stack(self) -> bool {
        self != FusionStrategy::Wmv
    }
}

/// Label of a stop's predecessor used for the transition feature during a
/// predicted day.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviousLabels {
    /// True label of the preceding stop when the input carries one,
    /// otherwise the fused prediction.
    #[default]
    Validated,
    /// Always the fused prediction; input labels are never read.
    Predicted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    pub strategy: FusionStrategy,
    /// Weights of cross-user, gender, age and user models.
    pub weights: [f64; NUM_KINDS],
    pub forest: ForestParams,
    pub quantizer: QuantizerSpec,
    pub slot_width: SlotWidth,
    pub age_bands: AgeBands,
    /// Work distance for users without a work location, in km; defaults to
    /// the diameter of the training area.
    pub missing_work_km: Option<f64>,
}

impl Default for FusionParams {
    fn default() -> Self {
        FusionParams {
            strategy: FusionStrategy::Wmv,
            weights: [4.0, 3.0, 2.0, 1.0],
            forest: ForestParams::default(),
            quantizer: QuantizerSpec::default(),
            slot_width: SlotWidth::new(120).expect("valid slot width"),
            age_bands: AgeBands::default(),
            missing_work_km: None,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::param("fusion weights must be positive"));
        }
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return Err(Error::param("n_trees and min_leaf must be at least 1"));
        }
        if let Some(m) = self.missing_work_km {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::param("missing_work_km must be a non-negative number"));
            }
        }
        self.quantizer.validate()
    }
}

/// Weighted majority vote over the available model decisions; `decisions[t]`
/// is `None` when model `t` is absent. Returns the winning label and the
/// vote mass per label normalized by the total weight of present models.
pub fn wmv<F: Scalar>(decisions: &[Option<ActivityLabel>], weights: &[F]) -> Result<(ActivityLabel, LabelVector<F>)> {
    if decisions.len() != weights.len() {
        return Err(Error::param("one weight per model decision is required"));
    }
    let mut mass = [F::zero(); NUM_LABELS];
    let mut total = F::zero();
    for (d, &w) in decisions.iter().zip(weights) {
        if let Some(l) = d {
            if !(w > F::zero()) {
                return Err(Error::param("fusion weights must be positive"));
            }
            mass[l.index()] = mass[l.index()] + w;
            total = total + w;
        }
    }
    if total == F::zero() {
        return Err(Error::InsufficientData("no model decision to vote on".into()));
    }
    let label = ActivityLabel::ALL[argmax(&mass)];
    mass.iter_mut().for_each(|m| *m = *m / total);
    Ok((label, mass))
}

/// Concatenates per-kind vectors in [`PopulationKind::ALL`] order, zero
/// filling absent models.
pub fn stack_input<F: Scalar>(parts: &[Option<LabelVector<F>>; NUM_KINDS]) -> Vec<F> {
    let mut v = Vec::with_capacity(STACK_LEN);
    for p in parts {
        v.extend(p.unwrap_or([F::zero(); NUM_LABELS]));
    }
    v
}

pub fn one_hot<F: Scalar>(l: ActivityLabel) -> LabelVector<F> {
    let mut v = [F::zero(); NUM_LABELS];
    v[l.index()] = F::one();
    v
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct PopulationModel<F: Scalar> {
    pub selector: Selector,
    pub stats: PopulationStats<F>,
    pub ensemble: Ensemble<F>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub selector: String,
    pub users: usize,
    pub records: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub users: usize,
    pub days: usize,
    pub stops: usize,
    pub trained: Vec<PopulationSummary>,
    /// Populations without any training stop.
    pub omitted: Vec<String>,
    pub meta_rows: usize,
    /// Meta rows scored by models that saw them.
    pub meta_in_sample_rows: usize,
}

/// Everything prediction needs: quantizer, POI index, the population models
/// and, for stacking, the meta-ensemble. Serializes as one bundle.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct FusionModel<F: Scalar> {
    pub version: u32,
    /// Resolved run configuration echoed for provenance.
    pub config: serde_json::Value,
    pub params: FusionParams,
    pub quantizer: Quantizer<F>,
    pub pois: PoiIndex<F>,
    pub missing_work_km: F,
    /// Work anchors inferred from training stops for users whose profile has
    /// no work location.
    pub inferred_work: BTreeMap<UserId, Point<F>>,
    /// Last labelled training stop of each user.
    pub last_activity: BTreeMap<UserId, PreviousActivity>,
    pub populations: Vec<PopulationModel<F>>,
    /// Meta-ensemble over stacked score vectors.
    pub score_meta: Option<Ensemble<F>>,
    /// Meta-ensemble over stacked one-hot decisions.
    pub decision_meta: Option<Ensemble<F>>,
}

/// Output for one stop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction<F> {
    pub label: ActivityLabel,
    /// Fused per-label scores: normalized vote mass for WMV, meta-ensemble
    /// vote fractions for stacking.
    pub scores: Vec<F>,
    /// Decision of each population kind, `None` where absent.
    pub members: [Option<ActivityLabel>; NUM_KINDS],
    /// Label under every fusion strategy the model supports.
    pub by_strategy: Vec<(FusionStrategy, ActivityLabel)>,
    /// The user had training stops.
    pub seen: bool,
}

struct Models<'m, F: Scalar> {
    by_selector: BTreeMap<&'m Selector, &'m PopulationModel<F>>,
}

fn centroid<F: Scalar>(pts: &[Point<F>]) -> Option<Point<F>> {
    if pts.is_empty() {
        return None;
    }
    let n = F::from_count(pts.len());
    let (sx, sy) = pts.iter().fold((F::zero(), F::zero()), |(a, b), p| (a + p.x, b + p.y));
    Some(Point::new(sx / n, sy / n))
}

fn selectors<F: Scalar>(
    days: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    bands: &AgeBands,
) -> Vec<Selector> {
    let mut s = vec![Selector::CrossUser, Selector::Gender(Gender::Female), Selector::Gender(Gender::Male)];
    s.extend((0..bands.count()).map(|b| Selector::Age(AgeBand(b))));
    let mut users: Vec<&UserId> = days.iter().map(|d| &d.user_id).filter(|u| profiles.contains_key(*u)).collect();
    users.sort();
    users.dedup();
    s.extend(users.into_iter().map(|u| Selector::User(u.clone())));
    s
}

struct Trained<F: Scalar> {
    populations: Vec<PopulationModel<F>>,
    report: TrainingReport,
    quantizer: Quantizer<F>,
    pois: PoiIndex<F>,
    missing_work_km: F,
    inferred_work: BTreeMap<UserId, Point<F>>,
    last_activity: BTreeMap<UserId, PreviousActivity>,
}

fn labelled<F: Scalar>(days: &[ActivityDay<F>]) -> impl Iterator<Item = &StopPoint<F>> {
    days.iter().flat_map(|d| d.stops.iter()).filter(|s| s.label.is_some())
}

fn train_base<F: Scalar>(
    days: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    pois: &[PoiRecord<F>],
    params: &FusionParams,
) -> Result<Trained<F>> {
    for d in days {
        if !profiles.contains_key(&d.user_id) {
            return Err(Error::InsufficientData(format!("training user {} has no profile", d.user_id)));
        }
    }
    let points: Vec<Point<F>> = labelled(days).map(|s| s.position()).collect();
    if points.is_empty() {
        return Err(Error::InsufficientData("no labelled training stops".into()));
    }
    let quantizer = params.quantizer.fit(&points, params.forest.seed)?;
    let poi_index = PoiIndex::build(pois, &quantizer);

    let missing_work_km = match params.missing_work_km {
        Some(m) => F::lit(m),
        None => {
            let mut area = points.clone();
            area.extend(profiles.values().map(|p| p.home));
            diameter(&area) / F::lit(1000.0)
        }
    };
    let mut work_stops: BTreeMap<UserId, Vec<Point<F>>> = BTreeMap::new();
    let mut last_activity: BTreeMap<UserId, PreviousActivity> = BTreeMap::new();
    for s in labelled(days) {
        if s.label == Some(ActivityLabel::Work) {
            work_stops.entry(s.user_id.clone()).or_default().push(s.position());
        }
        let label = s.label.expect("labelled");
        let e = last_activity.entry(s.user_id.clone()).or_insert(PreviousActivity {
            label,
            t_end: s.t_end,
        });
        if s.t_end >= e.t_end {
            *e = PreviousActivity {
                label,
                t_end: s.t_end,
            };
        }
    }
    let inferred_work: BTreeMap<UserId, Point<F>> = work_stops
        .into_iter()
        .filter(|(u, _)| profiles.get(u).is_some_and(|p| p.work.is_none()))
        .filter_map(|(u, pts)| centroid(&pts).map(|c| (u, c)))
        .collect();
    let cores: BTreeMap<UserId, CoreLocations<F>> = profiles
        .iter()
        .map(|(u, p)| {
            (
                u.clone(),
                CoreLocations {
                    home: p.home,
                    work: p.work.or_else(|| inferred_work.get(u).copied()),
                },
            )
        })
        .collect();

    let sels = selectors(days, profiles, &params.age_bands);
    let results: Vec<Result<Option<PopulationModel<F>>>> = sels
        .par_iter()
        .map(|sel| {
            let subset = days.iter().filter(|d| sel.admits(&profiles[&d.user_id]));
            let stats = PopulationStats::build(subset, &quantizer, params.slot_width)?;
            if stats.is_empty() {
                return Ok(None);
            }
            let ctx = FeatureContext::new(&stats, &poi_index, missing_work_km)?;
            let (rows, labels) = ctx.training_samples(&cores)?;
            let samples = Samples::from_rows(
                &rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>(),
                labels.iter().map(|l| l.index()).collect(),
                NUM_LABELS,
            )?;
            let forest = ForestParams {
                seed: params.forest.seed ^ sel.seed_offset(),
                ..params.forest
            };
            let ensemble = Ensemble::fit(&samples, &forest)?;
            debug!(population = %sel.describe(&params.age_bands), records = stats.records().len(), "trained population model");
            Ok(Some(PopulationModel {
                selector: sel.clone(),
                stats,
                ensemble,
            }))
        })
        .collect();

    let mut report = TrainingReport {
        users: days.iter().map(|d| &d.user_id).collect::<std::collections::BTreeSet<_>>().len(),
        days: days.len(),
        stops: points.len(),
        ..Default::default()
    };
    let mut populations = Vec::new();
    for (sel, r) in sels.iter().zip(results) {
        match r? {
            Some(m) => {
                let mut users: Vec<&UserId> = m.stats.records().iter().map(|r| &r.user_id).collect();
                users.dedup();
                report.trained.push(PopulationSummary {
                    selector: sel.describe(&params.age_bands),
                    users: users.len(),
                    records: m.stats.records().len(),
                });
                populations.push(m);
            }
            None => report.omitted.push(sel.describe(&params.age_bands)),
        }
    }
    Ok(Trained {
        populations,
        report,
        quantizer,
        pois: poi_index,
        missing_work_km,
        inferred_work,
        last_activity,
    })
}

impl<F: Scalar> FusionModel<F> {
    /// Trains all population models on the cleaned `days` and, for stacking
    /// strategies, the meta-ensemble.
    ///
    /// The meta-ensemble learns from stops of each user's last training day,
    /// scored by population models fitted without those days; users with a
    /// single training day contribute in-sample rows. The meta-ensemble is
    /// bagged over all stacked inputs. The returned population models are
    /// refitted on all days.
    pub fn train(
        days: &[ActivityDay<F>],
        profiles: &BTreeMap<UserId, UserProfile<F>>,
        pois: &[PoiRecord<F>],
        params: &FusionParams,
        config: serde_json::Value,
    ) -> Result<(Self, TrainingReport)> {
        Self::train_with_strategies(days, profiles, pois, params, config, &[params.strategy])
    }

    /// As [`FusionModel::train`], additionally fitting the meta-ensembles of
    /// every strategy in `extra`.
    pub fn train_with_strategies(
        days: &[ActivityDay<F>],
        profiles: &BTreeMap<UserId, UserProfile<F>>,
        pois: &[PoiRecord<F>],
        params: &FusionParams,
        config: serde_json::Value,
        extra: &[FusionStrategy],
    ) -> Result<(Self, TrainingReport)> {
        params.validate()?;
        let base = train_base(days, profiles, pois, params)?;
        let mut model = FusionModel {
            version: BUNDLE_VERSION,
            config,
            params: params.clone(),
            quantizer: base.quantizer,
            pois: base.pois,
            missing_work_km: base.missing_work_km,
            inferred_work: base.inferred_work,
            last_activity: base.last_activity,
            populations: base.populations,
            score_meta: None,
            decision_meta: None,
        };
        let mut report = base.report;
        let wants = |s: FusionStrategy| params.strategy == s || extra.contains(&s);
        let (want_scores, want_decisions) = (wants(FusionStrategy::ScoreStack), wants(FusionStrategy::DecisionStack));
        if want_scores || want_decisions {
            let meta = train_meta(days, profiles, pois, params, want_scores, want_decisions)?;
            model.score_meta = meta.scores;
            model.decision_meta = meta.decisions;
            report.meta_rows = meta.rows;
            report.meta_in_sample_rows = meta.in_sample;
        }
        info!(
            populations = model.populations.len(),
            omitted = report.omitted.len(),
            "trained fusion model"
        );
        Ok((model, report))
    }

    fn models(&self) -> Models<'_, F> {
        Models {
            by_selector: self.populations.iter().map(|m| (&m.selector, m)).collect(),
        }
    }

    pub fn population(&self, sel: &Selector) -> Option<&PopulationModel<F>> {
        self.populations.iter().find(|m| &m.selector == sel)
    }

    /// A user is seen when a user-specific model exists for them.
    pub fn is_seen(&self, user: &UserId) -> bool {
        self.population(&Selector::User(user.clone())).is_some()
    }

    fn core(&self, profile: &UserProfile<F>) -> CoreLocations<F> {
        CoreLocations {
            home: profile.home,
            work: profile.work.or_else(|| self.inferred_work.get(&profile.user_id).copied()),
        }
    }

    /// Per-kind score vectors of the models applicable to `profile`.
    fn member_scores(
        &self,
        models: &Models<'_, F>,
        profile: &UserProfile<F>,
        stop: &StopPoint<F>,
        previous: Option<PreviousActivity>,
    ) -> Result<[Option<LabelVector<F>>; NUM_KINDS]> {
        let core = self.core(profile);
        let sels = [
            Selector::CrossUser,
            Selector::Gender(profile.gender),
            Selector::Age(profile.age_band),
            Selector::User(profile.user_id.clone()),
        ];
        let mut out = [None; NUM_KINDS];
        for (slot, sel) in out.iter_mut().zip(&sels) {
            let Some(m) = models.by_selector.get(sel) else { continue };
            let ctx = FeatureContext::new(&m.stats, &self.pois, self.missing_work_km)?;
            let x = ctx.assemble(&FeatureQuery {
                stop,
                previous,
                core: &core,
                own_record: None,
            })?;
            let s = m.ensemble.predict_scores(x.as_slice())?;
            let mut v = [F::zero(); NUM_LABELS];
            v.copy_from_slice(&s);
            *slot = Some(v);
        }
        Ok(out)
    }

    /// Strategies this model can apply.
    pub fn strategies(&self) -> Vec<FusionStrategy> {
        let mut v = vec![FusionStrategy::Wmv];
        if self.score_meta.is_some() {
            v.push(FusionStrategy::ScoreStack);
        }
        if self.decision_meta.is_some() {
            v.push(FusionStrategy::DecisionStack);
        }
        v
    }

    fn fuse(&self, strategy: FusionStrategy, parts: &[Option<LabelVector<F>>; NUM_KINDS]) -> Result<(ActivityLabel, Vec<F>)> {
        let decisions: [Option<ActivityLabel>; NUM_KINDS] =
            parts.map(|p| p.map(|s| ActivityLabel::ALL[argmax(&s)]));
        if decisions.iter().all(Option::is_none) {
            return Err(Error::InsufficientData("no model applies to the query user".into()));
        }
        let (meta, input) = match strategy {
            FusionStrategy::Wmv => {
                let w: Vec<F> = self.params.weights.iter().map(|&w| F::lit(w)).collect();
                let (l, mass) = wmv(&decisions, &w)?;
                return Ok((l, mass.to_vec()));
            }
            FusionStrategy::ScoreStack => (&self.score_meta, stack_input(parts)),
            FusionStrategy::DecisionStack => (&self.decision_meta, stack_input(&decisions.map(|d| d.map(one_hot)))),
        };
        let meta = meta
            .as_ref()
            .ok_or_else(|| Error::Invariant(format!("{} fusion without a trained meta-model", strategy.name())))?;
        let s = meta.predict_scores(&input)?;
        Ok((ActivityLabel::ALL[argmax(&s)], s))
    }

    /// Predicts one user's stops in time order.
    ///
    /// `previous` is the user's last activity before these stops; when absent
    /// the last training activity of the user is used.
    pub fn predict_stops(
        &self,
        profile: &UserProfile<F>,
        stops: &[StopPoint<F>],
        previous: Option<PreviousActivity>,
        labels: PreviousLabels,
    ) -> Result<Vec<Prediction<F>>> {
        let models = self.models();
        let seen = self.is_seen(&profile.user_id);
        let mut order: Vec<usize> = (0..stops.len()).collect();
        order.sort_by_key(|&i| (stops[i].t_start, stops[i].t_end));
        let mut prev = previous.or_else(|| self.last_activity.get(&profile.user_id).copied());
        let mut out: Vec<Option<Prediction<F>>> = vec![None; stops.len()];
        for i in order {
            let stop = &stops[i];
            if stop.user_id != profile.user_id {
                return Err(Error::param("stops of several users passed to predict_stops"));
            }
            let parts = self.member_scores(&models, profile, stop, prev)?;
            let (label, scores) = self.fuse(self.params.strategy, &parts)?;
            let mut by_strategy = Vec::new();
            for st in self.strategies() {
                let l = if st == self.params.strategy { label } else { self.fuse(st, &parts)?.0 };
                by_strategy.push((st, l));
            }
            let members = parts.map(|p| p.map(|s| ActivityLabel::ALL[argmax(&s)]));
            let carried = match (labels, stop.label) {
                (PreviousLabels::Validated, Some(truth)) => truth,
                _ => label,
            };
            prev = Some(PreviousActivity {
                label: carried,
                t_end: stop.t_end,
            });
            out[i] = Some(Prediction {
                label,
                scores,
                members,
                by_strategy,
                seen,
            });
        }
        Ok(out.into_iter().map(|p| p.expect("every stop predicted")).collect())
    }

    /// Predicts arbitrary stops, grouping them per user. Output order matches
    /// input order.
    pub fn predict(
        &self,
        stops: &[StopPoint<F>],
        profiles: &BTreeMap<UserId, UserProfile<F>>,
        labels: PreviousLabels,
    ) -> Result<Vec<Prediction<F>>> {
        let mut by_user: BTreeMap<&UserId, Vec<usize>> = BTreeMap::new();
        for (i, s) in stops.iter().enumerate() {
            by_user.entry(&s.user_id).or_default().push(i);
        }
        let groups: Vec<(&UserId, Vec<usize>)> = by_user.into_iter().collect();
        let results: Result<Vec<Vec<(usize, Prediction<F>)>>> = groups
            .par_iter()
            .map(|(user, idx)| {
                let profile = profiles
                    .get(*user)
                    .ok_or_else(|| Error::InsufficientData(format!("no profile for user {user}")))?;
                let subset: Vec<StopPoint<F>> = idx.iter().map(|&i| stops[i].clone()).collect();
                let preds = self.predict_stops(profile, &subset, None, labels)?;
                Ok(idx.iter().copied().zip(preds).collect())
            })
            .collect();
        let mut out: Vec<Option<Prediction<F>>> = vec![None; stops.len()];
        for (i, p) in results?.into_iter().flatten() {
            out[i] = Some(p);
        }
        Ok(out.into_iter().map(|p| p.expect("every stop predicted")).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let version = v.get("version").and_then(|x| x.as_u64());
        if version != Some(u64::from(BUNDLE_VERSION)) {
            return Err(Error::Bundle(format!(
                "unsupported bundle version {version:?}, expected {BUNDLE_VERSION}"
            )));
        }
        let m: FusionModel<F> = serde_json::from_value(v)?;
        for p in &m.populations {
            if p.stats.quantizer() != &m.quantizer {
                return Err(Error::Bundle("population model quantizer differs from bundle quantizer".into()));
            }
        }
        if !m.strategies().contains(&m.params.strategy) {
            return Err(Error::Bundle("stacking bundle lacks its meta-model".into()));
        }
        Ok(m)
    }
}

/// Splits off each user's last training day when the user has at least two.
fn meta_split<F: Scalar>(days: &[ActivityDay<F>]) -> (Vec<ActivityDay<F>>, Vec<ActivityDay<F>>, Vec<ActivityDay<F>>) {
    let mut per_user: BTreeMap<&UserId, Vec<&ActivityDay<F>>> = BTreeMap::new();
    for d in days {
        per_user.entry(&d.user_id).or_default().push(d);
    }
    let (mut fit, mut held, mut single) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut ds) in per_user {
        ds.sort_by_key(|d| d.day);
        if ds.len() >= 2 {
            let last = ds.pop().expect("non-empty");
            held.push(last.clone());
            fit.extend(ds.into_iter().cloned());
        } else {
            fit.extend(ds.iter().map(|d| (*d).clone()));
            single.extend(ds.into_iter().cloned());
        }
    }
    (fit, held, single)
}

struct MetaModels<F> {
    scores: Option<Ensemble<F>>,
    decisions: Option<Ensemble<F>>,
    rows: usize,
    in_sample: usize,
}

fn train_meta<F: Scalar>(
    days: &[ActivityDay<F>],
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    pois: &[PoiRecord<F>],
    params: &FusionParams,
    want_scores: bool,
    want_decisions: bool,
) -> Result<MetaModels<F>> {
    let (fit, held, single) = meta_split(days);
    let base = train_base(&fit, profiles, pois, params)?;
    let fold = FusionModel {
        version: BUNDLE_VERSION,
        config: serde_json::Value::Null,
        params: FusionParams {
            strategy: FusionStrategy::Wmv,
            ..params.clone()
        },
        quantizer: base.quantizer,
        pois: base.pois,
        missing_work_km: base.missing_work_km,
        inferred_work: base.inferred_work,
        last_activity: base.last_activity,
        populations: base.populations,
        score_meta: None,
        decision_meta: None,
    };
    let models = fold.models();
    let mut score_rows: Vec<Vec<F>> = Vec::new();
    let mut decision_rows: Vec<Vec<F>> = Vec::new();
    let mut labels = Vec::new();
    let mut in_sample = 0;
    for (group, is_in_sample) in [(&held, false), (&single, true)] {
        type Row<F> = (Vec<F>, Vec<F>, usize);
        let scored: Result<Vec<Vec<Row<F>>>> = group
            .par_iter()
            .map(|day| {
                let profile = &profiles[&day.user_id];
                let mut prev = fold.last_activity.get(&day.user_id).copied().filter(|p| p.t_end <= day.stops[0].t_start);
                let mut out = Vec::new();
                for s in &day.stops {
                    let Some(truth) = s.label else { continue };
                    let parts = fold.member_scores(&models, profile, s, prev)?;
                    let decisions = parts.map(|p| p.map(|v| one_hot(ActivityLabel::ALL[argmax(&v)])));
                    out.push((stack_input(&parts), stack_input(&decisions), truth.index()));
                    prev = Some(PreviousActivity {
                        label: truth,
                        t_end: s.t_end,
                    });
                }
                Ok(out)
            })
            .collect();
        for (xs, xd, y) in scored?.into_iter().flatten() {
            score_rows.push(xs);
            decision_rows.push(xd);
            labels.push(y);
            if is_in_sample {
                in_sample += 1;
            }
        }
    }
    let meta_params = ForestParams {
        mode: EnsembleMode::Bagging,
        seed: params.forest.seed.wrapping_add(1),
        ..params.forest
    };
    let fit_meta = |rows: &[Vec<F>]| -> Result<Ensemble<F>> {
        Ensemble::fit(&Samples::from_rows(rows, labels.clone(), NUM_LABELS)?, &meta_params)
    };
    Ok(MetaModels {
        scores: want_scores.then(|| fit_meta(&score_rows)).transpose()?,
        decisions: want_decisions.then(|| fit_meta(&decision_rows)).transpose()?,
        rows: labels.len(),
        in_sample,
    })
}

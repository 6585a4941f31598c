//! Synthetic survey generator with known generative parameters.
//!
//! Users live in homes scattered over a rectangular city, work at offices,
//! study at schools and visit public sites. Every site has a kind with a
//! base label distribution; a user's label distribution at a public site is
//! the base reweighted by a gender tilt, an age tilt and a personal tilt.
//! Labels at home, at the user's own office and at the user's own school are
//! deterministic. Stop durations depend on the site kind only, so the best
//! possible classifier that knows the site and the user predicts the mode of
//! that distribution; its expected accuracy is the Bayes rate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::domain::{
    ActivityLabel, AgeBands, DayType, Gender, Point, PoiRecord, Projection, StopPoint, Timestamp, UserId, UserProfile,
    NUM_LABELS, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::ingest::{write_json, write_pois, write_profiles, write_stops, PoiMapping};
use crate::scalar::Scalar;

use ActivityLabel as A;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub users: usize,
    pub days_per_user: usize,
    pub first_day: NaiveDate,
    /// Users start on a day drawn uniformly from `0..=stagger_days`.
    pub stagger_days: usize,
    pub sites: usize,
    pub half_width_m: f64,
    pub half_height_m: f64,
    /// Standard deviation of the log personal tilt.
    pub personal_tilt_sigma: f64,
    pub pois_per_site: usize,
    pub noise_pois: usize,
    /// Fraction of workers whose profile omits the work location.
    pub missing_work_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            users: 50,
            days_per_user: 10,
            first_day: NaiveDate::from_ymd_opt(2013, 3, 11).expect("valid date"),
            stagger_days: 10,
            sites: 120,
            half_width_m: 8000.0,
            half_height_m: 6000.0,
            personal_tilt_sigma: 0.6,
            pois_per_site: 4,
            noise_pois: 150,
            missing_work_fraction: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.days_per_user == 0 {
            return Err(Error::param("synthetic data needs at least one user and one day"));
        }
        if self.sites < SiteKind::ALL.len() {
            return Err(Error::param(format!("need at least {} sites", SiteKind::ALL.len())));
        }
        if !(self.half_width_m >= 1000.0 && self.half_height_m >= 1000.0) {
            return Err(Error::param("city half extents must be at least 1000 m"));
        }
        if !(0.0..=1.0).contains(&self.missing_work_fraction) || !(self.personal_tilt_sigma >= 0.0) {
            return Err(Error::param("invalid tilt sigma or missing-work fraction"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Station,
    Mall,
    FoodCourt,
    Clinic,
    Park,
    Gym,
    Office,
    Services,
    School,
    Residential,
}

impl SiteKind {
    pub const ALL: [SiteKind; 10] = [
        SiteKind::Station,
        SiteKind::Mall,
        SiteKind::FoodCourt,
        SiteKind::Clinic,
        SiteKind::Park,
        SiteKind::Gym,
        SiteKind::Office,
        SiteKind::Services,
        SiteKind::School,
        SiteKind::Residential,
    ];

    fn share(self) -> f64 {
        match self {
            SiteKind::Station => 14.0,
            SiteKind::Mall => 10.0,
            SiteKind::FoodCourt => 18.0,
            SiteKind::Clinic => 8.0,
            SiteKind::Park => 12.0,
            SiteKind::Gym => 8.0,
            SiteKind::Office => 16.0,
            SiteKind::Services => 12.0,
            SiteKind::School => 8.0,
            SiteKind::Residential => 14.0,
        }
    }

    fn base_pairs(self) -> &'static [(ActivityLabel, f64)] {
        match self {
            SiteKind::Station => &[(A::ChangeModeTransfer, 0.75), (A::PickUpDropOff, 0.25)],
            SiteKind::Mall => &[(A::Shopping, 0.5), (A::MealEatingBreak, 0.3), (A::Entertainment, 0.2)],
            SiteKind::FoodCourt => &[(A::MealEatingBreak, 0.8), (A::Social, 0.2)],
            SiteKind::Clinic => &[(A::MedicalDental, 0.9), (A::PersonalErrand, 0.1)],
            SiteKind::Park => &[(A::Recreation, 0.5), (A::SportsExercise, 0.4), (A::Social, 0.1)],
            SiteKind::Gym => &[(A::SportsExercise, 0.9), (A::Recreation, 0.1)],
            SiteKind::Office => &[(A::WorkRelatedBusiness, 0.8), (A::MealEatingBreak, 0.2)],
            SiteKind::Services => &[(A::PersonalErrand, 0.7), (A::Shopping, 0.3)],
            SiteKind::School => &[(A::Education, 0.8), (A::AccompanySomeone, 0.2)],
            SiteKind::Residential => &[(A::OthersHome, 0.6), (A::Social, 0.3), (A::AccompanySomeone, 0.1)],
        }
    }

    /// Base label distribution of the kind.
    pub fn base(self) -> [f64; NUM_LABELS] {
        let mut v = [0.0; NUM_LABELS];
        for &(l, p) in self.base_pairs() {
            v[l.index()] = p;
        }
        v
    }

    /// Stop duration range in minutes.
    pub fn duration_minutes(self) -> (u32, u32) {
        match self {
            SiteKind::Station => (5, 15),
            SiteKind::Mall => (60, 150),
            SiteKind::FoodCourt => (30, 60),
            SiteKind::Clinic => (30, 90),
            SiteKind::Park => (45, 120),
            SiteKind::Gym => (60, 90),
            SiteKind::Office => (45, 120),
            SiteKind::Services => (15, 45),
            SiteKind::School => (90, 180),
            SiteKind::Residential => (60, 180),
        }
    }

    /// Relative weight of the kind as a discretionary destination.
    fn errand_weight(self) -> f64 {
        match self {
            SiteKind::Station => 0.6,
            SiteKind::Mall => 3.0,
            SiteKind::FoodCourt => 3.0,
            SiteKind::Clinic => 0.7,
            SiteKind::Park => 1.5,
            SiteKind::Gym => 1.0,
            SiteKind::Office => 0.6,
            SiteKind::Services => 1.5,
            SiteKind::School => 0.4,
            SiteKind::Residential => 1.5,
        }
    }
}

fn gender_tilt(g: Gender) -> [f64; NUM_LABELS] {
    let mut t = [1.0; NUM_LABELS];
    let pairs: &[(ActivityLabel, f64)] = match g {
        Gender::Female => &[(A::Shopping, 1.4), (A::AccompanySomeone, 1.5), (A::SportsExercise, 0.7)],
        Gender::Male => &[(A::SportsExercise, 1.4), (A::Entertainment, 1.3), (A::Shopping, 0.7)],
    };
    for &(l, f) in pairs {
        t[l.index()] = f;
    }
    t
}

fn age_tilt(age: u32) -> [f64; NUM_LABELS] {
    let mut t = [1.0; NUM_LABELS];
    let pairs: &[(ActivityLabel, f64)] = match age {
        0..=24 => &[(A::Entertainment, 1.5), (A::Social, 1.4), (A::MedicalDental, 0.6)],
        25..=40 => &[(A::MealEatingBreak, 1.2), (A::SportsExercise, 1.2)],
        41..=60 => &[(A::AccompanySomeone, 1.4), (A::PersonalErrand, 1.2)],
        _ => &[(A::MedicalDental, 1.8), (A::Recreation, 1.4), (A::Entertainment, 0.6)],
    };
    for &(l, f) in pairs {
        t[l.index()] = f;
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: u32,
    pub kind: SiteKind,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    Worker,
    Student,
    NonWorker,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: UserId,
    pub occupation: Occupation,
    pub home: (f64, f64),
    /// Office of a worker or school of a student.
    pub anchor_site: Option<u32>,
    /// Multiplicative label weights applied to a site's base distribution.
    pub tilt: Vec<f64>,
    pub first_day: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "at", content = "site")]
pub enum SiteRef {
    Home,
    Site(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopTruth {
    pub user_id: UserId,
    pub t_start: Timestamp,
    pub site: SiteRef,
    /// Generative label distribution the stop's label was drawn from.
    pub distribution: Vec<f64>,
}

impl StopTruth {
    /// Probability of the most likely label.
    pub fn bayes_accuracy(&self) -> f64 {
        self.distribution.iter().copied().fold(0.0, f64::max)
    }
}

/// Generative parameters and the per-stop provenance of a synthetic run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub base: BTreeMap<SiteKind, Vec<f64>>,
    pub sites: Vec<Site>,
    pub users: Vec<UserTruth>,
    pub stops: Vec<StopTruth>,
}

impl GroundTruth {
    pub fn read(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }

    /// Truth entries keyed by (user, start time).
    pub fn by_stop(&self) -> BTreeMap<(&UserId, Timestamp), &StopTruth> {
        self.stops.iter().map(|s| ((&s.user_id, s.t_start), s)).collect()
    }

    /// Mean Bayes accuracy over the given stops; stops without a truth entry
    /// are an error.
    pub fn bayes_rate<'a, F: 'a>(&self, stops: impl IntoIterator<Item = &'a StopPoint<F>>) -> Result<f64> {
        let index = self.by_stop();
        let mut sum = 0.0;
        let mut n = 0usize;
        for s in stops {
            let t = index
                .get(&(&s.user_id, s.t_start))
                .ok_or_else(|| Error::InsufficientData(format!("no generator truth for stop of {}", s.user_id)))?;
            sum += t.bayes_accuracy();
            n += 1;
        }
        if n == 0 {
            return Err(Error::InsufficientData("no stops for Bayes rate".into()));
        }
        Ok(sum / n as f64)
    }
}

#[derive(Clone, Debug)]
pub struct SynthDataset<F> {
    pub stops: Vec<StopPoint<F>>,
    pub profiles: BTreeMap<UserId, UserProfile<F>>,
    pub pois: Vec<PoiRecord<F>>,
    pub mapping: PoiMapping,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFiles {
    pub stops: PathBuf,
    pub profiles: PathBuf,
    pub pois: PathBuf,
    pub mapping: PathBuf,
    pub truth: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            stops: dir.join("stops.csv"),
            profiles: dir.join("profiles.csv"),
            pois: dir.join("pois.csv"),
            mapping: dir.join("poi_mapping.json"),
            truth: dir.join("truth.json"),
        }
    }
}

impl<F: Scalar> SynthDataset<F> {
    pub fn write(&self, dir: &Path, projection: &Projection) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = SynthFiles::in_dir(dir);
        write_stops(&files.stops, &self.stops)?;
        write_profiles(&files.profiles, &self.profiles, projection)?;
        write_pois(&files.pois, &self.pois, projection)?;
        write_json(&files.mapping, &self.mapping)?;
        write_json(&files.truth, &self.truth)?;
        Ok(files)
    }
}

/// Rounds through the 9-decimal text form used in files, so that data read
/// back from disk is identical to the in-memory dataset.
fn file_coord(v: f64) -> f64 {
    format!("{v:.9}").parse().expect("formatted float parses")
}

struct Located<F> {
    point: Point<F>,
    lon: f64,
    lat: f64,
}

fn locate<F: Scalar>(projection: &Projection, x: f64, y: f64) -> Located<F> {
    let (lon, lat) = projection.unproject(x, y);
    let (lon, lat) = (file_coord(lon), file_coord(lat));
    let (px, py) = projection.project(lon, lat);
    Located {
        point: Point::new(F::lit(px), F::lit(py)),
        lon,
        lat,
    }
}

fn disc_jitter(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    let r = radius * rng.gen::<f64>().sqrt();
    let a = rng.gen::<f64>() * std::f64::consts::TAU;
    (r * a.cos(), r * a.sin())
}

fn site_jitter(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let n = Normal::new(0.0, 15.0).expect("valid normal");
    loop {
        let (dx, dy) = (n.sample(rng), n.sample(rng));
        if dx * dx + dy * dy <= 40.0 * 40.0 {
            return (dx, dy);
        }
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

struct Visit {
    site: SiteRef,
    start_min: u32,
    end_min: u32,
}

struct Planner<'a> {
    sites: &'a [Site],
    by_kind: BTreeMap<SiteKind, Vec<u32>>,
}

struct UserPlan {
    kind_weights: WeightedIndex<f64>,
    favourites: BTreeMap<SiteKind, Vec<u32>>,
    nearby: BTreeMap<SiteKind, Vec<u32>>,
    lunch: Vec<u32>,
    station: Vec<u32>,
}

const LAST_START_MIN: u32 = 22 * 60 + 30;
const DAY_END_MIN: u32 = 23 * 60 + 59;

impl Planner<'_> {
    fn nearest(&self, kind: SiteKind, from: (f64, f64), n: usize) -> Vec<u32> {
        let mut ids = self.by_kind[&kind].clone();
        ids.sort_by(|&a, &b| {
            let sa = &self.sites[a as usize];
            let sb = &self.sites[b as usize];
            dist((sa.x, sa.y), from).total_cmp(&dist((sb.x, sb.y), from)).then(a.cmp(&b))
        });
        ids.truncate(n);
        ids
    }

    fn plan_user(&self, rng: &mut ChaCha8Rng, home: (f64, f64), anchor: Option<&Site>) -> UserPlan {
        let noise = Normal::<f64>::new(0.0, 0.5).expect("valid normal");
        let weights: Vec<f64> = SiteKind::ALL
            .iter()
            .map(|k| k.errand_weight() * noise.sample(rng).exp())
            .collect();
        let mut favourites = BTreeMap::new();
        let mut nearby = BTreeMap::new();
        for kind in SiteKind::ALL {
            let near = self.nearest(kind, home, 6);
            let n_fav = rng.gen_range(1..=2).min(near.len());
            let fav: Vec<u32> = near.choose_multiple(rng, n_fav).copied().collect();
            favourites.insert(kind, fav);
            nearby.insert(kind, near);
        }
        let work_pos = anchor.map_or(home, |s| (s.x, s.y));
        UserPlan {
            kind_weights: WeightedIndex::new(weights).expect("positive weights"),
            favourites,
            nearby,
            lunch: self.nearest(SiteKind::FoodCourt, work_pos, 2),
            station: self.nearest(SiteKind::Station, home, 1),
        }
    }

    fn errand_site(&self, rng: &mut ChaCha8Rng, plan: &UserPlan) -> (SiteKind, u32) {
        let kind = SiteKind::ALL[plan.kind_weights.sample(rng)];
        let site = if rng.gen_bool(0.75) {
            *plan.favourites[&kind].choose(rng).expect("non-empty favourites")
        } else {
            *plan.nearby[&kind].choose(rng).expect("non-empty nearby")
        };
        (kind, site)
    }

    fn duration(&self, rng: &mut ChaCha8Rng, kind: SiteKind) -> u32 {
        let (lo, hi) = kind.duration_minutes();
        rng.gen_range(lo..=hi)
    }

    fn day(&self, rng: &mut ChaCha8Rng, user: &UserTruth, plan: &UserPlan, day_type: DayType) -> Vec<Visit> {
        let mut visits = Vec::new();
        let mut t: u32;
        let travel = |rng: &mut ChaCha8Rng| rng.gen_range(10..=30u32);
        let push = |visits: &mut Vec<Visit>, site: SiteRef, start: u32, end: u32| {
            visits.push(Visit {
                site,
                start_min: start,
                end_min: end,
            })
        };
        let commuting = day_type == DayType::Weekday && user.occupation != Occupation::NonWorker;
        let (errands_lo, errands_hi) = if commuting { (0, 2) } else { (1, 3) };
        let depart = if commuting { rng.gen_range(390..=480) } else { rng.gen_range(480..=660) };
        push(&mut visits, SiteRef::Home, 0, depart);
        t = depart;
        if commuting {
            let anchor = user.anchor_site.expect("commuters have an anchor site");
            if rng.gen_bool(0.4) {
                t += travel(rng);
                let d = self.duration(rng, SiteKind::Station);
                push(&mut visits, SiteRef::Site(plan.station[0]), t, t + d);
                t += d;
            }
            t += travel(rng);
            match user.occupation {
                Occupation::Worker => {
                    let leave = rng.gen_range(1050..=1110u32);
                    if rng.gen_bool(0.5) {
                        let lunch_start = rng.gen_range(705..=750u32).max(t + 60);
                        push(&mut visits, SiteRef::Site(anchor), t, lunch_start);
                        let ls = lunch_start + rng.gen_range(5..=10);
                        let le = ls + self.duration(rng, SiteKind::FoodCourt);
                        push(&mut visits, SiteRef::Site(*plan.lunch.choose(rng).expect("food courts")), ls, le);
                        t = le + rng.gen_range(5..=10);
                    }
                    push(&mut visits, SiteRef::Site(anchor), t, leave);
                    t = leave;
                }
                _ => {
                    let leave = rng.gen_range(810..=900u32);
                    push(&mut visits, SiteRef::Site(anchor), t, leave);
                    t = leave;
                }
            }
        }
        let n_errands = rng.gen_range(errands_lo..=errands_hi);
        for _ in 0..n_errands {
            let (kind, site) = self.errand_site(rng, plan);
            let start = t + travel(rng);
            let end = start + self.duration(rng, kind);
            if end > LAST_START_MIN - 20 {
                break;
            }
            push(&mut visits, SiteRef::Site(site), start, end);
            t = end;
        }
        let back = (t + travel(rng)).min(LAST_START_MIN);
        push(&mut visits, SiteRef::Home, back, DAY_END_MIN);
        visits
    }
}

fn place_sites(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<Site> {
    let total: f64 = SiteKind::ALL.iter().map(|k| k.share()).sum();
    let mut kinds = Vec::with_capacity(cfg.sites);
    for k in SiteKind::ALL {
        let n = ((k.share() / total) * cfg.sites as f64).round().max(1.0) as usize;
        kinds.extend(std::iter::repeat(k).take(n));
    }
    kinds.truncate(cfg.sites);
    while kinds.len() < cfg.sites {
        kinds.push(SiteKind::ALL[kinds.len() % SiteKind::ALL.len()]);
    }
    let mut sites: Vec<Site> = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let (x, y) = sample_far(rng, cfg, |p| sites.iter().all(|s| dist((s.x, s.y), p) >= 120.0));
        sites.push(Site {
            id: sites.len() as u32,
            kind,
            x,
            y,
        });
    }
    sites
}

fn sample_far(rng: &mut ChaCha8Rng, cfg: &SynthConfig, ok: impl Fn((f64, f64)) -> bool) -> (f64, f64) {
    let (w, h) = (cfg.half_width_m * 0.95, cfg.half_height_m * 0.95);
    loop {
        let p = (rng.gen_range(-w..w), rng.gen_range(-h..h));
        if ok(p) {
            return p;
        }
    }
}

/// Generates a synthetic survey. Deterministic in `cfg`.
pub fn generate<F: Scalar>(cfg: &SynthConfig, projection: &Projection, bands: &AgeBands) -> Result<SynthDataset<F>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mapping = PoiMapping::builtin();
    let sites = place_sites(&mut rng, cfg);
    let mut by_kind: BTreeMap<SiteKind, Vec<u32>> = BTreeMap::new();
    for s in &sites {
        by_kind.entry(s.kind).or_default().push(s.id);
    }
    let planner = Planner {
        sites: &sites,
        by_kind,
    };
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    let first_day = (cfg.first_day - epoch).num_days();
    let tilt_noise = Normal::new(0.0, cfg.personal_tilt_sigma.max(1e-12)).map_err(|e| Error::param(e.to_string()))?;

    let mut users = Vec::with_capacity(cfg.users);
    let mut profiles = BTreeMap::new();
    let mut plans = Vec::with_capacity(cfg.users);
    let width = cfg.users.to_string().len().max(3);
    for i in 0..cfg.users {
        let user_id = UserId(format!("u{:0width$}", i + 1));
        let gender = if rng.gen_bool(0.5) { Gender::Female } else { Gender::Male };
        let age: u32 = rng.gen_range(18..=75);
        let occupation = match rng.gen::<f64>() {
            _ if age < 23 => Occupation::Student,
            r if r < 0.7 && age < 66 => Occupation::Worker,
            _ => Occupation::NonWorker,
        };
        let home = sample_far(&mut rng, cfg, |p| sites.iter().all(|s| dist((s.x, s.y), p) >= 150.0));
        let anchor_site = match occupation {
            Occupation::Worker => planner.by_kind[&SiteKind::Office].choose(&mut rng).copied(),
            Occupation::Student => Some(planner.nearest(SiteKind::School, home, 2)[rng.gen_range(0..2)]),
            Occupation::NonWorker => None,
        };
        let gt = gender_tilt(gender);
        let at = age_tilt(age);
        let tilt: Vec<f64> = (0..NUM_LABELS)
            .map(|l| gt[l] * at[l] * tilt_noise.sample(&mut rng).exp())
            .collect();
        let plan = planner.plan_user(&mut rng, home, anchor_site.map(|s| &sites[s as usize]));
        let start = first_day + rng.gen_range(0..=cfg.stagger_days) as i64;
        let home_loc: Located<F> = locate(projection, home.0, home.1);
        let work = match (occupation, anchor_site) {
            (Occupation::Worker, Some(s)) if !rng.gen_bool(cfg.missing_work_fraction) => {
                let site = &sites[s as usize];
                Some(locate::<F>(projection, site.x, site.y).point)
            }
            _ => None,
        };
        profiles.insert(
            user_id.clone(),
            UserProfile {
                user_id: user_id.clone(),
                gender,
                age,
                age_band: bands.band_of(age),
                home: home_loc.point,
                work,
            },
        );
        users.push(UserTruth {
            user_id,
            occupation,
            home,
            anchor_site,
            tilt,
            first_day: start,
        });
        plans.push(plan);
    }

    let mut stops = Vec::new();
    let mut truths = Vec::new();
    for (user, plan) in users.iter().zip(&plans) {
        for d in 0..cfg.days_per_user as i64 {
            let day = user.first_day + d;
            let visits = planner.day(&mut rng, user, plan, DayType::of_day(day));
            for v in visits {
                let (distribution, centre) = match v.site {
                    SiteRef::Home => (one_hot(A::Home), user.home),
                    SiteRef::Site(id) => {
                        let site = &sites[id as usize];
                        let dist = if Some(id) == user.anchor_site {
                            match user.occupation {
                                Occupation::Student => one_hot(A::Education),
                                _ => one_hot(A::Work),
                            }
                        } else {
                            tilted(site.kind, &user.tilt)
                        };
                        (dist, (site.x, site.y))
                    }
                };
                let (dx, dy) = match v.site {
                    SiteRef::Home => disc_jitter(&mut rng, 25.0),
                    SiteRef::Site(_) => site_jitter(&mut rng),
                };
                let label = ActivityLabel::ALL[WeightedIndex::new(&distribution).expect("valid distribution").sample(&mut rng)];
                let loc: Located<F> = locate(projection, centre.0 + dx, centre.1 + dy);
                let t_start = day * SECONDS_PER_DAY + i64::from(v.start_min) * 60;
                let t_end = day * SECONDS_PER_DAY + i64::from(v.end_min) * 60;
                stops.push(StopPoint {
                    user_id: user.user_id.clone(),
                    x: loc.point.x,
                    y: loc.point.y,
                    lon: loc.lon,
                    lat: loc.lat,
                    t_start,
                    t_end,
                    label: Some(label),
                });
                truths.push(StopTruth {
                    user_id: user.user_id.clone(),
                    t_start,
                    site: v.site,
                    distribution: distribution.to_vec(),
                });
            }
        }
    }

    let pois = place_pois(&mut rng, cfg, projection, &mapping, &sites, &users);
    let base = SiteKind::ALL.iter().map(|k| (*k, k.base().to_vec())).collect();
    Ok(SynthDataset {
        stops,
        profiles,
        pois,
        mapping,
        truth: GroundTruth {
            config: cfg.clone(),
            base,
            sites,
            users,
            stops: truths,
        },
    })
}

fn one_hot(l: ActivityLabel) -> [f64; NUM_LABELS] {
    let mut v = [0.0; NUM_LABELS];
    v[l.index()] = 1.0;
    v
}

/// Base distribution of `kind` reweighted by `tilt` and renormalized.
pub fn tilted(kind: SiteKind, tilt: &[f64]) -> [f64; NUM_LABELS] {
    let mut v = kind.base();
    for (p, t) in v.iter_mut().zip(tilt) {
        *p *= t;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|p| *p /= s);
    v
}

fn place_pois<F: Scalar>(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    projection: &Projection,
    mapping: &PoiMapping,
    sites: &[Site],
    users: &[UserTruth],
) -> Vec<PoiRecord<F>> {
    let mut categories: BTreeMap<ActivityLabel, Vec<&str>> = BTreeMap::new();
    for (raw, _) in &mapping.0 {
        if let Some(l) = mapping.label_of(raw) {
            categories.entry(l).or_default().push(raw);
        }
    }
    let all: Vec<&str> = mapping.0.keys().map(String::as_str).collect();
    let mut pois = Vec::new();
    let push = |pois: &mut Vec<PoiRecord<F>>, x: f64, y: f64, raw: &str| {
        let loc: Located<F> = locate(projection, x, y);
        pois.push(PoiRecord {
            position: loc.point,
            raw_category: raw.to_owned(),
            mapped_label: mapping.label_of(raw),
        });
    };
    for site in sites {
        let base = site.kind.base();
        let pick = WeightedIndex::new(base).expect("valid base");
        for _ in 0..cfg.pois_per_site {
            let l = ActivityLabel::ALL[pick.sample(rng)];
            let Some(cats) = categories.get(&l) else { continue };
            let raw = *cats.choose(rng).expect("non-empty");
            let (dx, dy) = disc_jitter(rng, 30.0);
            push(&mut pois, site.x + dx, site.y + dy, raw);
        }
    }
    if let Some(res) = categories.get(&A::Home) {
        for u in users {
            let (dx, dy) = disc_jitter(rng, 30.0);
            push(&mut pois, u.home.0 + dx, u.home.1 + dy, res[0]);
        }
    }
    for _ in 0..cfg.noise_pois {
        let (x, y) = sample_far(rng, cfg, |_| true);
        let raw = *all.choose(rng).expect("non-empty mapping");
        push(&mut pois, x, y, raw);
    }
    pois
}

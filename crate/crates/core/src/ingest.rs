//! Reading and writing the survey files, and the day-level cleaning rules
//! applied before any learning.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::domain::{
    ActivityDay, ActivityLabel, AgeBands, Gender, LabelField, Point, PoiRecord, Projection, StopPoint, Timestamp,
    UserId, UserProfile,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const STOP_HEADER: [&str; 6] = ["user_id", "lon", "lat", "t_start", "t_end", "label"];
pub const PROFILE_HEADER: [&str; 7] = ["user_id", "gender", "age", "home_lon", "home_lat", "work_lon", "work_lat"];
pub const POI_HEADER: [&str; 3] = ["lon", "lat", "raw_category"];

/// A data row that could not be parsed and was skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedStops<F> {
    pub stops: Vec<StopPoint<F>>,
    pub skipped: Vec<SkippedRow>,
    /// Rows labelled `Other`, dropped at ingest.
    pub other_dropped: usize,
}

pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let t = s.trim();
    if let Ok(n) = t.parse::<NaiveDateTime>() {
        return Ok(n.and_utc().timestamp());
    }
    if let Ok(n) = NaiveDateTime::parse_from_str(t, "%Y-%m-%d %H:%M:%S") {
        return Ok(n.and_utc().timestamp());
    }
    DateTime::parse_from_rfc3339(t)
        .map(|d| d.naive_local().and_utc().timestamp())
        .map_err(|_| Error::param(format!("unparseable timestamp {t:?}")))
}

pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::from_timestamp(t, 0)
        .map(|d| d.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| t.to_string())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn check_header(rec: &csv::StringRecord, expected: &[&str], min_cols: usize, path: &Path) -> Result<usize> {
    let names: Vec<&str> = rec.iter().collect();
    let ok = names.len() >= min_cols
        && names.len() <= expected.len()
        && names.iter().zip(expected).all(|(a, b)| a.eq_ignore_ascii_case(b));
    if !ok {
        return Err(Error::Schema {
            path: path.to_owned(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), names.join(",")),
        });
    }
    Ok(names.len())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field_f64(rec: &csv::StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let s = rec.get(i).unwrap_or("");
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad {name} {s:?}"))
}

/// Parses a stops file, projecting coordinates with `projection`.
///
/// Swapped start/end times are kept here; cleaning decides about them.
pub fn parse_stops<F: Scalar, R: Read>(input: R, path: &Path, projection: &Projection) -> Result<ParsedStops<F>> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let mut out = ParsedStops {
        stops: Vec::new(),
        skipped: Vec::new(),
        other_dropped: 0,
    };
    let Some(header) = records.next() else {
        warn!("{}: empty stops file", path.display());
        return Ok(out);
    };
    check_header(&header?, &STOP_HEADER, STOP_HEADER.len(), path)?;
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != STOP_HEADER.len() {
            return Err(Error::Schema {
                path: path.to_owned(),
                line,
                message: format!("expected {} columns, found {}", STOP_HEADER.len(), rec.len()),
            });
        }
        let parsed = (|| -> std::result::Result<Option<StopPoint<F>>, String> {
            let user = rec[0].to_owned();
            if user.is_empty() {
                return Err("empty user_id".into());
            }
            let lon = field_f64(&rec, 1, "lon")?;
            let lat = field_f64(&rec, 2, "lat")?;
            let t_start = parse_timestamp(&rec[3]).map_err(|e| e.to_string())?;
            let t_end = parse_timestamp(&rec[4]).map_err(|e| e.to_string())?;
            let label = match rec[5].parse::<LabelField>().map_err(|e| e.to_string())? {
                LabelField::Label(l) => Some(l),
                LabelField::Missing => None,
                LabelField::Other => return Ok(None),
            };
            let (x, y) = projection.project(lon, lat);
            Ok(Some(StopPoint {
                user_id: UserId(user),
                x: F::lit(x),
                y: F::lit(y),
                lon,
                lat,
                t_start,
                t_end,
                label,
            }))
        })();
        match parsed {
            Ok(Some(s)) => out.stops.push(s),
            Ok(None) => out.other_dropped += 1,
            Err(reason) => out.skipped.push(SkippedRow { line, reason }),
        }
    }
    for s in &out.skipped {
        warn!("{}:{}: skipped row: {}", path.display(), s.line, s.reason);
    }
    Ok(out)
}

pub fn read_stops<F: Scalar>(path: &Path, projection: &Projection) -> Result<ParsedStops<F>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_stops(f, path, projection)
}

pub fn parse_profiles<F: Scalar, R: Read>(
    input: R,
    path: &Path,
    projection: &Projection,
    bands: &AgeBands,
) -> Result<(BTreeMap<UserId, UserProfile<F>>, Vec<SkippedRow>)> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let mut profiles = BTreeMap::new();
    let mut skipped = Vec::new();
    let Some(header) = records.next() else {
        warn!("{}: empty profiles file", path.display());
        return Ok((profiles, skipped));
    };
    let cols = check_header(&header?, &PROFILE_HEADER, 5, path)?;
    if cols == 6 {
        return Err(Error::Schema {
            path: path.to_owned(),
            line: 1,
            message: "work location needs both work_lon and work_lat".into(),
        });
    }
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != cols {
            return Err(Error::Schema {
                path: path.to_owned(),
                line,
                message: format!("expected {cols} columns, found {}", rec.len()),
            });
        }
        let parsed = (|| -> std::result::Result<UserProfile<F>, String> {
            let gender: Gender = rec[1].parse().map_err(|e: Error| e.to_string())?;
            let age: u32 = rec[2].parse().map_err(|_| format!("bad age {:?}", &rec[2]))?;
            let (hx, hy) = projection.project(field_f64(&rec, 3, "home_lon")?, field_f64(&rec, 4, "home_lat")?);
            let work = if cols == 7 && !(rec[5].is_empty() && rec[6].is_empty()) {
                let (wx, wy) = projection.project(field_f64(&rec, 5, "work_lon")?, field_f64(&rec, 6, "work_lat")?);
                Some(Point::new(F::lit(wx), F::lit(wy)))
            } else {
                None
            };
            Ok(UserProfile {
                user_id: UserId(rec[0].to_owned()),
                gender,
                age,
                age_band: bands.band_of(age),
                home: Point::new(F::lit(hx), F::lit(hy)),
                work,
            })
        })();
        match parsed {
            Ok(p) => {
                profiles.insert(p.user_id.clone(), p);
            }
            Err(reason) => {
                warn!("{}:{line}: skipped profile: {reason}", path.display());
                skipped.push(SkippedRow { line, reason });
            }
        }
    }
    Ok((profiles, skipped))
}

pub fn read_profiles<F: Scalar>(
    path: &Path,
    projection: &Projection,
    bands: &AgeBands,
) -> Result<(BTreeMap<UserId, UserProfile<F>>, Vec<SkippedRow>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(f, path, projection, bands)
}

/// Raw POI category to activity label. Categories mapped to `Other` or not
/// listed carry no label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiMapping(pub BTreeMap<String, String>);

impl PoiMapping {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../resources/poi_mapping.json")).expect("builtin POI mapping is valid")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: PoiMapping = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.0 {
            v.parse::<LabelField>()
                .map_err(|_| Error::param(format!("POI category {k:?} maps to unknown activity {v:?}")))?;
        }
        Ok(())
    }

    pub fn label_of(&self, raw_category: &str) -> Option<ActivityLabel> {
        match self.0.get(raw_category.trim())?.parse::<LabelField>() {
            Ok(LabelField::Label(l)) => Some(l),
            _ => None,
        }
    }
}

pub fn parse_pois<F: Scalar, R: Read>(
    input: R,
    path: &Path,
    projection: &Projection,
    mapping: &PoiMapping,
) -> Result<(Vec<PoiRecord<F>>, Vec<SkippedRow>)> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let mut pois = Vec::new();
    let mut skipped = Vec::new();
    let Some(header) = records.next() else {
        warn!("{}: empty POI file", path.display());
        return Ok((pois, skipped));
    };
    check_header(&header?, &POI_HEADER, POI_HEADER.len(), path)?;
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != POI_HEADER.len() {
            return Err(Error::Schema {
                path: path.to_owned(),
                line,
                message: format!("expected {} columns, found {}", POI_HEADER.len(), rec.len()),
            });
        }
        match (field_f64(&rec, 0, "lon"), field_f64(&rec, 1, "lat")) {
            (Ok(lon), Ok(lat)) => {
                let (x, y) = projection.project(lon, lat);
                pois.push(PoiRecord {
                    position: Point::new(F::lit(x), F::lit(y)),
                    raw_category: rec[2].to_owned(),
                    mapped_label: mapping.label_of(&rec[2]),
                });
            }
            (Err(reason), _) | (_, Err(reason)) => skipped.push(SkippedRow { line, reason }),
        }
    }
    Ok((pois, skipped))
}

pub fn read_pois<F: Scalar>(
    path: &Path,
    projection: &Projection,
    mapping: &PoiMapping,
) -> Result<(Vec<PoiRecord<F>>, Vec<SkippedRow>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_pois(f, path, projection, mapping)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn coord(v: f64) -> String {
    format!("{v:.9}")
}

pub fn write_stops<F: Scalar>(path: &Path, stops: &[StopPoint<F>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(STOP_HEADER)?;
    for s in stops {
        w.write_record([
            s.user_id.as_str(),
            &coord(s.lon),
            &coord(s.lat),
            &format_timestamp(s.t_start),
            &format_timestamp(s.t_end),
            s.label.map_or("", |l| l.name()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_profiles<F: Scalar>(
    path: &Path,
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    projection: &Projection,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PROFILE_HEADER)?;
    for p in profiles.values() {
        let (hlon, hlat) = projection.unproject(p.home.x.as_f64(), p.home.y.as_f64());
        let (wlon, wlat) = p
            .work
            .map(|wk| {
                let (a, b) = projection.unproject(wk.x.as_f64(), wk.y.as_f64());
                (coord(a), coord(b))
            })
            .unwrap_or_default();
        w.write_record([
            p.user_id.as_str(),
            p.gender.name(),
            &p.age.to_string(),
            &coord(hlon),
            &coord(hlat),
            &wlon,
            &wlat,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pois<F: Scalar>(path: &Path, pois: &[PoiRecord<F>], projection: &Projection) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(POI_HEADER)?;
    for p in pois {
        let (lon, lat) = projection.unproject(p.position.x.as_f64(), p.position.y.as_f64());
        w.write_record([coord(lon), coord(lat), p.raw_category.clone()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))
}

/// Groups stops into user-days by the calendar day each stop starts on.
/// Days come out ordered by user then day, stops by start time.
pub fn group_days<F: Scalar>(stops: Vec<StopPoint<F>>) -> Vec<ActivityDay<F>> {
    let mut map: BTreeMap<(UserId, i64), Vec<StopPoint<F>>> = BTreeMap::new();
    for s in stops {
        map.entry((s.user_id.clone(), s.day())).or_default().push(s);
    }
    map.into_iter()
        .map(|((user_id, day), mut stops)| {
            stops.sort_by_key(|s| (s.t_start, s.t_end));
            ActivityDay { user_id, day, stops }
        })
        .collect()
}

/// Simple polygon in (lon, lat) degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyArea {
    pub vertices: Vec<(f64, f64)>,
}

impl StudyArea {
    pub fn rectangle(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        StudyArea {
            vertices: vec![(min_lon, min_lat), (max_lon, min_lat), (max_lon, max_lat), (min_lon, max_lat)],
        }
    }

    /// Even-odd ray casting; points on the boundary count as inside for
    /// axis-aligned rectangles.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        let v = &self.vertices;
        if v.len() < 3 {
            return false;
        }
        let (min_lon, max_lon, min_lat, max_lat) = v.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
        );
        if !(lon >= min_lon && lon <= max_lon && lat >= min_lat && lat <= max_lat) {
            return false;
        }
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let (xi, yi) = v[i];
            let (xj, yj) = v[j];
            if (yi > lat) != (yj > lat) && lon < (xj - xi) * (lat - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside || self.vertices.len() == 4 && self.is_axis_rectangle()
    }

    fn is_axis_rectangle(&self) -> bool {
        let v = &self.vertices;
        (0..4).all(|i| {
            let (a, b) = (v[i], v[(i + 1) % 4]);
            a.0 == b.0 || a.1 == b.1
        })
    }
}

impl Default for StudyArea {
    /// Bounding rectangle of Singapore.
    fn default() -> Self {
        StudyArea::rectangle(103.59, 1.15, 104.10, 1.48)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningRules {
    /// Largest allowed distance between the day's first/last stop and home.
    pub home_radius_m: f64,
    /// Non-home activities closer than this to home invalidate the day.
    pub min_activity_home_distance_m: f64,
    pub max_duration_hours: f64,
    pub area: StudyArea,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            home_radius_m: 50.0,
            min_activity_home_distance_m: 10.0,
            max_duration_hours: 24.0,
            area: StudyArea::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardRule {
    NoProfile,
    /// Day does not start and end with a Home activity.
    NotHomeBounded,
    /// First or last Home stop too far from the registered home.
    HomeTooFar,
    /// A non-home activity lies within the minimum distance of home.
    ActivityAtHome,
    /// End time not after start time.
    SwappedTime,
    OverlongDuration,
    OutsideStudyArea,
    Unlabelled,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub total_points: usize,
    pub points_kept: usize,
    pub days_kept: usize,
    pub users_kept: usize,
    pub days_discarded: BTreeMap<DiscardRule, usize>,
    pub points_discarded: BTreeMap<DiscardRule, usize>,
}

impl CleaningReport {
    /// Discarded plus kept points equals the number of points examined.
    pub fn reconciles(&self) -> bool {
        self.points_discarded.values().sum::<usize>() + self.points_kept == self.total_points
    }

    fn discard_points(&mut self, rule: DiscardRule, n: usize) {
        if n > 0 {
            *self.points_discarded.entry(rule).or_default() += n;
        }
    }
}

struct DayOutcome<F> {
    kept: Option<ActivityDay<F>>,
    day_rule: Option<DiscardRule>,
    point_discards: Vec<(DiscardRule, usize)>,
    total: usize,
}

fn day_rule_violation<F: Scalar>(
    stops: &[StopPoint<F>],
    profile: &UserProfile<F>,
    rules: &CleaningRules,
) -> Option<DiscardRule> {
    let (Some(first), Some(last)) = (stops.first(), stops.last()) else {
        return Some(DiscardRule::NotHomeBounded);
    };
    if first.label != Some(ActivityLabel::Home) || last.label != Some(ActivityLabel::Home) {
        return Some(DiscardRule::NotHomeBounded);
    }
    let radius = F::lit(rules.home_radius_m);
    if first.position().dist(&profile.home) > radius || last.position().dist(&profile.home) > radius {
        return Some(DiscardRule::HomeTooFar);
    }
    let min_d = F::lit(rules.min_activity_home_distance_m);
    if stops
        .iter()
        .any(|s| matches!(s.label, Some(l) if l != ActivityLabel::Home) && s.position().dist(&profile.home) < min_d)
    {
        return Some(DiscardRule::ActivityAtHome);
    }
    None
}

fn point_rule_violation<F: Scalar>(s: &StopPoint<F>, rules: &CleaningRules) -> Option<DiscardRule> {
    if s.t_end <= s.t_start {
        Some(DiscardRule::SwappedTime)
    } else if s.duration_secs() as f64 > rules.max_duration_hours * 3600.0 {
        Some(DiscardRule::OverlongDuration)
    } else if !rules.area.contains(s.lon, s.lat) {
        Some(DiscardRule::OutsideStudyArea)
    } else if s.label.is_none() {
        Some(DiscardRule::Unlabelled)
    } else {
        None
    }
}

fn clean_day<F: Scalar>(
    day: ActivityDay<F>,
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    rules: &CleaningRules,
) -> DayOutcome<F> {
    let total = day.stops.len();
    let discard = |rule, point_discards| DayOutcome {
        kept: None,
        day_rule: Some(rule),
        point_discards,
        total,
    };
    let Some(profile) = profiles.get(&day.user_id) else {
        return discard(DiscardRule::NoProfile, vec![(DiscardRule::NoProfile, total)]);
    };
    if let Some(rule) = day_rule_violation(&day.stops, profile, rules) {
        return discard(rule, vec![(rule, total)]);
    }
    let mut point_discards: BTreeMap<DiscardRule, usize> = BTreeMap::new();
    let ActivityDay { user_id, day, stops } = day;
    let kept: Vec<StopPoint<F>> = stops
        .into_iter()
        .filter(|s| match point_rule_violation(s, rules) {
            Some(r) => {
                *point_discards.entry(r).or_default() += 1;
                false
            }
            None => true,
        })
        .collect();
    let mut pd: Vec<(DiscardRule, usize)> = point_discards.into_iter().collect();
    if kept.len() < total {
        if let Some(rule) = day_rule_violation(&kept, profile, rules) {
            pd.push((rule, kept.len()));
            return discard(rule, pd);
        }
    }
    DayOutcome {
        kept: Some(ActivityDay {
            user_id,
            day,
            stops: kept,
        }),
        day_rule: None,
        point_discards: pd,
        total,
    }
}

/// Applies the cleaning rules: day-scoped rules first (home-bounded day,
/// home distance, activities at home), then point rules (swapped times,
/// over-long stops, stops outside the study area, unlabelled stops). A day
/// that loses points is checked again against the day rules, so the result
/// is a fixed point of `clean`.
pub fn clean<F: Scalar>(
    days: Vec<ActivityDay<F>>,
    profiles: &BTreeMap<UserId, UserProfile<F>>,
    rules: &CleaningRules,
) -> (Vec<ActivityDay<F>>, CleaningReport) {
    let outcomes: Vec<DayOutcome<F>> = days.into_par_iter().map(|d| clean_day(d, profiles, rules)).collect();
    let mut report = CleaningReport::default();
    let mut kept = Vec::new();
    let mut users = BTreeSet::new();
    for o in outcomes {
        report.total_points += o.total;
        for (rule, n) in o.point_discards {
            report.discard_points(rule, n);
        }
        if let Some(rule) = o.day_rule {
            *report.days_discarded.entry(rule).or_default() += 1;
        }
        if let Some(d) = o.kept {
            report.points_kept += d.stops.len();
            report.days_kept += 1;
            users.insert(d.user_id.clone());
            kept.push(d);
        }
    }
    report.users_kept = users.len();
    (kept, report)
}

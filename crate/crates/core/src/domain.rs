//! Value types shared across the pipeline: activity labels, stops, time
//! slots, user profiles and POIs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of activity classes the recognizer predicts.
pub const NUM_LABELS: usize = 16;

/// Seconds since 1970-01-01T00:00:00 in study-local (naive) time.
pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Trip purpose of a stop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivityLabel {
    Home,
    Work,
    ChangeModeTransfer,
    PickUpDropOff,
    Shopping,
    Social,
    WorkRelatedBusiness,
    Education,
    Recreation,
    MedicalDental,
    MealEatingBreak,
    Entertainment,
    SportsExercise,
    PersonalErrand,
    AccompanySomeone,
    OthersHome,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; NUM_LABELS] = [
        ActivityLabel::Home,
        ActivityLabel::Work,
        ActivityLabel::ChangeModeTransfer,
        ActivityLabel::PickUpDropOff,
        ActivityLabel::Shopping,
        ActivityLabel::Social,
        ActivityLabel::WorkRelatedBusiness,
        ActivityLabel::Education,
        ActivityLabel::Recreation,
        ActivityLabel::MedicalDental,
        ActivityLabel::MealEatingBreak,
        ActivityLabel::Entertainment,
        ActivityLabel::SportsExercise,
        ActivityLabel::PersonalErrand,
        ActivityLabel::AccompanySomeone,
        ActivityLabel::OthersHome,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivityLabel::Home => "Home",
            ActivityLabel::Work => "Work",
            ActivityLabel::ChangeModeTransfer => "ChangeModeTransfer",
            ActivityLabel::PickUpDropOff => "PickUpDropOff",
            ActivityLabel::Shopping => "Shopping",
            ActivityLabel::Social => "Social",
            ActivityLabel::WorkRelatedBusiness => "WorkRelatedBusiness",
            ActivityLabel::Education => "Education",
            ActivityLabel::Recreation => "Recreation",
            ActivityLabel::MedicalDental => "MedicalDental",
            ActivityLabel::MealEatingBreak => "MealEatingBreak",
            ActivityLabel::Entertainment => "Entertainment",
            ActivityLabel::SportsExercise => "SportsExercise",
            ActivityLabel::PersonalErrand => "PersonalErrand",
            ActivityLabel::AccompanySomeone => "AccompanySomeone",
            ActivityLabel::OthersHome => "OthersHome",
        }
    }

    /// Short column code used in confusion-matrix tables.
    pub fn code(self) -> &'static str {
        match self {
            ActivityLabel::Home => "H",
            ActivityLabel::Work => "W",
            ActivityLabel::ChangeModeTransfer => "C",
            ActivityLabel::PickUpDropOff => "PD",
            ActivityLabel::Shopping => "Sh",
            ActivityLabel::Social => "So",
            ActivityLabel::WorkRelatedBusiness => "WR",
            ActivityLabel::Education => "E",
            ActivityLabel::Recreation => "R",
            ActivityLabel::MedicalDental => "MD",
            ActivityLabel::MealEatingBreak => "M",
            ActivityLabel::Entertainment => "En",
            ActivityLabel::SportsExercise => "Sp",
            ActivityLabel::PersonalErrand => "P",
            ActivityLabel::AccompanySomeone => "A",
            ActivityLabel::OthersHome => "OH",
        }
    }

    /// Coarse four-way grouping used for collapsed accuracy.
    pub fn collapse(self) -> CollapsedLabel {
        use ActivityLabel::*;
        match self {
            Home => CollapsedLabel::Home,
            Work | WorkRelatedBusiness | Education => CollapsedLabel::Work,
            ChangeModeTransfer | PickUpDropOff => CollapsedLabel::Transportation,
            Shopping | Social | Recreation | MedicalDental | MealEatingBreak | Entertainment
            | SportsExercise | PersonalErrand | AccompanySomeone | OthersHome => {
                CollapsedLabel::MaintenanceDiscretionary
            }
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        ActivityLabel::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::param(format!("unknown activity label {t:?}")))
    }
}

/// A label column as it appears in raw survey files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelField {
    Label(ActivityLabel),
    /// The survey's catch-all class; never used for training or prediction.
    Other,
    Missing,
}

impl FromStr for LabelField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() {
            Ok(LabelField::Missing)
        } else if t.eq_ignore_ascii_case("other") {
            Ok(LabelField::Other)
        } else {
            t.parse().map(LabelField::Label)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CollapsedLabel {
    Home,
    Work,
    Transportation,
    MaintenanceDiscretionary,
}

impl CollapsedLabel {
    pub const COUNT: usize = 4;
    pub const ALL: [CollapsedLabel; 4] = [
        CollapsedLabel::Home,
        CollapsedLabel::Work,
        CollapsedLabel::Transportation,
        CollapsedLabel::MaintenanceDiscretionary,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CollapsedLabel::Home => "Home",
            CollapsedLabel::Work => "Work",
            CollapsedLabel::Transportation => "Transportation",
            CollapsedLabel::MaintenanceDiscretionary => "MaintenanceDiscretionary",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_owned())
    }
}

/// Planar position in meters relative to the study origin.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Point<F> {
    pub fn new(x: F, y: F) -> Self {
        Point { x, y }
    }

    pub fn dist(&self, other: &Point<F>) -> F {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(&self, other: &Point<F>) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Local equirectangular projection about a reference coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub ref_lon: f64,
    pub ref_lat: f64,
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

impl Projection {
    pub fn new(ref_lon: f64, ref_lat: f64) -> Self {
        Projection { ref_lon, ref_lat }
    }

    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M.to_radians();
        let x = (lon - self.ref_lon) * k * self.ref_lat.to_radians().cos();
        let y = (lat - self.ref_lat) * k;
        (x, y)
    }

    pub fn unproject(&self, x: f64, y: f64) -> (f64, f64) {
        let k = EARTH_RADIUS_M.to_radians();
        let lon = self.ref_lon + x / (k * self.ref_lat.to_radians().cos());
        let lat = self.ref_lat + y / k;
        (lon, lat)
    }
}

impl Default for Projection {
    /// Central Singapore.
    fn default() -> Self {
        Projection::new(103.82, 1.35)
    }
}

/// A stop as reported by the survey, before quantization.
///
/// `t_start < t_end` holds for every stop that survived cleaning; raw parsed
/// stops may still violate it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopPoint<F> {
    pub user_id: UserId,
    pub x: F,
    pub y: F,
    pub lon: f64,
    pub lat: f64,
    pub t_start: Timestamp,
    pub t_end: Timestamp,
    pub label: Option<ActivityLabel>,
}

impl<F: Scalar> StopPoint<F> {
    pub fn position(&self) -> Point<F> {
        Point::new(self.x, self.y)
    }

    pub fn duration_secs(&self) -> i64 {
        self.t_end - self.t_start
    }

    pub fn duration_hours(&self) -> F {
        F::lit(self.duration_secs() as f64 / 3600.0)
    }

    /// Calendar day (days since epoch) on which the stop begins.
    pub fn day(&self) -> i64 {
        self.t_start.div_euclid(SECONDS_PER_DAY)
    }
}

/// Width of a time slot in minutes; always divides a day evenly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SlotWidth(u32);

impl SlotWidth {
    pub fn new(minutes: u32) -> Result<Self> {
        if minutes == 0 || 1440 % minutes != 0 {
            return Err(Error::param(format!(
                "slot width {minutes} min must be positive and divide 1440"
            )));
        }
        Ok(SlotWidth(minutes))
    }

    pub fn minutes(self) -> u32 {
        self.0
    }

    pub fn seconds(self) -> i64 {
        self.0 as i64 * 60
    }

    pub fn slots_per_day(self) -> u32 {
        1440 / self.0
    }
}

impl TryFrom<u32> for SlotWidth {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        SlotWidth::new(v)
    }
}

impl From<SlotWidth> for u32 {
    fn from(w: SlotWidth) -> u32 {
        w.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeSlot {
    pub day_index: i64,
    pub slot_index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    /// Day type of a calendar day counted from 1970-01-01 (a Thursday).
    pub fn of_day(day: i64) -> DayType {
        // Monday = 0
        match (day + 3).rem_euclid(7) {
            5 | 6 => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Inclusive range of calendar days covered by a study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyCalendar {
    pub first_day: i64,
    pub last_day: i64,
}

impl StudyCalendar {
    pub fn new(first_day: i64, last_day: i64) -> Result<Self> {
        if last_day < first_day {
            return Err(Error::param("study calendar ends before it starts"));
        }
        Ok(StudyCalendar {
            first_day,
            last_day,
        })
    }

    pub fn day_type(&self, slot: TimeSlot) -> Result<DayType> {
        if slot.day_index < self.first_day || slot.day_index > self.last_day {
            return Err(Error::OutsideCalendar {
                day: slot.day_index,
                first: self.first_day,
                last: self.last_day,
            });
        }
        Ok(DayType::of_day(slot.day_index))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub fn name(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl FromStr for Gender {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            other => Err(Error::param(format!("unknown gender {other:?}"))),
        }
    }
}

/// Age band index as produced by [`AgeBands::band_of`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgeBand(pub usize);

/// Age banding by ascending lower-bound breakpoints.
///
/// Breakpoints `[25, 41, 61]` give the bands `<25`, `25-40`, `41-60`, `>60`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBands {
    pub breakpoints: Vec<u32>,
}

impl Default for AgeBands {
    fn default() -> Self {
        AgeBands {
            breakpoints: vec![25, 41, 61],
        }
    }
}

impl AgeBands {
    pub fn new(breakpoints: Vec<u32>) -> Result<Self> {
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("age breakpoints must be strictly increasing"));
        }
        Ok(AgeBands { breakpoints })
    }

    pub fn count(&self) -> usize {
        self.breakpoints.len() + 1
    }

    pub fn band_of(&self, age: u32) -> AgeBand {
        AgeBand(self.breakpoints.iter().take_while(|&&b| age >= b).count())
    }

    pub fn describe(&self, band: AgeBand) -> String {
        let b = &self.breakpoints;
        match (band.0, b.len()) {
            (_, 0) => "all".to_owned(),
            (0, _) => format!("<{}", b[0]),
            (i, n) if i >= n => format!(">{}", b[n - 1] - 1),
            (i, _) => format!("{}-{}", b[i - 1], b[i] - 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile<F> {
    pub user_id: UserId,
    pub gender: Gender,
    pub age: u32,
    pub age_band: AgeBand,
    pub home: Point<F>,
    pub work: Option<Point<F>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord<F> {
    pub position: Point<F>,
    pub raw_category: String,
    pub mapped_label: Option<ActivityLabel>,
}

/// Spatial cell identifier; the variant matches the quantizer that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellId {
    Grid(i64, i64),
    Voronoi(u32),
    /// Instance-centred cell of the circular quantizer, keyed by the index
    /// of the centre instance in its population.
    Instance(u32),
}

/// Stop after spatial and temporal quantization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityPoint<F> {
    pub origin: StopPoint<F>,
    pub cell_id: CellId,
    pub slots: Vec<TimeSlot>,
    pub label: Option<ActivityLabel>,
}

/// The stops one user reported during one calendar day, time sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityDay<F> {
    pub user_id: UserId,
    pub day: i64,
    pub stops: Vec<StopPoint<F>>,
}

impl<F> ActivityDay<F> {
    pub fn day_type(&self) -> DayType {
        DayType::of_day(self.day)
    }
}

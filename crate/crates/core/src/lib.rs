//! Activity (trip purpose) recognition for travel-survey stop points.
//!
//! Stops are quantized in space and time, turned into empirical
//! probability features, classified by tree ensembles trained on several
//! user populations, and the population outputs are fused into one label.
//!
//! Numeric code is generic over the [`Scalar`] type (`f64` or `f32`). The
//! aliases below fix it to `f64`; the `f32` variants carry a `32` suffix.

pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod ingest;
pub mod quantize;
pub mod scalar;
pub mod synth;

pub use domain::{ActivityLabel, CollapsedLabel, DayType, Gender, UserId, NUM_LABELS};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = domain::Point<f64>;
pub type StopPoint = domain::StopPoint<f64>;
pub type ActivityDay = domain::ActivityDay<f64>;
pub type UserProfile = domain::UserProfile<f64>;
pub type PoiRecord = domain::PoiRecord<f64>;
pub type Quantizer = quantize::Quantizer<f64>;
pub type GridQuantizer = quantize::GridQuantizer<f64>;
pub type VoronoiQuantizer = quantize::VoronoiQuantizer<f64>;
pub type CircularQuantizer = quantize::CircularQuantizer<f64>;
pub type FeatureVector = features::FeatureVector<f64>;
pub type PopulationStats = features::PopulationStats<f64>;
pub type PoiIndex = features::PoiIndex<f64>;
pub type Samples = forest::Samples<f64>;
pub type DecisionTree = forest::DecisionTree<f64>;
pub type Ensemble = forest::Ensemble<f64>;
pub type FusionModel = fusion::FusionModel<f64>;
pub type SynthDataset = synth::SynthDataset<f64>;

pub type StopPoint32 = domain::StopPoint<f32>;
pub type ActivityDay32 = domain::ActivityDay<f32>;
pub type FeatureVector32 = features::FeatureVector<f32>;
pub type Ensemble32 = forest::Ensemble<f32>;
pub type FusionModel32 = fusion::FusionModel<f32>;

#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tripsense::domain::{ActivityDay, ActivityLabel, Point, PoiRecord, Projection, StopPoint, UserId, UserProfile};
use tripsense::NUM_LABELS;
use tripsense::domain::AgeBands;
use tripsense::forest::{EnsembleMode, ForestParams};
use tripsense::fusion::{FusionParams, FusionStrategy};
use tripsense::ingest::group_days;
use tripsense::quantize::QuantizerSpec;
use tripsense::synth::{generate, GroundTruth, SynthConfig};

pub struct Data {
    pub days: Vec<ActivityDay<f64>>,
    pub profiles: BTreeMap<UserId, UserProfile<f64>>,
    pub pois: Vec<PoiRecord<f64>>,
    pub truth: GroundTruth,
}

pub fn synth(cfg: &SynthConfig) -> Data {
    let ds = generate::<f64>(cfg, &Projection::default(), &AgeBands::default()).expect("generator runs");
    Data {
        days: group_days(ds.stops),
        profiles: ds.profiles,
        pois: ds.pois,
        truth: ds.truth,
    }
}

/// The planted benchmark: 50 users over 10 days.
pub fn benchmark(seed: u64) -> Data {
    synth(&SynthConfig {
        seed,
        users: 50,
        days_per_user: 10,
        ..SynthConfig::default()
    })
}

/// Random-subspace forests fused by weighted majority vote over 100 m
/// circular cells and 120-minute slots.
pub fn benchmark_params() -> FusionParams {
    FusionParams {
        strategy: FusionStrategy::Wmv,
        quantizer: QuantizerSpec::Circular { radius: 100.0 },
        forest: ForestParams {
            mode: EnsembleMode::RandomSubspace,
            n_trees: 100,
            ..ForestParams::default()
        },
        ..FusionParams::default()
    }
}

pub fn small_params(trees: usize) -> FusionParams {
    FusionParams {
        forest: ForestParams {
            n_trees: trees,
            ..ForestParams::default()
        },
        ..FusionParams::default()
    }
}

/// Random small population: clustered positions, random intervals over a
/// week, random labels, some unlabelled POIs.
pub fn random_population(seed: u64, users: usize, stops: usize, pois: usize) -> (Vec<ActivityDay<f64>>, Vec<PoiRecord<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors: Vec<(f64, f64)> = (0..12).map(|_| (rng.gen_range(0.0..3000.0), rng.gen_range(0.0..3000.0))).collect();
    let mut out = Vec::new();
    for _ in 0..stops {
        let a = anchors[rng.gen_range(0..anchors.len())];
        // Minute-aligned starts so that slot-rounding ties occur.
        let t0 = 15_775 * 86_400 + 60 * rng.gen_range(0..7 * 1440);
        out.push(StopPoint {
            user_id: UserId(format!("u{}", rng.gen_range(0..users))),
            x: a.0 + rng.gen_range(-60.0..60.0),
            y: a.1 + rng.gen_range(-60.0..60.0),
            lon: 0.0,
            lat: 0.0,
            t_start: t0,
            t_end: t0 + rng.gen_range(60..30_000),
            label: ActivityLabel::from_index(rng.gen_range(0..NUM_LABELS)),
        });
    }
    let pois = (0..pois)
        .map(|_| {
            let a = anchors[rng.gen_range(0..anchors.len())];
            PoiRecord {
                position: Point::new(a.0 + rng.gen_range(-100.0..100.0), a.1 + rng.gen_range(-100.0..100.0)),
                raw_category: String::new(),
                mapped_label: if rng.gen_bool(0.8) {
                    ActivityLabel::from_index(rng.gen_range(0..NUM_LABELS))
                } else {
                    None
                },
            }
        })
        .collect();
    (group_days(out), pois)
}

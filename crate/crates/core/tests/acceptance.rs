//! Acceptance suite. Runs every check, prints one PASS/FAIL line each and
//! exits non-zero when any check fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tripsense::domain::{ActivityLabel, DayType, Point, Projection, SlotWidth, TimeSlot, UserId};
use tripsense::eval::{chrono_split, confusion_pair, evaluate, stream_evaluate, EvalOptions, StreamOptions};
use tripsense::features::{
    CoreLocations, FeatureBlock, FeatureContext, FeatureQuery, PoiIndex, PopulationStats, PreviousActivity, FEATURE_LEN,
};
use tripsense::forest::{fit_tree, Ensemble, ForestParams, Samples, SplitFeatures};
use tripsense::fusion::{wmv, FusionModel, FusionStrategy, PreviousLabels};
use tripsense::ingest::{clean, group_days, read_profiles, read_stops, CleaningRules, DiscardRule};
use tripsense::quantize::{time_slots, QuantizerSpec};
use tripsense::synth::SynthConfig;
use tripsense::NUM_LABELS;

use common::oracle::{Oracle, Query};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn slot_example() -> Result<String, String> {
    let day = 15775; // 2013-03-11
    let at = |h: i64, m: i64| day * 86_400 + h * 3600 + m * 60;
    let w = SlotWidth::new(10).map_err(|e| e.to_string())?;
    let got = time_slots(at(8, 53), at(9, 8), w).map_err(|e| e.to_string())?;
    let want: Vec<TimeSlot> = [(8, 50), (9, 0), (9, 10)]
        .iter()
        .map(|&(h, m)| TimeSlot {
            day_index: day,
            slot_index: (h * 60 + m) / 10,
        })
        .collect();
    ensure(got == want, || format!("got {got:?}"))?;
    Ok("8:53-9:08 at 10 min -> {8:50, 9:00, 9:10}".into())
}

fn cores(profiles: &BTreeMap<UserId, tripsense::domain::UserProfile<f64>>) -> BTreeMap<UserId, CoreLocations<f64>> {
    profiles
        .iter()
        .map(|(u, p)| {
            (
                u.clone(),
                CoreLocations {
                    home: p.home,
                    work: p.work,
                },
            )
        })
        .collect()
}

fn oracle_equivalence() -> Result<String, String> {
    const MISSING_KM: f64 = 7.5;
    let specs = [
        QuantizerSpec::Grid {
            cell_width: 800.0,
            cell_height: 800.0,
        },
        QuantizerSpec::Grid {
            cell_width: 400.0,
            cell_height: 600.0,
        },
        QuantizerSpec::Voronoi { clusters: 12 },
        QuantizerSpec::Circular { radius: 150.0 },
        QuantizerSpec::Circular { radius: 300.0 },
    ];
    let slots = [10u32, 20, 40, 60, 90, 120];
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    let mut max_stops = 0usize;
    for i in 0..20u64 {
        let data = common::synth(&SynthConfig {
            seed: 100 + i,
            users: 6 + (i as usize % 5),
            days_per_user: 5,
            stagger_days: 3,
            sites: 40,
            half_width_m: 3000.0,
            half_height_m: 2500.0,
            pois_per_site: 3,
            noise_pois: 40,
            ..SynthConfig::default()
        });
        let n_stops: usize = data.days.iter().map(|d| d.stops.len()).sum();
        max_stops = max_stops.max(n_stops);
        ensure(n_stops <= 500, || format!("dataset {i} has {n_stops} stops"))?;
        let split = chrono_split(&data.days, 3).map_err(|e| e.to_string())?;
        let spec = specs[i as usize % specs.len()];
        let minutes = slots[i as usize % slots.len()];
        let points: Vec<Point<f64>> = split.train.iter().flat_map(|d| d.stops.iter().map(|s| s.position())).collect();
        let q = spec.fit(&points, i).map_err(|e| e.to_string())?;
        let width = SlotWidth::new(minutes).unwrap();
        let stats = PopulationStats::build(&split.train, &q, width).map_err(|e| e.to_string())?;
        let pidx = PoiIndex::build(&data.pois, &q);
        let ctx = FeatureContext::new(&stats, &pidx, MISSING_KM).map_err(|e| e.to_string())?;
        let oracle = Oracle::new(&q, minutes as i64, &split.train, &data.pois);
        let cores = cores(&data.profiles);

        let mut diff = |a: &[f64], b: &[f64], what: &str| -> Result<(), String> {
            ensure(a.len() == b.len(), || format!("{what}: length {} vs {}", a.len(), b.len()))?;
            for (j, (x, y)) in a.iter().zip(b).enumerate() {
                let d = (x - y).abs();
                worst = worst.max(d);
                compared += 1;
                ensure(d <= 1e-9, || format!("dataset {i} {what}: entry {j} library {x} oracle {y}"))?;
            }
            Ok(())
        };

        for weekend in [false, true] {
            let dt = if weekend { DayType::Weekend } else { DayType::Weekday };
            for a in ActivityLabel::ALL {
                let lib: Vec<f64> = ActivityLabel::ALL
                    .iter()
                    .map(|&b| stats.transitions().count(dt, a, b) as f64)
                    .collect();
                let orc: Vec<f64> = ActivityLabel::ALL
                    .iter()
                    .map(|&b| oracle.pair_count(weekend, a, b, None) as f64)
                    .collect();
                diff(&lib, &orc, "transition counts")?;
            }
        }

        let (rows, labels) = ctx.training_samples(&cores).map_err(|e| e.to_string())?;
        ensure(rows.len() == oracle.records.len(), || "record count differs".into())?;
        for (r, row) in rows.iter().enumerate() {
            ensure(labels[r] == oracle.records[r].label, || format!("record {r} label differs"))?;
            let core = &cores[&oracle.records[r].user];
            let expected = oracle.features(&oracle.training_query(r, core), MISSING_KM);
            diff(row.as_slice(), &expected, "training row")?;
        }

        let last_train: BTreeMap<&UserId, PreviousActivity> = oracle
            .records
            .iter()
            .map(|r| {
                (
                    &r.user,
                    PreviousActivity {
                        label: r.label,
                        t_end: r.t1,
                    },
                )
            })
            .collect();
        for day in &split.test {
            let mut prev = last_train.get(&day.user_id).copied();
            let core = &cores[&day.user_id];
            for s in &day.stops {
                let lib = ctx
                    .assemble(&FeatureQuery {
                        stop: s,
                        previous: prev,
                        core,
                        own_record: None,
                    })
                    .map_err(|e| e.to_string())?;
                let expected = oracle.features(
                    &Query {
                        p: (s.x, s.y),
                        t0: s.t_start,
                        t1: s.t_end,
                        previous: prev.map(|p| (p.label, p.t_end)),
                        core,
                        own: None,
                    },
                    MISSING_KM,
                );
                diff(lib.as_slice(), &expected, "held-out query")?;
                prev = s.label.map(|label| PreviousActivity { label, t_end: s.t_end });
            }
        }
    }
    Ok(format!(
        "20 datasets (max {max_stops} stops), {compared} values, max |diff| {worst:.2e}"
    ))
}

fn normalization() -> Result<String, String> {
    let specs = [
        QuantizerSpec::Grid {
            cell_width: 200.0,
            cell_height: 200.0,
        },
        QuantizerSpec::Grid {
            cell_width: 1000.0,
            cell_height: 1000.0,
        },
        QuantizerSpec::Voronoi { clusters: 5 },
        QuantizerSpec::Circular { radius: 100.0 },
        QuantizerSpec::Circular { radius: 500.0 },
    ];
    let strategy = (any::<u64>(), 1usize..5, 1usize..40, 0usize..30, 0usize..5, 0usize..6);
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: 1000,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let mut vectors = 0usize;
    let counter = std::cell::Cell::new(0usize);
    runner
        .run(&strategy, |(seed, users, n, n_pois, qi, si)| {
            let (days, pois) = common::random_population(seed, users, n, n_pois);
            let points: Vec<Point<f64>> = days.iter().flat_map(|d| d.stops.iter().map(|s| s.position())).collect();
            let q = specs[qi].fit(&points, seed).unwrap();
            let w = SlotWidth::new([10, 20, 40, 60, 90, 120][si]).unwrap();
            let stats = PopulationStats::build(&days, &q, w).unwrap();
            let pidx = PoiIndex::build(&pois, &q);
            let ctx = FeatureContext::new(&stats, &pidx, 5.0).unwrap();
            let core = CoreLocations {
                home: Point::new(0.0, 0.0),
                work: None,
            };
            let cores: BTreeMap<UserId, CoreLocations<f64>> =
                days.iter().map(|d| (d.user_id.clone(), core)).collect();
            let (mut rows, _) = ctx.training_samples(&cores).unwrap();
            let (probe_days, _) = common::random_population(seed ^ 0xabcdef, users, 5, 0);
            for s in probe_days.iter().flat_map(|d| &d.stops) {
                let previous = s.label.map(|label| PreviousActivity {
                    label,
                    t_end: s.t_start - 600,
                });
                rows.push(
                    ctx.assemble(&FeatureQuery {
                        stop: s,
                        previous,
                        core: &core,
                        own_record: None,
                    })
                    .unwrap(),
                );
            }
            for v in &rows {
                prop_assert_eq!(v.as_slice().len(), FEATURE_LEN);
                prop_assert_eq!(FEATURE_LEN, 99);
                for b in [
                    FeatureBlock::Temporal,
                    FeatureBlock::Spatial,
                    FeatureBlock::Contextual,
                    FeatureBlock::Transition,
                ] {
                    let block = v.block(b);
                    let sum: f64 = block.iter().sum();
                    let zero = block.iter().all(|&x| x == 0.0);
                    prop_assert!(block.iter().all(|&x| x >= 0.0));
                    prop_assert!((sum - 1.0).abs() <= 1e-9 || (zero && b != FeatureBlock::Transition), "{:?} sums to {}", b, sum);
                }
                for b in [FeatureBlock::HistoricalNeighbor, FeatureBlock::ContextualNeighbor] {
                    prop_assert!(v.block(b).iter().all(|&x| (0.0..=1.0).contains(&x)));
                }
            }
            for dt in [DayType::Weekday, DayType::Weekend] {
                for a in ActivityLabel::ALL {
                    let row: [f64; NUM_LABELS] = stats.transitions().row(dt, a);
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                }
            }
            counter.set(counter.get() + rows.len());
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    vectors += counter.get();
    Ok(format!("1000 random populations, {vectors} feature vectors, all transition rows"))
}

fn tree_fit_and_determinism() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..60 {
        let n = rng.gen_range(10..200);
        let p = rng.gen_range(1..7);
        let classes = rng.gen_range(2..=NUM_LABELS);
        let mut seen: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let key: Vec<i64> = (0..p).map(|_| rng.gen_range(0..6)).collect();
            let label = *seen.entry(key.clone()).or_insert_with(|| rng.gen_range(0..classes));
            rows.push(key.iter().map(|&v| v as f64 * 0.25).collect::<Vec<f64>>());
            labels.push(label);
        }
        let s = Samples::from_rows(&rows, labels, classes).map_err(|e| e.to_string())?;
        let all: Vec<u32> = (0..n as u32).collect();
        let tree = fit_tree(&s, &all, SplitFeatures::All, 1, &mut ChaCha8Rng::seed_from_u64(trial))
            .map_err(|e| e.to_string())?;
        let wrong = (0..n).filter(|&i| tree.predict(s.row(i)) != s.label(i)).count();
        ensure(wrong == 0, || format!("trial {trial}: {wrong} of {n} training rows misclassified"))?;
    }

    let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..12).map(|_| rng.gen::<f64>()).collect()).collect();
    let labels: Vec<usize> = rows.iter().map(|r| ((r[0] + r[3]) * 4.0) as usize % 5).collect();
    let s = Samples::from_rows(&rows, labels, 5).map_err(|e| e.to_string())?;
    let fit = || serde_json::to_string(&Ensemble::fit(&s, &ForestParams::default()).unwrap()).unwrap();
    ensure(fit() == fit(), || "ensemble serialization differs between runs".into())?;

    let data = common::synth(&SynthConfig {
        users: 8,
        days_per_user: 3,
        ..SynthConfig::default()
    });
    let mut params = common::small_params(20);
    params.strategy = FusionStrategy::ScoreStack;
    let bundle = |seed: u64| {
        let mut p = params.clone();
        p.forest.seed = seed;
        FusionModel::train(&data.days, &data.profiles, &data.pois, &p, serde_json::Value::Null)
            .unwrap()
            .0
            .to_json()
            .unwrap()
    };
    let (a, b) = (bundle(2013), bundle(2013));
    ensure(a == b, || "fusion bundles differ between runs".into())?;
    ensure(a != bundle(2014), || "seed does not change the bundle".into())?;
    Ok(format!("60 single-tree trials at 100% training accuracy; identical bundles ({} bytes)", a.len()))
}

fn wmv_exhaustive() -> Result<String, String> {
    let weights = [4.0f64, 3.0, 2.0, 1.0];
    let mut checked = 0usize;
    for code in 0..(NUM_LABELS + 1).pow(4) {
        let mut c = code;
        let mut decisions = [None; 4];
        for d in &mut decisions {
            *d = ActivityLabel::from_index(c % (NUM_LABELS + 1));
            c /= NUM_LABELS + 1;
        }
        let mut mass = [0.0f64; NUM_LABELS];
        for (d, w) in decisions.iter().zip(weights) {
            if let Some(l) = d {
                mass[l.index()] += w;
            }
        }
        let result = wmv(&decisions, &weights);
        if decisions.iter().all(Option::is_none) {
            ensure(result.is_err(), || "empty vote accepted".into())?;
            continue;
        }
        let mut best = 0;
        for l in 1..NUM_LABELS {
            if mass[l] > mass[best] {
                best = l;
            }
        }
        let (label, _) = result.map_err(|e| e.to_string())?;
        ensure(label.index() == best, || format!("{decisions:?}: got {label}, oracle {}", ActivityLabel::ALL[best]))?;
        checked += 1;
    }
    ensure(checked >= NUM_LABELS.pow(4), || "not every full combination checked".into())?;
    Ok(format!("{checked} decision combinations (65536 with all four models) agree"))
}

struct BenchRun {
    seed: u64,
    k: usize,
    acc16: f64,
    acc4: f64,
    majority: f64,
    bayes: f64,
}

fn bench_runs() -> &'static Result<Vec<BenchRun>, String> {
    static RUNS: OnceLock<Result<Vec<BenchRun>, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let params = common::benchmark_params();
        let opts = EvalOptions {
            previous: PreviousLabels::Validated,
            all_strategies: false,
        };
        let mut out = Vec::new();
        for seed in SEEDS {
            let data = common::benchmark(seed);
            for k in 1..=4 {
                let (r, _) = evaluate(&data.days, &data.profiles, &data.pois, &params, k, &opts, serde_json::Value::Null)
                    .map_err(|e| format!("seed {seed} k {k}: {e}"))?;
                let split = chrono_split(&data.days, k).map_err(|e| e.to_string())?;
                let bayes = data
                    .truth
                    .bayes_rate(split.test.iter().flat_map(|d| &d.stops))
                    .map_err(|e| e.to_string())?;
                out.push(BenchRun {
                    seed,
                    k,
                    acc16: r.accuracy16,
                    acc4: r.accuracy4,
                    majority: r.majority_accuracy,
                    bayes,
                });
            }
        }
        Ok(out)
    })
}

fn planted_benchmark() -> Result<String, String> {
    let runs = bench_runs().as_ref().map_err(Clone::clone)?;
    let main = runs
        .iter()
        .find(|r| r.seed == SEEDS[0] && r.k == 4)
        .ok_or("missing k=4 run")?;
    let mut means = Vec::new();
    for k in 1..=4 {
        let v: Vec<f64> = runs.iter().filter(|r| r.k == k).map(|r| r.acc16).collect();
        means.push(v.iter().sum::<f64>() / v.len() as f64);
    }
    let lift = main.acc16 - main.majority;
    let gap = main.bayes - main.acc16;
    let monotone = means.windows(2).all(|w| w[1] >= w[0] - 0.02);
    let pct = |x: f64| format!("{:.1}", x * 100.0);
    let detail = format!(
        "seed {} k=4: accuracy {}% vs majority {}% (+{}), Bayes {}% (gap {}); mean accuracy k=1..4 over seeds {:?}: {}",
        main.seed,
        pct(main.acc16),
        pct(main.majority),
        pct(lift),
        pct(main.bayes),
        pct(gap),
        SEEDS,
        means.iter().map(|&m| pct(m)).collect::<Vec<_>>().join(" / ")
    );
    ensure(lift >= 0.15, || format!("lift below 15 points; {detail}"))?;
    ensure(gap <= 0.10, || format!("more than 10 points below Bayes; {detail}"))?;
    ensure(monotone, || format!("accuracy not monotone in k within 2 points; {detail}"))?;
    Ok(detail)
}

fn seen_beats_unseen() -> Result<String, String> {
    let params = common::benchmark_params();
    let mut total = 0.0;
    let mut parts = Vec::new();
    for seed in SEEDS {
        let data = common::benchmark(seed);
        let (r, _) = stream_evaluate(
            &data.days,
            &data.profiles,
            &data.pois,
            &params,
            &StreamOptions::default(),
            serde_json::Value::Null,
        )
        .map_err(|e| e.to_string())?;
        let (s, u) = (
            r.final_seen().ok_or("no seen-user tests")?,
            r.final_unseen().ok_or("no unseen-user tests")?,
        );
        total += s - u;
        parts.push(format!("{seed}: {:.1}/{:.1}", s * 100.0, u * 100.0));
    }
    let detail = format!("seen/unseen % by seed [{}], summed margin {:+.1}", parts.join(", "), total * 100.0);
    ensure(total > 0.0, || detail.clone())?;
    Ok(detail)
}

fn collapse_property() -> Result<String, String> {
    let runs = bench_runs().as_ref().map_err(Clone::clone)?;
    for r in runs {
        ensure(r.acc4 >= r.acc16, || format!("seed {} k {}: {} < {}", r.seed, r.k, r.acc4, r.acc16))?;
    }
    let data = common::synth(&SynthConfig {
        users: 12,
        days_per_user: 4,
        ..SynthConfig::default()
    });
    let mut extra = 0;
    for strategy in [FusionStrategy::Wmv, FusionStrategy::ScoreStack, FusionStrategy::DecisionStack] {
        let mut p = common::small_params(20);
        p.strategy = strategy;
        let (r, decisions) = evaluate(
            &data.days,
            &data.profiles,
            &data.pois,
            &p,
            3,
            &EvalOptions::default(),
            serde_json::Value::Null,
        )
        .map_err(|e| e.to_string())?;
        ensure(r.accuracy4 >= r.accuracy16, || format!("{}: collapsed accuracy lower", strategy.name()))?;
        for m in &r.methods {
            if let (Some(a16), Some(a4)) = (m.accuracy16, m.accuracy4) {
                ensure(a4 >= a16, || format!("{}: collapsed accuracy lower", m.method))?;
                extra += 1;
            }
        }
        let (m16, m4) = confusion_pair(decisions.iter().map(|d| (d.truth, d.predicted)));
        ensure(m4.correct() >= m16.correct(), || "collapsed matrix has fewer hits".into())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let pairs: Vec<(ActivityLabel, ActivityLabel)> = (0..rng.gen_range(1..50))
            .map(|_| {
                (
                    ActivityLabel::ALL[rng.gen_range(0..NUM_LABELS)],
                    ActivityLabel::ALL[rng.gen_range(0..NUM_LABELS)],
                )
            })
            .collect();
        let (m16, m4) = confusion_pair(pairs);
        ensure(m4.accuracy() >= m16.accuracy(), || "random decision set violates collapse".into())?;
    }
    Ok(format!(
        "{} benchmark runs, {extra} per-method accuracies over 3 strategies, 500 random decision sets",
        runs.len()
    ))
}

fn cleaning_fixture() -> Result<String, String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/cleaning");
    let proj = Projection::default();
    let parsed = read_stops::<f64>(&dir.join("stops.csv"), &proj).map_err(|e| e.to_string())?;
    ensure(parsed.skipped.is_empty(), || format!("rows skipped: {:?}", parsed.skipped))?;
    let (profiles, _) =
        read_profiles::<f64>(&dir.join("profiles.csv"), &proj, &Default::default()).map_err(|e| e.to_string())?;
    let all: BTreeSet<(String, i64)> = parsed
        .stops
        .iter()
        .map(|s| (s.user_id.0.clone(), s.t_start))
        .collect();
    let (days, report) = clean(group_days(parsed.stops), &profiles, &CleaningRules::default());
    let kept: BTreeSet<(String, i64)> = days
        .iter()
        .flat_map(|d| d.stops.iter().map(|s| (s.user_id.0.clone(), s.t_start)))
        .collect();
    let ts = |s: &str| tripsense::ingest::parse_timestamp(s).unwrap();
    let mut expected_discards: BTreeSet<(String, i64)> = [
        ("u1", "2013-03-12T12:00:00"),
        ("u1", "2013-03-13T09:00:00"),
        ("u1", "2013-03-14T10:00:00"),
    ]
    .iter()
    .map(|(u, t)| (u.to_string(), ts(t)))
    .collect();
    for (u, day) in [("u2", "2013-03-11"), ("u2", "2013-03-12"), ("u3", "2013-03-11")] {
        expected_discards.extend(all.iter().filter(|(uu, t)| {
            uu == u && tripsense::ingest::format_timestamp(*t).starts_with(day)
        }).cloned());
    }
    let discarded: BTreeSet<(String, i64)> = all.difference(&kept).cloned().collect();
    ensure(discarded == expected_discards, || format!("discarded {discarded:?}"))?;

    let want_points: BTreeMap<DiscardRule, usize> = [
        (DiscardRule::NotHomeBounded, 2),
        (DiscardRule::HomeTooFar, 3),
        (DiscardRule::ActivityAtHome, 3),
        (DiscardRule::SwappedTime, 1),
        (DiscardRule::OverlongDuration, 1),
        (DiscardRule::OutsideStudyArea, 1),
    ]
    .into_iter()
    .collect();
    let want_days: BTreeMap<DiscardRule, usize> = [
        (DiscardRule::NotHomeBounded, 1),
        (DiscardRule::HomeTooFar, 1),
        (DiscardRule::ActivityAtHome, 1),
    ]
    .into_iter()
    .collect();
    ensure(report.points_discarded == want_points, || format!("point discards {:?}", report.points_discarded))?;
    ensure(report.days_discarded == want_days, || format!("day discards {:?}", report.days_discarded))?;
    ensure(
        report.total_points == 26 && report.points_kept == 15 && report.days_kept == 5 && report.users_kept == 2,
        || format!("{report:?}"),
    )?;
    ensure(report.reconciles(), || "report does not reconcile".into())?;
    Ok(format!(
        "{} of {} points kept, every rule fired, totals reconcile",
        report.points_kept, report.total_points
    ))
}

fn main() {
    let checks: [(&str, Check); 9] = [
        ("slot worked example", slot_example),
        ("feature statistics match brute-force oracle", oracle_equivalence),
        ("normalization invariants", normalization),
        ("tree training fit and ensemble determinism", tree_fit_and_determinism),
        ("weighted majority vote exhaustive", wmv_exhaustive),
        ("planted-pattern benchmark", planted_benchmark),
        ("seen users beat unseen users when streaming", seen_beats_unseen),
        ("4-class accuracy never below 16-class", collapse_property),
        ("cleaning rules fixture", cleaning_fixture),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

mod common;

use tripsense::domain::ActivityLabel;
use tripsense::eval::{chrono_split, evaluate, EvalOptions};
use tripsense::synth::SynthConfig;
use tripsense::NUM_LABELS;

#[test]
fn label_seen_only_on_test_days_is_never_predicted() {
    let mut data = common::synth(&SynthConfig {
        users: 12,
        days_per_user: 4,
        ..SynthConfig::default()
    });
    let marker = ActivityLabel::Education;
    let replacement = ActivityLabel::Recreation;
    let test_days: std::collections::BTreeSet<(String, i64)> = chrono_split(&data.days, 3)
        .unwrap()
        .test
        .iter()
        .map(|d| (d.user_id.0.clone(), d.day))
        .collect();
    let mut planted = 0;
    for d in &mut data.days {
        let is_test = test_days.contains(&(d.user_id.0.clone(), d.day));
        for s in &mut d.stops {
            if s.label == Some(marker) {
                s.label = Some(replacement);
            }
            if is_test && s.label == Some(ActivityLabel::Shopping) {
                s.label = Some(marker);
                planted += 1;
            }
        }
    }
    assert!(planted > 0);
    let (report, decisions) = evaluate(
        &data.days,
        &data.profiles,
        &data.pois,
        &common::small_params(20),
        3,
        &EvalOptions::default(),
        serde_json::Value::Null,
    )
    .unwrap();
    assert_eq!(report.test_stops, decisions.len());
    assert!(decisions.iter().any(|d| d.truth == marker));
    for d in &decisions {
        assert_ne!(d.predicted, marker);
        assert!(d.by_strategy.iter().all(|(_, l)| *l != marker));
        assert!(d.members.iter().all(|m| *m != Some(marker)));
    }
}

#[test]
fn forest_is_not_worse_than_a_single_tree() {
    let data = common::benchmark(1);
    let run = |trees: usize| {
        let mut p = common::benchmark_params();
        p.forest.n_trees = trees;
        evaluate(
            &data.days,
            &data.profiles,
            &data.pois,
            &p,
            4,
            &EvalOptions::default(),
            serde_json::Value::Null,
        )
        .unwrap()
        .0
        .accuracy16
    };
    let (forest, single) = (run(100), run(1));
    assert!(forest >= single - 0.02, "forest {forest} single tree {single}");
}

#[test]
fn generated_labels_follow_their_distributions() {
    let data = common::synth(&SynthConfig {
        seed: 31,
        users: 240,
        days_per_user: 10,
        ..SynthConfig::default()
    });
    let truth = data.truth.by_stop();
    let mut expected = [0.0; NUM_LABELS];
    let mut observed = [0.0; NUM_LABELS];
    let mut n = 0.0;
    for s in data.days.iter().flat_map(|d| &d.stops) {
        let Some(l) = s.label else { continue };
        let t = truth[&(&s.user_id, s.t_start)];
        for (e, p) in expected.iter_mut().zip(&t.distribution) {
            *e += p;
        }
        observed[l.index()] += 1.0;
        n += 1.0;
    }
    assert!(n >= 10_000.0, "only {n} stops");
    for i in 0..NUM_LABELS {
        let (e, o) = (expected[i] / n, observed[i] / n);
        assert!((e - o).abs() <= 0.03, "{}: expected {e:.4} observed {o:.4}", ActivityLabel::ALL[i]);
    }
}

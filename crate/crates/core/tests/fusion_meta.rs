use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tripsense::domain::ActivityLabel;
use tripsense::features::LabelVector;
use tripsense::forest::{argmax, Ensemble, EnsembleMode, ForestParams, Samples};
use tripsense::fusion::{one_hot, stack_input, wmv};
use tripsense::NUM_LABELS;

const WEIGHTS: [f64; 4] = [4.0, 3.0, 2.0, 1.0];

fn meta_params() -> ForestParams {
    ForestParams {
        mode: EnsembleMode::Bagging,
        n_trees: 30,
        ..ForestParams::default()
    }
}

fn label(i: usize) -> ActivityLabel {
    ActivityLabel::ALL[i % NUM_LABELS]
}

fn stacked(decisions: [Option<ActivityLabel>; 4]) -> Vec<f64> {
    stack_input::<f64>(&decisions.map(|d| d.map(one_hot::<f64>)))
}

fn fit(rows: &[Vec<f64>], labels: &[ActivityLabel]) -> Ensemble<f64> {
    let s = Samples::from_rows(rows, labels.iter().map(|l| l.index()).collect(), NUM_LABELS).unwrap();
    Ensemble::fit(&s, &meta_params()).unwrap()
}

#[test]
fn unanimous_members_are_followed() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rep in 0..5 {
        for l in 0..NUM_LABELS {
            let d = Some(label(l));
            rows.push(stacked([d, d, d, if rep % 2 == 0 { d } else { None }]));
            labels.push(label(l));
        }
    }
    let meta = fit(&rows, &labels);
    for l in 0..NUM_LABELS {
        let d = Some(label(l));
        let s = meta.predict_scores(&stacked([d, d, d, d])).unwrap();
        assert_eq!(argmax(&s), l);
    }
}

#[test]
fn learns_to_trust_the_reliable_member_against_the_vote() {
    // Member 1 is always right; members 0, 2 and 3 agree on a shifted label.
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for rep in 0..6 {
        for l in 0..NUM_LABELS {
            let wrong = Some(label(l + 1 + rep % 2));
            rows.push(stacked([wrong, Some(label(l)), wrong, wrong]));
            labels.push(label(l));
        }
    }
    let meta = fit(&rows, &labels);
    let mut meta_hits = 0;
    let mut vote_hits = 0;
    for l in 0..NUM_LABELS {
        let wrong = Some(label(l + 1));
        let d = [wrong, Some(label(l)), wrong, wrong];
        meta_hits += usize::from(argmax(&meta.predict_scores(&stacked(d)).unwrap()) == l);
        vote_hits += usize::from(wmv(&d, &WEIGHTS).unwrap().0 == label(l));
    }
    assert_eq!(meta_hits, NUM_LABELS);
    assert_eq!(vote_hits, 0);
}

#[test]
fn separable_score_stacks_are_fitted_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let l = rng.gen_range(0..NUM_LABELS);
        let mut parts: [Option<LabelVector<f64>>; 4] = [None; 4];
        for p in parts.iter_mut() {
            if rng.gen_bool(0.8) {
                let mut v = [0.0; NUM_LABELS];
                for x in v.iter_mut() {
                    *x = rng.gen_range(0.0..0.3);
                }
                v[l] = 0.9;
                *p = Some(v);
            }
        }
        if parts.iter().all(Option::is_none) {
            parts[0] = Some(one_hot(label(l)));
        }
        rows.push(stack_input(&parts));
        labels.push(label(l));
    }
    assert!(rows.iter().all(|r| r.len() == 4 * NUM_LABELS));
    let meta = fit(&rows, &labels);
    let hits = rows
        .iter()
        .zip(&labels)
        .filter(|(r, l)| argmax(&meta.predict_scores(r).unwrap()) == l.index())
        .count();
    assert!(hits as f64 >= 0.97 * rows.len() as f64, "{hits} of {}", rows.len());
}

#[test]
fn absent_members_are_zero_blocks() {
    let v = stacked([None, Some(label(3)), None, None]);
    assert_eq!(v.len(), 64);
    assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
    assert_eq!(v[NUM_LABELS + 3], 1.0);
}

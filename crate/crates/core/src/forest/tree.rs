use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major training matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples<F> {
    data: Vec<F>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl<F: Scalar> Samples<F> {
    pub fn new(data: Vec<F>, labels: Vec<usize>, n_features: usize, n_classes: usize) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::param("samples need at least one feature and one class"));
        }
        if data.len() != labels.len() * n_features {
            return Err(Error::param(format!(
                "{} values do not form {} rows of {n_features} features",
                data.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::param(format!("label {bad} outside 0..{n_classes}")));
        }
        Ok(Samples {
            data,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn from_rows<R: AsRef<[F]>>(rows: &[R], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let n_features = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != n_features) {
            return Err(Error::param("rows have differing lengths"));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(data, labels, n_features, n_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn value(&self, i: usize, f: usize) -> F {
        self.data[i * self.n_features + f]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Tree node in a flat arena. Internal nodes send `x[feature] <= threshold`
/// to `left`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node<F> {
    Split {
        feature: u32,
        threshold: F,
        left: u32,
        right: u32,
    },
    /// Non-zero `(class, count)` pairs, ascending by class.
    Leaf { counts: Vec<(u32, u32)> },
}

/// Which features a split may look at.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitFeatures<'a> {
    All,
    Subset(&'a [u32]),
    /// Fresh random draw of this many features at every node.
    PerNode(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree<F> {
    nodes: Vec<Node<F>>,
    n_features: usize,
    n_classes: usize,
}

impl<F: Scalar> DecisionTree<F> {
    pub fn nodes(&self) -> &[Node<F>] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn leaf_counts(&self, x: &[F]) -> &[(u32, u32)] {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature as usize] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    /// Majority class of the leaf reached by `x`; ties go to the lower class.
    pub fn predict(&self, x: &[F]) -> usize {
        let mut best = (0u32, 0u32);
        for &(c, n) in self.leaf_counts(x) {
            if n > best.1 {
                best = (c, n);
            }
        }
        best.0 as usize
    }

    pub fn depth(&self) -> usize {
        fn go<F>(nodes: &[Node<F>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(nodes, *left as usize).max(go(nodes, *right as usize))
                }
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SplitChoice<F> {
    pub feature: usize,
    pub threshold: F,
    /// Sum over children of (sum of squared class counts) / size; larger is purer.
    pub purity: f64,
}

/// Best Gini split of `rows` over `features`, or `None` if no threshold
/// leaves `min_leaf` rows on both sides. Earlier features and lower
/// thresholds win ties.
pub(crate) fn best_split<F: Scalar>(
    samples: &Samples<F>,
    rows: &[u32],
    features: &[u32],
    min_leaf: usize,
    scratch: &mut Vec<(F, u32)>,
) -> Option<SplitChoice<F>> {
    let k = samples.n_classes();
    let n = rows.len();
    let mut total = vec![0u64; k];
    for &r in rows {
        total[samples.label(r as usize)] += 1;
    }
    let total_sq: u64 = total.iter().map(|c| c * c).sum();

    let mut best: Option<SplitChoice<F>> = None;
    let mut left = vec![0u64; k];
    for &f in features {
        let f = f as usize;
        scratch.clear();
        scratch.extend(rows.iter().map(|&r| (samples.value(r as usize, f), samples.label(r as usize) as u32)));
        scratch.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        if !(scratch[0].0 < scratch[n - 1].0) {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        let (mut left_sq, mut right_sq) = (0u64, total_sq);
        for j in 0..n - 1 {
            let y = scratch[j].1 as usize;
            left_sq += 2 * left[y] + 1;
            let right_y = total[y] - left[y];
            right_sq -= 2 * right_y - 1;
            left[y] += 1;
            let n_left = j + 1;
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf || !(scratch[j].0 < scratch[j + 1].0) {
                continue;
            }
            let purity = left_sq as f64 / n_left as f64 + right_sq as f64 / n_right as f64;
            if best.map_or(true, |b| purity > b.purity) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: midpoint(scratch[j].0, scratch[j + 1].0),
                    purity,
                });
            }
        }
    }
    best
}

/// Midpoint of two consecutive distinct values, kept strictly below `hi`.
fn midpoint<F: Scalar>(lo: F, hi: F) -> F {
    let m = lo + (hi - lo) / F::lit(2.0);
    if m < hi {
        m
    } else {
        lo
    }
}

/// Grows one classification tree by greedy Gini splitting.
///
/// `rows` may repeat indices (bootstrap resamples). A node becomes a leaf
/// when it is pure, holds fewer than `2 * min_leaf` rows, or no feature in
/// its candidate set separates it.
pub fn fit_tree<F: Scalar, R: Rng>(
    samples: &Samples<F>,
    rows: &[u32],
    features: SplitFeatures<'_>,
    min_leaf: usize,
    rng: &mut R,
) -> Result<DecisionTree<F>> {
    if rows.is_empty() {
        return Err(Error::param("cannot grow a tree on zero samples"));
    }
    let min_leaf = min_leaf.max(1);
    let p = samples.n_features();
    let all: Vec<u32> = (0..p as u32).collect();
    let mut scratch = Vec::with_capacity(rows.len());
    let mut nodes: Vec<Node<F>> = vec![Node::Leaf { counts: Vec::new() }];
    let mut work: Vec<(usize, Vec<u32>)> = vec![(0, rows.to_vec())];
    let mut drawn: Vec<u32> = Vec::new();

    while let Some((id, node_rows)) = work.pop() {
        let mut counts = vec![0u32; samples.n_classes()];
        for &r in &node_rows {
            counts[samples.label(r as usize)] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if pure || node_rows.len() < 2 * min_leaf {
            None
        } else {
            let candidates: &[u32] = match &features {
                SplitFeatures::All => &all,
                SplitFeatures::Subset(s) => s,
                SplitFeatures::PerNode(m) => {
                    drawn.clear();
                    drawn.extend(sample(rng, p, (*m).clamp(1, p)).into_iter().map(|i| i as u32));
                    drawn.sort_unstable();
                    &drawn
                }
            };
            best_split(samples, &node_rows, candidates, min_leaf, &mut scratch)
        };
        match split {
            None => {
                nodes[id] = Node::Leaf {
                    counts: counts
                        .iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(|(i, &c)| (i as u32, c))
                        .collect(),
                };
            }
            Some(s) => {
                let (l, r): (Vec<u32>, Vec<u32>) = node_rows
                    .iter()
                    .partition(|&&i| samples.value(i as usize, s.feature) <= s.threshold);
                let left = nodes.len();
                nodes.push(Node::Leaf { counts: Vec::new() });
                nodes.push(Node::Leaf { counts: Vec::new() });
                nodes[id] = Node::Split {
                    feature: s.feature as u32,
                    threshold: s.threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                work.push((left + 1, r));
                work.push((left, l));
            }
        }
    }
    Ok(DecisionTree {
        nodes,
        n_features: p,
        n_classes: samples.n_classes(),
    })
}

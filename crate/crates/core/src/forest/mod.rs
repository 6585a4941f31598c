//! Decision trees grown from scratch and combined by bagging or random
//! subspaces.

mod tree;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use tree::{fit_tree, DecisionTree, Node, Samples, SplitFeatures};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// Bootstrap resamples, every feature available to every tree.
    Bagging,
    /// Bootstrap resamples plus a random feature subset per tree (the
    /// Random Forest variant).
    #[default]
    RandomSubspace,
}

/// Where random-subspace sampling happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceSampling {
    #[default]
    PerTree,
    PerNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub mode: EnsembleMode,
    pub n_trees: usize,
    pub min_leaf: usize,
    pub seed: u64,
    pub sampling: SubspaceSampling,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            mode: EnsembleMode::RandomSubspace,
            n_trees: 100,
            min_leaf: 1,
            seed: 2013,
            sampling: SubspaceSampling::PerTree,
        }
    }
}

/// Features per tree for the random subspace method: `sqrt(p)` rounded.
pub fn subspace_size(n_features: usize) -> usize {
    ((n_features as f64).sqrt().round() as usize).clamp(1, n_features.max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble<F> {
    pub mode: EnsembleMode,
    pub sampling: SubspaceSampling,
    pub seed: u64,
    pub n_features: usize,
    pub n_classes: usize,
    trees: Vec<DecisionTree<F>>,
    /// Feature subset of each tree (random subspace, per-tree sampling only).
    subsets: Vec<Option<Vec<u32>>>,
}

impl<F: Scalar> Ensemble<F> {
    /// Fits `params.n_trees` trees; tree `i` draws from its own ChaCha stream
    /// `i` under the master seed, so the result is independent of thread
    /// scheduling.
    pub fn fit(samples: &Samples<F>, params: &ForestParams) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("no training samples".into()));
        }
        if params.n_trees == 0 {
            return Err(Error::param("ensemble needs at least one tree"));
        }
        let p = samples.n_features();
        let m = subspace_size(p);
        let n = samples.len();
        let fitted: Result<Vec<(DecisionTree<F>, Option<Vec<u32>>)>> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let rows: Vec<u32> = (0..n).map(|_| rng.gen_range(0..n as u32)).collect();
                match (params.mode, params.sampling) {
                    (EnsembleMode::Bagging, _) => {
                        Ok((fit_tree(samples, &rows, SplitFeatures::All, params.min_leaf, &mut rng)?, None))
                    }
                    (EnsembleMode::RandomSubspace, SubspaceSampling::PerTree) => {
                        let mut subset: Vec<u32> =
                            sample(&mut rng, p, m).into_iter().map(|i| i as u32).collect();
                        subset.sort_unstable();
                        let tree = fit_tree(samples, &rows, SplitFeatures::Subset(&subset), params.min_leaf, &mut rng)?;
                        Ok((tree, Some(subset)))
                    }
                    (EnsembleMode::RandomSubspace, SubspaceSampling::PerNode) => Ok((
                        fit_tree(samples, &rows, SplitFeatures::PerNode(m), params.min_leaf, &mut rng)?,
                        None,
                    )),
                }
            })
            .collect();
        let (trees, subsets) = fitted?.into_iter().unzip();
        Ok(Ensemble {
            mode: params.mode,
            sampling: params.sampling,
            seed: params.seed,
            n_features: p,
            n_classes: samples.n_classes(),
            trees,
            subsets,
        })
    }

    pub fn trees(&self) -> &[DecisionTree<F>] {
        &self.trees
    }

    pub fn subsets(&self) -> &[Option<Vec<u32>>] {
        &self.subsets
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Fraction of trees voting for each class.
    pub fn predict_scores(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.n_features {
            return Err(Error::param(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut votes = vec![0usize; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x)] += 1;
        }
        let n = F::from_count(self.trees.len());
        Ok(votes.into_iter().map(|v| F::from_count(v) / n).collect())
    }

    pub fn predict_label(&self, x: &[F]) -> Result<usize> {
        Ok(argmax(&self.predict_scores(x)?))
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<F: PartialOrd + Copy>(v: &[F]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

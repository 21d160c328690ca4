use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{presort, Features, Gini, Grower, Tree};
use super::{ClassScores, Hyperparams, N_CLASSES};

/// Bagged Gini trees with per-split feature subsampling. Scores are the
/// mean of the trees' leaf class frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], hyper: &Hyperparams, seed: u64) -> Self {
        let n = x.len();
        let d = x[0].len();
        let k = hyper.rf_max_features.unwrap_or((d as f64).sqrt().floor() as usize).clamp(1, d.max(1));
        let sorted = presort(x);
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..hyper.rf_trees).map(|_| master.next_u64()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut w = vec![0.0; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1.0;
                }
                let rows: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
                let crit = Gini { y, w: &w, n_classes: N_CLASSES };
                let grower = Grower {
                    x,
                    sorted: &sorted,
                    criterion: &crit,
                    max_depth: hyper.rf_max_depth,
                    min_leaf: hyper.rf_min_samples_leaf as f64,
                };
                grower.grow(rows, Features::Random { k, rng: &mut rng }, |rows| {
                    let mut v = vec![0.0; N_CLASSES];
                    for &i in rows {
                        v[y[i]] += w[i];
                    }
                    let total: f64 = v.iter().sum();
                    v.iter_mut().for_each(|c| *c /= total);
                    v
                })
            })
            .collect();
        ForestModel { trees }
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        let mut s = [0.0; N_CLASSES];
        for t in &self.trees {
            for (a, b) in s.iter_mut().zip(t.leaf(q)) {
                *a += b;
            }
        }
        s.map(|v| v / self.trees.len() as f64)
    }
}

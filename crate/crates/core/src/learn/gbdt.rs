use serde::{Deserialize, Serialize};

use super::tree::{presort, Features, Grower, SquaredError, Tree};
use super::{ClassScores, Hyperparams, N_CLASSES};
use crate::features::WindType;

/// Multinomial-deviance gradient boosting: each round fits one shallow
/// regression tree per class to the softmax residuals, with Newton-step
/// leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub learning_rate: f64,
    /// Class indices modelled, in declared order.
    pub classes: Vec<usize>,
    /// Log prior per modelled class.
    pub init: Vec<f64>,
    /// `rounds[r][j]` is round r's tree for `classes[j]`.
    pub rounds: Vec<Vec<Tree>>,
}

fn softmax(f: &[f64]) -> Vec<f64> {
    let top = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = f.iter().map(|v| (v - top).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl GbdtModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: &[WindType], hyper: &Hyperparams) -> Self {
        let n = x.len();
        let classes: Vec<usize> = classes.iter().map(|c| c.index()).collect();
        let k = classes.len();
        let init: Vec<f64> = classes
            .iter()
            .map(|&c| (y.iter().filter(|&&l| l == c).count() as f64 / n as f64).ln())
            .collect();
        let sorted = presort(x);
        let mut raw: Vec<Vec<f64>> = vec![init.clone(); n];
        let mut rounds = Vec::with_capacity(hyper.gbdt_trees);
        let shrink = (k as f64 - 1.0) / k as f64;
        for _ in 0..hyper.gbdt_trees {
            let prob: Vec<Vec<f64>> = raw.iter().map(|f| softmax(f)).collect();
            let mut trees = Vec::with_capacity(k);
            for (j, &c) in classes.iter().enumerate() {
                let resid: Vec<f64> =
                    (0..n).map(|i| if y[i] == c { 1.0 } else { 0.0 } - prob[i][j]).collect();
                let crit = SquaredError { target: &resid };
                let grower = Grower {
                    x,
                    sorted: &sorted,
                    criterion: &crit,
                    max_depth: Some(hyper.gbdt_depth),
                    min_leaf: hyper.gbdt_min_samples_leaf as f64,
                };
                let tree = grower.grow((0..n).collect(), Features::All, |rows| {
                    let num: f64 = rows.iter().map(|&i| resid[i]).sum();
                    let den: f64 = rows.iter().map(|&i| resid[i].abs() * (1.0 - resid[i].abs())).sum();
                    vec![if den.abs() < 1e-150 { 0.0 } else { shrink * num / den }]
                });
                trees.push(tree);
            }
            for (i, f) in raw.iter_mut().enumerate() {
                for (j, t) in trees.iter().enumerate() {
                    f[j] += hyper.gbdt_learning_rate * t.leaf(&x[i])[0];
                }
            }
            rounds.push(trees);
        }
        GbdtModel { learning_rate: hyper.gbdt_learning_rate, classes, init, rounds }
    }

    pub fn raw(&self, q: &[f64]) -> Vec<f64> {
        let mut f = self.init.clone();
        for trees in &self.rounds {
            for (v, t) in f.iter_mut().zip(trees) {
                *v += self.learning_rate * t.leaf(q)[0];
            }
        }
        f
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        let p = softmax(&self.raw(q));
        let mut s = [0.0; N_CLASSES];
        for (&c, v) in self.classes.iter().zip(p) {
            s[c] = v;
        }
        s
    }
}

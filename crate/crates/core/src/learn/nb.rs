use serde::{Deserialize, Serialize};

use super::{ClassScores, N_CLASSES};
use crate::features::WindType;

/// Gaussian naive Bayes. Scores are exact posteriors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// Indexed by class; absent classes have empty vectors.
    pub log_prior: [f64; N_CLASSES],
    pub mean: [Vec<f64>; N_CLASSES],
    pub var: [Vec<f64>; N_CLASSES],
}

impl NaiveBayesModel {
    /// `var_smoothing` times the largest per-feature variance is added to
    /// every class variance.
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: &[WindType], var_smoothing: f64) -> Self {
        let dim = x[0].len();
        let n = x.len() as f64;
        let mut max_var: f64 = 0.0;
        for d in 0..dim {
            let m = x.iter().map(|r| r[d]).sum::<f64>() / n;
            max_var = max_var.max(x.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n);
        }
        let eps = var_smoothing * max_var;
        let mut model = NaiveBayesModel {
            log_prior: [f64::NEG_INFINITY; N_CLASSES],
            mean: Default::default(),
            var: Default::default(),
        };
        for c in classes.iter().map(|c| c.index()) {
            let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
            let nc = rows.len() as f64;
            let mean: Vec<f64> = (0..dim).map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / nc).collect();
            let var = (0..dim)
                .map(|d| rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / nc + eps)
                .collect();
            model.log_prior[c] = (nc / n).ln();
            model.mean[c] = mean;
            model.var[c] = var;
        }
        model
    }

    pub fn log_joint(&self, q: &[f64]) -> [f64; N_CLASSES] {
        let mut out = [f64::NEG_INFINITY; N_CLASSES];
        for c in 0..N_CLASSES {
            if self.mean[c].is_empty() {
                continue;
            }
            let mut lj = self.log_prior[c];
            for ((v, m), s2) in q.iter().zip(&self.mean[c]).zip(&self.var[c]) {
                if *s2 > 0.0 {
                    lj -= 0.5 * (2.0 * std::f64::consts::PI * s2).ln() + (v - m).powi(2) / (2.0 * s2);
                } else if v != m {
                    lj = f64::NEG_INFINITY;
                }
            }
            out[c] = lj;
        }
        out
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        let lj = self.log_joint(q);
        let top = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return [0.0; N_CLASSES];
        }
        lj.map(|l| (l - top).exp())
    }
}

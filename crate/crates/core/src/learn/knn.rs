use serde::{Deserialize, Serialize};

use super::{ClassScores, N_CLASSES};

/// Majority vote among the `k` nearest training rows (Euclidean distance,
/// ties in distance broken by training order). Scores are vote fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize) -> Self {
        KnnModel { k, x: x.to_vec(), y: y.to_vec() }
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(d.len());
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = [0.0; N_CLASSES];
        for &(_, i) in &d[..k] {
            votes[self.y[i]] += 1.0 / k as f64;
        }
        votes
    }
}

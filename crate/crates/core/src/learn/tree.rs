//! CART growing shared by the forest (Gini) and boosting (squared error).

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Node {
    Leaf { value: Vec<f64> },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(&self, q: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if q[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Additive sufficient statistics for a node. `acc[0]` is always the
/// node weight; the split proxy is additive over children and larger
/// is better.
pub(crate) trait Criterion: Sync {
    fn width(&self) -> usize;
    fn accumulate(&self, row: usize, acc: &mut [f64]);
    fn proxy(&self, acc: &[f64]) -> f64;
    fn is_pure(&self, acc: &[f64], rows: &[usize]) -> bool;
}

/// Weighted Gini impurity over `n_classes` labels.
pub(crate) struct Gini<'a> {
    pub y: &'a [usize],
    pub w: &'a [f64],
    pub n_classes: usize,
}

impl Criterion for Gini<'_> {
    fn width(&self) -> usize {
        1 + self.n_classes
    }
    fn accumulate(&self, row: usize, acc: &mut [f64]) {
        acc[0] += self.w[row];
        acc[1 + self.y[row]] += self.w[row];
    }
    fn proxy(&self, acc: &[f64]) -> f64 {
        if acc[0] <= 0.0 {
            return 0.0;
        }
        acc[1..].iter().map(|c| c * c).sum::<f64>() / acc[0]
    }
    fn is_pure(&self, acc: &[f64], _: &[usize]) -> bool {
        acc[1..].iter().any(|&c| c >= acc[0])
    }
}

/// Unweighted squared error against real targets.
pub(crate) struct SquaredError<'a> {
    pub target: &'a [f64],
}

impl Criterion for SquaredError<'_> {
    fn width(&self) -> usize {
        2
    }
    fn accumulate(&self, row: usize, acc: &mut [f64]) {
        acc[0] += 1.0;
        acc[1] += self.target[row];
    }
    fn proxy(&self, acc: &[f64]) -> f64 {
        if acc[0] <= 0.0 { 0.0 } else { acc[1] * acc[1] / acc[0] }
    }
    fn is_pure(&self, _: &[f64], rows: &[usize]) -> bool {
        let t0 = self.target[rows[0]];
        rows.iter().all(|&r| self.target[r] == t0)
    }
}

/// Row indices sorted by each feature (ties by index).
pub(crate) fn presort(x: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let d = x.first().map_or(0, |r| r.len());
    (0..d)
        .map(|f| {
            let mut o: Vec<usize> = (0..x.len()).collect();
            o.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
            o
        })
        .collect()
}

pub(crate) enum Features<'r> {
    All,
    /// Try features in a fresh random order per node until `k` that are
    /// not constant within the node have been evaluated.
    Random { k: usize, rng: &'r mut ChaCha8Rng },
}

pub(crate) struct Grower<'a, C: Criterion> {
    pub x: &'a [Vec<f64>],
    pub sorted: &'a [Vec<usize>],
    pub criterion: &'a C,
    pub max_depth: Option<usize>,
    pub min_leaf: f64,
}

struct Split {
    feature: usize,
    threshold: f64,
    proxy: f64,
}

impl<C: Criterion> Grower<'_, C> {
    /// Grows depth-first from `rows`; `leaf` turns a node's rows into
    /// its stored value.
    pub fn grow(&self, rows: Vec<usize>, mut features: Features<'_>, leaf: impl Fn(&[usize]) -> Vec<f64>) -> Tree {
        let mut nodes = vec![Node::Leaf { value: Vec::new() }];
        let mut mark = vec![usize::MAX; self.x.len()];
        let mut stack = vec![(rows, 0usize, 0usize)];
        let mut stamp = 0;
        while let Some((rows, depth, slot)) = stack.pop() {
            stamp += 1;
            let split = if self.max_depth.is_some_and(|m| depth >= m) {
                None
            } else {
                self.best_split(&rows, &mut features, &mut mark, stamp)
            };
            let Some(s) = split else {
                nodes[slot] = Node::Leaf { value: leaf(&rows) };
                continue;
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][s.feature] <= s.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { value: Vec::new() });
            nodes.push(Node::Leaf { value: Vec::new() });
            nodes[slot] = Node::Split { feature: s.feature, threshold: s.threshold, left, right: left + 1 };
            stack.push((r, depth + 1, left + 1));
            stack.push((l, depth + 1, left));
        }
        Tree { nodes }
    }

    fn best_split(&self, rows: &[usize], features: &mut Features<'_>, mark: &mut [usize], stamp: usize) -> Option<Split> {
        let width = self.criterion.width();
        let mut total = vec![0.0; width];
        for &i in rows {
            self.criterion.accumulate(i, &mut total);
        }
        if total[0] < 2.0 * self.min_leaf || self.criterion.is_pure(&total, rows) {
            return None;
        }
        let n_features = self.sorted.len();
        let (order, budget): (Vec<usize>, usize) = match features {
            Features::All => ((0..n_features).collect(), n_features),
            Features::Random { k, rng } => {
                let mut o: Vec<usize> = (0..n_features).collect();
                o.shuffle(rng);
                (o, *k)
            }
        };
        // Filtering the presorted order is linear in the full sample, so
        // small nodes sort their own rows instead.
        let m = rows.len();
        let use_presorted = m * (usize::BITS - m.leading_zeros()) as usize >= self.x.len();
        if use_presorted {
            for &i in rows {
                mark[i] = stamp;
            }
        }

        let mut best: Option<Split> = None;
        let mut visited = 0;
        let mut ord = Vec::with_capacity(m);
        let mut left = vec![0.0; width];
        let mut right = vec![0.0; width];
        for f in order {
            if visited >= budget {
                break;
            }
            ord.clear();
            if use_presorted {
                ord.extend(self.sorted[f].iter().copied().filter(|&i| mark[i] == stamp));
            } else {
                ord.extend_from_slice(rows);
                ord.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            }
            let (lo, hi) = (self.x[ord[0]][f], self.x[ord[m - 1]][f]);
            if lo == hi {
                continue;
            }
            visited += 1;
            left.iter_mut().for_each(|v| *v = 0.0);
            for p in 0..m - 1 {
                self.criterion.accumulate(ord[p], &mut left);
                let (a, b) = (self.x[ord[p]][f], self.x[ord[p + 1]][f]);
                if a == b {
                    continue;
                }
                if left[0] < self.min_leaf || total[0] - left[0] < self.min_leaf {
                    continue;
                }
                for k in 0..width {
                    right[k] = total[k] - left[k];
                }
                let proxy = self.criterion.proxy(&left) + self.criterion.proxy(&right);
                if best.as_ref().is_none_or(|s| proxy > s.proxy) {
                    let mid = 0.5 * (a + b);
                    let threshold = if mid < b { mid } else { a };
                    best = Some(Split { feature: f, threshold, proxy });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fully_grown_tree_fits_distinct_rows() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 1.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let y: Vec<usize> = (0..30).map(|i| (i * 7) % 3).collect();
        let w = vec![1.0; 30];
        let crit = Gini { y: &y, w: &w, n_classes: 3 };
        let sorted = presort(&x);
        let g = Grower { x: &x, sorted: &sorted, criterion: &crit, max_depth: None, min_leaf: 1.0 };
        let tree = g.grow((0..30).collect(), Features::All, |rows| {
            let mut v = vec![0.0; 3];
            rows.iter().for_each(|&i| v[y[i]] += 1.0);
            v
        });
        for (i, row) in x.iter().enumerate() {
            let v = tree.leaf(row);
            assert_eq!(v.iter().sum::<f64>(), v[y[i]], "row {i} not isolated");
        }
    }

    #[test]
    fn depth_limit_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let t: Vec<f64> = (0..64).map(|i| ((i * 13) % 11) as f64).collect();
        let crit = SquaredError { target: &t };
        let sorted = presort(&x);
        let g = Grower { x: &x, sorted: &sorted, criterion: &crit, max_depth: Some(3), min_leaf: 1.0 };
        let tree = g.grow((0..64).collect(), Features::All, |rows| vec![rows.len() as f64]);
        // Pure nodes may stop early, so the tree need not be complete.
        assert_eq!(tree.depth(), 3);
        assert!(tree.nodes.len() <= 15);
    }

    #[test]
    fn best_single_split_found() {
        // Step function: one split at 4.5 removes all error.
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let t: Vec<f64> = (0..10).map(|i| if i < 5 { -1.0 } else { 2.0 }).collect();
        let crit = SquaredError { target: &t };
        let sorted = presort(&x);
        let g = Grower { x: &x, sorted: &sorted, criterion: &crit, max_depth: Some(1), min_leaf: 1.0 };
        let tree = g.grow((0..10).collect(), Features::All, |_| vec![0.0]);
        assert!(matches!(tree.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 4.5));
    }
}

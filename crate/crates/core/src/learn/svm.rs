use serde::{Deserialize, Serialize};

use super::{ClassScores, Hyperparams, N_CLASSES};
use crate::features::WindType;
use crate::{Error, Result};

/// Smallest curvature used in a pair update when the kernel is degenerate.
const TAU: f64 = 1e-12;

/// One-vs-rest RBF support vector machines sharing a pool of support
/// vectors. Each class score is the logistic sigmoid of its margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub gamma: f64,
    pub vectors: Vec<Vec<f64>>,
    /// One machine per class; `None` for classes absent from training.
    pub machines: [Option<Machine>; N_CLASSES],
}

/// `f(x) = Σ coef_i K(v_i, x) - rho`, with `coef_i = α_i y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub coef: Vec<f64>,
    pub rho: f64,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()).exp()
}

/// Result of the dual solve for one binary problem.
#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
}

/// Solves `min ½ αᵀQα - eᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`, with
/// `Q_ij = y_i y_j K_ij`, by sequential minimal optimization using
/// second-order working-set selection.
pub(crate) fn solve_dual(k: &[Vec<f64>], y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<DualSolution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iter = 0;
    loop {
        // i maximizes -y G over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // j minimizes the second-order objective decrease over I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let yg = y[t] * grad[t];
            gmax2 = gmax2.max(yg);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + yg;
            if b > 0.0 {
                let a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < tol || i == usize::MAX || j == usize::MAX {
            break;
        }
        iter += 1;
        if iter > max_iter {
            return Err(Error::NonConvergence(format!(
                "SVM dual solver: KKT gap {:.3e} after {max_iter} iterations",
                gmax + gmax2
            )));
        }

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[i][j];
        if y[i] != y[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
        }
    }

    // Offset: average over free vectors, else the midpoint of the bounds.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { 0.5 * (ub + lb) };
    Ok(DualSolution { alpha, rho })
}

impl SvmModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: &[WindType], hyper: &Hyperparams) -> Result<Self> {
        let n = x.len();
        let gamma = hyper.svm_gamma.unwrap_or(1.0 / x[0].len().max(1) as f64);
        let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| rbf(gamma, &x[i], &x[j])).collect()).collect();

        let mut solutions: [Option<DualSolution>; N_CLASSES] = Default::default();
        let mut ys: [Vec<f64>; N_CLASSES] = Default::default();
        for c in classes.iter().map(|c| c.index()) {
            let yc: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            solutions[c] = Some(solve_dual(&k, &yc, hyper.svm_c, hyper.svm_tol, hyper.svm_max_iter)?);
            ys[c] = yc;
        }
        // Shared pool of rows that are support vectors in any machine.
        let pool: Vec<usize> = (0..n)
            .filter(|&t| solutions.iter().flatten().any(|s| s.alpha[t] > 0.0))
            .collect();
        let machines = std::array::from_fn(|c| {
            solutions[c].as_ref().map(|s| Machine {
                coef: pool.iter().map(|&t| s.alpha[t] * ys[c][t]).collect(),
                rho: s.rho,
            })
        });
        Ok(SvmModel { gamma, vectors: pool.iter().map(|&t| x[t].clone()).collect(), machines })
    }

    pub fn decision(&self, q: &[f64]) -> [Option<f64>; N_CLASSES] {
        let kv: Vec<f64> = self.vectors.iter().map(|v| rbf(self.gamma, v, q)).collect();
        std::array::from_fn(|c| {
            self.machines[c]
                .as_ref()
                .map(|m| m.coef.iter().zip(&kv).map(|(a, k)| a * k).sum::<f64>() - m.rho)
        })
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        self.decision(q).map(|d| d.map_or(0.0, |f| 1.0 / (1.0 + (-f).exp())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_toy_set() {
        // Two clusters on a line, well apart.
        let x: Vec<Vec<f64>> = [-2.0, -1.8, -1.5, -1.2, 1.1, 1.4, 1.9, 2.2].iter().map(|&v| vec![v]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] > 0.0 { 1.0 } else { -1.0 }).collect();
        let k: Vec<Vec<f64>> =
            x.iter().map(|a| x.iter().map(|b| rbf(1.0, a, b)).collect()).collect();
        let c = 10.0;
        let sol = solve_dual(&k, &y, c, 1e-6, 100_000).unwrap();
        // Dual feasibility.
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(balance.abs() < 1e-10);
        for (t, row) in x.iter().enumerate() {
            let f: f64 = (0..x.len()).map(|s| sol.alpha[s] * y[s] * rbf(1.0, &x[s], row)).sum::<f64>() - sol.rho;
            assert_eq!(f > 0.0, y[t] > 0.0, "point {t} margin {f}");
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let y: Vec<f64> = (0..20).map(|i| if (i * 7) % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| rbf(0.5, a, b)).collect()).collect();
        let c = 1.0;
        let tol = 1e-6;
        let sol = solve_dual(&k, &y, c, tol, 1_000_000).unwrap();
        for t in 0..20 {
            let f: f64 = (0..20).map(|s| sol.alpha[s] * y[s] * k[s][t]).sum::<f64>() - sol.rho;
            let m = y[t] * f;
            if sol.alpha[t] <= 0.0 {
                assert!(m >= 1.0 - 10.0 * tol, "{t}: {m}");
            } else if sol.alpha[t] >= c {
                assert!(m <= 1.0 + 10.0 * tol, "{t}: {m}");
            } else {
                assert!((m - 1.0).abs() < 10.0 * tol, "{t}: {m}");
            }
        }
    }
}

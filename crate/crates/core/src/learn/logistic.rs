use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ClassScores, Hyperparams, N_CLASSES};
use crate::features::WindType;
use crate::{Error, Result};

/// One-vs-rest L2-penalized logistic regression. The intercept is not
/// penalized. Each class score is its binary model's probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Per class: weights followed by the intercept.
    pub weights: [Option<Vec<f64>>; N_CLASSES],
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softplus `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() }
}

fn objective(x: &DMatrix<f64>, y: &[f64], w: &DVector<f64>, l2: f64) -> f64 {
    let z = x * w;
    let d = w.len() - 1;
    let loss: f64 = z.iter().zip(y).map(|(&z, &t)| softplus(z) - t * z).sum();
    loss + 0.5 * l2 * w.rows(0, d).norm_squared()
}

/// Newton's method with backtracking on the penalized negative
/// log-likelihood. Converged once the gradient norm drops below `tol`.
pub(crate) fn fit_binary(x: &DMatrix<f64>, y: &[f64], l2: f64, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let d = p - 1;
    let mut w = DVector::zeros(p);
    let mut f = objective(x, y, &w, l2);
    for _ in 0..max_iter {
        let z = x * &w;
        let prob: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let resid = DVector::from_iterator(n, prob.iter().zip(y).map(|(p, t)| p - t));
        let mut g = x.transpose() * resid;
        for j in 0..d {
            g[j] += l2 * w[j];
        }
        if g.norm() < tol {
            return Ok(w);
        }
        let mut xs = x.clone();
        for (i, mut row) in xs.row_iter_mut().enumerate() {
            row *= prob[i] * (1.0 - prob[i]);
        }
        let mut h = x.transpose() * xs;
        for j in 0..d {
            h[(j, j)] += l2;
        }
        // Keeps the intercept direction positive definite when all
        // probabilities saturate.
        h[(d, d)] += 1e-12;
        let step = h
            .cholesky()
            .ok_or_else(|| Error::NonConvergence("logistic Hessian not positive definite".into()))?
            .solve(&g);
        let mut t = 1.0;
        loop {
            let cand = &w - &step * t;
            let fc = objective(x, y, &cand, l2);
            if fc <= f - 1e-4 * t * g.dot(&step) || t < 1e-10 {
                w = cand;
                f = fc;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence(format!(
        "logistic regression did not reach gradient norm {tol:e} in {max_iter} iterations"
    )))
}

fn design(x: &[Vec<f64>]) -> DMatrix<f64> {
    let d = x[0].len();
    DMatrix::from_fn(x.len(), d + 1, |i, j| if j < d { x[i][j] } else { 1.0 })
}

impl LogisticModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: &[WindType], hyper: &Hyperparams) -> Result<Self> {
        let xm = design(x);
        let mut weights: [Option<Vec<f64>>; N_CLASSES] = Default::default();
        for c in classes.iter().map(|c| c.index()) {
            let yc: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { 0.0 }).collect();
            let w = fit_binary(&xm, &yc, hyper.lr_l2, hyper.lr_tol, hyper.lr_max_iter)?;
            weights[c] = Some(w.iter().copied().collect());
        }
        Ok(LogisticModel { weights })
    }

    pub fn scores(&self, q: &[f64]) -> ClassScores {
        std::array::from_fn(|c| {
            self.weights[c].as_ref().map_or(0.0, |w| {
                let d = w.len() - 1;
                sigmoid(w[..d].iter().zip(q).map(|(a, b)| a * b).sum::<f64>() + w[d])
            })
        })
    }
}

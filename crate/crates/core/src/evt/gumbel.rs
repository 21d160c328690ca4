use serde::{Deserialize, Serialize};

use super::EventDistribution;
use crate::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MIN_SAMPLES: usize = 10;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;

/// Gumbel (type I extreme value) law, `F(v) = exp(-exp(-(v - μ) / β))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit {
    pub location: f64,
    pub scale: f64,
}

impl GumbelFit {
    pub fn new(location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !location.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid Gumbel parameters location={location} scale={scale}"
            )));
        }
        Ok(GumbelFit { location, scale })
    }

    /// Method-of-moments estimate: `β = s√6/π`, `μ = mean - γβ`.
    pub fn moments(samples: &[f64]) -> Result<Self> {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let scale = var.sqrt() * 6f64.sqrt() / std::f64::consts::PI;
        if !(scale > 0.0) {
            return Err(Error::Degenerate("Gumbel fit of samples with zero spread".into()));
        }
        Ok(GumbelFit { location: mean - EULER_GAMMA * scale, scale })
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples
            .iter()
            .map(|&x| {
                let z = (x - self.location) / self.scale;
                -self.scale.ln() - z - (-z).exp()
            })
            .sum()
    }

    /// Gradient of the log-likelihood with respect to (location, scale).
    pub fn gradient(&self, samples: &[f64]) -> [f64; 2] {
        let n = samples.len() as f64;
        let (mut s_e, mut s_z, mut s_ze) = (0.0, 0.0, 0.0);
        for &x in samples {
            let z = (x - self.location) / self.scale;
            let e = (-z).exp();
            s_e += e;
            s_z += z;
            s_ze += z * e;
        }
        [(n - s_e) / self.scale, (-n + s_z - s_ze) / self.scale]
    }
}

impl EventDistribution for GumbelFit {
    fn cdf(&self, v: f64) -> f64 {
        (-(-(v - self.location) / self.scale).exp()).exp()
    }

    fn quantile(&self, p: f64) -> f64 {
        self.location - self.scale * (-p.ln()).ln()
    }
}

/// Weighted mean and second moment of the samples under weights
/// `exp(-(x - min) / β)`, plus the log of the mean weight.
fn weighted_moments(samples: &[f64], min: f64, beta: f64) -> (f64, f64, f64) {
    let (mut sw, mut swx, mut swx2) = (0.0, 0.0, 0.0);
    for &x in samples {
        let w = (-(x - min) / beta).exp();
        sw += w;
        swx += w * x;
        swx2 += w * x * x;
    }
    (swx / sw, swx2 / sw, (sw / samples.len() as f64).ln())
}

/// Maximum-likelihood Gumbel fit.
///
/// The scale solves `β - mean + Σ x e^{-x/β} / Σ e^{-x/β} = 0`, which is
/// strictly increasing in β, so a Newton iteration safeguarded by a
/// shrinking bracket always lands on the unique root. The location then
/// follows in closed form. Starts from the moment estimate; fails if the
/// log-likelihood gradient norm is not below 1e-8 after 200 iterations.
pub fn fit_gumbel(samples: &[f64]) -> Result<GumbelFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "Gumbel fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let init = GumbelFit::moments(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // g(β) < 0 as β → 0 and g(β) > 0 for β ≥ max - min.
    let (mut lo, mut hi) = (0.0f64, (max - min).max(init.scale) * 2.0);
    let mut beta = init.scale.min(hi * 0.5);
    let mut fit = init;
    for _ in 0..MAX_ITER {
        let (a, b, log_mean_w) = weighted_moments(samples, min, beta);
        let g = beta - mean + a;
        if g < 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let dg = 1.0 + (b - a * a).max(0.0) / (beta * beta);
        let mut next = beta - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        fit = GumbelFit { location: min - beta * log_mean_w, scale: beta };
        let grad = fit.gradient(samples);
        if grad[0].hypot(grad[1]) < GRAD_TOL {
            return Ok(fit);
        }
        if (next - beta).abs() <= 4.0 * f64::EPSILON * beta {
            break;
        }
        beta = next;
    }
    let grad = fit.gradient(samples);
    Err(Error::NonConvergence(format!(
        "Gumbel MLE: gradient norm {:.3e} at location={} scale={} (n={})",
        grad[0].hypot(grad[1]),
        fit.location,
        fit.scale,
        samples.len()
    )))
}

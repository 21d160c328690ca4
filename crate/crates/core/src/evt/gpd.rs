use serde::{Deserialize, Serialize};

use super::EventDistribution;
use crate::{Error, Result};

const MIN_SAMPLES: usize = 20;
/// Shape estimates are clamped into this range.
pub const SHAPE_BOUNDS: (f64, f64) = (-0.5, 0.5);
const NEAR_ZERO_SHAPE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpdMethod {
    /// Maximum likelihood.
    Mle,
    /// Probability-weighted moments, used when the likelihood has no
    /// interior maximum.
    Pwm,
}

/// Generalized Pareto law of threshold excesses,
/// `F(v) = 1 - (1 + ξ (v - u) / σ)^(-1/ξ)` for `v ≥ u`, and
/// `1 - exp(-(v - u) / σ)` when ξ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub shape: f64,
    pub scale: f64,
    pub threshold: f64,
    pub method: GpdMethod,
    /// Whether the shape estimate was clamped into [`SHAPE_BOUNDS`].
    pub clamped: bool,
}

impl GpdFit {
    pub fn new(shape: f64, scale: f64, threshold: f64) -> Result<Self> {
        if !(scale > 0.0) || !shape.is_finite() || !threshold.is_finite() {
            return Err(Error::InvalidInput(format!(
                "invalid GPD parameters shape={shape} scale={scale} threshold={threshold}"
            )));
        }
        Ok(GpdFit { shape, scale, threshold, method: GpdMethod::Mle, clamped: false })
    }

    /// Upper end of the support, infinite unless ξ < 0.
    pub fn upper_bound(&self) -> f64 {
        if self.shape < 0.0 {
            self.threshold - self.scale / self.shape
        } else {
            f64::INFINITY
        }
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        excess_log_likelihood(
            &samples.iter().map(|x| x - self.threshold).collect::<Vec<_>>(),
            self.shape,
            self.scale,
        )
    }
}

impl EventDistribution for GpdFit {
    fn cdf(&self, v: f64) -> f64 {
        if v <= self.threshold {
            return 0.0;
        }
        let y = (v - self.threshold) / self.scale;
        if self.shape.abs() < NEAR_ZERO_SHAPE {
            return -(-y).exp_m1();
        }
        let z = 1.0 + self.shape * y;
        if z <= 0.0 {
            return 1.0;
        }
        -((-z.ln() / self.shape).exp_m1())
    }

    fn quantile(&self, p: f64) -> f64 {
        let tail = 1.0 - p;
        if self.shape.abs() < NEAR_ZERO_SHAPE {
            self.threshold - self.scale * tail.ln()
        } else {
            self.threshold + self.scale / self.shape * (tail.powf(-self.shape) - 1.0)
        }
    }
}

fn excess_log_likelihood(excesses: &[f64], shape: f64, scale: f64) -> f64 {
    let n = excesses.len() as f64;
    if shape.abs() < NEAR_ZERO_SHAPE {
        return -n * scale.ln() - excesses.iter().sum::<f64>() / scale;
    }
    let mut s = 0.0;
    for &y in excesses {
        let z = 1.0 + shape * y / scale;
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        s += z.ln();
    }
    -n * scale.ln() - (1.0 + 1.0 / shape) * s
}

/// Profile likelihood in θ = ξ/σ: for fixed θ the shape is the mean of
/// `ln(1 + θy)` and the scale is `ξ/θ`. Returns `(loglik, ξ, σ)`.
fn profile(excesses: &[f64], theta: f64, mean: f64) -> (f64, f64, f64) {
    let n = excesses.len() as f64;
    if theta == 0.0 {
        return (-n * mean.ln() - n, 0.0, mean);
    }
    let mut s = 0.0;
    for &y in excesses {
        let z = theta * y;
        if z <= -1.0 {
            return (f64::NEG_INFINITY, f64::NAN, f64::NAN);
        }
        s += z.ln_1p();
    }
    let shape = s / n;
    let scale = shape / theta;
    if !(scale > 0.0) {
        return (f64::NEG_INFINITY, shape, scale);
    }
    (-n * scale.ln() - n * (1.0 + shape), shape, scale)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}

/// Maximum-likelihood (ξ, σ), or `None` when the likelihood has no
/// interior maximum with ξ > -1.
fn mle(excesses: &[f64]) -> Option<(f64, f64)> {
    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let max = excesses.iter().copied().fold(0.0, f64::max);

    let mut grid: Vec<f64> = (0..=120)
        .rev()
        .map(|i| -10f64.powf(-6.0 + 0.05 * i as f64) * (1.0 - 1e-9) / max)
        .collect();
    grid.push(0.0);
    grid.extend((0..=160).map(|i| 10f64.powf(-6.0 + 0.05 * i as f64) / mean));

    let values: Vec<f64> = grid
        .iter()
        .map(|&t| {
            let (ll, shape, _) = profile(excesses, t, mean);
            if shape > -1.0 {
                ll
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let (best, &best_ll) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    if !best_ll.is_finite() || best == 0 || best == grid.len() - 1 {
        return None;
    }
    if !values[best - 1].is_finite() {
        // Maximum sits against the ξ = -1 boundary.
        return None;
    }
    let theta = golden_max(
        |t| profile(excesses, t, mean).0,
        grid[best - 1],
        grid[best + 1],
        200,
    );
    let (ll, shape, scale) = profile(excesses, theta, mean);
    let (shape, scale) = if ll >= best_ll { (shape, scale) } else {
        let (_, s, c) = profile(excesses, grid[best], mean);
        (s, c)
    };
    (shape.is_finite() && scale.is_finite() && scale > 0.0).then_some((shape, scale))
}

/// Hosking–Wallis probability-weighted-moment estimate.
fn pwm(excesses: &[f64]) -> Option<(f64, f64)> {
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let a0 = sorted.iter().sum::<f64>() / n;
    let a1 = sorted
        .iter()
        .enumerate()
        .map(|(i, y)| (1.0 - (i as f64 + 1.0 - 0.35) / n) * y)
        .sum::<f64>()
        / n;
    let denom = a0 - 2.0 * a1;
    let shape = 2.0 - a0 / denom;
    let scale = 2.0 * a0 * a1 / denom;
    (shape.is_finite() && scale > 0.0).then_some((shape, scale))
}

/// Maximum-likelihood scale for a fixed shape.
fn scale_for_shape(excesses: &[f64], shape: f64) -> f64 {
    let mean = excesses.iter().sum::<f64>() / excesses.len() as f64;
    let max = excesses.iter().copied().fold(0.0, f64::max);
    let lower = if shape < 0.0 { -shape * max * (1.0 + 1e-9) } else { 0.0 };
    let lo = lower.max(mean * 1e-6).ln();
    let hi = (mean * 100.0).max(lower * 10.0).ln();
    golden_max(|ls| excess_log_likelihood(excesses, shape, ls.exp()), lo, hi, 200).exp()
}

/// Fits a GPD to samples above threshold `u`.
///
/// Maximum likelihood over the excesses, with probability-weighted moments
/// as the fallback. A shape outside [-0.5, 0.5] is clamped (with a warning)
/// and the scale re-estimated for the clamped shape.
pub fn fit_gpd(samples: &[f64], threshold: f64) -> Result<GpdFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "GPD fit needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|&&x| !(x >= threshold) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("sample {x} is below the threshold {threshold}")));
    }
    let excesses: Vec<f64> = samples.iter().map(|x| x - threshold).collect();
    if excesses.iter().all(|&y| y == 0.0) {
        return Err(Error::Degenerate("all GPD excesses are zero".into()));
    }

    let (method, (shape, scale)) = match mle(&excesses) {
        Some(p) => (GpdMethod::Mle, p),
        None => {
            log::warn!("GPD likelihood has no interior maximum; using probability-weighted moments");
            let p = pwm(&excesses).ok_or_else(|| {
                Error::NonConvergence("GPD: both likelihood and moment estimates failed".into())
            })?;
            (GpdMethod::Pwm, p)
        }
    };
    let bounded = shape.clamp(SHAPE_BOUNDS.0, SHAPE_BOUNDS.1);
    let clamped = bounded != shape;
    let scale = if clamped {
        log::warn!("GPD shape {shape:.4} clamped to {bounded}");
        scale_for_shape(&excesses, bounded)
    } else {
        scale
    };
    Ok(GpdFit { shape: bounded, scale, threshold, method, clamped })
}

//! Small sample statistics used by the Monte Carlo checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target).abs() / self.std_error
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        self.z_score(target) <= sigmas
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean with standard error `s / sqrt(n)`.
pub fn mean_estimate(xs: &[f64]) -> Result<Estimate> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: xs.len() });
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    Ok(Estimate {
        value: m,
        std_error: (var / xs.len() as f64).sqrt(),
    })
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> Result<f64> {
    Ok(covariance_estimate(xs, ys)?.value)
}

/// Unbiased sample covariance with a standard error taken from the spread of the
/// centred products.
pub fn covariance_estimate(xs: &[f64], ys: &[f64]) -> Result<Estimate> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "covariance of samples with lengths {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let (mx, my) = (mean(xs), mean(ys));
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1) as f64;
    let pm = mean(&prods);
    let spread = prods.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Estimate {
        value: cov,
        std_error: (spread / n as f64).sqrt(),
    })
}

/// Pearson correlation, `None` when either sample has zero variance.
pub fn correlation(xs: &[f64], ys: &[f64]) -> Result<Option<f64>> {
    let cxy = covariance(xs, ys)?;
    let cxx = covariance(xs, xs)?;
    let cyy = covariance(ys, ys)?;
    if cxx <= 0.0 || cyy <= 0.0 {
        return Ok(None);
    }
    Ok(Some((cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0)))
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Linear-interpolation quantile (type 7). Returns NaN for an empty sample.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

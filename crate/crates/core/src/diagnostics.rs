//! Chi-square Q-Q data for checking the per-class Gaussian assumption.
//!
//! Under the model, the squared Mahalanobis distance of a class sample to
//! its class mean follows a chi-square law with N degrees of freedom.
//! Plotting sorted distances against chi-square quantiles should give a
//! straight line; curvature or kinks point at skewed or multimodal concepts.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::model::MixtureModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QQSeries {
    pub class: usize,
    /// `(theoretical quantile, empirical squared distance)`, both ascending.
    pub pairs: Vec<(f64, f64)>,
    pub dof: usize,
}

impl QQSeries {
    /// Largest `|empirical - theoretical|` over the central `fraction` of the
    /// pairs (e.g. 0.9 drops the lowest and highest 5%).
    pub fn max_central_deviation(&self, fraction: f64) -> f64 {
        let n = self.pairs.len();
        let tail = ((1.0 - fraction) / 2.0 * n as f64).floor() as usize;
        self.pairs[tail..n - tail]
            .iter()
            .map(|(t, e)| (e - t).abs())
            .fold(0.0, f64::max)
    }
}

/// `(z - mu_c)^T Sigma_c^-1 (z - mu_c)`.
pub fn mahalanobis_sq(model: &MixtureModel, c: usize, z: &[f64]) -> Result<f64> {
    let class = model.class(c)?;
    model.check_input(z)?;
    Ok(class.mahalanobis_sq(z))
}

/// Inverse CDF of the chi-square distribution, by bracketed bisection on
/// the regularized lower incomplete gamma function.
pub fn chi2_quantile(p: f64, dof: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "probability must be in (0, 1), got {p}"
        )));
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("dof must be positive".into()));
    }
    let shape = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(shape, x / 2.0);

    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0 * (2.0 * dof as f64).sqrt();
    while cdf(hi) < p {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-10 * hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Sorted squared distances of `samples` to class `c`, paired with
/// chi-square quantiles at plotting positions `(i - 0.5) / n`.
pub fn qq_series<R: AsRef<[f64]>>(
    model: &MixtureModel,
    c: usize,
    samples: &[R],
) -> Result<QQSeries> {
    let class = model.class(c)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Q-Q series needs at least 2 samples, got {n}"
        )));
    }
    let mut d2 = samples
        .iter()
        .map(|z| {
            model.check_input(z.as_ref())?;
            Ok(class.mahalanobis_sq(z.as_ref()))
        })
        .collect::<Result<Vec<_>>>()?;
    d2.sort_by(f64::total_cmp);
    let dof = model.n_concepts();
    let pairs = d2
        .into_iter()
        .enumerate()
        .map(|(i, e)| Ok((chi2_quantile((i as f64 + 0.5) / n as f64, dof)?, e)))
        .collect::<Result<Vec<_>>>()?;
    Ok(QQSeries {
        class: c,
        pairs,
        dof,
    })
}

//! Posterior inference and hard predictions, all in log space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreDataset;
use crate::error::{Error, Result};
use crate::model::MixtureModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub probabilities: Vec<f64>,
    pub log_joint: Vec<f64>,
    pub predicted: usize,
}

/// `log p_c + log N(z | mu_c, Sigma_c)` for every class, including the
/// `-(N/2) log 2π` constant.
pub fn log_joint(model: &MixtureModel, z: &[f64]) -> Result<Vec<f64>> {
    model.check_input(z)?;
    Ok(model.classes.iter().map(|c| c.log_joint(z)).collect())
}

/// Index of the largest entry; the lowest index wins exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Class posteriors via log-sum-exp normalization.
pub fn posterior(model: &MixtureModel, z: &[f64]) -> Result<PosteriorResult> {
    let log_joint = log_joint(model, z)?;
    let predicted = argmax(&log_joint);
    let max = log_joint[predicted];
    let mut probabilities: Vec<f64> = log_joint.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probabilities.iter().sum();
    for p in &mut probabilities {
        *p /= total;
    }
    Ok(PosteriorResult {
        probabilities,
        log_joint,
        predicted,
    })
}

pub fn predict(model: &MixtureModel, z: &[f64]) -> Result<usize> {
    model.check_input(z)?;
    Ok(predict_unchecked(model, z))
}

/// Allocation-free argmax of the log-joint; `z` must already be validated.
pub(crate) fn predict_unchecked(model: &MixtureModel, z: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (c, class) in model.classes.iter().enumerate() {
        let v = class.log_joint(z);
        if c == 0 || v > best_val {
            best = c;
            best_val = v;
        }
    }
    best
}

/// Row-wise predictions, in row order.
pub fn predict_batch<R>(model: &MixtureModel, rows: &[R]) -> Result<Vec<usize>>
where
    R: AsRef<[f64]> + Sync,
{
    rows.par_iter()
        .map(|r| predict(model, r.as_ref()))
        .collect()
}

/// Predictions for every row of a dataset whose concepts match the model's.
pub fn predict_dataset(model: &MixtureModel, dataset: &ScoreDataset) -> Result<Vec<usize>> {
    if dataset.n_concepts() != model.n_concepts() {
        return Err(Error::Dimension {
            expected: model.n_concepts(),
            found: dataset.n_concepts(),
        });
    }
    let rows: Vec<&[f64]> = dataset.rows().collect();
    predict_batch(model, &rows)
}

/// Fraction of `predictions` equal to `labels`; 0 for empty input.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

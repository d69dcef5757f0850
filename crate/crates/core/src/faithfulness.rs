//! Deletion-curve faithfulness benchmark.
//!
//! For each test sample, concepts are ranked by some importance ordering
//! and the first `n_null` of them are replaced by a baseline value. The
//! accuracy of the classifier on the modified test set, as a function of
//! `n_null`, forms the deletion curve: an ordering that finds the concepts
//! the classifier relies on makes accuracy collapse faster.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counterfactual::all_counterfactuals;
use crate::dataset::ScoreDataset;
use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::qda::predict;

/// Copy of `z` with the coordinates in `concepts` taken from `baseline`.
pub fn nullify(z: &[f64], concepts: &[usize], baseline: &[f64]) -> Result<Vec<f64>> {
    if baseline.len() != z.len() {
        return Err(Error::Dimension {
            expected: z.len(),
            found: baseline.len(),
        });
    }
    let mut out = z.to_vec();
    for &j in concepts {
        if j >= z.len() {
            return Err(Error::IndexOutOfRange {
                what: "concept",
                index: j,
                len: z.len(),
            });
        }
        out[j] = baseline[j];
    }
    Ok(out)
}

/// Unweighted mean of the class means.
pub fn class_average_baseline(model: &MixtureModel) -> Vec<f64> {
    let c = model.n_classes() as f64;
    (0..model.n_concepts())
        .map(|j| model.classes.iter().map(|k| k.mean[j]).sum::<f64>() / c)
        .collect()
}

/// Prior-weighted mean of the class means, i.e. the pooled training mean.
pub fn pooled_baseline(model: &MixtureModel) -> Vec<f64> {
    (0..model.n_concepts())
        .map(|j| model.classes.iter().map(|k| k.prior * k.mean[j]).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    #[default]
    ClassAverage,
    Pooled,
}

impl BaselineKind {
    pub fn compute(self, model: &MixtureModel) -> Vec<f64> {
        match self {
            BaselineKind::ClassAverage => class_average_baseline(model),
            BaselineKind::Pooled => pooled_baseline(model),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderingSource {
    LocalCounterfactual,
    Random,
    External,
}

/// Supplies a per-sample concept importance order, most important first.
pub trait ConceptOrdering: Sync {
    fn source(&self) -> OrderingSource;

    fn seed(&self) -> Option<u64> {
        None
    }

    fn order(&self, model: &MixtureModel, sample: usize, z: &[f64]) -> Result<Vec<usize>>;
}

/// Ascending smallest `|scaled epsilon|` over both signs; concepts without
/// any counterfactual follow in index order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CounterfactualOrdering;

impl ConceptOrdering for CounterfactualOrdering {
    fn source(&self) -> OrderingSource {
        OrderingSource::LocalCounterfactual
    }

    fn order(&self, model: &MixtureModel, _sample: usize, z: &[f64]) -> Result<Vec<usize>> {
        let explanation = all_counterfactuals(model, z)?;
        let n = model.n_concepts();
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        // already sorted by |epsilon_scaled|
        for cf in &explanation.counterfactuals {
            if !seen[cf.concept] {
                seen[cf.concept] = true;
                order.push(cf.concept);
            }
        }
        order.extend((0..n).filter(|&j| !seen[j]));
        Ok(order)
    }
}

/// Uniform random permutation per sample, derived from `seed` and the sample
/// index so results do not depend on evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct RandomOrdering {
    pub seed: u64,
}

impl ConceptOrdering for RandomOrdering {
    fn source(&self) -> OrderingSource {
        OrderingSource::Random
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn order(&self, model: &MixtureModel, sample: usize, _z: &[f64]) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(sample as u64);
        let mut order: Vec<usize> = (0..model.n_concepts()).collect();
        order.shuffle(&mut rng);
        Ok(order)
    }
}

/// Orders read from elsewhere (e.g. a third-party explainer), one row per
/// test sample. A partial row is completed with the missing concepts in
/// index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalOrdering {
    pub rows: Vec<Vec<usize>>,
}

impl ConceptOrdering for ExternalOrdering {
    fn source(&self) -> OrderingSource {
        OrderingSource::External
    }

    fn order(&self, model: &MixtureModel, sample: usize, _z: &[f64]) -> Result<Vec<usize>> {
        let n = model.n_concepts();
        let row = self.rows.get(sample).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "external ordering has {} rows, sample {sample} requested",
                self.rows.len()
            ))
        })?;
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for &j in row {
            if j >= n {
                return Err(Error::IndexOutOfRange {
                    what: "concept",
                    index: j,
                    len: n,
                });
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidArgument(format!(
                    "external ordering row {sample} repeats concept {j}"
                )));
            }
            order.push(j);
        }
        order.extend((0..n).filter(|&j| !seen[j]));
        Ok(order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionCurve {
    pub n_null: Vec<usize>,
    pub accuracies: Vec<f64>,
    pub ordering_source: OrderingSource,
    pub seed: Option<u64>,
    pub baseline: BaselineKind,
}

/// Accuracy on `testset` after nullifying each sample's first `n_null`
/// concepts under `ordering`, for every value in `n_null`.
pub fn deletion_curve(
    model: &MixtureModel,
    testset: &ScoreDataset,
    ordering: &dyn ConceptOrdering,
    n_null: &[usize],
    baseline: BaselineKind,
) -> Result<DeletionCurve> {
    let n = model.n_concepts();
    if testset.n_concepts() != n {
        return Err(Error::Dimension {
            expected: n,
            found: testset.n_concepts(),
        });
    }
    if let Some(&bad) = n_null.iter().find(|&&k| k > n) {
        return Err(Error::InvalidArgument(format!(
            "n_null values must be in 0..={n}, got {bad}"
        )));
    }
    let base = baseline.compute(model);
    let labels = testset.labels();

    // hits[k] counts correct predictions at n_null[k]
    let hits = (0..testset.n_samples())
        .into_par_iter()
        .map(|i| -> Result<Vec<usize>> {
            let z = testset.row(i);
            let order = ordering.order(model, i, z)?;
            n_null
                .iter()
                .map(|&k| {
                    let nulled = nullify(z, &order[..k], &base)?;
                    Ok(usize::from(predict(model, &nulled)? == labels[i]))
                })
                .collect()
        })
        .try_reduce(
            || vec![0; n_null.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                Ok(a)
            },
        )?;

    let total = testset.n_samples().max(1) as f64;
    Ok(DeletionCurve {
        n_null: n_null.to_vec(),
        accuracies: hits.into_iter().map(|h| h as f64 / total).collect(),
        ordering_source: ordering.source(),
        seed: ordering.seed(),
        baseline,
    })
}

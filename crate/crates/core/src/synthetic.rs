//! Seeded Gaussian-mixture generators with known ground truth.

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreDataset;
use crate::error::{Error, Result};
use crate::model::{MixtureModel, Ridge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassGenerator {
    pub name: String,
    pub mean: Vec<f64>,
    /// Row-major N x N.
    pub covariance: Vec<f64>,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCounts {
    /// Exactly this many rows per class, grouped by class.
    PerClass(Vec<usize>),
    /// This many rows in total, each label drawn from the priors.
    Total(usize),
}

/// Shifts one class's mean on one concept, emulating a spurious cue (say
/// a background color) that happens to separate classes in the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasInjection {
    pub concept: usize,
    pub class: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub concept_names: Vec<String>,
    pub classes: Vec<ClassGenerator>,
    pub counts: SampleCounts,
    pub seed: u64,
    pub bias: Option<BiasInjection>,
}

impl GeneratorSpec {
    /// Spec with diagonal covariances given per-concept variances.
    pub fn diagonal(
        concept_names: Vec<String>,
        classes: Vec<(&str, Vec<f64>, Vec<f64>, f64)>,
        counts: SampleCounts,
        seed: u64,
    ) -> Self {
        let n = concept_names.len();
        let classes = classes
            .into_iter()
            .map(|(name, mean, vars, prior)| {
                let mut covariance = vec![0.0; n * n];
                for (i, v) in vars.into_iter().enumerate() {
                    covariance[i * n + i] = v;
                }
                ClassGenerator {
                    name: name.to_string(),
                    mean,
                    covariance,
                    prior,
                }
            })
            .collect();
        Self {
            concept_names,
            classes,
            counts,
            seed,
            bias: None,
        }
    }

    pub fn n_concepts(&self) -> usize {
        self.concept_names.len()
    }

    /// Class means after any bias injection.
    pub fn effective_mean(&self, c: usize) -> Vec<f64> {
        let mut mean = self.classes[c].mean.clone();
        if let Some(b) = &self.bias {
            if b.class == c {
                mean[b.concept] += b.shift;
            }
        }
        mean
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_concepts();
        if n == 0 || self.classes.len() < 2 {
            return Err(Error::InvalidArgument(
                "generator needs at least one concept and two classes".into(),
            ));
        }
        for class in &self.classes {
            if class.mean.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: class.mean.len(),
                });
            }
            if class.covariance.len() != n * n {
                return Err(Error::Dimension {
                    expected: n * n,
                    found: class.covariance.len(),
                });
            }
            if !(class.prior > 0.0 && class.prior <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "class '{}' prior {} outside (0, 1]",
                    class.name, class.prior
                )));
            }
        }
        let sum: f64 = self.classes.iter().map(|c| c.prior).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("priors sum to {sum}")));
        }
        match &self.counts {
            SampleCounts::PerClass(counts) => {
                if counts.len() != self.classes.len() || counts.contains(&0) {
                    return Err(Error::InvalidArgument(
                        "per-class counts must be positive, one per class".into(),
                    ));
                }
            }
            SampleCounts::Total(0) => {
                return Err(Error::InvalidArgument(
                    "total count must be positive".into(),
                ))
            }
            SampleCounts::Total(_) => {}
        }
        if let Some(b) = &self.bias {
            if b.concept >= n || b.class >= self.classes.len() {
                return Err(Error::InvalidArgument("bias injection out of range".into()));
            }
        }
        Ok(())
    }

    /// The mixture the spec describes, as a classifier.
    pub fn true_model(&self) -> Result<MixtureModel> {
        self.validate()?;
        let n = self.n_concepts();
        MixtureModel::from_parameters(
            self.concept_names.clone(),
            self.classes.iter().map(|c| c.name.clone()).collect(),
            self.classes
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    (
                        DVector::from_vec(self.effective_mean(i)),
                        DMatrix::from_row_slice(n, n, &c.covariance),
                        c.prior,
                    )
                })
                .collect(),
            Ridge::Absolute(0.0),
        )
    }
}

/// Reproducible draws from `spec`.
pub fn generate(spec: &GeneratorSpec) -> Result<ScoreDataset> {
    spec.validate()?;
    let n = spec.n_concepts();
    let mut factors = Vec::with_capacity(spec.classes.len());
    for (i, class) in spec.classes.iter().enumerate() {
        let cov = DMatrix::from_row_slice(n, n, &class.covariance);
        let chol = cov.cholesky().ok_or_else(|| Error::Singular {
            class: class.name.clone(),
        })?;
        factors.push((spec.effective_mean(i), chol.unpack()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels: Vec<usize> = match &spec.counts {
        SampleCounts::PerClass(counts) => counts
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect(),
        SampleCounts::Total(total) => {
            let dist = WeightedIndex::new(spec.classes.iter().map(|c| c.prior))
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (0..*total).map(|_| dist.sample(&mut rng)).collect()
        }
    };

    let mut scores = Vec::with_capacity(labels.len() * n);
    let mut u = vec![0.0; n];
    for &c in &labels {
        let (mean, l) = &factors[c];
        for v in u.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let mut x = mean[i];
            for k in 0..=i {
                x += l[(i, k)] * u[k];
            }
            scores.push(x);
        }
    }
    ScoreDataset::from_flat(
        spec.concept_names.clone(),
        spec.classes.iter().map(|c| c.name.clone()).collect(),
        scores,
        labels,
    )
}

/// Two-class, two-concept toy problem with a reference sample, perturbed
/// along the first concept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGeometry {
    pub label: String,
    pub spec: GeneratorSpec,
    pub reference: Vec<f64>,
}

/// The three boundary situations for one sample moving along concept 0:
///
/// - (a) the source surrounds a narrow target that is only reachable along
///   concept 1, so no counterfactual exists on concept 0;
/// - (b) the target is wider on concept 0 and the boundary is crossed once
///   on each side;
/// - (c) a narrow target sits to the left, so the boundary is crossed twice
///   on the negative side and never on the positive side.
pub fn figure4_geometries() -> [ToyGeometry; 3] {
    let concepts = || vec!["z1".to_string(), "z2".to_string()];
    let counts = || SampleCounts::PerClass(vec![500, 500]);
    [
        ToyGeometry {
            label: "no-counterfactual".into(),
            spec: GeneratorSpec::diagonal(
                concepts(),
                vec![
                    ("source", vec![0.0, 0.0], vec![4.0, 4.0], 0.5),
                    ("target", vec![0.0, 3.0], vec![0.25, 0.25], 0.5),
                ],
                counts(),
                41,
            ),
            reference: vec![0.0, 0.0],
        },
        ToyGeometry {
            label: "both-signs".into(),
            spec: GeneratorSpec::diagonal(
                concepts(),
                vec![
                    ("source", vec![0.0, 0.0], vec![1.0, 1.0], 0.5),
                    ("target", vec![0.5, 0.0], vec![9.0, 1.0], 0.5),
                ],
                counts(),
                42,
            ),
            reference: vec![0.0, 0.0],
        },
        ToyGeometry {
            label: "single-sign".into(),
            spec: GeneratorSpec::diagonal(
                concepts(),
                vec![
                    ("source", vec![0.0, 0.0], vec![4.0, 1.0], 0.5),
                    ("target", vec![-3.0, 0.0], vec![0.25, 1.0], 0.5),
                ],
                counts(),
                43,
            ),
            reference: vec![0.0, 0.0],
        },
    ]
}

/// Cats-vs-cars style two-class set where a color concept ("Black") was
/// shifted toward the cat class by `bias` standard deviations.
pub fn biased_pair(bias: f64, per_class: usize, seed: u64) -> GeneratorSpec {
    let concepts: Vec<String> = [
        "Furry",
        "Whiskered",
        "Metallic",
        "Four-wheeled",
        "Black",
        "White",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut spec = GeneratorSpec::diagonal(
        concepts,
        vec![
            ("Cat", vec![1.0, 0.8, 0.0, 0.2, 0.0, 0.0], vec![1.0; 6], 0.5),
            ("Car", vec![0.0, 0.0, 1.0, 0.8, 0.0, 0.0], vec![1.0; 6], 0.5),
        ],
        SampleCounts::PerClass(vec![per_class, per_class]),
        seed,
    );
    spec.bias = Some(BiasInjection {
        concept: 4,
        class: 0,
        shift: bias,
    });
    spec
}

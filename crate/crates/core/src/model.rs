//! Class-conditional Gaussian parameters and their maximum-likelihood fit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreDataset;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal loading added to each class covariance before factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// A fixed amount added to every diagonal entry.
    Absolute(f64),
    /// `factor * trace(cov) / N`, computed per class.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-6)
    }
}

impl Ridge {
    fn amount(&self, cov: &DMatrix<f64>) -> f64 {
        match *self {
            Ridge::Absolute(r) => r,
            Ridge::Relative(f) => f * cov.trace() / cov.nrows() as f64,
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            Ridge::Absolute(v) | Ridge::Relative(v) => v,
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "ridge must be finite and nonnegative, got {v}"
            )))
        }
    }
}

/// Fitted Gaussian for one class, with the derived quantities every
/// downstream computation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianClassModel {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub log_det: f64,
    pub prior: f64,
}

impl GaussianClassModel {
    /// Derives precision and log-determinant from `covariance` through a
    /// Cholesky factorization. `None` if the covariance is not positive
    /// definite.
    pub fn from_parameters(
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
        prior: f64,
    ) -> Option<Self> {
        let chol = covariance.clone().cholesky()?;
        let log_det = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|d| d.ln())
                .sum::<f64>();
        if !log_det.is_finite() {
            return None;
        }
        let inv = chol.inverse();
        let precision = (&inv + inv.transpose()) * 0.5;
        Some(Self {
            mean,
            covariance,
            precision,
            log_det,
            prior,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Variance of the marginal on concept `j`.
    pub fn variance(&self, j: usize) -> f64 {
        self.covariance[(j, j)]
    }

    /// `(z - mean)^T precision (z - mean)`; `z` must have length `dim()`.
    pub fn mahalanobis_sq(&self, z: &[f64]) -> f64 {
        let n = self.dim();
        let mean = self.mean.as_slice();
        let mut q = 0.0;
        for i in 0..n {
            let di = z[i] - mean[i];
            if di != 0.0 {
                q += di * self.precision_row(i, z);
            }
        }
        q.max(0.0)
    }

    /// Fills `w` with `precision (z - mean)` and `w_abs` with
    /// `|precision| |z - mean|`, and returns the squared Mahalanobis distance
    /// (bit-identical to [`Self::mahalanobis_sq`]) together with
    /// `|z - mean|^T |precision| |z - mean|`, which bounds its rounding error.
    pub(crate) fn weighted_residual(
        &self,
        z: &[f64],
        w: &mut [f64],
        w_abs: &mut [f64],
    ) -> (f64, f64) {
        let n = self.dim();
        let mean = self.mean.as_slice();
        let mut q = 0.0;
        let mut magnitude = 0.0;
        for i in 0..n {
            let col = &self.precision.as_slice()[i * n..(i + 1) * n];
            let (row, row_abs) =
                col.iter()
                    .zip(z)
                    .zip(mean)
                    .fold((0.0, 0.0), |(acc, abs), ((p, zk), mk)| {
                        let d = zk - mk;
                        (acc + p * d, abs + (p * d).abs())
                    });
            w[i] = row;
            w_abs[i] = row_abs;
            let di = z[i] - mean[i];
            if di != 0.0 {
                q += di * row;
                magnitude += di.abs() * row_abs;
            }
        }
        (q.max(0.0), magnitude)
    }

    /// `(precision (z - mean))[i]`.
    #[inline]
    fn precision_row(&self, i: usize, z: &[f64]) -> f64 {
        let n = self.dim();
        // precision is exactly symmetric, so column i doubles as row i
        let col = &self.precision.as_slice()[i * n..(i + 1) * n];
        col.iter()
            .zip(z)
            .zip(self.mean.as_slice())
            .fold(0.0, |acc, ((p, zk), mk)| acc + p * (zk - mk))
    }

    /// `log prior + log N(z | mean, covariance)`.
    pub fn log_joint(&self, z: &[f64]) -> f64 {
        self.log_joint_from_distance(self.mahalanobis_sq(z))
    }

    pub(crate) fn log_joint_from_distance(&self, mahalanobis_sq: f64) -> f64 {
        let n = self.dim() as f64;
        self.prior.ln() - 0.5 * self.log_det - 0.5 * mahalanobis_sq - 0.5 * n * LN_2PI
    }
}

/// The full classifier: one Gaussian per class over a shared concept
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub classes: Vec<GaussianClassModel>,
    pub concept_names: Vec<String>,
    pub class_names: Vec<String>,
    pub ridge: Ridge,
}

impl MixtureModel {
    /// Assembles a model from per-class `(mean, covariance, prior)` triples,
    /// deriving precision and log-determinant for each.
    pub fn from_parameters(
        concept_names: Vec<String>,
        class_names: Vec<String>,
        params: Vec<(DVector<f64>, DMatrix<f64>, f64)>,
        ridge: Ridge,
    ) -> Result<Self> {
        let n = concept_names.len();
        if class_names.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} class names for {} classes",
                class_names.len(),
                params.len()
            )));
        }
        let mut classes = Vec::with_capacity(params.len());
        for ((mean, cov, prior), name) in params.into_iter().zip(&class_names) {
            if mean.len() != n || cov.nrows() != n || cov.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: if mean.len() != n {
                        mean.len()
                    } else {
                        cov.nrows()
                    },
                });
            }
            let class = GaussianClassModel::from_parameters(mean, cov, prior).ok_or_else(|| {
                Error::Singular {
                    class: name.clone(),
                }
            })?;
            classes.push(class);
        }
        Ok(Self {
            classes,
            concept_names,
            class_names,
            ridge,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_concepts(&self) -> usize {
        self.concept_names.len()
    }

    pub fn class(&self, c: usize) -> Result<&GaussianClassModel> {
        self.classes.get(c).ok_or(Error::IndexOutOfRange {
            what: "class",
            index: c,
            len: self.classes.len(),
        })
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub(crate) fn check_concept(&self, j: usize) -> Result<()> {
        if j < self.n_concepts() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "concept",
                index: j,
                len: self.n_concepts(),
            })
        }
    }

    /// Checks that `z` is a finite vector of the model's dimension.
    pub(crate) fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.n_concepts() {
            return Err(Error::Dimension {
                expected: self.n_concepts(),
                found: z.len(),
            });
        }
        match z.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }
}

/// Maximum-likelihood fit of one Gaussian per class plus class priors.
///
/// The covariance is the biased estimator (divided by the class count), then
/// loaded with `ridge` on the diagonal. Rows of each class are summed in a
/// canonical (lexicographic) order so the result does not depend on the
/// order of samples in the dataset.
pub fn fit_mixture(dataset: &ScoreDataset, ridge: Ridge) -> Result<MixtureModel> {
    ridge.validate()?;
    if dataset.n_classes() < 2 {
        return Err(Error::Dataset(format!(
            "at least 2 classes are required, found {}",
            dataset.n_classes()
        )));
    }
    let counts = dataset.class_counts();
    for (c, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(Error::TooFewSamples {
                class: dataset.class_names()[c].clone(),
                count,
            });
        }
    }
    let total = dataset.n_samples() as f64;

    let classes = (0..dataset.n_classes())
        .into_par_iter()
        .map(|c| {
            let mut rows: Vec<&[f64]> = dataset.class_rows(c).collect();
            rows.sort_by(|a, b| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let (mean, mut cov) = mle_moments(&rows, dataset.n_concepts());
            let amount = ridge.amount(&cov);
            for i in 0..cov.nrows() {
                cov[(i, i)] += amount;
            }
            let prior = rows.len() as f64 / total;
            GaussianClassModel::from_parameters(mean, cov, prior).ok_or_else(|| Error::Singular {
                class: dataset.class_names()[c].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MixtureModel {
        classes,
        concept_names: dataset.concept_names().to_vec(),
        class_names: dataset.class_names().to_vec(),
        ridge,
    })
}

fn mle_moments(rows: &[&[f64]], n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let count = rows.len() as f64;
    let mut mean = DVector::zeros(n);
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    mean /= count;

    let mut cov = DMatrix::zeros(n, n);
    let mut centered = vec![0.0; n];
    for row in rows {
        for (d, (v, m)) in centered.iter_mut().zip(row.iter().zip(mean.iter())) {
            *d = v - m;
        }
        for i in 0..n {
            for k in i..n {
                cov[(i, k)] += centered[i] * centered[k];
            }
        }
    }
    for i in 0..n {
        for k in i..n {
            let v = cov[(i, k)] / count;
            cov[(i, k)] = v;
            cov[(k, i)] = v;
        }
    }
    (mean, cov)
}

/// One broken model invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PriorSum {
        sum: f64,
    },
    PriorRange {
        class: usize,
        prior: f64,
    },
    ClassNames {
        names: usize,
        classes: usize,
    },
    Dimension {
        class: usize,
        found: usize,
        expected: usize,
    },
    NonFinite {
        class: usize,
    },
    Asymmetric {
        class: usize,
        deviation: f64,
    },
    NotPositiveDefinite {
        class: usize,
    },
    PrecisionMismatch {
        class: usize,
        deviation: f64,
    },
    LogDetMismatch {
        class: usize,
        stored: f64,
        actual: f64,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::PriorSum { sum } => write!(f, "prior-sum: priors sum to {sum}, not 1"),
            Violation::PriorRange { class, prior } => {
                write!(f, "prior-range: class {class} prior {prior} outside (0, 1]")
            }
            Violation::ClassNames { names, classes } => {
                write!(f, "class-names: {names} names for {classes} classes")
            }
            Violation::Dimension {
                class,
                found,
                expected,
            } => write!(f, "dimension: class {class} has dimension {found}, expected {expected}"),
            Violation::NonFinite { class } => write!(f, "non-finite: class {class} parameters"),
            Violation::Asymmetric { class, deviation } => {
                write!(f, "symmetry: class {class} covariance asymmetric by {deviation:e}")
            }
            Violation::NotPositiveDefinite { class } => {
                write!(f, "positive-definite: class {class} covariance is not positive definite")
            }
            Violation::PrecisionMismatch { class, deviation } => write!(
                f,
                "precision: class {class} precision*covariance deviates from identity by {deviation:e}"
            ),
            Violation::LogDetMismatch {
                class,
                stored,
                actual,
            } => write!(f, "log-det: class {class} stores {stored}, actual {actual}"),
        }
    }
}

const PRIOR_SUM_TOL: f64 = 1e-9;
const DERIVED_TOL: f64 = 1e-8;

/// Collects every invariant violation of `model`; an empty list means the
/// model is consistent.
///
/// Precision and log-determinant checks are skipped for a class whose
/// covariance already fails the symmetry or dimension check.
pub fn validate_model(model: &MixtureModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = model.n_concepts();
    if model.class_names.len() != model.classes.len() {
        out.push(Violation::ClassNames {
            names: model.class_names.len(),
            classes: model.classes.len(),
        });
    }
    let sum: f64 = model.classes.iter().map(|c| c.prior).sum();
    let off = (sum - 1.0).abs();
    if off > PRIOR_SUM_TOL || off.is_nan() {
        out.push(Violation::PriorSum { sum });
    }
    for (ci, class) in model.classes.iter().enumerate() {
        if !(class.prior > 0.0 && class.prior <= 1.0) {
            out.push(Violation::PriorRange {
                class: ci,
                prior: class.prior,
            });
        }
        let dims = [
            class.mean.len(),
            class.covariance.nrows(),
            class.covariance.ncols(),
            class.precision.nrows(),
            class.precision.ncols(),
        ];
        if let Some(&bad) = dims.iter().find(|&&d| d != n) {
            out.push(Violation::Dimension {
                class: ci,
                found: bad,
                expected: n,
            });
            continue;
        }
        let finite = class.mean.iter().all(|v| v.is_finite())
            && class.covariance.iter().all(|v| v.is_finite())
            && class.precision.iter().all(|v| v.is_finite())
            && class.log_det.is_finite();
        if !finite {
            out.push(Violation::NonFinite { class: ci });
            continue;
        }
        let scale = class.covariance.amax().max(1.0);
        let asym = (&class.covariance - class.covariance.transpose()).amax();
        if asym > 1e-12 * scale {
            out.push(Violation::Asymmetric {
                class: ci,
                deviation: asym,
            });
            continue;
        }
        if class.covariance.clone().cholesky().is_none() {
            out.push(Violation::NotPositiveDefinite { class: ci });
            continue;
        }
        let deviation = (&class.precision * &class.covariance - DMatrix::identity(n, n)).amax();
        if deviation > DERIVED_TOL || deviation.is_nan() {
            out.push(Violation::PrecisionMismatch {
                class: ci,
                deviation,
            });
        }
        // LU route, independent of the factorization used at fit time.
        let lu = class.covariance.clone().lu();
        let actual: f64 = lu.u().diagonal().iter().map(|d| d.abs().ln()).sum();
        let drift = (actual - class.log_det).abs();
        if drift > DERIVED_TOL || drift.is_nan() {
            out.push(Violation::LogDetMismatch {
                class: ci,
                stored: class.log_det,
                actual,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_class(rows0: Vec<Vec<f64>>, rows1: Vec<Vec<f64>>) -> ScoreDataset {
        let n = rows0[0].len();
        let mut labels = vec![0; rows0.len()];
        labels.extend(vec![1; rows1.len()]);
        let mut rows = rows0;
        rows.extend(rows1);
        ScoreDataset::new(
            (0..n).map(|i| format!("k{i}")).collect(),
            vec!["a".into(), "b".into()],
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_axis_without_ridge_is_singular() {
        let ds = two_class(
            vec![vec![0.0, 0.0], vec![2.0, 0.0]],
            vec![vec![0.0, 1.0], vec![1.0, 3.0]],
        );
        match fit_mixture(&ds, Ridge::Absolute(0.0)) {
            Err(Error::Singular { class }) => assert_eq!(class, "a"),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn ridge_rescues_degenerate_axis() {
        let ds = two_class(
            vec![vec![0.0, 0.0], vec![2.0, 0.0]],
            vec![vec![0.0, 1.0], vec![1.0, 3.0]],
        );
        let m = fit_mixture(&ds, Ridge::Absolute(0.01)).unwrap();
        let a = &m.classes[0];
        assert_eq!(a.mean.as_slice(), &[1.0, 0.0]);
        assert_abs_diff_eq!(a.covariance[(0, 0)], 1.01, epsilon = 1e-15);
        assert_abs_diff_eq!(a.covariance[(1, 1)], 0.01, epsilon = 1e-15);
        assert_eq!(a.covariance[(0, 1)], 0.0);
        assert_eq!(m.classes[0].prior, 0.5);
        assert_eq!(m.classes[1].prior, 0.5);
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn too_few_samples_names_class() {
        let ds = ScoreDataset::new(
            vec!["k".into()],
            vec!["a".into(), "b".into()],
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 0, 1],
        )
        .unwrap();
        match fit_mixture(&ds, Ridge::default()) {
            Err(Error::TooFewSamples { class, count }) => {
                assert_eq!(class, "b");
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_class_rejected() {
        let ds = ScoreDataset::new(
            vec!["k".into()],
            vec!["a".into()],
            vec![vec![0.0], vec![1.0]],
            vec![0, 0],
        )
        .unwrap();
        assert!(fit_mixture(&ds, Ridge::default()).is_err());
    }

    #[test]
    fn negative_ridge_rejected() {
        let ds = two_class(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![4.0]]);
        assert!(matches!(
            fit_mixture(&ds, Ridge::Absolute(-1.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn relative_ridge_scales_with_trace() {
        let ds = two_class(
            vec![vec![0.0, 0.0], vec![2.0, 4.0]],
            vec![vec![0.0, 1.0], vec![1.0, 3.0]],
        );
        let m = fit_mixture(&ds, Ridge::Relative(0.1)).unwrap();
        // MLE variances 1 and 4, trace/N = 2.5
        assert_abs_diff_eq!(m.classes[0].covariance[(0, 0)], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.classes[0].covariance[(1, 1)], 4.25, epsilon = 1e-12);
    }

    #[test]
    fn validate_flags_prior_sum() {
        let ds = two_class(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![4.0]]);
        let mut m = fit_mixture(&ds, Ridge::default()).unwrap();
        m.classes[0].prior = 0.7;
        m.classes[1].prior = 0.7;
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::PriorSum { .. }));
        assert!(v[0].to_string().starts_with("prior-sum"));
    }

    #[test]
    fn validate_flags_asymmetry() {
        let ds = two_class(
            vec![vec![0.0, 0.0], vec![2.0, 1.0], vec![1.0, 3.0]],
            vec![vec![0.0, 1.0], vec![1.0, 3.0], vec![5.0, 2.0]],
        );
        let mut m = fit_mixture(&ds, Ridge::default()).unwrap();
        m.classes[1].covariance[(0, 1)] += 1e-3;
        let v = validate_model(&m);
        assert_eq!(
            v,
            vec![Violation::Asymmetric {
                class: 1,
                deviation: v_dev(&v)
            }]
        );
    }

    fn v_dev(v: &[Violation]) -> f64 {
        match v[0] {
            Violation::Asymmetric { deviation, .. } => deviation,
            _ => f64::NAN,
        }
    }

    #[test]
    fn validate_flags_stale_log_det() {
        let ds = two_class(vec![vec![0.0], vec![1.0]], vec![vec![2.0], vec![4.0]]);
        let mut m = fit_mixture(&ds, Ridge::default()).unwrap();
        m.classes[0].log_det += 1e-3;
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::LogDetMismatch { class: 0, .. }));
    }

    #[test]
    fn derived_quantities_match_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = GaussianClassModel::from_parameters(DVector::zeros(2), cov, 1.0).unwrap();
        assert_abs_diff_eq!(g.log_det, (2.0f64 - 0.25).ln(), epsilon = 1e-14);
        let eye = &g.precision * &g.covariance;
        assert_abs_diff_eq!((eye - DMatrix::identity(2, 2)).amax(), 0.0, epsilon = 1e-14);
        assert_eq!(g.mahalanobis_sq(&[0.0, 0.0]), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn residual_path_matches_mahalanobis(
            z in proptest::collection::vec(-50.0f64..50.0, 3),
            off in -0.4f64..0.4,
            d in proptest::collection::vec(0.1f64..10.0, 3),
        ) {
            let mut cov = DMatrix::from_diagonal(&DVector::from_vec(d));
            cov[(0, 1)] = off;
            cov[(1, 0)] = off;
            let class = GaussianClassModel::from_parameters(
                DVector::from_vec(vec![1.0, -2.0, 0.5]),
                cov,
                0.5,
            )
            .unwrap();
            let mut w = vec![0.0; 3];
            let mut w_abs = vec![0.0; 3];
            let (q, magnitude) = class.weighted_residual(&z, &mut w, &mut w_abs);
            proptest::prop_assert!(magnitude >= q);
            proptest::prop_assert_eq!(q.to_bits(), class.mahalanobis_sq(&z).to_bits());
            let direct = &class.precision * (DVector::from_vec(z.clone()) - &class.mean);
            for (a, b) in w.iter().zip(direct.iter()) {
                proptest::prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}

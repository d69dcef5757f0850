//! Shared builders for the integration tests.
#![allow(dead_code)]

use concept_qda::{MixtureModel, Ridge};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Random SPD matrix `Q diag(lambda) Q^T` with eigenvalues log-uniform in
/// `[1, cond] * scale`, so the condition number never exceeds `cond`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, cond: f64, scale: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let lambda = DVector::from_fn(n, |_, _| scale * cond.powf(rng.gen::<f64>()));
    let m = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random `c`-class model over `n` concepts with covariance condition
/// number at most `cond`.
pub fn random_model<R: Rng>(rng: &mut R, c: usize, n: usize, cond: f64) -> MixtureModel {
    let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let params = raw
        .iter()
        .map(|w| {
            let mean = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let scale = 10f64.powf(rng.gen_range(-1.5..0.0));
            (mean, random_spd(rng, n, cond, scale), w / total)
        })
        .collect();
    MixtureModel::from_parameters(
        names("k", n),
        names("class", c),
        params,
        Ridge::Absolute(0.0),
    )
    .unwrap()
}

/// One draw from class `c` of `model`.
pub fn sample_class<R: Rng>(rng: &mut R, model: &MixtureModel, c: usize) -> Vec<f64> {
    let class = &model.classes[c];
    let l = class.covariance.clone().cholesky().unwrap().unpack();
    let u = DVector::from_fn(class.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    (&class.mean + l * u).iter().copied().collect()
}

/// `n` draws from class `c`, reusing one factorization.
pub fn sample_class_many<R: Rng>(
    rng: &mut R,
    model: &MixtureModel,
    c: usize,
    n: usize,
) -> Vec<Vec<f64>> {
    let class = &model.classes[c];
    let l = class.covariance.clone().cholesky().unwrap().unpack();
    (0..n)
        .map(|_| {
            let u = DVector::from_fn(class.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            (&class.mean + &l * u).iter().copied().collect()
        })
        .collect()
}

/// Two-concept model with diagonal covariances.
pub fn diag_model(classes: &[([f64; 2], [f64; 2], f64)]) -> MixtureModel {
    MixtureModel::from_parameters(
        names("k", 2),
        names("class", classes.len()),
        classes
            .iter()
            .map(|(m, v, p)| {
                (
                    DVector::from_row_slice(m),
                    DMatrix::from_diagonal(&DVector::from_row_slice(v)),
                    *p,
                )
            })
            .collect(),
        Ridge::Absolute(0.0),
    )
    .unwrap()
}

/// Two well-separated classes where concept 0 carries nearly all of the
/// signal; the remaining concepts differ only slightly.
pub fn dominant_concept_spec(
    n: usize,
    per_class: usize,
    seed: u64,
) -> concept_qda::synthetic::GeneratorSpec {
    let mut a = vec![0.0; n];
    let mut b = vec![0.3; n];
    a[0] = -2.0;
    b[0] = 2.0;
    concept_qda::synthetic::GeneratorSpec::diagonal(
        names("k", n),
        vec![("a", a, vec![1.0; n], 0.5), ("b", b, vec![1.0; n], 0.5)],
        concept_qda::synthetic::SampleCounts::PerClass(vec![per_class, per_class]),
        seed,
    )
}

/// `c` classes with diagonal covariances whose per-concept parameters do
/// not depend on `n`; mean gaps shrink as `1/sqrt(n)` so the overall class
/// separation, and with it the share of concepts that admit a
/// counterfactual, stays comparable as `n` grows.
pub fn scaling_model(c: usize, n: usize) -> MixtureModel {
    use rand::SeedableRng;
    let shrink = 2.0 / (n as f64).sqrt();
    let mut means = vec![vec![0.0; n]; c];
    let mut vars = vec![vec![0.0; n]; c];
    for j in 0..n {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(j as u64);
        for k in 0..c {
            means[k][j] = shrink * rng.gen_range(-2.0..2.0);
            vars[k][j] = rng.gen_range(0.5..2.0);
        }
    }
    MixtureModel::from_parameters(
        names("k", n),
        names("class", c),
        (0..c)
            .map(|k| {
                (
                    DVector::from_vec(means[k].clone()),
                    DMatrix::from_diagonal(&DVector::from_vec(vars[k].clone())),
                    1.0 / c as f64,
                )
            })
            .collect(),
        Ridge::Absolute(0.0),
    )
    .unwrap()
}

//! Dataset-level concept ranking by signed Wasserstein-2 between
//! per-concept class marginals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixtureModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalEntry {
    pub concept: String,
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalExplanation {
    pub class_pair: (String, String),
    pub entries: Vec<GlobalEntry>,
    pub k: usize,
}

/// Squared 1-D Wasserstein-2 distance between the concept-`j` marginals of
/// classes `c1` and `c2`, carrying the sign of the mean gap
/// `mu_c1[j] - mu_c2[j]`. A zero gap counts as positive.
///
/// Only the diagonal covariance entries take part.
pub fn signed_w2(model: &MixtureModel, c1: usize, c2: usize, j: usize) -> Result<f64> {
    let a = model.class(c1)?;
    let b = model.class(c2)?;
    model.check_concept(j)?;
    let gap = a.mean[j] - b.mean[j];
    let (va, vb) = (a.variance(j), b.variance(j));
    let spread = va + vb - 2.0 * (va * vb).sqrt();
    let magnitude = gap * gap + spread;
    Ok(if gap < 0.0 { -magnitude } else { magnitude })
}

/// Top-`k` concepts by `|signed_w2|`, ties broken by concept index.
pub fn rank_concepts_global(
    model: &MixtureModel,
    c1: usize,
    c2: usize,
    k: usize,
) -> Result<GlobalExplanation> {
    let n = model.n_concepts();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    let mut entries = (0..n)
        .map(|j| {
            Ok(GlobalEntry {
                concept: model.concept_names[j].clone(),
                index: j,
                value: signed_w2(model, c1, c2, j)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then(a.index.cmp(&b.index))
    });
    entries.truncate(k);
    Ok(GlobalExplanation {
        class_pair: (model.class_names[c1].clone(), model.class_names[c2].clone()),
        entries,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ridge;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn diag_model(means: [Vec<f64>; 2], vars: [Vec<f64>; 2]) -> MixtureModel {
        let n = means[0].len();
        MixtureModel::from_parameters(
            (0..n).map(|i| format!("k{i}")).collect(),
            vec!["a".into(), "b".into()],
            means
                .into_iter()
                .zip(vars)
                .map(|(m, v)| {
                    (
                        DVector::from_vec(m),
                        DMatrix::from_diagonal(&DVector::from_vec(v)),
                        0.5,
                    )
                })
                .collect(),
            Ridge::Absolute(0.0),
        )
        .unwrap()
    }

    #[test]
    fn closed_form_fixture() {
        let m = diag_model([vec![0.0], vec![3.0]], [vec![1.0], vec![4.0]]);
        assert!((signed_w2(&m, 0, 1, 0).unwrap() + 10.0).abs() <= 1e-12);
        assert!((signed_w2(&m, 1, 0, 0).unwrap() - 10.0).abs() <= 1e-12);
        assert_eq!(signed_w2(&m, 0, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range() {
        let m = diag_model([vec![0.0], vec![3.0]], [vec![1.0], vec![4.0]]);
        assert!(signed_w2(&m, 0, 2, 0).is_err());
        assert!(signed_w2(&m, 0, 1, 1).is_err());
        assert!(rank_concepts_global(&m, 0, 1, 0).is_err());
        assert!(rank_concepts_global(&m, 0, 1, 2).is_err());
    }

    #[test]
    fn single_differing_concept_ranks_first() {
        let m = diag_model(
            [vec![0.0, 1.0, 2.0], vec![0.0, 1.5, 2.0]],
            [vec![1.0; 3], vec![1.0; 3]],
        );
        let g = rank_concepts_global(&m, 0, 1, 3).unwrap();
        assert_eq!(g.entries[0].index, 1);
        assert_eq!(g.entries[0].value, -0.25);
        // remaining zero entries keep index order
        assert_eq!(g.entries[1].index, 0);
        assert_eq!(g.entries[2].index, 2);
    }

    #[test]
    fn biased_color_concept_dominates() {
        // gap 5 on the color concept, gaps <= 1 elsewhere, unit variances
        let m = diag_model(
            [vec![0.5, 0.0, 5.0, -0.2], vec![0.0, 1.0, 0.0, 0.3]],
            [vec![1.0; 4], vec![1.0; 4]],
        );
        let g = rank_concepts_global(&m, 0, 1, 2).unwrap();
        assert_eq!(g.entries.len(), 2);
        assert_eq!(g.entries[0].index, 2);
        assert!(g.entries[0].value >= 25.0);
        assert!(g.entries[0].value.abs() > g.entries[1].value.abs());
    }

    proptest! {
        #[test]
        fn antisymmetric_and_bounded_below(
            m1 in -5.0f64..5.0, m2 in -5.0f64..5.0,
            v1 in 0.01f64..10.0, v2 in 0.01f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let m = diag_model([vec![m1], vec![m2]], [vec![v1], vec![v2]]);
            let w = signed_w2(&m, 0, 1, 0).unwrap();
            let back = signed_w2(&m, 1, 0, 0).unwrap();
            if m1 != m2 {
                prop_assert_eq!(w, -back);
            }
            let gap2 = (m1 - m2) * (m1 - m2);
            prop_assert!(w.abs() >= gap2 - 1e-12 * (1.0 + gap2));
            let shifted = diag_model([vec![m1 + shift], vec![m2 + shift]], [vec![v1], vec![v2]]);
            let ws = signed_w2(&shifted, 0, 1, 0).unwrap();
            prop_assert!((ws - w).abs() <= 1e-9 * (1.0 + w.abs()));
        }

        #[test]
        fn equal_spread_attains_gap(m1 in -5.0f64..5.0, m2 in -5.0f64..5.0, v in 0.01f64..10.0) {
            let m = diag_model([vec![m1], vec![m2]], [vec![v], vec![v]]);
            let w = signed_w2(&m, 0, 1, 0).unwrap();
            prop_assert!((w.abs() - (m1 - m2).powi(2)).abs() <= 1e-12 * (1.0 + w.abs()));
        }
    }
}

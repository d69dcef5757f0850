//! Labeled concept-score matrices.

use crate::error::{Error, Result};

/// Per-sample concept scores with class labels.
///
/// Scores are stored row-major: row `i` holds the `n_concepts()` scores of
/// sample `i`, and `labels[i]` indexes into `class_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDataset {
    concept_names: Vec<String>,
    class_names: Vec<String>,
    scores: Vec<f64>,
    labels: Vec<usize>,
}

impl ScoreDataset {
    /// Builds a dataset from explicit rows, checking shape, finiteness and
    /// label range. Class counts are not checked here; fitting does that.
    pub fn new(
        concept_names: Vec<String>,
        class_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = concept_names.len();
        let mut scores = Vec::with_capacity(rows.len() * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dataset(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            scores.extend_from_slice(row);
        }
        Self::from_flat(concept_names, class_names, scores, labels)
    }

    /// Builds a dataset from a row-major score buffer.
    pub fn from_flat(
        concept_names: Vec<String>,
        class_names: Vec<String>,
        scores: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let n = concept_names.len();
        if n == 0 {
            return Err(Error::Dataset("at least one concept is required".into()));
        }
        if scores.len() != labels.len() * n {
            return Err(Error::Dataset(format!(
                "{} scores do not fill {} rows of {n} concepts",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(pos) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dataset(format!(
                "non-finite score at row {}, concept {}",
                pos / n,
                pos % n
            )));
        }
        if let Some((i, &l)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= class_names.len())
        {
            return Err(Error::Dataset(format!(
                "row {i} has label {l} but only {} classes exist",
                class_names.len()
            )));
        }
        Ok(Self {
            concept_names,
            class_names,
            scores,
            labels,
        })
    }

    pub fn concept_names(&self) -> &[String] {
        &self.concept_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_concepts(&self) -> usize {
        self.concept_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Scores of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_concepts();
        &self.scores[i * n..(i + 1) * n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.scores.chunks_exact(self.n_concepts())
    }

    /// The whole row-major score buffer.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows belonging to class `c`, in dataset order.
    pub fn class_rows(&self, c: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.rows()
            .zip(&self.labels)
            .filter(move |(_, &l)| l == c)
            .map(|(r, _)| r)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Re-expresses labels against another class vocabulary (e.g. a fitted
    /// model's), failing on the first label the target does not know.
    pub fn relabel(&self, class_names: &[String]) -> Result<Self> {
        let map = self
            .class_names
            .iter()
            .map(|name| class_names.iter().position(|c| c == name))
            .collect::<Vec<_>>();
        let mut labels = Vec::with_capacity(self.labels.len());
        for &l in &self.labels {
            match map[l] {
                Some(m) => labels.push(m),
                None => return Err(Error::UnknownClass(self.class_names[l].clone())),
            }
        }
        Ok(Self {
            concept_names: self.concept_names.clone(),
            class_names: class_names.to_vec(),
            scores: self.scores.clone(),
            labels,
        })
    }
}

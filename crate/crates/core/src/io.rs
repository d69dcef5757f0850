//! File formats: score CSVs, model files, explanation reports and external
//! concept orderings.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::counterfactual::LocalExplanation;
use crate::dataset::ScoreDataset;
use crate::diagnostics::QQSeries;
use crate::error::{Error, Result};
use crate::faithfulness::DeletionCurve;
use crate::global::GlobalExplanation;
use crate::model::{MixtureModel, Ridge};

pub const LABEL_COLUMN: &str = "label";
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------- scores

/// Reads a scores CSV: a header of concept names followed by a final
/// `label` column, then one row per sample. Lines starting with `#` are
/// comments. Row and column numbers in errors are 1-based file positions.
pub fn load_scores_csv(path: impl AsRef<Path>) -> Result<ScoreDataset> {
    let file = fs::File::open(path.as_ref())?;
    read_scores_csv(file)
}

pub fn read_scores_csv<R: Read>(reader: R) -> Result<ScoreDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(r) => r?,
        None => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: "empty file".into(),
            })
        }
    };
    let header_row = header.position().map_or(1, |p| p.line() as usize);
    let width = header.len();
    if width < 2 || &header[width - 1] != LABEL_COLUMN {
        return Err(Error::Parse {
            row: header_row,
            column: width.max(1),
            message: format!(
                "header must list concept names followed by a final '{LABEL_COLUMN}' column"
            ),
        });
    }
    let concept_names: Vec<String> = header.iter().take(width - 1).map(str::to_string).collect();
    for (i, name) in concept_names.iter().enumerate() {
        if name.is_empty() {
            return Err(Error::Parse {
                row: header_row,
                column: i + 1,
                message: "empty concept name".into(),
            });
        }
        if concept_names[..i].contains(name) {
            return Err(Error::Parse {
                row: header_row,
                column: i + 1,
                message: format!("duplicate concept name '{name}'"),
            });
        }
    }

    let n = width - 1;
    let mut class_names: Vec<String> = Vec::new();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != width {
            return Err(Error::Parse {
                row,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().take(n).enumerate() {
            let value = f64::from_str(cell)
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: col + 1,
                    message: format!("'{cell}' is not a finite decimal number"),
                })?;
            scores.push(value);
        }
        let label = &record[n];
        if label.is_empty() {
            return Err(Error::Parse {
                row,
                column: width,
                message: "empty class label".into(),
            });
        }
        let idx = match class_names.iter().position(|c| c == label) {
            Some(i) => i,
            None => {
                class_names.push(label.to_string());
                class_names.len() - 1
            }
        };
        labels.push(idx);
    }
    ScoreDataset::from_flat(concept_names, class_names, scores, labels)
}

/// Writes `dataset` in the format [`read_scores_csv`] accepts, with
/// shortest round-trip float formatting.
pub fn write_scores_csv<W: Write>(dataset: &ScoreDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.concept_names().iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header)?;
    for (row, &label) in dataset.rows().zip(dataset.labels()) {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        fields.push(dataset.class_names()[label].clone());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

// ----------------------------------------------------------------- model

/// Serializes floats as JSON numbers with 17 significant digits.
mod float17 {
    use serde::{Serialize, Serializer};
    use std::str::FromStr;

    fn number<E: serde::ser::Error>(v: f64) -> Result<serde_json::Number, E> {
        if !v.is_finite() {
            return Err(E::custom(format!("cannot store non-finite value {v}")));
        }
        serde_json::Number::from_str(&format!("{v:.16e}")).map_err(E::custom)
    }

    pub fn one<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        number(*v)?.serialize(s)
    }

    pub fn many<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| number(*x))
            .collect::<Result<Vec<_>, _>>()?
            .serialize(s)
    }

    pub fn ridge<S: Serializer>(r: &super::Ridge, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        #[serde(rename_all = "snake_case")]
        enum Repr {
            Absolute(serde_json::Number),
            Relative(serde_json::Number),
        }
        match *r {
            super::Ridge::Absolute(v) => Repr::Absolute(number(v)?),
            super::Ridge::Relative(v) => Repr::Relative(number(v)?),
        }
        .serialize(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRecord {
    pub name: String,
    #[serde(serialize_with = "float17::many")]
    pub mean: Vec<f64>,
    /// Row-major N x N.
    #[serde(serialize_with = "float17::many")]
    pub covariance: Vec<f64>,
    #[serde(serialize_with = "float17::one")]
    pub prior: f64,
}

/// On-disk form of a fitted [`MixtureModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub n_concepts: usize,
    pub concept_names: Vec<String>,
    pub class_names: Vec<String>,
    #[serde(serialize_with = "float17::ridge")]
    pub ridge: Ridge,
    pub classes: Vec<ClassRecord>,
}

impl ModelFile {
    pub fn from_model(model: &MixtureModel) -> Self {
        let n = model.n_concepts();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            n_concepts: n,
            concept_names: model.concept_names.clone(),
            class_names: model.class_names.clone(),
            ridge: model.ridge,
            classes: model
                .classes
                .iter()
                .zip(&model.class_names)
                .map(|(c, name)| ClassRecord {
                    name: name.clone(),
                    mean: c.mean.iter().copied().collect(),
                    covariance: (0..n)
                        .flat_map(|i| (0..n).map(move |k| (i, k)))
                        .map(|ik| c.covariance[ik])
                        .collect(),
                    prior: c.prior,
                })
                .collect(),
        }
    }

    /// Validates shapes and rebuilds the model; precision and
    /// log-determinant are re-derived from the stored covariances.
    pub fn into_model(self) -> Result<MixtureModel> {
        let n = self.n_concepts;
        if self.concept_names.len() != n {
            return Err(Error::Schema(format!(
                "concept_names has {} entries, n_concepts is {n}",
                self.concept_names.len()
            )));
        }
        if self.class_names.len() != self.classes.len() {
            return Err(Error::Schema(format!(
                "class_names has {} entries for {} classes",
                self.class_names.len(),
                self.classes.len()
            )));
        }
        let mut params = Vec::with_capacity(self.classes.len());
        for (record, name) in self.classes.into_iter().zip(&self.class_names) {
            if &record.name != name {
                return Err(Error::Schema(format!(
                    "class record '{}' does not match class name '{name}'",
                    record.name
                )));
            }
            if record.mean.len() != n {
                return Err(Error::Schema(format!(
                    "class '{name}': mean has {} entries, expected {n}",
                    record.mean.len()
                )));
            }
            if record.covariance.len() != n * n {
                return Err(Error::Schema(format!(
                    "class '{name}': covariance has {} entries, expected {}",
                    record.covariance.len(),
                    n * n
                )));
            }
            params.push((
                DVector::from_vec(record.mean),
                DMatrix::from_row_slice(n, n, &record.covariance),
                record.prior,
            ));
        }
        MixtureModel::from_parameters(self.concept_names, self.class_names, params, self.ridge)
    }
}

pub fn model_to_string(model: &MixtureModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

pub fn model_from_str(text: &str) -> Result<MixtureModel> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("format_version")
        .ok_or_else(|| Error::Schema("missing field `format_version`".into()))?
        .as_u64()
        .ok_or_else(|| Error::Schema("`format_version` must be an unsigned integer".into()))?;
    if version != u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::Version {
            found: version.min(u64::from(u32::MAX)) as u32,
            supported: MODEL_FORMAT_VERSION,
        });
    }
    let file: ModelFile =
        serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    file.into_model()
}

pub fn save_model(model: &MixtureModel, path: impl AsRef<Path>) -> Result<()> {
    let mut text = model_to_string(model)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MixtureModel> {
    model_from_str(&fs::read_to_string(path)?)
}

// --------------------------------------------------------------- reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the model file bytes.
    pub model_sha256: String,
    pub input_path: Option<String>,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(model_bytes: &[u8], input_path: Option<&Path>) -> Self {
        Self {
            model_sha256: hex::encode(Sha256::digest(model_bytes)),
            input_path: input_path.map(|p| p.display().to_string()),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalReport {
    pub row: usize,
    pub predicted_class: String,
    pub explanation: LocalExplanation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "lowercase")]
pub enum ReportBody {
    Global(GlobalExplanation),
    Local(LocalReport),
    Qq(QQSeries),
    Deletion(DeletionCurve),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    #[serde(flatten)]
    pub body: ReportBody,
    pub provenance: Provenance,
}

impl ExplanationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Two numeric columns suitable for plotting.
    pub fn plot_table(&self) -> String {
        let mut out = String::new();
        let mut line = |a: String, b: f64| {
            out.push_str(&a);
            out.push(',');
            out.push_str(&format!("{b:?}\n"));
        };
        match &self.body {
            ReportBody::Global(g) => {
                for (rank, e) in g.entries.iter().enumerate() {
                    line((rank + 1).to_string(), e.value);
                }
            }
            ReportBody::Local(l) => {
                for (rank, c) in l.explanation.counterfactuals.iter().enumerate() {
                    line((rank + 1).to_string(), c.epsilon_scaled);
                }
            }
            ReportBody::Qq(q) => {
                for (t, e) in &q.pairs {
                    line(format!("{t:?}"), *e);
                }
            }
            ReportBody::Deletion(d) => {
                for (k, a) in d.n_null.iter().zip(&d.accuracies) {
                    line(k.to_string(), *a);
                }
            }
        }
        out
    }
}

// ------------------------------------------------------------- orderings

/// One row per test sample: comma-separated concept indices, most
/// important first. Blank lines are empty orderings.
pub fn read_orderings(text: &str) -> Result<Vec<Vec<usize>>> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.trim();
            if line.is_empty() {
                return Ok(Vec::new());
            }
            line.split(',')
                .enumerate()
                .map(|(col, cell)| {
                    cell.trim().parse::<usize>().map_err(|_| Error::Parse {
                        row: i + 1,
                        column: col + 1,
                        message: format!("'{}' is not a concept index", cell.trim()),
                    })
                })
                .collect()
        })
        .collect()
}

pub fn load_orderings(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    read_orderings(&fs::read_to_string(path)?)
}

// ------------------------------------------------------------------ misc

/// Writes through a temporary file in the destination directory and
/// renames it into place, so a failed run never leaves a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir: PathBuf = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fit_mixture;

    #[test]
    fn small_csv() {
        let ds = read_scores_csv("a,b,label\n0.5,1.5,cat\n2,-1e-3,car\n".as_bytes()).unwrap();
        assert_eq!(ds.n_concepts(), 2);
        assert_eq!(ds.n_samples(), 2);
        assert_eq!(ds.class_names(), &["cat".to_string(), "car".to_string()]);
        assert_eq!(ds.row(1), &[2.0, -1e-3]);
    }

    #[test]
    fn comments_and_whitespace() {
        let text = "# cosine similarities\na, b ,label\n 0.5 ,1.5, cat\n\n2,1,car\n";
        let ds = read_scores_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.concept_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.n_samples(), 2);
    }

    #[test]
    fn non_numeric_cell_location() {
        let text = "a,b,label\n0.5,1.5,cat\n2,oops,car\n";
        let err = read_scores_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 3, column 2"), "{err}");
    }

    #[test]
    fn csv_errors() {
        assert!(read_scores_csv("".as_bytes())
            .unwrap_err()
            .to_string()
            .contains("empty"));
        let ragged = read_scores_csv("a,b,label\n1,2,x\n1,x\n".as_bytes()).unwrap_err();
        assert!(ragged.to_string().contains("row 3"), "{ragged}");
        let no_label = read_scores_csv("a,b,class\n1,2,x\n".as_bytes()).unwrap_err();
        assert!(no_label.to_string().contains("row 1"), "{no_label}");
        assert!(read_scores_csv("a,b,label\n1,nan,x\n".as_bytes()).is_err());
        assert!(read_scores_csv("a,a,label\n1,2,x\n".as_bytes()).is_err());
    }

    #[test]
    fn single_class_loads_but_does_not_fit() {
        let ds = read_scores_csv("a,label\n1,x\n2,x\n".as_bytes()).unwrap();
        assert_eq!(ds.n_classes(), 1);
        assert!(fit_mixture(&ds, Ridge::default()).is_err());
    }

    #[test]
    fn csv_write_read() {
        let ds = read_scores_csv("a,b,label\n0.1,0.2,x\n0.30000000000000004,5e-300,y\n".as_bytes())
            .unwrap();
        let mut buf = Vec::new();
        write_scores_csv(&ds, &mut buf).unwrap();
        assert_eq!(read_scores_csv(buf.as_slice()).unwrap(), ds);
    }

    fn fitted() -> MixtureModel {
        let text = "a,b,label\n0.1,0.2,x\n0.3,0.1,x\n0.2,0.7,x\n1.1,1.2,y\n0.9,1.3,y\n1.4,0.8,y\n";
        fit_mixture(&read_scores_csv(text.as_bytes()).unwrap(), Ridge::default()).unwrap()
    }

    #[test]
    fn model_text_has_17_digits() {
        let text = model_to_string(&fitted()).unwrap();
        assert!(text.contains("\"prior\": 5.0000000000000000e-1"), "{text}");
        assert_eq!(model_from_str(&text).unwrap(), fitted());
    }

    #[test]
    fn future_version_rejected() {
        let text = model_to_string(&fitted())
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(
            model_from_str(&text),
            Err(Error::Version {
                found: 2,
                supported: 1
            })
        ));
    }

    #[test]
    fn missing_prior_named() {
        let mut value: serde_json::Value =
            serde_json::from_str(&model_to_string(&fitted()).unwrap()).unwrap();
        value["classes"][1].as_object_mut().unwrap().remove("prior");
        let err = model_from_str(&value.to_string()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
        assert!(err.to_string().contains("prior"), "{err}");
    }

    #[test]
    fn covariance_shape_checked() {
        let mut value: serde_json::Value =
            serde_json::from_str(&model_to_string(&fitted()).unwrap()).unwrap();
        value["classes"][0]["covariance"]
            .as_array_mut()
            .unwrap()
            .pop();
        let err = model_from_str(&value.to_string()).unwrap_err();
        assert!(err.to_string().contains("covariance"), "{err}");
    }

    #[test]
    fn orderings_parse() {
        assert_eq!(
            read_orderings("2,0,1\n\n1\n").unwrap(),
            vec![vec![2, 0, 1], vec![], vec![1]]
        );
        let err = read_orderings("0,1\n1,x\n").unwrap_err();
        assert!(err.to_string().contains("row 2, column 2"));
    }
}

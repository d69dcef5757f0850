//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or model errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::counterfactual::explain_local;
use crate::dataset::ScoreDataset;
use crate::diagnostics::qq_series;
use crate::error::Error;
use crate::faithfulness::{
    deletion_curve, BaselineKind, ConceptOrdering, CounterfactualOrdering, ExternalOrdering,
    RandomOrdering,
};
use crate::global::rank_concepts_global;
use crate::io::{
    load_model, load_orderings, load_scores_csv, save_model, write_atomic, ExplanationReport,
    LocalReport, Provenance, ReportBody,
};
use crate::model::{fit_mixture, MixtureModel, Ridge};
use crate::qda::{accuracy, posterior};

#[derive(Debug, Parser)]
#[command(
    name = "concept-qda",
    version,
    about = "Gaussian concept-score classifier and explainer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one Gaussian per class from a scores CSV.
    Fit {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Absolute diagonal ridge; defaults to 1e-6 * trace / N per class.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Posterior probabilities and predicted class for every row.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Concepts that best separate two classes.
    ExplainGlobal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        class_a: String,
        #[arg(long)]
        class_b: String,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Single-concept counterfactuals for one row of a scores CSV.
    ExplainLocal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// Zero-based data row.
        #[arg(long)]
        row: usize,
        #[arg(long, default_value_t = 5)]
        top_k: usize,
        #[command(flatten)]
        output: Output,
    },
    /// Chi-square Q-Q data for one class.
    Qq {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        class: String,
        #[command(flatten)]
        output: Output,
    },
    /// Accuracy as the most important concepts are nullified.
    Deletion {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// `counterfactual`, `random`, or `file:<path>`.
        #[arg(long)]
        ordering: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated n_null values; defaults to every integer 0..=N.
        #[arg(long, value_delimiter = ',')]
        n_null: Option<Vec<usize>>,
        #[arg(long, value_enum, default_value_t = BaselineArg::ClassAverage)]
        baseline: BaselineArg,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct Output {
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Two-column numeric table for plotting.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BaselineArg {
    ClassAverage,
    Pooled,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn read_model(path: &Path) -> Result<(MixtureModel, Vec<u8>), Failure> {
    let bytes = fs::read(path).map_err(Error::from)?;
    let model = load_model(path)?;
    Ok((model, bytes))
}

/// Loads a scores CSV and lines its concepts and labels up with `model`.
fn read_scores(model: &MixtureModel, path: &Path) -> Result<ScoreDataset, Failure> {
    let ds = load_scores_csv(path)?;
    if ds.concept_names() != model.concept_names.as_slice() {
        return Err(Error::Dataset(format!(
            "scores columns {:?} do not match model concepts {:?}",
            ds.concept_names(),
            model.concept_names
        ))
        .into());
    }
    Ok(ds.relabel(&model.class_names)?)
}

fn emit(report: &ExplanationReport, output: &Output) -> Result<(), Failure> {
    let mut json = report.to_json()?;
    json.push('\n');
    if let Some(path) = &output.plot_data {
        write_atomic(path, report.plot_table().as_bytes())?;
    }
    match &output.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Fit { scores, out, ridge } => {
            let ridge = match ridge {
                Some(r) if r.is_finite() && r >= 0.0 => Ridge::Absolute(r),
                Some(r) => return Err(Failure::Usage(format!("--ridge must be >= 0, got {r}"))),
                None => Ridge::default(),
            };
            let ds = load_scores_csv(&scores)?;
            let model = fit_mixture(&ds, ridge)?;
            save_model(&model, &out)?;
            eprintln!(
                "fitted {} classes over {} concepts from {} samples",
                model.n_classes(),
                model.n_concepts(),
                ds.n_samples()
            );
            Ok(())
        }
        Command::Predict { model, scores, out } => {
            let (model, _) = read_model(&model)?;
            let ds = load_scores_csv(&scores)?;
            if ds.concept_names() != model.concept_names.as_slice() {
                return Err(
                    Error::Dataset("scores columns do not match model concepts".into()).into(),
                );
            }
            let mut csv = String::from("class");
            for name in &model.class_names {
                csv.push(',');
                csv.push_str(&csv_field(name));
            }
            csv.push('\n');
            let mut predicted = Vec::with_capacity(ds.n_samples());
            for row in ds.rows() {
                let post = posterior(&model, row)?;
                csv.push_str(&csv_field(&model.class_names[post.predicted]));
                for p in &post.probabilities {
                    csv.push_str(&format!(",{p:?}"));
                }
                csv.push('\n');
                predicted.push(post.predicted);
            }
            match out {
                Some(path) => write_atomic(path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
            // labels the model has never seen make accuracy meaningless
            if let Ok(relabeled) = ds.relabel(&model.class_names) {
                eprintln!(
                    "accuracy: {:.6} ({} samples)",
                    accuracy(&predicted, relabeled.labels()),
                    ds.n_samples()
                );
            }
            Ok(())
        }
        Command::ExplainGlobal {
            model,
            class_a,
            class_b,
            top_k,
            output,
        } => {
            let (model_obj, bytes) = read_model(&model)?;
            let a = model_obj.class_index(&class_a)?;
            let b = model_obj.class_index(&class_b)?;
            let k = top_k.min(model_obj.n_concepts());
            if k == 0 {
                return Err(Failure::Usage("--top-k must be at least 1".into()));
            }
            let g = rank_concepts_global(&model_obj, a, b, k)?;
            emit(
                &ExplanationReport {
                    body: ReportBody::Global(g),
                    provenance: Provenance::new(&bytes, None),
                },
                &output,
            )
        }
        Command::ExplainLocal {
            model,
            scores,
            row,
            top_k,
            output,
        } => {
            let (model_obj, bytes) = read_model(&model)?;
            let ds = load_scores_csv(&scores)?;
            if ds.concept_names() != model_obj.concept_names.as_slice() {
                return Err(
                    Error::Dataset("scores columns do not match model concepts".into()).into(),
                );
            }
            if row >= ds.n_samples() {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: row,
                    len: ds.n_samples(),
                }
                .into());
            }
            let k = top_k.min(2 * model_obj.n_concepts());
            if k == 0 {
                return Err(Failure::Usage("--top-k must be at least 1".into()));
            }
            let explanation = explain_local(&model_obj, ds.row(row), k)?;
            emit(
                &ExplanationReport {
                    body: ReportBody::Local(LocalReport {
                        row,
                        predicted_class: model_obj.class_names[explanation.predicted].clone(),
                        explanation,
                    }),
                    provenance: Provenance::new(&bytes, Some(&scores)),
                },
                &output,
            )
        }
        Command::Qq {
            model,
            scores,
            class,
            output,
        } => {
            let (model_obj, bytes) = read_model(&model)?;
            let c = model_obj.class_index(&class)?;
            let ds = read_scores(&model_obj, &scores)?;
            let rows: Vec<&[f64]> = ds.class_rows(c).collect();
            let series = qq_series(&model_obj, c, &rows)?;
            emit(
                &ExplanationReport {
                    body: ReportBody::Qq(series),
                    provenance: Provenance::new(&bytes, Some(&scores)),
                },
                &output,
            )
        }
        Command::Deletion {
            model,
            scores,
            ordering,
            seed,
            n_null,
            baseline,
            output,
        } => {
            let (model_obj, bytes) = read_model(&model)?;
            let ds = read_scores(&model_obj, &scores)?;
            let ordering: Box<dyn ConceptOrdering> = match ordering.as_str() {
                "counterfactual" => Box::new(CounterfactualOrdering),
                "random" => match seed {
                    Some(seed) => Box::new(RandomOrdering { seed }),
                    None => {
                        return Err(Failure::Usage(
                            "--ordering random requires an explicit --seed".into(),
                        ))
                    }
                },
                other => match other.strip_prefix("file:") {
                    Some(path) => {
                        let rows = load_orderings(path)?;
                        if rows.len() != ds.n_samples() {
                            return Err(Error::Dataset(format!(
                                "ordering file has {} rows, scores have {}",
                                rows.len(),
                                ds.n_samples()
                            ))
                            .into());
                        }
                        Box::new(ExternalOrdering { rows })
                    }
                    None => {
                        return Err(Failure::Usage(format!(
                            "unknown ordering '{other}' (expected counterfactual, random or file:<path>)"
                        )))
                    }
                },
            };
            let n_null = n_null.unwrap_or_else(|| (0..=model_obj.n_concepts()).collect());
            if let Some(&bad) = n_null.iter().find(|&&k| k > model_obj.n_concepts()) {
                return Err(Failure::Usage(format!(
                    "--n-null values must be <= {}, got {bad}",
                    model_obj.n_concepts()
                )));
            }
            let baseline = match baseline {
                BaselineArg::ClassAverage => BaselineKind::ClassAverage,
                BaselineArg::Pooled => BaselineKind::Pooled,
            };
            let curve = deletion_curve(&model_obj, &ds, ordering.as_ref(), &n_null, baseline)?;
            emit(
                &ExplanationReport {
                    body: ReportBody::Deletion(curve),
                    provenance: Provenance::new(&bytes, Some(&scores)),
                },
                &output,
            )
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

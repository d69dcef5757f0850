//! Gaussian concept-score classifier with closed-form explanations.
//!
//! Each class is modelled as a multivariate Gaussian over concept scores and
//! samples are classified by quadratic discriminant analysis. On top of the
//! fitted model the crate provides
//!
//! - a global concept ranking from signed per-concept Wasserstein-2
//!   distances between two classes ([`global`]),
//! - local, single-concept counterfactuals solved in closed form and checked
//!   against a line-search oracle ([`counterfactual`]),
//! - chi-square Q-Q data for the Gaussian assumption ([`diagnostics`]),
//! - a deletion-curve faithfulness benchmark ([`faithfulness`]),
//! - seeded synthetic mixtures for testing ([`synthetic`]).

pub mod cli;
pub mod counterfactual;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod faithfulness;
pub mod global;
pub mod io;
pub mod model;
pub mod qda;
pub mod synthetic;

pub use counterfactual::{
    binary_counterfactual, boundary_coefficients, counterfactual_oracle, explain_local,
    multiclass_counterfactual, Counterfactual, LocalExplanation, QuadraticBoundary, Sign,
};
pub use dataset::ScoreDataset;
pub use error::{Error, Result};
pub use global::{rank_concepts_global, signed_w2, GlobalExplanation};
pub use model::{fit_mixture, validate_model, GaussianClassModel, MixtureModel, Ridge};
pub use qda::{log_joint, posterior, predict, predict_batch, PosteriorResult};

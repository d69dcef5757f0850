//! Minimal single-concept counterfactuals for the Gaussian classifier.
//!
//! Moving sample `z` by `eps` along concept `j` changes each class log-joint
//! by a quadratic in `eps`. For a source class `s` (the current prediction)
//! and a target `t`,
//!
//! ```text
//! L_s(z + eps e_j) - L_t(z + eps e_j) = P eps^2 + b eps + c
//! P = (prec_t[j,j] - prec_s[j,j]) / 2
//! b = (prec_t (z - mu_t))[j] - (prec_s (z - mu_s))[j]
//! c = L_s(z) - L_t(z)
//! ```
//!
//! and the target weakly dominates wherever that quadratic is `<= 0`. The
//! counterfactual on side `s` is the nearest root at which the quadratic
//! enters its nonpositive region when moving away from `z`. The multiclass
//! case takes the minimum over all targets, and every candidate is checked
//! against the full argmax before it is emitted.
//!
//! [`counterfactual_oracle`] answers the same question by scanning the
//! prediction along the axis, without touching the quadratic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MixtureModel;
use crate::qda::{argmax, predict_unchecked};

/// Direction of a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Positive, Sign::Negative];

    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    /// Whether `x` lies strictly on this side of zero.
    pub fn admits(self, x: f64) -> bool {
        match self {
            Sign::Positive => x > 0.0,
            Sign::Negative => x < 0.0,
        }
    }
}

impl std::fmt::Display for Sign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "count", content = "values")]
pub enum Roots {
    None,
    One(f64),
    /// Ascending.
    Two(f64, f64),
}

impl Roots {
    pub fn to_vec(self) -> Vec<f64> {
        match self {
            Roots::None => vec![],
            Roots::One(r) => vec![r],
            Roots::Two(a, b) => vec![a, b],
        }
    }
}

/// `quadratic * eps^2 + linear * eps + constant`: source minus target
/// log-joint along one concept axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticBoundary {
    pub quadratic: f64,
    pub linear: f64,
    pub constant: f64,
    pub roots: Roots,
}

/// Relative size below which the quadratic coefficient is treated as zero.
const LINEAR_THRESHOLD: f64 = 1e-12;

impl QuadraticBoundary {
    fn solve(quadratic: f64, linear: f64, constant: f64, curvature_scale: f64) -> Self {
        let roots = if quadratic.abs() < LINEAR_THRESHOLD * (1.0 + curvature_scale) {
            if linear == 0.0 {
                Roots::None
            } else {
                Roots::One(-constant / linear)
            }
        } else {
            let disc = linear * linear - 4.0 * quadratic * constant;
            if disc < 0.0 {
                Roots::None
            } else if disc == 0.0 {
                Roots::One(-linear / (2.0 * quadratic))
            } else {
                // cancellation-free pair: q / a and c / q
                let sq = disc.sqrt();
                let q = -0.5 * (linear + if linear >= 0.0 { sq } else { -sq });
                let r1 = q / quadratic;
                let r2 = if q != 0.0 { constant / q } else { -r1 };
                let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
                Roots::Two(
                    polish(quadratic, linear, constant, lo),
                    polish(quadratic, linear, constant, hi),
                )
            }
        };
        Self {
            quadratic,
            linear,
            constant,
            roots,
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        (self.quadratic * eps + self.linear) * eps + self.constant
    }

    pub fn slope(&self, eps: f64) -> f64 {
        2.0 * self.quadratic * eps + self.linear
    }

    /// Nearest perturbation on side `sign` at which the target starts to
    /// weakly dominate, if any. Roots where the target only touches the
    /// source (tangency) or where it stops dominating are rejected.
    pub fn entry_root(&self, sign: Sign) -> Option<f64> {
        let s = sign.factor();
        if self.constant <= 0.0 {
            // already tied at z: dominance either starts immediately or not at all
            let direction = s * self.linear;
            let immediate = direction < 0.0 || (direction == 0.0 && self.quadratic < 0.0);
            if immediate {
                return Some(0.0);
            }
        }
        let mut candidates: Vec<f64> = self
            .roots
            .to_vec()
            .into_iter()
            .filter(|&r| sign.admits(r))
            .collect();
        candidates.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
        candidates.into_iter().find(|&r| s * self.slope(r) < 0.0)
    }
}

fn polish(a: f64, b: f64, c: f64, r: f64) -> f64 {
    let f = (a * r + b) * r + c;
    let d = 2.0 * a * r + b;
    if d == 0.0 || f == 0.0 {
        return r;
    }
    let next = r - f / d;
    let fn_ = (a * next + b) * next + c;
    if fn_.abs() < f.abs() {
        next
    } else {
        r
    }
}

/// Per-sample quantities shared by every (concept, sign, target) subproblem:
/// `w_c = prec_c (z - mu_c)` and the log-joints at `z`, plus the absolute
/// sums that bound how far a full re-evaluation can drift from them.
struct SampleState<'a> {
    model: &'a MixtureModel,
    weighted: Vec<Vec<f64>>,
    weighted_abs: Vec<Vec<f64>>,
    magnitude: Vec<f64>,
    log_joint: Vec<f64>,
    predicted: usize,
}

impl<'a> SampleState<'a> {
    fn new(model: &'a MixtureModel, z: &[f64]) -> Result<Self> {
        model.check_input(z)?;
        let n = model.n_concepts();
        let c = model.n_classes();
        let mut weighted = Vec::with_capacity(c);
        let mut weighted_abs = Vec::with_capacity(c);
        let mut magnitude = Vec::with_capacity(c);
        let mut log_joint = Vec::with_capacity(c);
        for class in &model.classes {
            let mut w = vec![0.0; n];
            let mut w_abs = vec![0.0; n];
            // same arithmetic as the classifier, so `predicted` agrees with predict
            let (d2, m) = class.weighted_residual(z, &mut w, &mut w_abs);
            log_joint.push(class.log_joint_from_distance(d2));
            weighted.push(w);
            weighted_abs.push(w_abs);
            magnitude.push(m);
        }
        let predicted = argmax(&log_joint);
        Ok(Self {
            model,
            weighted,
            weighted_abs,
            magnitude,
            log_joint,
            predicted,
        })
    }

    fn boundary(&self, source: usize, target: usize, j: usize) -> QuadraticBoundary {
        let s = &self.model.classes[source];
        let t = &self.model.classes[target];
        let ps = s.precision[(j, j)];
        let pt = t.precision[(j, j)];
        let quadratic = 0.5 * (pt - ps);
        let linear = self.weighted[target][j] - self.weighted[source][j];
        let constant = self.log_joint[source] - self.log_joint[target];
        QuadraticBoundary::solve(quadratic, linear, constant, ps.abs().max(pt.abs()))
    }

    /// Log-joint of class `c` at `z + eps e_j`.
    fn shifted(&self, c: usize, j: usize, eps: f64) -> f64 {
        let class = &self.model.classes[c];
        self.log_joint[c] - eps * self.weighted[c][j] - 0.5 * class.precision[(j, j)] * eps * eps
    }

    /// Bound on the rounding error of class `c`'s log-joint at
    /// `z + eps e_j`, whether evaluated incrementally or from scratch.
    fn rounding_bound(&self, c: usize, j: usize, eps: f64) -> f64 {
        let class = &self.model.classes[c];
        let n = self.model.n_concepts() as f64;
        let pjj = class.precision[(j, j)].abs();
        let terms = 1.0
            + self.log_joint[c].abs()
            + class.log_det.abs()
            + self.magnitude[c]
            + 2.0 * eps.abs() * self.weighted_abs[c][j]
            + eps.abs() * self.weighted[c][j].abs()
            + pjj * eps * eps;
        4.0 * (n + 4.0) * f64::EPSILON * terms
    }

    /// Pushes an exact boundary point `root` outward until the target beats
    /// the source by more than any rounding error, so a full re-evaluation
    /// of the classifier agrees. Gives up past a relative nudge of about
    /// 1e-6.
    fn settle(
        &self,
        boundary: &QuadraticBoundary,
        source: usize,
        target: usize,
        j: usize,
        root: f64,
        sign: Sign,
    ) -> Option<f64> {
        const FIRST: f64 = 1e-15;
        let scale = root.abs().max(1.0);
        let clear = |eps: f64| {
            let gap = self.shifted(target, j, eps) - self.shifted(source, j, eps);
            gap > self.rounding_bound(source, j, eps) + self.rounding_bound(target, j, eps)
        };
        if root != 0.0 && clear(root) {
            return Some(root);
        }
        // first-order guess for the nudge, then doubling
        let margin = self.rounding_bound(source, j, root) + self.rounding_bound(target, j, root);
        let slope = boundary.slope(root).abs();
        let guess = if slope > 0.0 {
            2.0 * margin / slope
        } else {
            0.0
        };
        let mut step = (FIRST * scale).max(guess);
        let limit = 1e-6 * scale;
        while step <= limit {
            let eps = root + sign.factor() * step;
            if clear(eps) {
                return Some(eps);
            }
            step *= 2.0;
        }
        None
    }

    fn binary(&self, source: usize, target: usize, j: usize, sign: Sign) -> Option<f64> {
        let boundary = self.boundary(source, target, j);
        let root = boundary.entry_root(sign)?;
        self.settle(&boundary, source, target, j, root, sign)
    }

    fn argmax_shifted(&self, j: usize, eps: f64) -> usize {
        let mut best = 0;
        let mut best_val = self.shifted(0, j, eps);
        for c in 1..self.model.n_classes() {
            let v = self.shifted(c, j, eps);
            if v > best_val {
                best = c;
                best_val = v;
            }
        }
        best
    }

    /// Multiclass solve; the second value counts binary subproblems.
    fn multiclass(&self, j: usize, sign: Sign) -> (Option<Counterfactual>, usize) {
        let source = self.predicted;
        let mut best: Option<(f64, usize, usize)> = None;
        let mut solved = 0;
        for target in 0..self.model.n_classes() {
            if target == source {
                continue;
            }
            solved += 1;
            let Some(eps) = self.binary(source, target, j, sign) else {
                continue;
            };
            let resulting = self.argmax_shifted(j, eps);
            if resulting == source {
                continue;
            }
            if best.is_none_or(|(b, _, _)| eps.abs() < b.abs()) {
                best = Some((eps, resulting, target));
            }
        }
        let cf = best.map(|(epsilon, resulting_class, target_class)| {
            let sd = self.model.classes[source].variance(j).sqrt();
            Counterfactual {
                concept: j,
                sign,
                epsilon,
                epsilon_scaled: epsilon / sd,
                source_class: source,
                resulting_class,
                target_class,
            }
        });
        (cf, solved)
    }
}

/// One admissible minimal perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterfactual {
    pub concept: usize,
    pub sign: Sign,
    pub epsilon: f64,
    /// `epsilon` in standard deviations of the source class marginal.
    pub epsilon_scaled: f64,
    pub source_class: usize,
    pub resulting_class: usize,
    pub target_class: usize,
}

/// Coefficients and roots of the source-minus-target log-joint along
/// concept `j`.
pub fn boundary_coefficients(
    model: &MixtureModel,
    z: &[f64],
    source: usize,
    target: usize,
    j: usize,
) -> Result<QuadraticBoundary> {
    model.class(source)?;
    model.class(target)?;
    model.check_concept(j)?;
    if source == target {
        return Err(Error::InvalidArgument(
            "source and target classes must differ".into(),
        ));
    }
    let state = SampleState::new(model, z)?;
    Ok(state.boundary(source, target, j))
}

/// Smallest perturbation along `j` with sign `sign` after which `target`
/// beats the currently predicted class. `None` when no such point exists.
pub fn binary_counterfactual(
    model: &MixtureModel,
    z: &[f64],
    j: usize,
    sign: Sign,
    target: usize,
) -> Result<Option<f64>> {
    model.class(target)?;
    model.check_concept(j)?;
    let state = SampleState::new(model, z)?;
    if state.predicted == target {
        return Err(Error::Precondition(format!(
            "sample is already predicted as class {target}"
        )));
    }
    Ok(state.binary(state.predicted, target, j, sign))
}

/// Minimal-magnitude counterfactual over all classes other than the
/// current prediction, validated against the full argmax.
pub fn multiclass_counterfactual(
    model: &MixtureModel,
    z: &[f64],
    j: usize,
    sign: Sign,
) -> Result<Option<Counterfactual>> {
    model.check_concept(j)?;
    let state = SampleState::new(model, z)?;
    Ok(state.multiclass(j, sign).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub predicted: usize,
    /// Sorted by ascending `|epsilon_scaled|`.
    pub counterfactuals: Vec<Counterfactual>,
    pub binary_subproblems: usize,
}

/// Every counterfactual of `z` (all concepts, both signs), most important
/// (smallest scaled magnitude) first, truncated to `k`.
pub fn explain_local(model: &MixtureModel, z: &[f64], k: usize) -> Result<LocalExplanation> {
    let n = model.n_concepts();
    if k == 0 || k > 2 * n {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={}, got {k}",
            2 * n
        )));
    }
    let mut all = all_counterfactuals(model, z)?;
    all.counterfactuals.truncate(k);
    Ok(all)
}

/// [`explain_local`] without truncation.
pub fn all_counterfactuals(model: &MixtureModel, z: &[f64]) -> Result<LocalExplanation> {
    let state = SampleState::new(model, z)?;
    let mut counterfactuals = Vec::new();
    let mut solved = 0;
    for j in 0..model.n_concepts() {
        for sign in Sign::BOTH {
            let (cf, count) = state.multiclass(j, sign);
            solved += count;
            counterfactuals.extend(cf);
        }
    }
    counterfactuals.sort_by(|a, b| a.epsilon_scaled.abs().total_cmp(&b.epsilon_scaled.abs()));
    Ok(LocalExplanation {
        predicted: state.predicted,
        counterfactuals,
        binary_subproblems: solved,
    })
}

/// Number of grid cells the oracle scans before bisecting.
pub const ORACLE_SCAN_STEPS: usize = 20_000;

/// Independent check: scans the classifier's prediction along concept `j`
/// on side `sign` out to `search_radius`, then bisects the first cell where
/// it changes down to `tolerance`. Returns the changed end of the final
/// bracket.
pub fn counterfactual_oracle(
    model: &MixtureModel,
    z: &[f64],
    j: usize,
    sign: Sign,
    search_radius: f64,
    tolerance: f64,
) -> Result<Option<f64>> {
    model.check_input(z)?;
    model.check_concept(j)?;
    if !(search_radius > 0.0 && tolerance > 0.0) {
        return Err(Error::InvalidArgument(
            "search radius and tolerance must be positive".into(),
        ));
    }
    let original = predict_unchecked(model, z);
    let mut probe = z.to_vec();
    let mut at = |eps: f64| {
        probe[j] = z[j] + eps;
        predict_unchecked(model, &probe)
    };
    let s = sign.factor();
    let h = search_radius / ORACLE_SCAN_STEPS as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for i in 1..=ORACLE_SCAN_STEPS {
        let mag = i as f64 * h;
        if at(s * mag) != original {
            hi = Some(mag);
            break;
        }
        lo = mag;
    }
    let Some(mut hi) = hi else {
        return Ok(None);
    };
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at(s * mid) != original {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(s * hi))
}

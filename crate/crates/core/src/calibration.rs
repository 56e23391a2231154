//! Score-to-LLR calibration.
//!
//! Two routes are provided:
//!
//! * discriminative: an affine map `f(s) = a s + b` per score stream, fit by
//!   prior-weighted logistic regression so that its output is an LLR;
//! * generative: a Gaussian back-end with one full-covariance 2-D Gaussian
//!   per class over the score vector `[s_asv, s_cm]`, from which both LLRs
//!   follow as log-density differences.
//!
//! ASV calibrators are trained on `tar.bf` (positive) against `non.bf`
//! (negative) trials, CM calibrators on bona fide (`tar.bf` and `non.bf`)
//! against `spf`. [`ScoreStream::training_pairs`] implements that pairing.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::format::{serialize_f64, serialize_f64_array, serialize_f64_matrix};
use crate::types::{ClassLabel, ClassTriple, LlrPair, ScoreVector, TrialScore};

/// Effective target prior of the logistic objective.
pub const EFFECTIVE_PRIOR: f64 = 0.5;
/// Convergence threshold on the gradient infinity-norm.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

/// Affine score calibration `a * score + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAffine")]
pub struct AffineCalibration {
    #[serde(rename = "a", serialize_with = "serialize_f64")]
    scale: f64,
    #[serde(rename = "b", serialize_with = "serialize_f64")]
    offset: f64,
}

#[derive(Deserialize)]
struct RawAffine {
    a: f64,
    b: f64,
}

impl TryFrom<RawAffine> for AffineCalibration {
    type Error = Error;

    fn try_from(raw: RawAffine) -> Result<Self> {
        AffineCalibration::new(raw.a, raw.b)
    }
}

impl AffineCalibration {
    pub fn new(scale: f64, offset: f64) -> Result<Self> {
        Ok(Self {
            scale: ensure_finite(scale, "calibration scale")?,
            offset: ensure_finite(offset, "calibration offset")?,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn apply(&self, score: f64) -> Result<f64> {
        apply_affine(self, score)
    }
}

pub fn apply_affine(cal: &AffineCalibration, score: f64) -> Result<f64> {
    ensure_finite(score, "score")?;
    Ok(cal.scale * score + cal.offset)
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x == f64::INFINITY {
        return x;
    }
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct LogisticProblem<'a> {
    scores: &'a [f64],
    is_positive: &'a [bool],
    weight_pos: f64,
    weight_neg: f64,
    prior_logit: f64,
}

impl LogisticProblem<'_> {
    /// Weighted cross-entropy in nats, with gradient and Hessian.
    fn evaluate(&self, a: f64, b: f64) -> (f64, [f64; 2], [f64; 3]) {
        let mut loss = 0.0;
        let mut grad = [0.0; 2];
        let mut hess = [0.0; 3];
        for (&s, &pos) in self.scores.iter().zip(self.is_positive) {
            let z = a * s + b + self.prior_logit;
            let (w, l, r) = if pos {
                (self.weight_pos, softplus(-z), -sigmoid(-z))
            } else {
                (self.weight_neg, softplus(z), sigmoid(z))
            };
            let curvature = sigmoid(z) * sigmoid(-z);
            loss += w * l;
            grad[0] += w * r * s;
            grad[1] += w * r;
            hess[0] += w * curvature * s * s;
            hess[1] += w * curvature * s;
            hess[2] += w * curvature;
        }
        (loss, grad, hess)
    }

    fn loss(&self, a: f64, b: f64) -> f64 {
        self.evaluate(a, b).0
    }
}

/// Fits `a`, `b` so that `a * s + b` approximates the LLR of the positive
/// class.
///
/// The objective is the cross-entropy at effective prior
/// [`EFFECTIVE_PRIOR`], with each class weighted by the inverse of its size
/// and the prior log-odds added to the logit during training and left out
/// of the returned offset. Newton steps with a backtracking line search
/// start from `(1, 0)` and stop once the gradient infinity-norm is at most
/// [`GRADIENT_TOLERANCE`] or after [`MAX_ITERATIONS`] iterations.
///
/// Fails with [`Error::Fit`] when either class is empty or when the fitted
/// scale is not positive (the score ranks the classes the wrong way round).
pub fn fit_affine_logistic(scores: &[f64], is_positive: &[bool]) -> Result<AffineCalibration> {
    if scores.len() != is_positive.len() {
        return Err(Error::domain(format!(
            "{} scores but {} labels",
            scores.len(),
            is_positive.len()
        )));
    }
    for &s in scores {
        ensure_finite(s, "calibration score")?;
    }
    let n_pos = is_positive.iter().filter(|&&p| p).count();
    let n_neg = is_positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::fit(format!(
            "logistic calibration needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }

    let problem = LogisticProblem {
        scores,
        is_positive,
        weight_pos: EFFECTIVE_PRIOR / n_pos as f64,
        weight_neg: (1.0 - EFFECTIVE_PRIOR) / n_neg as f64,
        prior_logit: (EFFECTIVE_PRIOR / (1.0 - EFFECTIVE_PRIOR)).ln(),
    };

    let (mut a, mut b) = (1.0, 0.0);
    let (mut loss, mut grad, mut hess) = problem.evaluate(a, b);
    for _ in 0..MAX_ITERATIONS {
        if grad[0].abs().max(grad[1].abs()) <= GRADIENT_TOLERANCE {
            break;
        }
        let det = hess[0] * hess[2] - hess[1] * hess[1];
        let newton = if hess[0] > 0.0 && det > 1e-300 {
            Some([
                -(hess[2] * grad[0] - hess[1] * grad[1]) / det,
                -(hess[0] * grad[1] - hess[1] * grad[0]) / det,
            ])
        } else {
            None
        };
        let direction = match newton {
            Some(d) if d[0] * grad[0] + d[1] * grad[1] < 0.0 => d,
            _ => [-grad[0], -grad[1]],
        };
        let slope = direction[0] * grad[0] + direction[1] * grad[1];

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            let (na, nb) = (a + step * direction[0], b + step * direction[1]);
            let candidate = problem.loss(na, nb);
            if candidate <= loss + 1e-4 * step * slope {
                accepted = Some((na, nb));
                break;
            }
            step *= 0.5;
        }
        let Some((na, nb)) = accepted.filter(|&(na, nb)| (na, nb) != (a, b)) else {
            // No representable step decreases the loss any further.
            break;
        };
        a = na;
        b = nb;
        (loss, grad, hess) = problem.evaluate(a, b);
    }

    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::fit("logistic calibration diverged"));
    }
    if a <= 0.0 {
        return Err(Error::fit(format!(
            "fitted calibration scale {a} is not positive; scores rank the classes in reverse"
        )));
    }
    Ok(AffineCalibration { scale: a, offset: b })
}

/// Which sub-system hypothesis pair a calibrator is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreStream {
    /// `tar.bf` against `non.bf`; `spf` trials are ignored.
    Asv,
    /// Bona fide (`tar.bf` and `non.bf`) against `spf`.
    Cm,
}

impl ScoreStream {
    /// Positive/negative role of a class for this stream, `None` when the
    /// class does not take part in training.
    pub fn role(self, label: ClassLabel) -> Option<bool> {
        match (self, label) {
            (ScoreStream::Asv, ClassLabel::TarBf) => Some(true),
            (ScoreStream::Asv, ClassLabel::NonBf) => Some(false),
            (ScoreStream::Asv, ClassLabel::Spf) => None,
            (ScoreStream::Cm, ClassLabel::Spf) => Some(false),
            (ScoreStream::Cm, _) => Some(true),
        }
    }

    /// Scores and labels for fitting this stream's calibrator. `value`
    /// extracts the stream's value from a trial.
    pub fn training_pairs<F>(self, trials: &[TrialScore], mut value: F) -> Result<(Vec<f64>, Vec<bool>)>
    where
        F: FnMut(&TrialScore) -> Result<f64>,
    {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for trial in trials {
            let label = trial
                .label
                .ok_or_else(|| Error::fit(format!("trial {} has no label", trial.trial_id)))?;
            if let Some(positive) = self.role(label) {
                scores.push(value(trial)?);
                labels.push(positive);
            }
        }
        Ok((scores, labels))
    }
}

/// Fits the calibrator of one raw score stream from labeled trials.
pub fn fit_stream_calibration(trials: &[TrialScore], stream: ScoreStream) -> Result<AffineCalibration> {
    let (scores, labels) = stream.training_pairs(trials, |t| {
        Ok(match stream {
            ScoreStream::Asv => t.scores.asv,
            ScoreStream::Cm => t.scores.cm,
        })
    })?;
    fit_affine_logistic(&scores, &labels)
}

/// Symmetric positive-definite 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spd2 {
    xx: f64,
    xy: f64,
    yy: f64,
}

impl Spd2 {
    pub fn new(rows: [[f64; 2]; 2]) -> Result<Self> {
        let [[xx, xy], [yx, yy]] = rows;
        for v in [xx, xy, yx, yy] {
            ensure_finite(v, "covariance entry")?;
        }
        if (xy - yx).abs() > 1e-12 {
            return Err(Error::domain(format!("covariance is not symmetric: {xy} vs {yx}")));
        }
        let m = Self { xx, xy, yy };
        if !(m.min_eigenvalue() > 0.0 && m.det() > 0.0) {
            return Err(Error::domain(format!("covariance {rows:?} is not positive definite")));
        }
        Ok(m)
    }

    pub fn identity() -> Self {
        Self {
            xx: 1.0,
            xy: 0.0,
            yy: 1.0,
        }
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(self.xx, self.xy, self.yy)
    }

    /// Quadratic form `d^T Sigma^-1 d`.
    pub fn inverse_quadratic(&self, d: [f64; 2]) -> f64 {
        (self.yy * d[0] * d[0] - 2.0 * self.xy * d[0] * d[1] + self.xx * d[1] * d[1]) / self.det()
    }
}

fn min_eigenvalue(xx: f64, xy: f64, yy: f64) -> f64 {
    let half_trace = 0.5 * (xx + yy);
    let half_gap = (0.5 * (xx - yy)).hypot(xy);
    half_trace - half_gap
}

/// Smallest eigenvalue below which a fitted covariance is regularized.
pub const MIN_EIGENVALUE: f64 = 1e-12;

/// A 2-D Gaussian over `[s_asv, s_cm]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct ClassGaussian {
    #[serde(serialize_with = "serialize_f64_array")]
    mean: [f64; 2],
    #[serde(rename = "cov", serialize_with = "serialize_cov")]
    cov: Spd2,
}

fn serialize_cov<S: serde::Serializer>(cov: &Spd2, serializer: S) -> Result<S::Ok, S::Error> {
    serialize_f64_matrix(&cov.rows(), serializer)
}

#[derive(Deserialize)]
struct RawGaussian {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

impl TryFrom<RawGaussian> for ClassGaussian {
    type Error = Error;

    fn try_from(raw: RawGaussian) -> Result<Self> {
        ClassGaussian::new(raw.mean, raw.cov)
    }
}

impl ClassGaussian {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        ensure_finite(mean[0], "mean")?;
        ensure_finite(mean[1], "mean")?;
        Ok(Self {
            mean,
            cov: Spd2::new(cov)?,
        })
    }

    /// Maximum-likelihood estimate: sample mean and biased (1/N) covariance.
    ///
    /// When the smallest eigenvalue of the estimate is below
    /// [`MIN_EIGENVALUE`], `eps * I` with `eps = 1e-9 * trace / 2` is added.
    pub fn from_samples(samples: &[[f64; 2]]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::fit("cannot estimate a Gaussian from no samples"));
        }
        let n = samples.len() as f64;
        let mut mean = [0.0; 2];
        for s in samples {
            mean[0] += s[0];
            mean[1] += s[1];
        }
        mean[0] /= n;
        mean[1] /= n;
        let (mut xx, mut xy, mut yy) = (0.0, 0.0, 0.0);
        for s in samples {
            let (dx, dy) = (s[0] - mean[0], s[1] - mean[1]);
            xx += dx * dx;
            xy += dx * dy;
            yy += dy * dy;
        }
        xx /= n;
        xy /= n;
        yy /= n;
        if min_eigenvalue(xx, xy, yy) < MIN_EIGENVALUE {
            let eps = 1e-9 * (xx + yy) / 2.0;
            xx += eps;
            yy += eps;
        }
        let cov = Spd2::new([[xx, xy], [xy, yy]])
            .map_err(|_| Error::fit("covariance is degenerate even after regularization"))?;
        if cov.min_eigenvalue() <= 0.0 {
            return Err(Error::fit("covariance is degenerate even after regularization"));
        }
        Ok(Self { mean, cov })
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn cov(&self) -> &Spd2 {
        &self.cov
    }

    /// Natural-log density at `x`.
    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        let d = [x[0] - self.mean[0], x[1] - self.mean[1]];
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * self.cov.det().ln() - 0.5 * self.cov.inverse_quadratic(d)
    }
}

/// Per-class Gaussians over the score vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GaussianBackend {
    classes: ClassTriple<ClassGaussian>,
}

/// Minimum number of trials per class for a back-end fit.
pub const MIN_TRIALS_PER_CLASS: usize = 3;

impl GaussianBackend {
    pub fn new(classes: ClassTriple<ClassGaussian>) -> Self {
        Self { classes }
    }

    pub fn class(&self, label: ClassLabel) -> &ClassGaussian {
        self.classes.get(label)
    }

    pub fn classes(&self) -> &ClassTriple<ClassGaussian> {
        &self.classes
    }

    pub fn llrs(&self, s: &ScoreVector) -> LlrPair {
        backend_llrs(self, s)
    }

    /// Per-class natural-log densities in class order.
    pub fn log_densities(&self, s: &ScoreVector) -> [f64; 3] {
        let x = s.as_array();
        ClassLabel::ALL.map(|label| self.class(label).log_density(x))
    }
}

/// Maximum-likelihood Gaussian back-end from labeled trials.
pub fn fit_gaussian_backend(trials: &[TrialScore]) -> Result<GaussianBackend> {
    let mut samples: [Vec<[f64; 2]>; 3] = Default::default();
    for trial in trials {
        let label = trial
            .label
            .ok_or_else(|| Error::fit(format!("trial {} has no label", trial.trial_id)))?;
        samples[label.index()].push(trial.scores.as_array());
    }
    let classes = ClassTriple {
        spf: (),
        nonbf: (),
        tarbf: (),
    }
    .try_map(|label, _| {
        let class_samples = &samples[label.index()];
        if class_samples.len() < MIN_TRIALS_PER_CLASS {
            return Err(Error::fit(format!(
                "class {label} has {} trials, at least {MIN_TRIALS_PER_CLASS} are needed",
                class_samples.len()
            )));
        }
        ClassGaussian::from_samples(class_samples)
    })?;
    Ok(GaussianBackend { classes })
}

/// LLR(tar.bf vs non.bf) and LLR(tar.bf vs spf) as log-density differences.
pub fn backend_llrs(backend: &GaussianBackend, s: &ScoreVector) -> LlrPair {
    let [spf, nonbf, tarbf] = backend.log_densities(s);
    LlrPair {
        asv: tarbf - nonbf,
        cm: tarbf - spf,
    }
}

/// A fitted model file: `{"affine": {...}}` or `{"backend": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelDocument {
    Affine(AffineCalibration),
    Backend(GaussianBackend),
}

impl ModelDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid model document: {e}")))
    }

    pub fn into_affine(self) -> Result<AffineCalibration> {
        match self {
            ModelDocument::Affine(a) => Ok(a),
            ModelDocument::Backend(_) => Err(Error::Config("expected an affine model, found a backend".into())),
        }
    }

    pub fn into_backend(self) -> Result<GaussianBackend> {
        match self {
            ModelDocument::Backend(b) => Ok(b),
            ModelDocument::Affine(_) => Err(Error::Config("expected a backend model, found an affine one".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trial(label: ClassLabel, asv: f64, cm: f64) -> TrialScore {
        TrialScore::labeled("t", asv, cm, label).unwrap()
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_affine(&AffineCalibration::identity(), 3.7).unwrap(), 3.7);
        let cal = AffineCalibration::new(2.0, -1.0).unwrap();
        assert_eq!(apply_affine(&cal, 0.5).unwrap(), 0.0);
        assert!(matches!(apply_affine(&cal, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert_abs_diff_eq!(softplus(0.0), std::f64::consts::LN_2, epsilon = 1e-16);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
    }

    #[test]
    fn separable_scores_fit_sharp_calibration() {
        let mut scores = vec![10.0; 50];
        scores.extend(vec![-10.0; 50]);
        let labels: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let cal = fit_affine_logistic(&scores, &labels).unwrap();
        assert!(cal.scale() > 0.0);
        let llrs: Vec<f64> = scores.iter().map(|&s| cal.apply(s).unwrap()).collect();
        let cllr = crate::metrics::compute_cllr(&llrs, &labels).unwrap();
        assert!(cllr <= 0.01, "cllr {cllr}");
    }

    #[test]
    fn swapped_labels_are_a_fit_error() {
        let scores = [1.0, 2.0, 3.0, -1.0, -2.0, -3.0, 0.5, -0.5];
        let labels = [false, false, false, true, true, true, false, true];
        assert!(matches!(fit_affine_logistic(&scores, &labels), Err(Error::Fit(_))));
    }

    #[test]
    fn single_class_is_a_fit_error() {
        assert!(matches!(
            fit_affine_logistic(&[1.0, 2.0], &[true, true]),
            Err(Error::Fit(_))
        ));
        assert!(matches!(fit_affine_logistic(&[], &[]), Err(Error::Fit(_))));
        assert!(matches!(
            fit_affine_logistic(&[1.0, f64::INFINITY], &[true, false]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fit_is_deterministic() {
        let scores: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64) / 10.0 - 5.0).collect();
        let labels: Vec<bool> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| *s + (i % 7) as f64 - 3.0 > 0.0)
            .collect();
        let a = fit_affine_logistic(&scores, &labels).unwrap();
        let b = fit_affine_logistic(&scores, &labels).unwrap();
        assert_eq!(a.scale().to_bits(), b.scale().to_bits());
        assert_eq!(a.offset().to_bits(), b.offset().to_bits());
    }

    #[test]
    fn fit_reaches_stationary_point() {
        let scores: Vec<f64> = (0..300).map(|i| ((i * 53 % 211) as f64) / 20.0 - 5.0).collect();
        let labels: Vec<bool> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| s * 0.7 + ((i * 13 % 17) as f64 - 8.0) / 3.0 > 0.4)
            .collect();
        let cal = fit_affine_logistic(&scores, &labels).unwrap();
        let n_pos = labels.iter().filter(|&&p| p).count() as f64;
        let n_neg = labels.len() as f64 - n_pos;
        let problem = LogisticProblem {
            scores: &scores,
            is_positive: &labels,
            weight_pos: 0.5 / n_pos,
            weight_neg: 0.5 / n_neg,
            prior_logit: 0.0,
        };
        let (_, grad, _) = problem.evaluate(cal.scale(), cal.offset());
        assert!(grad[0].abs() <= GRADIENT_TOLERANCE && grad[1].abs() <= GRADIENT_TOLERANCE);
        // Any nearby (a, b) is no better.
        let best = problem.loss(cal.scale(), cal.offset());
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            assert!(problem.loss(cal.scale() + da, cal.offset() + db) >= best);
        }
    }

    #[test]
    fn stream_pairing() {
        let trials = vec![
            trial(ClassLabel::TarBf, 1.0, 5.0),
            trial(ClassLabel::NonBf, -1.0, 4.0),
            trial(ClassLabel::Spf, 0.8, -3.0),
        ];
        let (s, l) = ScoreStream::Asv.training_pairs(&trials, |t| Ok(t.scores.asv)).unwrap();
        assert_eq!(s, vec![1.0, -1.0]);
        assert_eq!(l, vec![true, false]);
        let (s, l) = ScoreStream::Cm.training_pairs(&trials, |t| Ok(t.scores.cm)).unwrap();
        assert_eq!(s, vec![5.0, 4.0, -3.0]);
        assert_eq!(l, vec![true, true, false]);
    }

    #[test]
    fn gaussian_ml_estimate() {
        let g = ClassGaussian::from_samples(&[[0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]]).unwrap();
        assert_eq!(g.mean(), [1.0, 1.0]);
        assert_eq!(g.cov().rows(), [[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn singular_covariance_is_regularized() {
        // ML covariance [[1, 1], [1, 1]] has eigenvalues 0 and 2.
        let g = ClassGaussian::from_samples(&[[0.0, 0.0], [2.0, 2.0]]).unwrap();
        let eps = 1e-9 * 2.0 / 2.0;
        let rows = g.cov().rows();
        assert_eq!(rows[0][1], 1.0);
        assert_abs_diff_eq!(rows[0][0], 1.0 + eps, epsilon = 1e-15);
        assert!(g.cov().min_eigenvalue() > 0.0);
        assert_abs_diff_eq!(g.cov().min_eigenvalue(), eps, epsilon = 1e-12);
    }

    #[test]
    fn identical_samples_cannot_be_regularized() {
        assert!(matches!(
            ClassGaussian::from_samples(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]),
            Err(Error::Fit(_))
        ));
    }

    #[test]
    fn backend_needs_three_trials_per_class() {
        let mut trials = vec![
            trial(ClassLabel::TarBf, 1.0, 1.0),
            trial(ClassLabel::TarBf, 2.0, 1.5),
            trial(ClassLabel::TarBf, 1.5, 3.0),
            trial(ClassLabel::NonBf, -1.0, 1.0),
            trial(ClassLabel::NonBf, -2.0, 1.5),
            trial(ClassLabel::NonBf, -1.5, 3.0),
            trial(ClassLabel::Spf, 1.0, -1.0),
            trial(ClassLabel::Spf, 2.0, -1.5),
        ];
        assert!(matches!(fit_gaussian_backend(&trials), Err(Error::Fit(_))));
        trials.push(trial(ClassLabel::Spf, 1.5, -3.0));
        assert!(fit_gaussian_backend(&trials).is_ok());
        trials.push(TrialScore::new("u", 0.0, 0.0, None).unwrap());
        assert!(matches!(fit_gaussian_backend(&trials), Err(Error::Fit(_))));
    }

    #[test]
    fn ml_fit_beats_perturbed_parameters() {
        let samples: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin() * 2.0 + 1.0, (t * 0.91).cos() + 0.3 * (t * 0.37).sin()]
            })
            .collect();
        let g = ClassGaussian::from_samples(&samples).unwrap();
        let ll = |g: &ClassGaussian| samples.iter().map(|&s| g.log_density(s)).sum::<f64>();
        let best = ll(&g);
        let rows = g.cov().rows();
        for d in [1e-3, -1e-3] {
            for k in 0..5 {
                let mut mean = g.mean();
                let mut cov = rows;
                match k {
                    0 => mean[0] += d,
                    1 => mean[1] += d,
                    2 => cov[0][0] += d,
                    3 => cov[1][1] += d,
                    _ => {
                        cov[0][1] += d;
                        cov[1][0] += d;
                    }
                }
                let p = ClassGaussian::new(mean, cov).unwrap();
                assert!(ll(&p) <= best, "perturbation {k} {d} improved likelihood");
            }
        }
    }

    fn unit_backend(spf: [f64; 2], nonbf: [f64; 2], tarbf: [f64; 2]) -> GaussianBackend {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        GaussianBackend::new(ClassTriple {
            spf: ClassGaussian::new(spf, id).unwrap(),
            nonbf: ClassGaussian::new(nonbf, id).unwrap(),
            tarbf: ClassGaussian::new(tarbf, id).unwrap(),
        })
    }

    #[test]
    fn identical_classes_give_zero_llrs() {
        let b = unit_backend([0.5, 0.5], [0.5, 0.5], [0.5, 0.5]);
        let l = backend_llrs(&b, &ScoreVector::new(3.0, -2.0).unwrap());
        assert_eq!((l.asv, l.cm), (0.0, 0.0));
    }

    #[test]
    fn llr_at_target_mean_is_half_squared_distance() {
        let tar = [2.0, 1.0];
        let non = [-1.0, 0.5];
        let b = unit_backend([0.0, -3.0], non, tar);
        let l = backend_llrs(&b, &ScoreVector::new(tar[0], tar[1]).unwrap());
        let d2 = (tar[0] - non[0]).powi(2) + (tar[1] - non[1]).powi(2);
        assert_abs_diff_eq!(l.asv, d2 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn llrs_match_density_quotient() {
        let b = GaussianBackend::new(ClassTriple {
            spf: ClassGaussian::new([1.0, -2.0], [[1.5, 0.3], [0.3, 0.8]]).unwrap(),
            nonbf: ClassGaussian::new([-1.0, 1.0], [[0.7, -0.2], [-0.2, 1.1]]).unwrap(),
            tarbf: ClassGaussian::new([1.2, 1.5], [[0.9, 0.4], [0.4, 1.3]]).unwrap(),
        });
        // Plain density formula with an explicit matrix inverse.
        let density = |g: &ClassGaussian, x: [f64; 2]| {
            let [[a, b], [_, d]] = g.cov().rows();
            let det = a * d - b * b;
            let inv = [[d / det, -b / det], [-b / det, a / det]];
            let dx = [x[0] - g.mean()[0], x[1] - g.mean()[1]];
            let q = dx[0] * (inv[0][0] * dx[0] + inv[0][1] * dx[1]) + dx[1] * (inv[1][0] * dx[0] + inv[1][1] * dx[1]);
            (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        };
        for i in 0..50 {
            let x = [((i * 7) % 11) as f64 / 3.0 - 1.5, ((i * 5) % 13) as f64 / 4.0 - 1.5];
            let l = backend_llrs(&b, &ScoreVector::new(x[0], x[1]).unwrap());
            let asv = (density(b.class(ClassLabel::TarBf), x) / density(b.class(ClassLabel::NonBf), x)).ln();
            let cm = (density(b.class(ClassLabel::TarBf), x) / density(b.class(ClassLabel::Spf), x)).ln();
            assert_abs_diff_eq!(l.asv, asv, epsilon = 1e-9);
            assert_abs_diff_eq!(l.cm, cm, epsilon = 1e-9);
        }
    }

    #[test]
    fn llrs_finite_far_from_means() {
        let b = unit_backend([0.0, -3.0], [-1.0, 0.5], [2.0, 1.0]);
        for x in [[1e3, 1e3], [-1e3, 1e3], [1e3, -1e3], [-1e3, -1e3]] {
            let l = backend_llrs(&b, &ScoreVector::new(x[0], x[1]).unwrap());
            assert!(l.asv.is_finite() && l.cm.is_finite());
        }
    }

    #[test]
    fn covariance_validation() {
        assert!(matches!(
            ClassGaussian::new([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ClassGaussian::new([0.0, 0.0], [[1.0, 0.1], [0.2, 1.0]]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            ClassGaussian::new([f64::NAN, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn model_documents() {
        let doc = ModelDocument::Affine(AffineCalibration::new(2.0, -0.5).unwrap());
        let json = serde_json::to_string(&doc).unwrap();
        assert_eq!(json, r#"{"affine":{"a":2.0000000000000000,"b":-0.50000000000000000}}"#);
        assert_eq!(ModelDocument::from_json(&json).unwrap(), doc);

        let backend = unit_backend([0.1, -3.0], [-1.0, 0.5], [2.0, 1.0]);
        let doc = ModelDocument::Backend(backend);
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.starts_with(r#"{"backend":{"spf":{"mean":[0.10000000000000001,-3.0000000000000000],"cov":[[1.0000000000000000,0.0000000000000000],"#));
        let spf = json.find("\"spf\"").unwrap();
        let non = json.find("\"nonbf\"").unwrap();
        let tar = json.find("\"tarbf\"").unwrap();
        assert!(spf < non && non < tar);
        assert_eq!(ModelDocument::from_json(&json).unwrap(), doc);

        assert!(ModelDocument::from_json(r#"{"affine":{"a":1.0}}"#).is_err());
        assert!(ModelDocument::from_json(
            r#"{"backend":{"spf":{"mean":[0,0],"cov":[[1,2],[2,1]]},"nonbf":{"mean":[0,0],"cov":[[1,0],[0,1]]},"tarbf":{"mean":[0,0],"cov":[[1,0],[0,1]]}}}"#
        )
        .is_err());
    }
}

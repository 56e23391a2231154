//! Score fusion rules and the grid search for the spoof prevalence prior.
//!
//! All logarithms are natural.

use crate::compositional::SQRT_6;
use crate::decision::{CostMatrix, Priors};
use crate::error::{Error, Result};
use crate::metrics::compute_eer;
use crate::types::{ClassLabel, LlrPair, ScoreVector};

/// `(s_asv + s_cm) / sqrt(6)`, on raw or affine-calibrated scores.
pub fn fuse_sum(s: &ScoreVector) -> f64 {
    (s.asv + s.cm) / SQRT_6
}

/// `(llr_asv + llr_cm) / sqrt(6)`, the second ILR coordinate of the
/// likelihood vector.
pub fn fuse_llr_sum(l: &LlrPair) -> f64 {
    (l.asv + l.cm) / SQRT_6
}

/// `-ln[(1 - rho) e^-llr_asv + rho e^-llr_cm]`.
///
/// `rho = 0` returns `llr_asv` and `rho = 1` returns `llr_cm` exactly.
pub fn fuse_nonlinear(l: &LlrPair, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(neg_log_mixture(l.asv, l.cm, rho))
}

pub(crate) fn check_rho(rho: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&rho) {
        Ok(rho)
    } else {
        Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")))
    }
}

/// Max-shifted evaluation of the non-linear fusion. Infinite LLRs are
/// allowed; `+inf` removes its term from the mixture.
pub(crate) fn neg_log_mixture(llr_asv: f64, llr_cm: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        return llr_asv;
    }
    if rho == 1.0 {
        return llr_cm;
    }
    let t1 = (1.0 - rho).ln() - llr_asv;
    let t2 = rho.ln() - llr_cm;
    let m = t1.max(t2);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if m == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    -(m + ((t1 - m).exp() + (t2 - m).exp()).ln())
}

fn sigmoid(x: f64) -> f64 {
    crate::calibration::sigmoid(x)
}

/// `sigma(s_cm) + s_asv`.
pub fn fuse_sigmoid_sum(s: &ScoreVector) -> f64 {
    sigmoid(s.cm) + s.asv
}

/// `sigma(s_asv) * sigma(s_cm)`.
pub fn fuse_sigmoid_product(s: &ScoreVector) -> f64 {
    sigmoid(s.asv) * sigmoid(s.cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    SumRaw,
    SumCalibrated,
    LlrSum,
    LlrNonlinear,
    SigmoidSum,
    SigmoidProduct,
}

impl FusionKind {
    /// Whether the rule consumes LLRs rather than scores.
    pub fn takes_llrs(self) -> bool {
        matches!(self, FusionKind::LlrSum | FusionKind::LlrNonlinear)
    }
}

/// A fusion rule with its spoof prevalence prior when it needs one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionRule {
    kind: FusionKind,
    rho: Option<f64>,
}

impl FusionRule {
    pub fn new(kind: FusionKind, rho: Option<f64>) -> Result<Self> {
        match (kind, rho) {
            (FusionKind::LlrNonlinear, Some(r)) => Ok(Self {
                kind,
                rho: Some(check_rho(r)?),
            }),
            (FusionKind::LlrNonlinear, None) => Err(Error::Config("non-linear fusion needs rho".into())),
            (_, Some(_)) => Err(Error::Config(format!("{kind:?} fusion takes no rho"))),
            (_, None) => Ok(Self { kind, rho: None }),
        }
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    pub fn rho(&self) -> Option<f64> {
        self.rho
    }

    /// Fuses the two per-trial inputs: scores for the score rules, LLRs for
    /// [`FusionKind::LlrSum`] and [`FusionKind::LlrNonlinear`].
    pub fn fuse(&self, asv: f64, cm: f64) -> f64 {
        let s = ScoreVector { asv, cm };
        match self.kind {
            FusionKind::SumRaw | FusionKind::SumCalibrated => fuse_sum(&s),
            FusionKind::LlrSum => fuse_llr_sum(&LlrPair { asv, cm }),
            FusionKind::LlrNonlinear => neg_log_mixture(asv, cm, self.rho.unwrap_or(0.0)),
            FusionKind::SigmoidSum => fuse_sigmoid_sum(&s),
            FusionKind::SigmoidProduct => fuse_sigmoid_product(&s),
        }
    }
}

/// What the grid search over rho minimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoObjective {
    /// SASV-EER of the fused scores.
    MinSasvEer,
    /// Prior-weighted empirical Bayes risk of the optimal accept rule with
    /// the candidate rho in place of the one implied by the priors.
    MinEmpiricalRisk { costs: CostMatrix, priors: Priors },
}

/// `{0, 0.01, ..., 1}`.
pub fn default_rho_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Objective value at every grid point, in grid order.
pub fn rho_objective_curve(
    dev: &[(LlrPair, ClassLabel)],
    objective: &RhoObjective,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut counts = [0usize; 3];
    for (_, label) in dev {
        counts[label.index()] += 1;
    }
    if let Some(missing) = ClassLabel::ALL.into_iter().find(|l| counts[l.index()] == 0) {
        return Err(Error::fit(format!("development set has no {missing} trials")));
    }
    if grid.is_empty() {
        return Err(Error::domain("rho grid is empty"));
    }
    for &rho in grid {
        check_rho(rho)?;
    }

    let is_target: Vec<bool> = dev.iter().map(|(_, l)| *l == ClassLabel::TarBf).collect();
    let mut fused = vec![0.0; dev.len()];
    grid.iter()
        .map(|&rho| {
            let value = match objective {
                RhoObjective::MinSasvEer => {
                    for (f, (l, _)) in fused.iter_mut().zip(dev) {
                        *f = neg_log_mixture(l.asv, l.cm, rho);
                    }
                    compute_eer(&fused, &is_target)
                        .map_err(|e| Error::fit(e.to_string()))?
                        .0
                }
                RhoObjective::MinEmpiricalRisk { costs, priors } => {
                    empirical_risk_at(dev, &counts, rho, costs, priors)?
                }
            };
            Ok((rho, value))
        })
        .collect()
}

fn empirical_risk_at(
    dev: &[(LlrPair, ClassLabel)],
    counts: &[usize; 3],
    rho: f64,
    costs: &CostMatrix,
    priors: &Priors,
) -> Result<f64> {
    let shift = costs.llr_shift()?;
    let threshold = priors.neg_log_beta();
    let mut errors = [0usize; 3];
    for (l, label) in dev {
        let accept = neg_log_mixture(l.asv - shift.asv, l.cm - shift.cm, rho) > threshold;
        if accept != (*label == ClassLabel::TarBf) {
            errors[label.index()] += 1;
        }
    }
    let rate = |label: ClassLabel| errors[label.index()] as f64 / counts[label.index()] as f64;
    Ok(costs.miss() * priors.tarbf() * rate(ClassLabel::TarBf)
        + costs.fa_non() * priors.nonbf() * rate(ClassLabel::NonBf)
        + costs.fa_spf() * priors.spf() * rate(ClassLabel::Spf))
}

/// Grid point with the smallest objective; ties go to the earliest point.
pub fn grid_search_rho_over(dev: &[(LlrPair, ClassLabel)], objective: &RhoObjective, grid: &[f64]) -> Result<f64> {
    let curve = rho_objective_curve(dev, objective, grid)?;
    let mut best = curve[0];
    for &(rho, value) in &curve[1..] {
        if value < best.1 {
            best = (rho, value);
        }
    }
    Ok(best.0)
}

/// Searches `rho` over `{0, 0.01, ..., 1}`, preferring the smallest `rho`
/// among equally good values.
pub fn grid_search_rho(dev: &[(LlrPair, ClassLabel)], objective: &RhoObjective) -> Result<f64> {
    grid_search_rho_over(dev, objective, &default_rho_grid())
}

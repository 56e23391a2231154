//! Bayes decision rules for the two-action, three-class SASV task and for
//! ternary classification.

use serde::{Deserialize, Serialize};

use crate::compositional::Composition3;
use crate::error::{Error, Result};
use crate::format::serialize_f64;
use crate::fusion::neg_log_mixture;
use crate::types::{ClassLabel, LlrPair};

/// Costs of a miss on `tar.bf` and of false accepts on `non.bf` and `spf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCosts")]
pub struct CostMatrix {
    #[serde(serialize_with = "serialize_f64")]
    miss: f64,
    #[serde(serialize_with = "serialize_f64")]
    fa_non: f64,
    #[serde(serialize_with = "serialize_f64")]
    fa_spf: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    miss: f64,
    fa_non: f64,
    fa_spf: f64,
}

impl TryFrom<RawCosts> for CostMatrix {
    type Error = Error;

    fn try_from(raw: RawCosts) -> Result<Self> {
        CostMatrix::new(raw.miss, raw.fa_non, raw.fa_spf)
    }
}

/// Additive LLR offsets `ln(C_fa / C_miss)` that fold the costs into the
/// LLRs. May be infinite when a false-accept cost is zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LlrShift {
    pub asv: f64,
    pub cm: f64,
}

impl CostMatrix {
    pub fn new(miss: f64, fa_non: f64, fa_spf: f64) -> Result<Self> {
        for (name, v) in [("miss", miss), ("fa_non", fa_non), ("fa_spf", fa_spf)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "cost {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if miss == 0.0 && fa_non == 0.0 && fa_spf == 0.0 {
            return Err(Error::domain("at least one cost must be positive"));
        }
        Ok(Self { miss, fa_non, fa_spf })
    }

    pub fn unit() -> Self {
        Self {
            miss: 1.0,
            fa_non: 1.0,
            fa_spf: 1.0,
        }
    }

    pub fn miss(&self) -> f64 {
        self.miss
    }

    pub fn fa_non(&self) -> f64 {
        self.fa_non
    }

    pub fn fa_spf(&self) -> f64 {
        self.fa_spf
    }

    /// Cost of taking `action` on a trial of class `label`.
    pub fn cost(&self, action: DecisionOutcome, label: ClassLabel) -> f64 {
        match (action, label) {
            (DecisionOutcome::Reject, ClassLabel::TarBf) => self.miss,
            (DecisionOutcome::Accept, ClassLabel::NonBf) => self.fa_non,
            (DecisionOutcome::Accept, ClassLabel::Spf) => self.fa_spf,
            _ => 0.0,
        }
    }

    pub(crate) fn llr_shift(&self) -> Result<LlrShift> {
        if self.miss == 0.0 {
            return Err(Error::domain(
                "the LLR form of the optimal rule needs a positive miss cost",
            ));
        }
        Ok(LlrShift {
            asv: (self.fa_non / self.miss).ln(),
            cm: (self.fa_spf / self.miss).ln(),
        })
    }
}

/// Class priors.
///
/// Unlike [`Composition3`], the two negative priors may be zero, which is
/// how the single-negative-class cases `rho = 0` and `rho = 1` are
/// expressed. The target prior must lie strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPriors")]
pub struct Priors {
    #[serde(serialize_with = "serialize_f64")]
    spf: f64,
    #[serde(serialize_with = "serialize_f64")]
    nonbf: f64,
    #[serde(serialize_with = "serialize_f64")]
    tarbf: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriors {
    spf: f64,
    nonbf: f64,
    tarbf: f64,
}

impl TryFrom<RawPriors> for Priors {
    type Error = Error;

    fn try_from(raw: RawPriors) -> Result<Self> {
        Priors::new(raw.spf, raw.nonbf, raw.tarbf)
    }
}

impl Priors {
    pub fn new(spf: f64, nonbf: f64, tarbf: f64) -> Result<Self> {
        for (name, v) in [("spf", spf), ("nonbf", nonbf), ("tarbf", tarbf)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "prior {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(tarbf > 0.0 && tarbf < 1.0) {
            return Err(Error::domain(format!("target prior must lie in (0, 1), got {tarbf}")));
        }
        let sum = spf + nonbf + tarbf;
        if (sum - 1.0).abs() > crate::compositional::SUM_TOLERANCE {
            return Err(Error::domain(format!("priors must sum to 1, got {sum}")));
        }
        Ok(Self { spf, nonbf, tarbf })
    }

    pub fn flat() -> Self {
        Self {
            spf: 1.0 / 3.0,
            nonbf: 1.0 / 3.0,
            tarbf: 1.0 / 3.0,
        }
    }

    pub fn spf(&self) -> f64 {
        self.spf
    }

    pub fn nonbf(&self) -> f64 {
        self.nonbf
    }

    pub fn tarbf(&self) -> f64 {
        self.tarbf
    }

    pub fn get(&self, label: ClassLabel) -> f64 {
        match label {
            ClassLabel::Spf => self.spf,
            ClassLabel::NonBf => self.nonbf,
            ClassLabel::TarBf => self.tarbf,
        }
    }

    /// Spoof prevalence among negative trials, `pi_spf / (pi_non + pi_spf)`.
    pub fn rho(&self) -> f64 {
        self.spf / (self.nonbf + self.spf)
    }

    /// Target prior odds against the pooled negatives.
    pub fn beta(&self) -> f64 {
        self.tarbf / (self.nonbf + self.spf)
    }

    /// `-ln beta`, the threshold the non-linear fusion score is compared
    /// against under unit costs.
    pub fn neg_log_beta(&self) -> f64 {
        (self.nonbf + self.spf).ln() - self.tarbf.ln()
    }

    /// Posterior from the priors and an LLR pair by Bayes' rule.
    pub fn posterior(&self, l: &LlrPair) -> Result<Composition3> {
        // Likelihoods relative to tar.bf are (e^-llr_cm, e^-llr_asv, 1).
        let logs = [self.spf.ln() - l.cm, self.nonbf.ln() - l.asv, self.tarbf.ln()];
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = logs.map(|x| (x - m).exp());
        let sum: f64 = w.iter().sum();
        Composition3::new(w[0] / sum, w[1] / sum, w[2] / sum)
    }
}

impl From<Composition3> for Priors {
    fn from(c: Composition3) -> Self {
        Self {
            spf: c.spf(),
            nonbf: c.nonbf(),
            tarbf: c.tarbf(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecisionOutcome {
    Accept,
    Reject,
}

impl DecisionOutcome {
    pub fn is_accept(self) -> bool {
        self == DecisionOutcome::Accept
    }

    fn from_accept(accept: bool) -> Self {
        if accept {
            DecisionOutcome::Accept
        } else {
            DecisionOutcome::Reject
        }
    }
}

/// Expected cost of `action` under `posterior`.
pub fn conditional_risk(action: DecisionOutcome, posterior: &Composition3, costs: &CostMatrix) -> f64 {
    match action {
        DecisionOutcome::Accept => costs.fa_non * posterior.nonbf() + costs.fa_spf * posterior.spf(),
        DecisionOutcome::Reject => costs.miss * posterior.tarbf(),
    }
}

/// Accepts iff rejecting is strictly riskier than accepting.
pub fn decide_optimal_posterior(posterior: &Composition3, costs: &CostMatrix) -> DecisionOutcome {
    let accept = conditional_risk(DecisionOutcome::Reject, posterior, costs)
        > conditional_risk(DecisionOutcome::Accept, posterior, costs);
    DecisionOutcome::from_accept(accept)
}

/// Minimum-risk accept rule in LLR form.
///
/// Accepts iff `beta > (C_fa_non/C_miss) e^-llr_asv (1 - rho) +
/// (C_fa_spf/C_miss) e^-llr_cm rho`, compared as the negative logarithm of
/// both sides: the cost ratios are moved into the LLRs and the result is the
/// non-linear fusion score tested against `-ln beta`. With unit costs the
/// fused value is exactly [`crate::fusion::fuse_nonlinear`].
pub fn decide_optimal_llr(l: &LlrPair, priors: &Priors, costs: &CostMatrix) -> Result<DecisionOutcome> {
    let shift = costs.llr_shift()?;
    let fused = neg_log_mixture(l.asv - shift.asv, l.cm - shift.cm, priors.rho());
    Ok(DecisionOutcome::from_accept(fused > priors.neg_log_beta()))
}

/// Threshold of the linear rule, `ln(pi_spf pi_non / pi_tar^2)`.
pub fn linear_threshold(priors: &Priors) -> f64 {
    priors.spf.ln() + priors.nonbf.ln() - 2.0 * priors.tarbf.ln()
}

/// Accepts iff `llr_asv + llr_cm > ln(pi_spf pi_non / pi_tar^2)`.
///
/// Every trial accepted by the optimal rule under unit costs is accepted
/// here, but not the other way round.
pub fn decide_linear(l: &LlrPair, priors: &Priors) -> DecisionOutcome {
    DecisionOutcome::from_accept(l.asv + l.cm > linear_threshold(priors))
}

fn check_matrix(m: &[[f64; 3]; 3], what: &str) -> Result<()> {
    for row in m {
        for &v in row {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!(
                    "{what} entries must be finite and non-negative, got {v}"
                )));
            }
        }
    }
    Ok(())
}

/// Ternary cost table `C[y][a]`: cost of assigning class `a` to a trial of
/// class `y`, indexed in class order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TernaryCostMatrix([[f64; 3]; 3]);

impl TernaryCostMatrix {
    pub fn new(costs: [[f64; 3]; 3]) -> Result<Self> {
        check_matrix(&costs, "ternary cost")?;
        Ok(Self(costs))
    }

    /// Unit cost for every wrong assignment.
    pub fn zero_one() -> Self {
        Self([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }
}

/// Ternary utility table `U[y][a]`; each correct assignment must pay more
/// than any wrong one for the same class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityMatrix([[f64; 3]; 3]);

impl UtilityMatrix {
    pub fn new(utility: [[f64; 3]; 3]) -> Result<Self> {
        check_matrix(&utility, "utility")?;
        for (i, row) in utility.iter().enumerate() {
            for (j, &u) in row.iter().enumerate() {
                if i != j && row[i] <= u {
                    return Err(Error::domain(format!(
                        "utility U[{i}][{i}] = {} must exceed U[{i}][{j}] = {u}",
                        row[i]
                    )));
                }
            }
        }
        Ok(Self(utility))
    }

    pub fn scalar_diagonal(u: f64) -> Result<Self> {
        Self::new([[u, 0.0, 0.0], [0.0, u, 0.0], [0.0, 0.0, u]])
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }
}

fn expected_per_action(m: &[[f64; 3]; 3], posterior: &Composition3) -> [f64; 3] {
    let p = [posterior.spf(), posterior.nonbf(), posterior.tarbf()];
    std::array::from_fn(|a| (0..3).map(|y| m[y][a] * p[y]).sum())
}

/// Class with the smallest expected cost; ties go to the lowest index.
pub fn decide_ternary_cost(posterior: &Composition3, costs: &TernaryCostMatrix) -> ClassLabel {
    let risk = expected_per_action(&costs.0, posterior);
    let mut best = 0;
    for a in 1..3 {
        if risk[a] < risk[best] {
            best = a;
        }
    }
    ClassLabel::ALL[best]
}

/// Class with the largest expected utility; ties go to the lowest index.
pub fn decide_utility_argmax(posterior: &Composition3, utility: &UtilityMatrix) -> ClassLabel {
    let gain = expected_per_action(&utility.0, posterior);
    let mut best = 0;
    for a in 1..3 {
        if gain[a] > gain[best] {
            best = a;
        }
    }
    ClassLabel::ALL[best]
}

/// Cost and prior configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionConfig {
    pub costs: CostMatrix,
    pub priors: Priors,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        Self {
            costs: CostMatrix::unit(),
            priors: Priors::flat(),
        }
    }
}

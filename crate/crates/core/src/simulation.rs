//! Synthetic score worlds: three 2-D Gaussian classes over `[s_asv, s_cm]`
//! with known priors, their exact LLRs, empirical policy risk and decision
//! boundary grids.
//!
//! # Generator
//!
//! Sampling is driven by xoshiro256++ seeded through SplitMix64 (the
//! reference seeding of that generator family). A uniform draw is
//! `(next_u64 >> 11) * 2^-53`, in `[0, 1)`. Each trial consumes, in order:
//!
//! 1. one uniform `u` for the class: `spf` if `u < pi_spf`, `non.bf` if
//!    `u < pi_spf + pi_non`, `tar.bf` otherwise;
//! 2. two uniforms `u1, u2` for a Box-Muller pair
//!    `z1 = r cos(2 pi u2)`, `z2 = r sin(2 pi u2)` with
//!    `r = sqrt(-2 ln(1 - u1))`;
//!
//! and the score vector is `mu + L z` with `L` the lower Cholesky factor of
//! the class covariance. Trial `i` (from zero) is named `trial0000000`
//! with `i` zero-padded to seven digits.

use std::io::Write;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::calibration::ClassGaussian;
use crate::compositional::Composition3;
use crate::decision::{decide_linear, decide_optimal_llr, CostMatrix, DecisionOutcome, Priors};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::fusion::fuse_llr_sum;
use crate::types::{ClassLabel, ClassTriple, LlrPair, ScoreVector, TrialScore};

/// A simulated score world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct SimulationSpec {
    pub classes: ClassTriple<ClassGaussian>,
    pub priors: Composition3,
    pub n_trials: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    classes: ClassTriple<ClassGaussian>,
    priors: Composition3,
    n_trials: usize,
    seed: u64,
}

impl TryFrom<RawSpec> for SimulationSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        SimulationSpec::new(raw.classes, raw.priors, raw.n_trials, raw.seed)
    }
}

impl SimulationSpec {
    pub fn new(classes: ClassTriple<ClassGaussian>, priors: Composition3, n_trials: usize, seed: u64) -> Result<Self> {
        if n_trials == 0 {
            return Err(Error::domain("a simulation needs at least one trial"));
        }
        Ok(Self {
            classes,
            priors,
            n_trials,
            seed,
        })
    }

    /// Three well separated unit-variance classes under a flat prior:
    /// `spf` at `(2, -2)`, `non.bf` at `(-2, 2)`, `tar.bf` at `(2, 2)`.
    pub fn default_world(n_trials: usize, seed: u64) -> Self {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let g = |m| ClassGaussian::new(m, id).expect("unit covariance is valid");
        Self {
            classes: ClassTriple {
                spf: g([2.0, -2.0]),
                nonbf: g([-2.0, 2.0]),
                tarbf: g([2.0, 2.0]),
            },
            priors: Composition3::uniform(),
            n_trials: n_trials.max(1),
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid simulation spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("specs always serialize")
    }
}

/// The documented simulation generator.
pub struct SimRng(Xoshiro256PlusPlus);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals by Box-Muller.
    pub fn normal_pair(&mut self) -> [f64; 2] {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        [r * theta.cos(), r * theta.sin()]
    }
}

/// Lower Cholesky factor `[[l11, 0], [l21, l22]]`.
fn cholesky(g: &ClassGaussian) -> (f64, f64, f64) {
    let [[xx, xy], [_, yy]] = g.cov().rows();
    let l11 = xx.sqrt();
    let l21 = xy / l11;
    let l22 = (yy - l21 * l21).sqrt();
    (l11, l21, l22)
}

/// Draws `spec.n_trials` labeled trials.
pub fn sample_trials(spec: &SimulationSpec) -> Result<Vec<TrialScore>> {
    if spec.n_trials == 0 {
        return Err(Error::domain("a simulation needs at least one trial"));
    }
    let factors = spec.classes.map(cholesky);
    let mut rng = SimRng::new(spec.seed);
    let p_spf = spec.priors.spf();
    let p_neg = spec.priors.spf() + spec.priors.nonbf();
    let mut trials = Vec::with_capacity(spec.n_trials);
    for i in 0..spec.n_trials {
        let u = rng.uniform();
        let label = if u < p_spf {
            ClassLabel::Spf
        } else if u < p_neg {
            ClassLabel::NonBf
        } else {
            ClassLabel::TarBf
        };
        let [z1, z2] = rng.normal_pair();
        let mean = spec.classes.get(label).mean();
        let (l11, l21, l22) = *factors.get(label);
        let asv = mean[0] + l11 * z1;
        let cm = mean[1] + l21 * z1 + l22 * z2;
        trials.push(TrialScore {
            trial_id: format!("trial{i:07}"),
            scores: ScoreVector::new(asv, cm)?,
            label: Some(label),
        });
    }
    Ok(trials)
}

fn log_density_cholesky(g: &ClassGaussian, x: [f64; 2]) -> f64 {
    let (l11, l21, l22) = cholesky(g);
    let m = g.mean();
    // Solve L y = x - mu.
    let y1 = (x[0] - m[0]) / l11;
    let y2 = (x[1] - m[1] - l21 * y1) / l22;
    -(2.0 * std::f64::consts::PI).ln() - (l11 * l22).ln() - 0.5 * (y1 * y1 + y2 * y2)
}

/// Exact LLRs of the world at `s`.
pub fn true_llrs(spec: &SimulationSpec, s: &ScoreVector) -> LlrPair {
    let x = s.as_array();
    let tar = log_density_cholesky(&spec.classes.tarbf, x);
    LlrPair {
        asv: tar - log_density_cholesky(&spec.classes.nonbf, x),
        cm: tar - log_density_cholesky(&spec.classes.spf, x),
    }
}

/// An accept/reject policy driven by an LLR pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Minimum-risk rule under the true priors.
    Optimal,
    /// `llr_asv + llr_cm` against the prior-dependent constant.
    Linear,
    /// Minimum-risk rule computed with the given (wrong) priors.
    Mismatched(Priors),
    /// Accept iff `fuse_llr_sum > threshold`.
    LlrSumThreshold(f64),
}

impl Policy {
    pub fn decide(&self, l: &LlrPair, priors: &Priors, costs: &CostMatrix) -> Result<DecisionOutcome> {
        Ok(match self {
            Policy::Optimal => decide_optimal_llr(l, priors, costs)?,
            Policy::Linear => decide_linear(l, priors),
            Policy::Mismatched(assumed) => decide_optimal_llr(l, assumed, costs)?,
            Policy::LlrSumThreshold(t) => {
                if fuse_llr_sum(l) > *t {
                    DecisionOutcome::Accept
                } else {
                    DecisionOutcome::Reject
                }
            }
        })
    }
}

/// Outcome of running a policy over labeled trials.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    /// Average cost per trial.
    pub risk: f64,
    /// Fraction of `tar.bf` trials rejected.
    pub miss_rate: f64,
    /// Fraction of `non.bf` and `spf` trials accepted.
    pub false_accept_rate: f64,
    /// Cost of each trial, in input order.
    pub costs: Vec<f64>,
}

/// Average decision cost of `policy` over `trials`, each given with its LLRs.
pub fn empirical_risk(
    trials: &[(LlrPair, ClassLabel)],
    policy: &Policy,
    priors: &Priors,
    costs: &CostMatrix,
) -> Result<RiskReport> {
    if trials.is_empty() {
        return Err(Error::domain("empirical risk needs at least one trial"));
    }
    let mut per_trial = Vec::with_capacity(trials.len());
    let (mut n_tar, mut n_neg, mut misses, mut false_accepts) = (0usize, 0usize, 0usize, 0usize);
    for (l, label) in trials {
        let action = policy.decide(l, priors, costs)?;
        per_trial.push(costs.cost(action, *label));
        if *label == ClassLabel::TarBf {
            n_tar += 1;
            misses += (!action.is_accept()) as usize;
        } else {
            n_neg += 1;
            false_accepts += action.is_accept() as usize;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(RiskReport {
        risk: per_trial.iter().sum::<f64>() / per_trial.len() as f64,
        miss_rate: ratio(misses, n_tar),
        false_accept_rate: ratio(false_accepts, n_neg),
        costs: per_trial,
    })
}

/// Mean and standard error of the per-trial cost difference `a - b` of two
/// policies run on the same trials.
pub fn paired_difference(a: &RiskReport, b: &RiskReport) -> Result<(f64, f64)> {
    if a.costs.len() != b.costs.len() || a.costs.len() < 2 {
        return Err(Error::domain(
            "paired difference needs two equally long runs of at least two trials",
        ));
    }
    let n = a.costs.len() as f64;
    let diffs = a.costs.iter().zip(&b.costs).map(|(x, y)| x - y);
    let mean = diffs.clone().sum::<f64>() / n;
    let var = diffs.map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Rectangular LLR grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub asv_min: f64,
    pub asv_max: f64,
    pub cm_min: f64,
    pub cm_max: f64,
    pub step: f64,
}

impl GridParams {
    pub fn new(asv_min: f64, asv_max: f64, cm_min: f64, cm_max: f64, step: f64) -> Result<Self> {
        for v in [asv_min, asv_max, cm_min, cm_max, step] {
            crate::error::ensure_finite(v, "grid parameter")?;
        }
        if step <= 0.0 {
            return Err(Error::domain(format!("grid step must be positive, got {step}")));
        }
        if asv_max < asv_min || cm_max < cm_min {
            return Err(Error::domain("grid maximum lies below its minimum"));
        }
        Ok(Self {
            asv_min,
            asv_max,
            cm_min,
            cm_max,
            step,
        })
    }

    fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        let n = ((max - min) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| min + i as f64 * step).collect()
    }

    pub fn asv_axis(&self) -> Vec<f64> {
        Self::axis(self.asv_min, self.asv_max, self.step)
    }

    pub fn cm_axis(&self) -> Vec<f64> {
        Self::axis(self.cm_min, self.cm_max, self.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCell {
    pub llr_asv: f64,
    pub llr_cm: f64,
    pub linear: bool,
    pub optimal: bool,
    pub mismatched: Option<bool>,
}

/// Accept decisions of the linear and optimal rules on a grid of LLR pairs,
/// ASV-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub params: GridParams,
    pub cells: Vec<BoundaryCell>,
    pub has_mismatched: bool,
}

/// Evaluates both rules (and optionally the optimal rule under `mismatched`
/// priors) on every grid point.
pub fn export_boundary_grid(
    priors: &Priors,
    costs: &CostMatrix,
    params: &GridParams,
    mismatched: Option<&Priors>,
) -> Result<BoundaryGrid> {
    let mut cells = Vec::new();
    let cm_axis = params.cm_axis();
    for llr_asv in params.asv_axis() {
        for &llr_cm in &cm_axis {
            let l = LlrPair::new(llr_asv, llr_cm)?;
            cells.push(BoundaryCell {
                llr_asv,
                llr_cm,
                linear: decide_linear(&l, priors).is_accept(),
                optimal: decide_optimal_llr(&l, priors, costs)?.is_accept(),
                mismatched: mismatched
                    .map(|m| decide_optimal_llr(&l, m, costs).map(DecisionOutcome::is_accept))
                    .transpose()?,
            });
        }
    }
    Ok(BoundaryGrid {
        params: *params,
        cells,
        has_mismatched: mismatched.is_some(),
    })
}

impl BoundaryGrid {
    /// CSV with header `llr_asv,llr_cm,linear,optimal` (plus `,mismatched`
    /// when present); decisions are `1` for accept and `0` for reject.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["llr_asv", "llr_cm", "linear", "optimal"];
        if self.has_mismatched {
            header.push("mismatched");
        }
        w.write_record(&header).map_err(csv_error)?;
        let flag = |b: bool| if b { "1" } else { "0" };
        for c in &self.cells {
            let mut row = vec![
                fmt_f64(c.llr_asv),
                fmt_f64(c.llr_cm),
                flag(c.linear).into(),
                flag(c.optimal).into(),
            ];
            if let Some(m) = c.mismatched {
                row.push(flag(m).into());
            }
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        }
    } else {
        Error::Format(e.to_string())
    }
}

//! The eight evaluated systems: which calibration each one uses and how its
//! fusion inputs are formed.
//!
//! | id     | fusion inputs                               | rule             |
//! |--------|---------------------------------------------|------------------|
//! | `b1`   | raw scores                                  | sum              |
//! | `b1c`  | affine-calibrated scores                    | sum              |
//! | `l2`   | back-end LLRs                               | LLR sum          |
//! | `l2c`  | affine-calibrated back-end LLRs             | LLR sum          |
//! | `l3`   | back-end LLRs                               | non-linear       |
//! | `l3c`  | affine-calibrated back-end LLRs             | non-linear       |
//! | `b1v2` | raw scores                                  | `sigma(cm) + asv`|
//! | `post` | raw scores                                  | `sigma(asv) sigma(cm)` |

use std::fmt;
use std::str::FromStr;

use crate::calibration::{
    fit_affine_logistic, fit_gaussian_backend, fit_stream_calibration, AffineCalibration, GaussianBackend, ScoreStream,
};
use crate::error::{Error, Result};
use crate::fusion::{grid_search_rho, FusionKind, FusionRule, RhoObjective};
use crate::types::{LlrPair, ScoreVector, TrialScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SystemId {
    B1,
    B1c,
    L2,
    L2c,
    L3,
    L3c,
    B1v2,
    Post,
}

impl SystemId {
    pub const ALL: [SystemId; 8] = [
        SystemId::B1,
        SystemId::B1c,
        SystemId::L2,
        SystemId::L2c,
        SystemId::L3,
        SystemId::L3c,
        SystemId::B1v2,
        SystemId::Post,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemId::B1 => "b1",
            SystemId::B1c => "b1c",
            SystemId::L2 => "l2",
            SystemId::L2c => "l2c",
            SystemId::L3 => "l3",
            SystemId::L3c => "l3c",
            SystemId::B1v2 => "b1v2",
            SystemId::Post => "post",
        }
    }

    pub fn fusion_kind(self) -> FusionKind {
        match self {
            SystemId::B1 => FusionKind::SumRaw,
            SystemId::B1c => FusionKind::SumCalibrated,
            SystemId::L2 | SystemId::L2c => FusionKind::LlrSum,
            SystemId::L3 | SystemId::L3c => FusionKind::LlrNonlinear,
            SystemId::B1v2 => FusionKind::SigmoidSum,
            SystemId::Post => FusionKind::SigmoidProduct,
        }
    }

    /// Whether the system fuses back-end LLRs.
    pub fn uses_backend(self) -> bool {
        self.fusion_kind().takes_llrs()
    }

    pub fn needs_rho(self) -> bool {
        self.fusion_kind() == FusionKind::LlrNonlinear
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown system {s:?}")))
    }
}

/// Fitted models a system may draw on. Which ones must be present depends
/// on the system.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SystemModels {
    pub asv_affine: Option<AffineCalibration>,
    pub cm_affine: Option<AffineCalibration>,
    pub backend: Option<GaussianBackend>,
    pub llr_asv_affine: Option<AffineCalibration>,
    pub llr_cm_affine: Option<AffineCalibration>,
}

/// A system with all the models and parameters it needs to fuse a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittedSystem {
    id: SystemId,
    rule: FusionRule,
    asv_affine: AffineCalibration,
    cm_affine: AffineCalibration,
    backend: Option<GaussianBackend>,
}

fn require<T: Copy>(model: Option<T>, id: SystemId, what: &str) -> Result<T> {
    model.ok_or_else(|| Error::Config(format!("system {id} needs {what}")))
}

impl FittedSystem {
    /// Assembles a system from already fitted models. `rho` is required for
    /// `l3`/`l3c` and ignored otherwise.
    pub fn new(id: SystemId, models: SystemModels, rho: Option<f64>) -> Result<Self> {
        let rule = FusionRule::new(id.fusion_kind(), if id.needs_rho() { rho } else { None })?;
        let identity = AffineCalibration::identity();
        let (asv_affine, cm_affine, backend) = match id {
            SystemId::B1 | SystemId::B1v2 | SystemId::Post => (identity, identity, None),
            SystemId::B1c => (
                require(models.asv_affine, id, "an ASV score calibration")?,
                require(models.cm_affine, id, "a CM score calibration")?,
                None,
            ),
            SystemId::L2 | SystemId::L3 => (
                identity,
                identity,
                Some(require(models.backend, id, "a Gaussian back-end")?),
            ),
            SystemId::L2c | SystemId::L3c => (
                require(models.llr_asv_affine, id, "an ASV LLR calibration")?,
                require(models.llr_cm_affine, id, "a CM LLR calibration")?,
                Some(require(models.backend, id, "a Gaussian back-end")?),
            ),
        };
        Ok(Self {
            id,
            rule,
            asv_affine,
            cm_affine,
            backend,
        })
    }

    pub fn id(&self) -> SystemId {
        self.id
    }

    pub fn rule(&self) -> &FusionRule {
        &self.rule
    }

    pub fn backend(&self) -> Option<&GaussianBackend> {
        self.backend.as_ref()
    }

    /// The two values the fusion rule combines for this trial.
    pub fn fusion_inputs(&self, s: &ScoreVector) -> Result<[f64; 2]> {
        let [a, c] = match &self.backend {
            Some(backend) => {
                let l = backend.llrs(s);
                [l.asv, l.cm]
            }
            None => [s.asv, s.cm],
        };
        Ok([self.asv_affine.apply(a)?, self.cm_affine.apply(c)?])
    }

    /// Per-stream values the t-EER of this system is measured on: raw scores
    /// for the score rules, uncalibrated back-end LLRs for the LLR rules.
    pub fn t_eer_inputs(&self, s: &ScoreVector) -> Result<[f64; 2]> {
        Ok(match &self.backend {
            Some(backend) => {
                let l = backend.llrs(s);
                [l.asv, l.cm]
            }
            None => [s.asv, s.cm],
        })
    }

    /// The LLR pair this system fuses, for the LLR-fusing systems.
    pub fn llrs(&self, s: &ScoreVector) -> Result<Option<LlrPair>> {
        if !self.id.uses_backend() {
            return Ok(None);
        }
        let [a, c] = self.fusion_inputs(s)?;
        Ok(Some(LlrPair::new(a, c)?))
    }

    pub fn fuse(&self, s: &ScoreVector) -> Result<f64> {
        let [a, c] = self.fusion_inputs(s)?;
        Ok(self.rule.fuse(a, c))
    }
}

/// How `l3`/`l3c` obtain their spoof prevalence prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSource {
    Fixed(f64),
    Grid(RhoObjective),
}

/// Fits every model `id` needs.
///
/// `train` feeds the Gaussian back-end and the score calibrations; `dev`
/// feeds the LLR calibrations and the rho grid search. Passing the same
/// trials for both is allowed.
pub fn fit_system(
    id: SystemId,
    train: &[TrialScore],
    dev: &[TrialScore],
    rho: Option<RhoSource>,
) -> Result<FittedSystem> {
    let mut models = SystemModels::default();
    if id == SystemId::B1c {
        models.asv_affine = Some(fit_stream_calibration(train, ScoreStream::Asv)?);
        models.cm_affine = Some(fit_stream_calibration(train, ScoreStream::Cm)?);
    }
    if id.uses_backend() {
        let backend = fit_gaussian_backend(train)?;
        models.backend = Some(backend);
        if matches!(id, SystemId::L2c | SystemId::L3c) {
            let (models_asv, models_cm) = fit_llr_calibrations(&backend, dev)?;
            models.llr_asv_affine = Some(models_asv);
            models.llr_cm_affine = Some(models_cm);
        }
    }
    let rho = if id.needs_rho() {
        Some(match rho {
            Some(RhoSource::Fixed(r)) => r,
            Some(RhoSource::Grid(objective)) => {
                // The search runs on the LLRs the system fuses.
                let provisional = FittedSystem::new(id, models, Some(0.0))?;
                let pairs = dev
                    .iter()
                    .map(|t| {
                        let label = t
                            .label
                            .ok_or_else(|| Error::fit(format!("trial {} has no label", t.trial_id)))?;
                        let l = provisional.llrs(&t.scores)?.expect("l3 systems fuse LLRs");
                        Ok((l, label))
                    })
                    .collect::<Result<Vec<_>>>()?;
                grid_search_rho(&pairs, &objective)?
            }
            None => return Err(Error::Config(format!("system {id} needs a rho source"))),
        })
    } else {
        None
    };
    FittedSystem::new(id, models, rho)
}

/// Affine calibrations of the two back-end LLR streams, fit independently.
pub fn fit_llr_calibrations(
    backend: &GaussianBackend,
    trials: &[TrialScore],
) -> Result<(AffineCalibration, AffineCalibration)> {
    let asv = fit_llr_stream(backend, trials, ScoreStream::Asv)?;
    let cm = fit_llr_stream(backend, trials, ScoreStream::Cm)?;
    Ok((asv, cm))
}

pub fn fit_llr_stream(
    backend: &GaussianBackend,
    trials: &[TrialScore],
    stream: ScoreStream,
) -> Result<AffineCalibration> {
    let (scores, labels) = stream.training_pairs(trials, |t| {
        let l = backend.llrs(&t.scores);
        Ok(match stream {
            ScoreStream::Asv => l.asv,
            ScoreStream::Cm => l.cm,
        })
    })?;
    fit_affine_logistic(&scores, &labels)
}

//! Run configuration: which system to assemble and where its models live.

use std::fs;
use std::path::{Path, PathBuf};

use sasv_fusion::calibration::{AffineCalibration, GaussianBackend, ModelDocument};
use sasv_fusion::decision::{CostMatrix, Priors};
use sasv_fusion::fusion::{grid_search_rho, RhoObjective};
use sasv_fusion::system::{FittedSystem, SystemId, SystemModels};
use sasv_fusion::{Error, TrialScore};
use serde::Deserialize;

use crate::{read_trial_file, Failure, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridObjective {
    MinSasvEer,
    MinRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RhoSpec {
    Fixed(f64),
    Grid(GridObjective),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub asv_affine: Option<PathBuf>,
    pub cm_affine: Option<PathBuf>,
    pub backend: Option<PathBuf>,
    pub llr_asv_affine: Option<PathBuf>,
    pub llr_cm_affine: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: String,
    #[serde(default = "Priors::flat")]
    priors: Priors,
    #[serde(default = "CostMatrix::unit")]
    costs: CostMatrix,
    #[serde(default)]
    rho: Option<RhoSpec>,
    #[serde(default)]
    models: ModelPaths,
    #[serde(default)]
    dev: Option<PathBuf>,
}

/// A parsed configuration with paths resolved against the config file's
/// directory.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub system: SystemId,
    pub priors: Priors,
    pub costs: CostMatrix,
    pub rho: Option<RhoSpec>,
    pub models: ModelPaths,
    pub dev: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Outcome<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::input(format!("invalid config {}: {e}", path.display())))?;
        let system: SystemId = raw.system.parse().map_err(Failure::input)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: Option<PathBuf>| p.map(|p| base.join(p));
        let m = raw.models;
        Ok(Self {
            system,
            priors: raw.priors,
            costs: raw.costs,
            rho: raw.rho,
            models: ModelPaths {
                asv_affine: resolve(m.asv_affine),
                cm_affine: resolve(m.cm_affine),
                backend: resolve(m.backend),
                llr_asv_affine: resolve(m.llr_asv_affine),
                llr_cm_affine: resolve(m.llr_cm_affine),
            },
            dev: resolve(raw.dev),
        })
    }

    fn objective(&self, grid: GridObjective) -> RhoObjective {
        match grid {
            GridObjective::MinSasvEer => RhoObjective::MinSasvEer,
            GridObjective::MinRisk => RhoObjective::MinEmpiricalRisk {
                costs: self.costs,
                priors: self.priors,
            },
        }
    }

    /// Loads every model the configuration names.
    pub fn load_models(&self) -> Outcome<SystemModels> {
        let affine = |p: &Option<PathBuf>| p.as_deref().map(load_affine).transpose();
        Ok(SystemModels {
            asv_affine: affine(&self.models.asv_affine)?,
            cm_affine: affine(&self.models.cm_affine)?,
            backend: self.models.backend.as_deref().map(load_backend).transpose()?,
            llr_asv_affine: affine(&self.models.llr_asv_affine)?,
            llr_cm_affine: affine(&self.models.llr_cm_affine)?,
        })
    }

    /// Builds the configured system. Missing models and a missing rho are
    /// reported with `mismatch_code`; a rho grid search runs on `dev`.
    pub fn system(&self, mismatch_code: u8) -> Outcome<FittedSystem> {
        let models = self.load_models()?;
        let mismatch = |e: Error| Failure::new(mismatch_code, e.to_string());
        let rho = match (self.system.needs_rho(), self.rho) {
            (false, _) => None,
            (true, None) => {
                return Err(Failure::new(
                    mismatch_code,
                    format!("system {} needs \"rho\"", self.system),
                ))
            }
            (true, Some(RhoSpec::Fixed(r))) => Some(r),
            (true, Some(RhoSpec::Grid(grid))) => {
                let provisional = FittedSystem::new(self.system, models, Some(0.0)).map_err(mismatch)?;
                let dev_path = self
                    .dev
                    .as_deref()
                    .ok_or_else(|| Failure::input("a rho grid search needs a \"dev\" trial file"))?;
                Some(search_rho(
                    &provisional,
                    &read_trial_file(dev_path)?,
                    &self.objective(grid),
                )?)
            }
        };
        FittedSystem::new(self.system, models, rho).map_err(mismatch)
    }
}

/// Grid search over rho on the LLRs `system` fuses.
pub fn search_rho(system: &FittedSystem, dev: &[TrialScore], objective: &RhoObjective) -> Outcome<f64> {
    let pairs = llr_pairs(system, dev)?;
    grid_search_rho(&pairs, objective).map_err(Failure::from)
}

pub fn llr_pairs(
    system: &FittedSystem,
    trials: &[TrialScore],
) -> Outcome<Vec<(sasv_fusion::LlrPair, sasv_fusion::ClassLabel)>> {
    trials
        .iter()
        .map(|t| {
            let label = t
                .label
                .ok_or_else(|| Failure::fit(format!("trial {} has no label", t.trial_id)))?;
            let l = system
                .llrs(&t.scores)?
                .ok_or_else(|| Failure::new(4, format!("system {} does not fuse LLRs", system.id())))?;
            Ok((l, label))
        })
        .collect()
}

fn read_model(path: &Path) -> Outcome<ModelDocument> {
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    ModelDocument::from_json(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_affine(path: &Path) -> Outcome<AffineCalibration> {
    read_model(path)?
        .into_affine()
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_backend(path: &Path) -> Outcome<GaussianBackend> {
    read_model(path)?
        .into_backend()
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

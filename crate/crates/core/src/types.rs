use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Ground-truth class of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "spf")]
    Spf,
    #[serde(rename = "non.bf")]
    NonBf,
    #[serde(rename = "tar.bf")]
    TarBf,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Spf, ClassLabel::NonBf, ClassLabel::TarBf];

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Spf => 0,
            ClassLabel::NonBf => 1,
            ClassLabel::TarBf => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Spf => "spf",
            ClassLabel::NonBf => "non.bf",
            ClassLabel::TarBf => "tar.bf",
        }
    }

    pub fn is_bona_fide(self) -> bool {
        !matches!(self, ClassLabel::Spf)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spf" => Ok(ClassLabel::Spf),
            "non.bf" => Ok(ClassLabel::NonBf),
            "tar.bf" => Ok(ClassLabel::TarBf),
            other => Err(Error::Format(format!("unknown class label {other:?}"))),
        }
    }
}

/// One value per class, serialized with the keys `spf`, `nonbf`, `tarbf`
/// in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTriple<T> {
    pub spf: T,
    pub nonbf: T,
    pub tarbf: T,
}

impl<T> ClassTriple<T> {
    pub fn get(&self, label: ClassLabel) -> &T {
        match label {
            ClassLabel::Spf => &self.spf,
            ClassLabel::NonBf => &self.nonbf,
            ClassLabel::TarBf => &self.tarbf,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ClassTriple<U> {
        ClassTriple {
            spf: f(&self.spf),
            nonbf: f(&self.nonbf),
            tarbf: f(&self.tarbf),
        }
    }

    pub fn try_map<U>(&self, mut f: impl FnMut(ClassLabel, &T) -> Result<U>) -> Result<ClassTriple<U>> {
        Ok(ClassTriple {
            spf: f(ClassLabel::Spf, &self.spf)?,
            nonbf: f(ClassLabel::NonBf, &self.nonbf)?,
            tarbf: f(ClassLabel::TarBf, &self.tarbf)?,
        })
    }
}

/// Raw (or calibrated) ASV and CM scores of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreVector {
    pub asv: f64,
    pub cm: f64,
}

impl ScoreVector {
    pub fn new(asv: f64, cm: f64) -> Result<Self> {
        Ok(Self {
            asv: ensure_finite(asv, "ASV score")?,
            cm: ensure_finite(cm, "CM score")?,
        })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.asv, self.cm]
    }
}

/// The two natural-log LLRs fused by the LLR-based rules.
///
/// `asv` is LLR(tar.bf vs non.bf), `cm` is LLR(tar.bf vs spf).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrPair {
    pub asv: f64,
    pub cm: f64,
}

impl LlrPair {
    pub fn new(asv: f64, cm: f64) -> Result<Self> {
        Ok(Self {
            asv: ensure_finite(asv, "ASV LLR")?,
            cm: ensure_finite(cm, "CM LLR")?,
        })
    }
}

/// One evaluation trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub trial_id: String,
    pub scores: ScoreVector,
    pub label: Option<ClassLabel>,
}

impl TrialScore {
    pub fn new(trial_id: impl Into<String>, asv: f64, cm: f64, label: Option<ClassLabel>) -> Result<Self> {
        Ok(Self {
            trial_id: trial_id.into(),
            scores: ScoreVector::new(asv, cm)?,
            label,
        })
    }

    pub fn labeled(trial_id: impl Into<String>, asv: f64, cm: f64, label: ClassLabel) -> Result<Self> {
        Self::new(trial_id, asv, cm, Some(label))
    }

    /// Label of a trial that must be labeled for the computation at hand.
    pub fn require_label(&self) -> Result<ClassLabel> {
        self.label
            .ok_or_else(|| Error::metric(format!("trial {} has no label", self.trial_id)))
    }
}

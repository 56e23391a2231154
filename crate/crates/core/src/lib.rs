//! Score calibration, fusion and Bayes decision policies for spoofing-aware
//! speaker verification (SASV).
//!
//! An SASV trial belongs to one of three classes: bona fide target
//! (`tar.bf`), bona fide non-target (`non.bf`) or spoofed (`spf`). The system
//! must accept only `tar.bf`. The crate turns ASV and CM scores into
//! log-likelihood ratios, fuses them, applies minimum-risk decision rules and
//! evaluates the result with SASV-EER, Cllr and tandem EER.
//!
//! Class order is fixed as `(spf, non.bf, tar.bf)` everywhere.

pub mod calibration;
pub mod compositional;
pub mod decision;
mod error;
pub mod format;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod simulation;
pub mod system;
mod types;

pub use error::{Error, Result};
pub use types::{ClassLabel, ClassTriple, LlrPair, ScoreVector, TrialScore};

//! Compositional primitives on the 3-part simplex.
//!
//! Posterior probabilities, priors and likelihood vectors over
//! `(spf, non.bf, tar.bf)` are compositions: only their ratios carry
//! information. The isometric log-ratio (ILR) transform maps them to the
//! plane using the bifurcating tree
//!
//! ```text
//!            r2
//!          /    \
//!        r1      tar.bf
//!       /  \
//!    spf    non.bf
//! ```
//!
//! so that `r1 = ln(x_non / x_spf) / sqrt(2)` separates the two negative
//! classes and `r2 = ln(x_tar^2 / (x_spf x_non)) / sqrt(6)` weighs `tar.bf`
//! against both of them. In ILR coordinates Bayes' rule is a plain sum:
//! `ilr(posterior) = ilr(prior) + ilr(likelihoods)`.
//!
//! Zero parts are rejected; the transform is undefined on the boundary of
//! the simplex and callers that need smoothing must do it themselves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ClassLabel, LlrPair};

/// Largest tolerated deviation of a composition's sum from one.
pub const SUM_TOLERANCE: f64 = 1e-12;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
// sqrt(6) is not in std::f64::consts.
pub(crate) const SQRT_6: f64 = 2.449_489_742_783_178;

/// Anything with three positive parts in class order.
pub trait Parts3 {
    fn parts(&self) -> [f64; 3];
}

/// A point in the interior of the probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawComposition", into = "RawComposition")]
pub struct Composition3 {
    spf: f64,
    nonbf: f64,
    tarbf: f64,
}

#[derive(Serialize, Deserialize)]
struct RawComposition {
    #[serde(serialize_with = "crate::format::serialize_f64")]
    spf: f64,
    #[serde(serialize_with = "crate::format::serialize_f64")]
    nonbf: f64,
    #[serde(serialize_with = "crate::format::serialize_f64")]
    tarbf: f64,
}

impl TryFrom<RawComposition> for Composition3 {
    type Error = Error;

    fn try_from(raw: RawComposition) -> Result<Self> {
        Composition3::new(raw.spf, raw.nonbf, raw.tarbf)
    }
}

impl From<Composition3> for RawComposition {
    fn from(c: Composition3) -> Self {
        RawComposition {
            spf: c.spf,
            nonbf: c.nonbf,
            tarbf: c.tarbf,
        }
    }
}

impl Composition3 {
    /// Validates strictly positive parts summing to one within
    /// [`SUM_TOLERANCE`].
    pub fn new(spf: f64, nonbf: f64, tarbf: f64) -> Result<Self> {
        check_positive([spf, nonbf, tarbf], "composition")?;
        let sum = spf + nonbf + tarbf;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::domain(format!("composition parts must sum to 1, got {sum}")));
        }
        Ok(Self { spf, nonbf, tarbf })
    }

    /// The barycentre `(1/3, 1/3, 1/3)`.
    pub fn uniform() -> Self {
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
        self.parts()[label.index()]
    }
}

impl Parts3 for Composition3 {
    fn parts(&self) -> [f64; 3] {
        [self.spf, self.nonbf, self.tarbf]
    }
}

/// Strictly positive, finite vector such as per-class likelihoods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveVector3 {
    spf: f64,
    nonbf: f64,
    tarbf: f64,
}

impl PositiveVector3 {
    pub fn new(spf: f64, nonbf: f64, tarbf: f64) -> Result<Self> {
        check_positive([spf, nonbf, tarbf], "positive vector")?;
        Ok(Self { spf, nonbf, tarbf })
    }

    /// Componentwise (Hadamard) product, e.g. prior times likelihood.
    pub fn hadamard(&self, other: &impl Parts3) -> Result<Self> {
        let [a, b, c] = self.parts();
        let [x, y, z] = other.parts();
        Self::new(a * x, b * y, c * z)
    }
}

impl Parts3 for PositiveVector3 {
    fn parts(&self) -> [f64; 3] {
        [self.spf, self.nonbf, self.tarbf]
    }
}

impl From<Composition3> for PositiveVector3 {
    fn from(c: Composition3) -> Self {
        Self {
            spf: c.spf,
            nonbf: c.nonbf,
            tarbf: c.tarbf,
        }
    }
}

/// ILR coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IlrVector {
    /// Balance of non.bf against spf.
    pub r1: f64,
    /// Balance of tar.bf against the two negative classes.
    pub r2: f64,
}

impl IlrVector {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite()) {
            return Err(Error::domain(format!(
                "ILR coordinates must be finite, got ({r1}, {r2})"
            )));
        }
        Ok(Self { r1, r2 })
    }
}

impl std::ops::Add for IlrVector {
    type Output = IlrVector;

    fn add(self, rhs: IlrVector) -> IlrVector {
        IlrVector {
            r1: self.r1 + rhs.r1,
            r2: self.r2 + rhs.r2,
        }
    }
}

fn check_positive(parts: [f64; 3], what: &str) -> Result<()> {
    for (label, value) in ClassLabel::ALL.iter().zip(parts) {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::domain(format!(
                "{what} part {label} must be finite and strictly positive, got {value}"
            )));
        }
    }
    Ok(())
}

/// Rescales a positive vector onto the simplex.
pub fn closure(v: &PositiveVector3) -> Composition3 {
    let [a, b, c] = v.parts();
    // Dividing by the largest part first keeps tiny parts from underflowing
    // before the sum is formed.
    let m = a.max(b).max(c);
    let (a, b, c) = (a / m, b / m, c / m);
    let sum = a + b + c;
    Composition3 {
        spf: a / sum,
        nonbf: b / sum,
        tarbf: c / sum,
    }
}

/// ILR transform of a composition or of any positive vector.
///
/// Scale invariant: `ilr(k * x) == ilr(x)` for every `k > 0`.
pub fn ilr(x: &impl Parts3) -> IlrVector {
    let [spf, nonbf, tarbf] = x.parts();
    let (l1, l2, l3) = (spf.ln(), nonbf.ln(), tarbf.ln());
    IlrVector {
        r1: (l2 - l1) / SQRT_2,
        r2: (2.0 * l3 - l1 - l2) / SQRT_6,
    }
}

/// ILR transform of raw parts, rejecting zero, negative and non-finite
/// values.
pub fn ilr_parts(parts: [f64; 3]) -> Result<IlrVector> {
    let v = PositiveVector3::new(parts[0], parts[1], parts[2])?;
    Ok(ilr(&v))
}

/// Inverse ILR transform.
pub fn ilr_inv(r: &IlrVector) -> Result<Composition3> {
    if !(r.r1.is_finite() && r.r2.is_finite()) {
        return Err(Error::domain(format!(
            "ILR coordinates must be finite, got ({}, {})",
            r.r1, r.r2
        )));
    }
    // Centred log-ratio coordinates are the ILR vector expressed in the
    // orthonormal basis e1 = (-1, 1, 0)/sqrt(2), e2 = (-1, -1, 2)/sqrt(6).
    let clr = [
        -r.r1 / SQRT_2 - r.r2 / SQRT_6,
        r.r1 / SQRT_2 - r.r2 / SQRT_6,
        2.0 * r.r2 / SQRT_6,
    ];
    let m = clr[0].max(clr[1]).max(clr[2]);
    let w = clr.map(|c| (c - m).exp());
    let sum = w[0] + w[1] + w[2];
    let parts = w.map(|x| x / sum);
    if parts.iter().any(|&p| p <= 0.0) {
        return Err(Error::domain(format!(
            "ILR coordinates ({}, {}) lie outside the representable simplex interior",
            r.r1, r.r2
        )));
    }
    Ok(Composition3 {
        spf: parts[0],
        nonbf: parts[1],
        tarbf: parts[2],
    })
}

/// ILR coordinates of the likelihood vector implied by an LLR pair.
///
/// With `a = LLR(tar.bf vs non.bf)` and `c = LLR(tar.bf vs spf)` the
/// likelihoods are proportional to `(e^-c, e^-a, 1)`, so
/// `r1 = (c - a)/sqrt(2)` and `r2 = (a + c)/sqrt(6)`.
pub fn likelihood_ilr_from_llrs(llrs: &LlrPair) -> Result<IlrVector> {
    if !(llrs.asv.is_finite() && llrs.cm.is_finite()) {
        return Err(Error::domain(format!(
            "LLRs must be finite, got ({}, {})",
            llrs.asv, llrs.cm
        )));
    }
    Ok(IlrVector {
        r1: (llrs.cm - llrs.asv) / SQRT_2,
        r2: (llrs.asv + llrs.cm) / SQRT_6,
    })
}

//! Lossless decimal rendering of `f64` values.
//!
//! Every number written to a trial file, model document or report carries
//! 17 significant digits, which is enough for an exact `f64` round trip.
//! Values with a decimal exponent in `[-5, 16]` are written in positional
//! notation, everything else in scientific notation.

use serde::Serializer;
use serde_json::value::RawValue;

/// Formats `value` with 17 significant digits.
///
/// Non-finite values are rendered as `NaN`, `inf` and `-inf`; they never
/// reach the file formats because every producer validates finiteness.
pub fn fmt_f64(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    if value == 0.0 {
        return if value.is_sign_negative() {
            "-0.0000000000000000".to_string()
        } else {
            "0.0000000000000000".to_string()
        };
    }
    let sci = format!("{value:.16e}");
    let exponent: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, exp)| exp.parse().ok())
        .expect("scientific rendering always has an exponent");
    if (-5..=16).contains(&exponent) {
        let decimals = (16 - exponent) as usize;
        format!("{value:.decimals$}")
    } else {
        sci
    }
}

/// `serialize_with` helper writing a float as a raw JSON number.
pub fn serialize_f64<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::Error;
    use serde::Serialize;

    if !value.is_finite() {
        return Err(S::Error::custom(format!("cannot serialize non-finite number {value}")));
    }
    let raw = RawValue::from_string(fmt_f64(*value)).map_err(S::Error::custom)?;
    raw.serialize(serializer)
}

pub fn serialize_f64_array<S: Serializer, const N: usize>(values: &[f64; N], serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;

    let mut seq = serializer.serialize_seq(Some(N))?;
    for value in values {
        seq.serialize_element(&Number(*value))?;
    }
    seq.end()
}

pub fn serialize_f64_matrix<S: Serializer>(rows: &[[f64; 2]; 2], serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;

    let mut seq = serializer.serialize_seq(Some(2))?;
    for row in rows {
        seq.serialize_element(&[Number(row[0]), Number(row[1])])?;
    }
    seq.end()
}

/// Float wrapper that serializes through [`serialize_f64`].
#[derive(Debug, Clone, Copy)]
pub struct Number(pub f64);

impl serde::Serialize for Number {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serialize_f64(&self.0, serializer)
    }
}

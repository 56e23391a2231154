//! Tab-separated trial files.
//!
//! The header is exactly `trial_id\ts_asv\ts_cm\tlabel`. Labels are
//! `tar.bf`, `non.bf`, `spf`, or `-` for an unlabeled trial. Scores are
//! written with 17 significant digits so that a write/read round trip is
//! lossless. Derived files (fused scores, decisions) append one column.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::simulation::csv_error;
use crate::types::{ClassLabel, TrialScore};

pub const TRIAL_HEADER: [&str; 4] = ["trial_id", "s_asv", "s_cm", "label"];

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .quoting(false)
        .flexible(true)
        .from_reader(input)
}

fn writer<W: Write>(output: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .from_writer(output)
}

fn parse_score(text: &str, line: u64, what: &str) -> Result<f64> {
    let v: f64 = text
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: {what} {text:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("line {line}: {what} must be finite, got {text}")));
    }
    Ok(v)
}

/// Reads a trial file.
pub fn read_trials<R: Read>(input: R) -> Result<Vec<TrialScore>> {
    let mut records = reader(input).into_records();
    let header = records
        .next()
        .ok_or_else(|| Error::Format("trial file is empty; expected a header".into()))?
        .map_err(csv_error)?;
    if header.iter().collect::<Vec<_>>() != TRIAL_HEADER {
        return Err(Error::Format(format!(
            "trial file header must be {:?}, got {:?}",
            TRIAL_HEADER.join("\t"),
            header.iter().collect::<Vec<_>>().join("\t")
        )));
    }
    let mut trials = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(Error::Format(format!(
                "line {line}: expected 4 fields, got {}",
                record.len()
            )));
        }
        let label = match &record[3] {
            "-" => None,
            other => Some(
                other
                    .parse::<ClassLabel>()
                    .map_err(|e| Error::Format(format!("line {line}: {e}")))?,
            ),
        };
        trials.push(TrialScore::new(
            &record[0],
            parse_score(&record[1], line, "s_asv")?,
            parse_score(&record[2], line, "s_cm")?,
            label,
        )?);
    }
    Ok(trials)
}

fn check_id(id: &str) -> Result<()> {
    if id.contains(['\t', '\n', '\r']) || id.is_empty() {
        return Err(Error::Format(format!(
            "trial id {id:?} is empty or contains a tab or line break"
        )));
    }
    Ok(())
}

fn trial_fields(t: &TrialScore) -> Result<[String; 4]> {
    check_id(&t.trial_id)?;
    Ok([
        t.trial_id.clone(),
        fmt_f64(t.scores.asv),
        fmt_f64(t.scores.cm),
        t.label.map_or("-", ClassLabel::as_str).to_string(),
    ])
}

/// Writes a trial file.
pub fn write_trials<W: Write>(output: W, trials: &[TrialScore]) -> Result<()> {
    let mut w = writer(output);
    w.write_record(TRIAL_HEADER).map_err(csv_error)?;
    for t in trials {
        w.write_record(trial_fields(t)?).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a trial file with one extra column named `column`.
pub fn write_trials_with_column<W: Write>(
    output: W,
    trials: &[TrialScore],
    column: &str,
    values: &[String],
) -> Result<()> {
    if trials.len() != values.len() {
        return Err(Error::domain(format!(
            "{} trials but {} column values",
            trials.len(),
            values.len()
        )));
    }
    let mut w = writer(output);
    let mut header = TRIAL_HEADER.to_vec();
    header.push(column);
    w.write_record(&header).map_err(csv_error)?;
    for (t, v) in trials.iter().zip(values) {
        let [a, b, c, d] = trial_fields(t)?;
        w.write_record([a, b, c, d, v.clone()]).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip() {
        let trials = vec![
            TrialScore::labeled("a,1", 0.1, -2.5e-12, ClassLabel::TarBf).unwrap(),
            TrialScore::labeled("b", 1e20, 3.0, ClassLabel::Spf).unwrap(),
            TrialScore::new("c", -0.0, 7.125, None).unwrap(),
        ];
        let mut buf = Vec::new();
        write_trials(&mut buf, &trials).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial_id\ts_asv\ts_cm\tlabel\n"));
        assert!(text.contains("a,1\t0.10000000000000001\t"));
        assert!(text.ends_with("\t-\n"));
        assert_eq!(read_trials(buf.as_slice()).unwrap(), trials);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(read_trials("".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(
            read_trials("id\ts_asv\ts_cm\tlabel\n".as_bytes()),
            Err(Error::Format(_))
        ));
        let h = "trial_id\ts_asv\ts_cm\tlabel\n";
        for row in [
            "x\t1\t2\n",
            "x\tone\t2\tspf\n",
            "x\t1\t2\tbona\n",
            "x\tNaN\t2\tspf\n",
            "x\t1\t2\tspf\textra\n",
        ] {
            assert!(
                matches!(read_trials(format!("{h}{row}").as_bytes()), Err(Error::Format(_))),
                "{row:?}"
            );
        }
        assert_eq!(read_trials(h.as_bytes()).unwrap(), vec![]);
    }

    #[test]
    fn rejects_unwritable_ids() {
        let t = TrialScore::labeled("a\tb", 0.0, 0.0, ClassLabel::Spf).unwrap();
        assert!(matches!(write_trials(Vec::new(), &[t]), Err(Error::Format(_))));
    }

    #[test]
    fn extra_column() {
        let trials = vec![TrialScore::labeled("a", 1.0, 2.0, ClassLabel::NonBf).unwrap()];
        let mut buf = Vec::new();
        write_trials_with_column(&mut buf, &trials, "score", &["0.5".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "trial_id\ts_asv\ts_cm\tlabel\tscore\na\t1.0000000000000000\t2.0000000000000000\tnon.bf\t0.5\n"
        );
    }

    proptest! {
        #[test]
        fn scores_survive_round_trip(asv in any::<f64>().prop_filter("finite", |v| v.is_finite()),
                                     cm in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let trials = vec![TrialScore::labeled("t", asv, cm, ClassLabel::TarBf).unwrap()];
            let mut buf = Vec::new();
            write_trials(&mut buf, &trials).unwrap();
            let back = read_trials(buf.as_slice()).unwrap();
            prop_assert_eq!(back[0].scores.asv.to_bits(), asv.to_bits());
            prop_assert_eq!(back[0].scores.cm.to_bits(), cm.to_bits());
        }
    }
}

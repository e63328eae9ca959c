//! CSV emission of aggregate records.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::runner::{AggregateRecord, HarnessError};
use crate::policy::PolicyKind;

pub const CSV_HEADER: [&str; 7] = [
    "t",
    "policy",
    "mean_cum_regret",
    "se_cum_regret",
    "mean_norm_regret",
    "mean_est_error",
    "se_est_error",
];

const SIG_DIGITS: i32 = 10;

/// Formats `x` with 10 significant digits, dropping trailing zeros.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..SIG_DIGITS).contains(&exp) {
        let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        let s = format!("{:.*e}", (SIG_DIGITS - 1) as usize, x);
        let (mantissa, exponent) = s.split_once('e').expect("scientific format");
        format!("{}e{exponent}", trim_fraction(mantissa.to_string()))
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv<W: Write>(records: &[AggregateRecord], sink: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.policy.name().to_string(),
            format_sig(r.mean_cum_regret),
            format_sig(r.se_cum_regret),
            r.mean_norm_regret.map(format_sig).unwrap_or_default(),
            format_sig(r.mean_est_error),
            format_sig(r.se_est_error),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(records: &[AggregateRecord], path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let file = BufWriter::new(File::create(path)?);
    write_csv(records, file)
}

fn field_error(line: usize, message: String) -> HarnessError {
    HarnessError::Io(std::io::Error::new(
        std::io::ErrorKind::InvalidData,
        format!("row {line}: {message}"),
    ))
}

pub fn read_csv<R: Read>(source: R) -> Result<Vec<AggregateRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(source);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(field_error(0, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |j: usize| -> Result<f64, HarnessError> {
            row[j]
                .parse::<f64>()
                .map_err(|e| field_error(i + 1, format!("{}: {e}", CSV_HEADER[j])))
        };
        out.push(AggregateRecord {
            t: row[0]
                .parse()
                .map_err(|e| field_error(i + 1, format!("t: {e}")))?,
            policy: row[1]
                .parse::<PolicyKind>()
                .map_err(|e| field_error(i + 1, e))?,
            mean_cum_regret: num(2)?,
            se_cum_regret: num(3)?,
            mean_norm_regret: if row[4].is_empty() {
                None
            } else {
                Some(num(4)?)
            },
            mean_est_error: num(5)?,
            se_est_error: num(6)?,
        });
    }
    Ok(out)
}

//! File formats for models and samples.
//!
//! Models are JSON `{p, q, terms: [{sites, kind, labels, strength}]}`.
//! Samples are plain text, one configuration per line with whitespace
//! separated symbols and an optional `# p=<p> q=<q>` header.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::model::EnergyModel;
use crate::samples::SampleSet;

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_model(path: impl AsRef<Path>, model: &EnergyModel) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: impl AsRef<Path>) -> Result<EnergyModel> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<EnergyModel> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        field: format!("column {}", e.column()),
        message: e.to_string(),
    })
}

/// Renders samples with a `# p=.. q=..` header.
pub fn format_samples(samples: &SampleSet) -> String {
    let mut out = String::with_capacity(samples.n() * samples.p() * 2 + 32);
    let _ = writeln!(out, "# p={} q={}", samples.p(), samples.alphabet().q());
    for row in samples.rows() {
        for (i, s) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{s}");
        }
        out.push('\n');
    }
    out
}

pub fn write_samples(path: impl AsRef<Path>, samples: &SampleSet) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(format_samples(samples).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>, shape: Option<(usize, usize)>) -> Result<SampleSet> {
    let f = fs::File::open(path)?;
    parse_samples_from(BufReader::new(f), shape)
}

pub fn parse_samples(text: &str, shape: Option<(usize, usize)>) -> Result<SampleSet> {
    parse_samples_from(text.as_bytes(), shape)
}

/// Parses the sample format.
///
/// `shape` gives `(p, q)` when known; a header in the file must agree with it.
/// Without either, `p` comes from the first row and `q` from the largest symbol.
pub fn parse_samples_from<R: BufRead>(
    reader: R,
    shape: Option<(usize, usize)>,
) -> Result<SampleSet> {
    let mut p = shape.map(|s| s.0);
    let mut q = shape.map(|s| s.1);
    let mut data: Vec<u8> = Vec::new();
    let mut max_symbol = 0u8;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            if let Some((hp, hq)) = parse_header(header, line_no)? {
                if let Some(expected) = p.filter(|&e| e != hp) {
                    return Err(parse_err(line_no, "p", format!("header p={hp}, expected {expected}")));
                }
                if let Some(expected) = q.filter(|&e| e != hq) {
                    return Err(parse_err(line_no, "q", format!("header q={hq}, expected {expected}")));
                }
                p = Some(hp);
                q = Some(hq);
            }
            continue;
        }
        let start = data.len();
        for (field, tok) in trimmed.split_whitespace().enumerate() {
            let value: usize = tok.parse().map_err(|_| {
                parse_err(line_no, &format!("{}", field + 1), format!("'{tok}' is not a symbol"))
            })?;
            let limit = q.unwrap_or(256);
            if value >= limit {
                return Err(parse_err(
                    line_no,
                    &format!("{}", field + 1),
                    format!("symbol {value} out of range for q = {limit}"),
                ));
            }
            max_symbol = max_symbol.max(value as u8);
            data.push(value as u8);
        }
        let width = data.len() - start;
        match p {
            Some(pp) if pp != width => {
                return Err(parse_err(
                    line_no,
                    "row",
                    format!("row has {width} symbols, expected {pp}"),
                ))
            }
            None => p = Some(width),
            _ => {}
        }
    }
    let p = p.ok_or_else(|| parse_err(0, "file", "no samples found".into()))?;
    if data.is_empty() {
        return Err(parse_err(0, "file", "no samples found".into()));
    }
    let q = q.unwrap_or_else(|| (max_symbol as usize + 1).max(2));
    let alphabet = Alphabet::new(q)?;
    SampleSet::new(p, alphabet, data)
}

fn parse_header(header: &str, line: usize) -> Result<Option<(usize, usize)>> {
    let mut p = None;
    let mut q = None;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("p=") {
            p = Some(v.parse().map_err(|_| parse_err(line, "p", format!("bad value '{v}'")))?);
        } else if let Some(v) = tok.strip_prefix("q=") {
            q = Some(v.parse().map_err(|_| parse_err(line, "q", format!("bad value '{v}'")))?);
        }
    }
    match (p, q) {
        (Some(p), Some(q)) => Ok(Some((p, q))),
        (None, None) => Ok(None),
        _ => Err(parse_err(line, "header", "header needs both p= and q=".into())),
    }
}

fn parse_err(line: usize, field: &str, message: String) -> Error {
    Error::Parse {
        line,
        field: field.to_string(),
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisTerm;

    #[test]
    fn parses_plain_row() {
        let s = parse_samples("0 1 0\n", Some((3, 2))).unwrap();
        assert_eq!(s.n(), 1);
        assert_eq!(s.row(0), &[0, 1, 0]);
    }

    #[test]
    fn header_sets_shape() {
        let s = parse_samples("# p=2 q=4\n3 1\n0 2\n", None).unwrap();
        assert_eq!((s.p(), s.alphabet().q(), s.n()), (2, 4, 2));
    }

    #[test]
    fn out_of_range_symbol_reports_location() {
        let err = parse_samples("# p=2 q=4\n0 1\n2 4\n", None).unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 3);
                assert_eq!(field, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_and_garbage_rejected() {
        assert!(parse_samples("0 1\n0 1 1\n", None).is_err());
        assert!(parse_samples("0 x\n", None).is_err());
        assert!(parse_samples("# p=3 q=2\n", None).is_err());
        assert!(parse_samples("# p=2 q=2\n0 1\n", Some((3, 2))).is_err());
    }

    #[test]
    fn model_round_trip_and_location() {
        let m = EnergyModel::new(
            3,
            Alphabet::new(3).unwrap(),
            vec![
                BasisTerm::indicator(vec![0, 2], vec![1, 2], -0.25),
                BasisTerm::indicator(vec![1], vec![0], 0.125),
            ],
        )
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"labels\""));
        assert_eq!(parse_model(&text).unwrap(), m);

        let err = parse_model("{\n  \"p\": 2,\n  \"q\": 2,\n  \"terms\": [oops]\n}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn model_json_schema() {
        let m = EnergyModel::new(2, Alphabet::BINARY, vec![BasisTerm::monomial(vec![0, 1], 1.5)])
            .unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["p"], 2);
        assert_eq!(v["q"], 2);
        assert_eq!(v["terms"][0]["kind"], "monomial");
        assert!(v["terms"][0]["labels"].is_null());
        assert_eq!(v["terms"][0]["strength"], 1.5);
    }
}

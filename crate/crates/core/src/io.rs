//! Dataset CSV format: header `pvalue,f1,...,fd[,h]`, one hypothesis per row,
//! `h` an optional 0/1 truth column.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::dataset::{Dataset, HypothesisRecord};
use crate::error::{Error, Result};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

/// Number of feature columns and whether a truth column is present, or a
/// description of what is wrong with the header.
fn parse_header(fields: &csv::StringRecord) -> std::result::Result<(usize, bool), String> {
    let names: Vec<&str> = fields.iter().collect();
    if names.first() != Some(&"pvalue") {
        return Err("header must start with 'pvalue'".into());
    }
    let labelled = names.last() == Some(&"h");
    let features = &names[1..names.len() - usize::from(labelled)];
    if features.is_empty() {
        return Err("header needs at least one feature column f1".into());
    }
    for (j, name) in features.iter().enumerate() {
        if *name != format!("f{}", j + 1) {
            return Err(format!("expected column 'f{}', found '{name}'", j + 1));
        }
    }
    Ok((features.len(), labelled))
}

fn parse_real(s: &str, line: u64, column: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(line, format!("column {column}: '{s}' is not a number")))
}

/// Reads a dataset, reporting the 1-based line of the first malformed row.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Err(parse_err(1, "empty file")),
    };
    let (dim, labelled) = parse_header(&header).map_err(|m| parse_err(1, m))?;
    let width = 1 + dim + usize::from(labelled);
    let mut records = Vec::new();
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != width {
            return Err(parse_err(
                line,
                format!("expected {width} fields, found {}", row.len()),
            ));
        }
        let p = parse_real(&row[0], line, "pvalue")?;
        if !(p > 0.0 && p < 1.0) {
            return Err(parse_err(line, format!("p-value {p} is outside (0, 1)")));
        }
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let x = parse_real(&row[1 + j], line, &format!("f{}", j + 1))?;
            if !x.is_finite() {
                return Err(parse_err(line, format!("column f{}: non-finite value", j + 1)));
            }
            features.push(x);
        }
        let truth = if labelled {
            match &row[width - 1] {
                "0" => Some(false),
                "1" => Some(true),
                other => return Err(parse_err(line, format!("column h: expected 0 or 1, found '{other}'"))),
            }
        } else {
            None
        };
        records.push(HypothesisRecord::new(p, features, truth));
    }
    if records.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    Dataset::new(records)
}

pub fn read_dataset_path(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Shortest text that parses back to the same `f64`; scientific notation for
/// very small or very large magnitudes.
pub fn fmt_real(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let labelled = data.has_truth();
    let mut header = vec!["pvalue".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("f{j}")));
    if labelled {
        header.push("h".into());
    }
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for r in data.records() {
        row.clear();
        row.push(fmt_real(r.p_value));
        row.extend(r.features.iter().map(|&x| fmt_real(x)));
        if let Some(h) = r.truth {
            row.push(if h { "1" } else { "0" }.into());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_path(path: &Path, data: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset(&mut out, data)?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Dataset> {
        read_dataset(s.as_bytes())
    }

    fn line_of(e: Error) -> usize {
        match e {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn reads_labelled_and_unlabelled() {
        let d = parse("pvalue,f1,f2,h\n0.01,1,2,1\n0.5,3,4,0\n").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.truths(), Some(vec![true, false]));
        let d = parse("pvalue,f1\n0.2,-1.5\n").unwrap();
        assert!(!d.has_truth());
        assert_eq!(d.records()[0].features, vec![-1.5]);
    }

    #[test]
    fn reports_line_numbers() {
        assert_eq!(line_of(parse("pvalue,f1\n0.1,1\n0.2\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("pvalue,f1\n0.1,1\n0.2,1\n1.0,2\n").unwrap_err()), 4);
        assert_eq!(line_of(parse("pvalue,f1\n0.1,abc\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("pvalue,f1,h\n0.1,1,2\n").unwrap_err()), 2);
        assert_eq!(line_of(parse("p,f1\n0.1,1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("pvalue,f2\n0.1,1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("pvalue,f1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("").unwrap_err()), 1);
    }

    #[test]
    fn small_values_use_exponents() {
        assert_eq!(fmt_real(0.25), "0.25");
        assert_eq!(fmt_real(1e-20), "1e-20");
        assert_eq!(fmt_real(0.0), "0");
    }

    proptest! {
        #[test]
        fn write_read_round_trip_is_exact(
            rows in proptest::collection::vec((1e-300f64..1.0, -1e6f64..1e6, any::<bool>()), 1..40)
        ) {
            let recs: Vec<HypothesisRecord> = rows
                .iter()
                .filter(|r| r.0 < 1.0)
                .map(|&(p, x, h)| HypothesisRecord::new(p, vec![x, x * 1e-9], Some(h)))
                .collect();
            prop_assume!(!recs.is_empty());
            let d = Dataset::new(recs).unwrap();
            let mut buf = Vec::new();
            write_dataset(&mut buf, &d).unwrap();
            let back = read_dataset(buf.as_slice()).unwrap();
            prop_assert_eq!(back, d);
        }
    }
}

//! Dataset CSV format: a header row `label,f0,f1,...,f{d-1}`, the label as a
//! string, features as 64-bit floats.

use std::io::{Read, Write};

use crate::data::{LabelTable, LabeledDataset};
use crate::error::{Error, Result};

/// Reads a labeled dataset, interning labels into `table`.
pub fn read_dataset<R: Read>(reader: R, table: &mut LabelTable) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("label") {
        return Err(Error::MalformedRow {
            row: 0,
            reason: "header must start with `label`".into(),
        });
    }
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(Error::MalformedRow {
            row: 0,
            reason: "no feature columns".into(),
        });
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::MalformedRow {
                row: 0,
                reason: format!("expected column `f{j}`, found `{h}`"),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", dim + 1, record.len()),
            });
        }
        labels.push(table.intern(&record[0]));
        for field in record.iter().skip(1) {
            features.push(parse_feature(field, row)?);
        }
    }
    LabeledDataset::new(dim, features, labels)
}

/// Reads unlabeled query rows: header `f0,...,f{d-1}` (a leading `label`
/// column is accepted and ignored).
pub fn read_queries<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let skip = usize::from(headers.get(0) == Some("label"));
    let width = headers.len();
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let x = record
            .iter()
            .skip(skip)
            .map(|f| parse_feature(f, row))
            .collect::<Result<Vec<_>>>()?;
        out.push(x);
    }
    Ok(out)
}

/// Parses one comma-separated feature row, e.g. from a command-line flag.
pub fn parse_feature_row(text: &str, row: usize) -> Result<Vec<f64>> {
    text.split(',').map(|f| parse_feature(f.trim(), row)).collect()
}

fn parse_feature(field: &str, row: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
        row,
        reason: format!("cannot parse `{field}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedRow {
            row,
            reason: format!("non-finite feature `{field}`"),
        });
    }
    Ok(v)
}

pub fn write_dataset<W: Write>(writer: W, data: &LabeledDataset, table: &LabelTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["label".to_string()];
    header.extend((0..data.dim()).map(|j| format!("f{j}")));
    wtr.write_record(&header)?;
    let mut record = Vec::with_capacity(data.dim() + 1);
    for (i, row) in data.rows().enumerate() {
        record.clear();
        record.push(table.display(data.label(i)));
        record.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

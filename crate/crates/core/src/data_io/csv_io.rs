use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::DatasetSpec;

/// A parsed multivariate series.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub timestamps: Option<Vec<String>>,
    /// `[T, C]`, file order.
    pub values: Tensor,
    pub names: Vec<String>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Reads `path` and checks the column count against `spec`. A row-count
/// mismatch with `spec.time_steps` is reported on stderr only.
pub fn load_csv(path: &Path, spec: &DatasetSpec) -> Result<RawSeries> {
    let series = read_csv(path, Some(spec.features))?;
    if let Some(expected) = spec.time_steps {
        if expected != series.len() {
            eprintln!(
                "warning: {}: {} rows, registry entry `{}` lists {expected}",
                path.display(),
                series.len(),
                spec.name
            );
        }
    }
    Ok(series)
}

fn parse_value(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a comma-separated numeric file. The header row is optional and is
/// recognised by non-numeric cells. With `features` given, one extra leading
/// column is taken as timestamps; without it, a leading column is a
/// timestamp column when its first cell is not numeric.
pub fn read_csv(path: &Path, features: Option<usize>) -> Result<RawSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((first_line, first)) = records.first() else {
        return Err(parse_err(1, "file is empty".into()));
    };
    let width = first.len();
    let header = first
        .iter()
        .any(|cell| !cell.trim().is_empty() && parse_value(cell).is_none());

    let has_time = match features {
        Some(c) if width == c => false,
        Some(c) if width == c + 1 => true,
        Some(c) => {
            return Err(parse_err(
                *first_line,
                format!("expected {c} value columns (plus optional timestamp), found {width}"),
            ))
        }
        None => {
            let probe = records.get(usize::from(header)).map(|(_, r)| &r[0]);
            probe.is_some_and(|cell| parse_value(cell).is_none() && !cell.trim().is_empty())
        }
    };
    let skip = usize::from(has_time);
    let c = width - skip;
    if c == 0 {
        return Err(parse_err(*first_line, "no value columns".into()));
    }

    let names = if header {
        first.iter().skip(skip).map(|s| s.trim().to_string()).collect()
    } else {
        (0..c).map(|i| format!("f{i}")).collect()
    };
    let body = &records[usize::from(header)..];
    if body.is_empty() {
        return Err(parse_err(*first_line, "no data rows".into()));
    }
    let mut values = Vec::with_capacity(body.len() * c);
    let mut stamps = has_time.then(|| Vec::with_capacity(body.len()));
    for (row, (line, rec)) in body.iter().enumerate() {
        if rec.len() != width {
            return Err(parse_err(
                *line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        if let Some(stamps) = stamps.as_mut() {
            stamps.push(rec[0].trim().to_string());
        }
        for (column, cell) in rec.iter().enumerate().skip(skip) {
            if cell.trim().is_empty() {
                return Err(Error::MissingValue {
                    path: path.to_path_buf(),
                    row,
                    column,
                });
            }
            let v = parse_value(cell).ok_or_else(|| {
                parse_err(*line, format!("column {column}: `{cell}` is not a finite number"))
            })?;
            values.push(v);
        }
    }
    Ok(RawSeries {
        timestamps: stamps,
        values: Tensor::new(vec![body.len(), c], values)?,
        names,
    })
}

/// Writes a header row and shortest round-trip decimal values.
pub fn write_csv(path: &Path, series: &RawSeries) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let c = series.features();
    let mut header: Vec<&str> = Vec::with_capacity(c + 1);
    if series.timestamps.is_some() {
        header.push("date");
    }
    header.extend(series.names.iter().map(String::as_str));
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    for (i, row) in series.values.data().chunks(c).enumerate() {
        let mut line = String::new();
        if let Some(ts) = &series.timestamps {
            line.push_str(&ts[i]);
            line.push(',');
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        line.push_str(&cells.join(","));
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn plain_numeric_file() {
        let f = file("1,2\n3,4\n5,6\n");
        let s = read_csv(f.path(), Some(2)).unwrap();
        assert_eq!(s.values.shape(), &[3, 2]);
        assert_eq!(s.values.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(s.timestamps.is_none());
    }

    #[test]
    fn header_and_timestamps() {
        let f = file("date,a,b\n2020-01-01,1.5,2\n2020-01-02,-3e-2,4\n");
        let s = read_csv(f.path(), None).unwrap();
        assert_eq!(s.names, ["a", "b"]);
        assert_eq!(s.timestamps.unwrap()[1], "2020-01-02");
        assert_eq!(s.values.data(), &[1.5, 2.0, -0.03, 4.0]);
    }

    #[test]
    fn missing_and_ragged() {
        let f = file("a,b\n1,2\n3,\n");
        match read_csv(f.path(), Some(2)) {
            Err(Error::MissingValue { row: 1, column: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        let f = file("1,2\n3,4,5\n");
        match read_csv(f.path(), Some(2)) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let f = file("1,2,3,4\n");
        assert!(read_csv(f.path(), Some(2)).is_err());
    }
}

//! Numeric CSV ingestion.

use std::path::Path;

use blb_core::{DataMatrix, Task};

use crate::error::{Error, Result};

/// Which column, if any, holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// Zero-based.
    Index(usize),
    Last,
    None,
}

impl std::str::FromStr for ResponseColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ResponseColumn::None,
            "last" => ResponseColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => ResponseColumn::Index(i),
                Err(_) => ResponseColumn::Name(s.to_string()),
            },
        })
    }
}

impl std::fmt::Display for ResponseColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResponseColumn::Name(n) => write!(f, "{n}"),
            ResponseColumn::Index(i) => write!(f, "{i}"),
            ResponseColumn::Last => write!(f, "last"),
            ResponseColumn::None => write!(f, "none"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub response: ResponseColumn,
    pub task: Task,
}

/// Reads a comma-separated numeric file. The first line is a header when none
/// of its cells parse as numbers. For classification, responses in {-1, 1}
/// are mapped to {0, 1}.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<DataMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path, schema)
}

pub fn read_csv<R: std::io::Read>(input: R, path: &Path, schema: &CsvSchema) -> Result<DataMatrix> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input);

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|c| c.parse::<f64>().ok()).collect();
        if header.is_none() && rows.is_empty() && parsed.iter().all(Option::is_none) {
            header = Some(record.iter().map(str::to_string).collect());
            continue;
        }
        let mut values = Vec::with_capacity(parsed.len());
        for (col, (cell, value)) in record.iter().zip(parsed).enumerate() {
            match value {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(parse_err(
                        line,
                        format!("column {}: not a finite number: {cell:?}", col + 1),
                    ))
                }
            }
        }
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let width = rows[0].1.len();
    if let Some((line, row)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(parse_err(
            *line,
            format!("expected {width} columns, found {}", row.len()),
        ));
    }
    if let Some(h) = &header {
        if h.len() != width {
            return Err(parse_err(
                1,
                format!("header has {} columns, data has {width}", h.len()),
            ));
        }
    }

    let response_col = match &schema.response {
        ResponseColumn::None => None,
        ResponseColumn::Last => Some(width - 1),
        ResponseColumn::Index(i) if *i < width => Some(*i),
        ResponseColumn::Index(i) => {
            return Err(Error::Argument(format!(
                "response column {i} out of range (width {width})"
            )))
        }
        ResponseColumn::Name(name) => {
            let h = header.as_ref().ok_or_else(|| {
                Error::Argument(format!(
                    "response column {name:?} named but file has no header"
                ))
            })?;
            Some(
                h.iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::Argument(format!("no column named {name:?}")))?,
            )
        }
    };
    let p = width - usize::from(response_col.is_some());
    if p == 0 {
        return Err(Error::Argument("no feature columns".into()));
    }

    let mut features = Vec::with_capacity(rows.len() * p);
    let mut response = response_col.map(|_| Vec::with_capacity(rows.len()));
    for (_, row) in &rows {
        for (c, &v) in row.iter().enumerate() {
            if Some(c) == response_col {
                response.as_mut().unwrap().push(v);
            } else {
                features.push(v);
            }
        }
    }
    if schema.task == Task::Classification {
        if let Some(y) = response.as_mut() {
            if y.iter().all(|&v| v == -1.0 || v == 1.0) {
                y.iter_mut().for_each(|v| *v = f64::from(*v == 1.0));
            }
        }
    }
    let data = DataMatrix::new(p, features, response)?;
    if response_col.is_some() {
        data.validate(schema.task).map_err(|e| match e {
            blb_core::Error::NonBinaryResponse { row, value } => parse_err(
                rows[row].0,
                format!("response {value} is not a class label"),
            ),
            other => other.into(),
        })?;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, response: ResponseColumn, task: Task) -> Result<DataMatrix> {
        read_csv(
            text.as_bytes(),
            Path::new("t.csv"),
            &CsvSchema { response, task },
        )
    }

    #[test]
    fn header_and_named_response() {
        let d = read(
            "x,y\n1,0\n2,1",
            ResponseColumn::Name("y".into()),
            Task::Classification,
        )
        .unwrap();
        assert_eq!((d.n(), d.p()), (2, 1));
        assert_eq!(d.response().unwrap(), &[0.0, 1.0]);
        assert_eq!(d.features(), &[1.0, 2.0]);
    }

    #[test]
    fn bad_cell_names_its_line() {
        let err = read("x,y\n1,0\nabc,1\n", ResponseColumn::Last, Task::Regression).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn signed_labels_normalized() {
        let d = read(
            "1,-1\n2,1\n3,-1\n",
            ResponseColumn::Index(1),
            Task::Classification,
        )
        .unwrap();
        assert_eq!(d.response().unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn signed_labels_kept_for_regression() {
        let d = read("1,-1\n2,1\n", ResponseColumn::Last, Task::Regression).unwrap();
        assert_eq!(d.response().unwrap(), &[-1.0, 1.0]);
    }

    #[test]
    fn other_labels_rejected_for_classification() {
        assert!(read("1,2\n2,1\n", ResponseColumn::Last, Task::Classification).is_err());
    }

    #[test]
    fn no_response_keeps_all_columns() {
        let d = read("1,2\n3,4\n", ResponseColumn::None, Task::Regression).unwrap();
        assert_eq!(d.p(), 2);
        assert!(d.response().is_none());
    }

    #[test]
    fn empty_and_ragged_files_rejected() {
        assert!(read("", ResponseColumn::None, Task::Regression).is_err());
        assert!(read("x,y\n", ResponseColumn::None, Task::Regression).is_err());
        let err = read("1,2\n3\n", ResponseColumn::None, Task::Regression).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_named_column() {
        assert!(read(
            "x,y\n1,2\n",
            ResponseColumn::Name("z".into()),
            Task::Regression
        )
        .is_err());
        assert!(read("1,2\n", ResponseColumn::Name("y".into()), Task::Regression).is_err());
    }
}

//! Dataset CSV format: header `f0,...,f{d-1}[,label]`, comma-separated
//! decimal floats, optional integer label column. A labels-only file has
//! just the `label` column.

use std::fs;
use std::path::Path;

use spectral_core::datasets::DataMatrix;
use spectral_core::Matrix;

use super::fmt_f64;
use crate::error::{CliError, Result};

pub fn save_csv(data: &DataMatrix, path: &Path) -> Result<()> {
    let n = data.features.rows();
    let d = data.features.cols();
    if let Some(labels) = &data.labels {
        assert_eq!(labels.len(), n, "label length must match row count");
    }
    let mut out = String::new();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..n {
        let mut fields: Vec<String> = data.features.row(i).iter().map(|&x| fmt_f64(x)).collect();
        if let Some(labels) = &data.labels {
            fields.push(labels[i].to_string());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn load_csv(path: &Path) -> Result<DataMatrix> {
    let text =
        fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| CliError::Parse {
        path: path_str.clone(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = columns.last() == Some(&"label");
    let d = columns.len() - usize::from(has_label);
    for (j, col) in columns.iter().take(d).enumerate() {
        let expected = format!("f{j}");
        if *col != expected {
            return Err(CliError::Parse {
                path: path_str,
                line: 1,
                msg: format!("expected header column `{expected}`, found `{col}`"),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(CliError::RaggedRow {
                path: path_str,
                line: line_no,
                expected: columns.len(),
                got: fields.len(),
            });
        }
        for field in fields.iter().take(d) {
            let value: f64 = field.parse().map_err(|_| CliError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg: format!("cannot parse `{field}` as float"),
            })?;
            features.push(value);
        }
        if has_label {
            let field = fields[d];
            let value: usize = field.parse().map_err(|_| CliError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg: format!("cannot parse `{field}` as label"),
            })?;
            labels.push(value);
        }
        n += 1;
    }
    Ok(DataMatrix {
        features: Matrix::new(n, d, features),
        labels: has_label.then_some(labels),
    })
}

/// Writes a labels-only CSV (header `label`).
pub fn save_labels(labels: &[usize], path: &Path) -> Result<()> {
    let data = DataMatrix {
        features: Matrix::zeros(labels.len(), 0),
        labels: Some(labels.to_vec()),
    };
    save_csv(&data, path)
}

/// Loads the label column of any CSV written by this tool.
pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let data = load_csv(path)?;
    data.labels.ok_or_else(|| CliError::Invalid(format!(
        "{}: no label column",
        path.display()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("spectral-csv-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_is_exact() {
        let data = DataMatrix {
            features: Matrix::from_rows(&[
                [1.0 / 3.0, -2.5e-17],
                [f64::MIN_POSITIVE, 12345.6789],
            ]),
            labels: Some(vec![0, 7]),
        };
        let path = tmp("roundtrip.csv");
        save_csv(&data, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn labels_only_roundtrip() {
        let path = tmp("labels.csv");
        save_labels(&[2, 0, 1], &path).unwrap();
        assert_eq!(load_labels(&path).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn ragged_row_reports_line() {
        let path = tmp("ragged.csv");
        std::fs::write(&path, "f0,f1\n1.0,2.0\n3.0\n").unwrap();
        match load_csv(&path).unwrap_err() {
            CliError::RaggedRow { line, expected, got, .. } => {
                assert_eq!((line, expected, got), (3, 2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line() {
        let path = tmp("badfloat.csv");
        std::fs::write(&path, "f0\n1.0\nnope\n").unwrap();
        match load_csv(&path).unwrap_err() {
            CliError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}

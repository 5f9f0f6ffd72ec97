//! CSV datasets: every column except the target is a numeric feature.

use std::collections::BTreeSet;
use std::path::Path;

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::harness::config::{CsvSchema, Task};

/// How target cells become [`Targets`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TargetKind {
    /// Categorical labels; names are sorted numerically when every label
    /// parses as a number and lexicographically otherwise.
    Labels,
    /// Categorical labels from a fixed vocabulary, e.g. a trained model's.
    KnownLabels(Vec<String>),
    Values,
}

impl From<Task> for TargetKind {
    fn from(task: Task) -> Self {
        match task {
            Task::Classification => TargetKind::Labels,
            Task::Regression => TargetKind::Values,
        }
    }
}

fn label_order(names: BTreeSet<String>) -> Vec<String> {
    let mut names: Vec<String> = names.into_iter().collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse().ok()).collect();
    if let Some(keys) = numeric {
        let mut paired: Vec<(f64, String)> = keys.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, s)| s).collect();
    }
    names
}

/// Loads a CSV file with a header row.
///
/// Cells are trimmed. Coordinates in errors are 1-based file line numbers
/// and header column names.
pub fn load_csv(path: &Path, schema: &CsvSchema, kind: TargetKind) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let at = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    let header: Vec<String> = reader.headers().map_err(at)?.iter().map(str::to_string).collect();
    let target_col = header
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| Error::data(format!("{}: missing target column `{}`", path.display(), schema.target)))?;
    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != target_col).collect();

    let mut rows = Vec::new();
    let mut raw_targets = Vec::new();
    for record in reader.records() {
        let record = record.map_err(at)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::data(format!(
                "{}: line {line} has {} fields, header has {}",
                path.display(),
                record.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            let cell = &record[j];
            let value: f64 = cell.parse().map_err(|_| {
                Error::data(format!(
                    "{}: non-numeric value `{cell}` at line {line}, column `{}`",
                    path.display(),
                    header[j]
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::data(format!(
                    "{}: non-finite value `{cell}` at line {line}, column `{}`",
                    path.display(),
                    header[j]
                )));
            }
            row.push(value);
        }
        rows.push(row);
        raw_targets.push((line, record[target_col].to_string()));
    }

    let targets = match kind {
        TargetKind::Values => {
            let mut values = Vec::with_capacity(raw_targets.len());
            for (line, cell) in &raw_targets {
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        return Err(Error::data(format!(
                            "{}: invalid target `{cell}` at line {line}, column `{}`",
                            path.display(),
                            schema.target
                        )))
                    }
                }
            }
            Targets::Values(values)
        }
        TargetKind::Labels | TargetKind::KnownLabels(_) => {
            let names = match kind {
                TargetKind::KnownLabels(names) => names,
                _ => label_order(raw_targets.iter().map(|(_, s)| s.clone()).collect()),
            };
            let labels = raw_targets
                .iter()
                .map(|(line, cell)| {
                    names.iter().position(|n| n == cell).ok_or_else(|| {
                        Error::data(format!(
                            "{}: unknown label `{cell}` at line {line}, column `{}`",
                            path.display(),
                            schema.target
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Targets::Labels { labels, names }
        }
    };
    let feature_names = feature_cols.iter().map(|&j| header[j].clone()).collect();
    Dataset::new(feature_names, rows, targets).map_err(|e| match e {
        Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `dataset` with the target as the last column.
pub fn write_csv(path: &Path, dataset: &Dataset, schema: &CsvSchema) -> Result<()> {
    let io = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    let mut writer = csv::WriterBuilder::new()
        .delimiter(schema.delimiter)
        .from_path(path)
        .map_err(io)?;
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(&schema.target);
    writer.write_record(&header).map_err(io)?;
    for (i, row) in dataset.rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(f64::to_string).collect();
        cells.push(match dataset.targets() {
            Targets::Labels { labels, names } => names[labels[i]].clone(),
            Targets::Values(v) => v[i].to_string(),
        });
        writer.write_record(&cells).map_err(io)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema() -> CsvSchema {
        CsvSchema {
            target: "label".into(),
            delimiter: b',',
        }
    }

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn toy_file() {
        let f = file("a,label,b\n1,cat,2\n3,dog,4\n5,cat,6\n");
        let ds = load_csv(f.path(), &schema(), TargetKind::Labels).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.feature_names(), &["a", "b"]);
        assert_eq!(ds.labels().unwrap(), &[0, 1, 0]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let f = file("x,label\n0,10\n0,2\n0,9\n");
        let ds = load_csv(f.path(), &schema(), TargetKind::Labels).unwrap();
        match ds.targets() {
            Targets::Labels { names, labels } => {
                assert_eq!(names, &["2", "9", "10"]);
                assert_eq!(labels, &[2, 0, 1]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn errors_carry_coordinates() {
        let nan = file("a,b,label\n1,2,x\n3,NaN,y\n");
        let err = load_csv(nan.path(), &schema(), TargetKind::Labels).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("column `b`"), "{err}");

        let word = file("a,label\n1,x\noops,y\n");
        let err = load_csv(word.path(), &schema(), TargetKind::Labels).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("line 3"));

        let ragged = file("a,label\n1,x\n2\n");
        assert!(matches!(load_csv(ragged.path(), &schema(), TargetKind::Labels), Err(Error::Data(_))));

        let missing = file("a,b\n1,2\n");
        assert!(load_csv(missing.path(), &schema(), TargetKind::Labels)
            .unwrap_err()
            .to_string()
            .contains("missing target column"));

        let unknown = file("a,label\n1,z\n");
        let known = TargetKind::KnownLabels(vec!["x".into()]);
        assert!(load_csv(unknown.path(), &schema(), known).is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = crate::synthetic::linear_regression(12, 3, 0.3, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&path, &ds, &schema()).unwrap();
        let back = load_csv(&path, &schema(), TargetKind::Values).unwrap();
        assert_eq!(back, ds);
    }
}

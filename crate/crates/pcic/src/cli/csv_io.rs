//! CSV ingestion: numeric tables with a header row, plus weight vectors.

use std::path::Path;

use crate::cli::CliError;
use crate::core::Dataset;

/// Reads a CSV with a header row into column names and numeric rows.
/// Malformed cells are reported with their line number.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Io(format!("cannot read header of {}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                CliError::Usage(format!(
                    "{} line {line}: column '{}' has non-numeric value '{cell}'",
                    path.display(),
                    headers.get(col).map_or("?", String::as_str)
                ))
            })?;
            if !value.is_finite() {
                return Err(CliError::Usage(format!(
                    "{} line {line}: non-finite value {value}",
                    path.display()
                )));
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("{} has no data rows", path.display())));
    }
    Ok((headers, rows))
}

fn find_column(headers: &[String], name: &str, path: &Path) -> Result<usize, CliError> {
    headers.iter().position(|h| h == name).ok_or_else(|| {
        CliError::Usage(format!(
            "{} needs a '{name}' column, found: {}",
            path.display(),
            headers.join(", ")
        ))
    })
}

/// Dataset for the location model: every column is a coordinate.
pub fn location_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (_, rows) = read_table(path)?;
    Dataset::new(rows).map_err(|e| CliError::Usage(e.to_string()))
}

/// Dataset for classification: the `label` column is moved to position 0,
/// remaining numeric columns are covariates.
pub fn classification_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (headers, rows) = read_table(path)?;
    let label_col = find_column(&headers, "label", path)?;
    let normalized: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(row.len());
            out.push(row[label_col]);
            out.extend(
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != label_col)
                    .map(|(_, v)| *v),
            );
            out
        })
        .collect();
    Dataset::new(normalized).map_err(|e| CliError::Usage(e.to_string()))
}

/// Dataset for regression: normalized to rows `[y, x]`.
pub fn regression_dataset(path: &Path) -> Result<Dataset, CliError> {
    let (headers, rows) = read_table(path)?;
    let y_col = find_column(&headers, "y", path)?;
    let x_col = find_column(&headers, "x", path)?;
    let normalized: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|row| vec![row[y_col], row[x_col]])
        .collect();
    Dataset::new(normalized).map_err(|e| CliError::Usage(e.to_string()))
}

/// Reads a one-column CSV of observation weights.
pub fn read_weights(path: &Path) -> Result<Vec<f64>, CliError> {
    let (headers, rows) = read_table(path)?;
    if headers.len() != 1 {
        return Err(CliError::Usage(format!(
            "{} must have exactly one column of weights",
            path.display()
        )));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_numeric_table() {
        let f = write_tmp("x1,x2\n1.0,2.0\n3.0,4.0\n");
        let (headers, rows) = read_table(f.path()).unwrap();
        assert_eq!(headers, vec!["x1", "x2"]);
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn malformed_cell_names_line() {
        let f = write_tmp("x\n1.0\noops\n");
        let err = read_table(f.path()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn classification_moves_label_first() {
        let f = write_tmp("f1,label,f2\n0.5,1,2.0\n-0.5,0,1.0\n");
        let ds = classification_dataset(f.path()).unwrap();
        assert_eq!(ds.row(0), &[1.0, 0.5, 2.0]);
        assert_eq!(ds.row(1), &[0.0, -0.5, 1.0]);
    }

    #[test]
    fn regression_extracts_y_and_x() {
        let f = write_tmp("x,y\n0.01,1.2\n0.02,0.8\n");
        let ds = regression_dataset(f.path()).unwrap();
        assert_eq!(ds.row(0), &[1.2, 0.01]);
    }

    #[test]
    fn missing_named_column_is_usage_error() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(
            classification_dataset(f.path()),
            Err(CliError::Usage(_))
        ));
    }
}

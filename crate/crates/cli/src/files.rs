use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Labelled matrix as TSV: a header of column names, then one row per
/// row name. Values use the shortest exact decimal form.
pub fn matrix_tsv<R: AsRef<str>, C: AsRef<str>>(rows: &[R], cols: &[C], m: &Array2<f64>) -> String {
    let mut out = String::new();
    for c in cols {
        out.push('\t');
        out.push_str(c.as_ref());
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        out.push_str(r.as_ref());
        for j in 0..m.ncols() {
            write!(out, "\t{}", m[[i, j]]).expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`matrix_tsv`]: row names, column names and values.
pub fn parse_matrix_tsv(text: &str, origin: &Path) -> Result<(Vec<String>, Vec<String>, Array2<f64>)> {
    let bad = |line: usize, message: String| CliError::Config {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty matrix file".into()))?;
    let cols: Vec<String> = header.split('\t').skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let mut fields = line.split('\t');
        rows.push(fields.next().unwrap_or_default().to_string());
        let row: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|e| bad(n + 2, format!("{f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if row.len() != cols.len() {
            return Err(bad(n + 2, format!("expected {} values, found {}", cols.len(), row.len())));
        }
        values.extend(row);
    }
    let m = Array2::from_shape_vec((rows.len(), cols.len()), values).expect("shape checked per row");
    Ok((rows, cols, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_text_round_trips_exactly() {
        let m = array![[0.1 + 0.2, -1e-300], [1.0 / 3.0, 7.0]];
        let text = matrix_tsv(&["a", "b"], &["x", "y"], &m);
        let (r, c, back) = parse_matrix_tsv(&text, Path::new("m.tsv")).unwrap();
        assert_eq!(r, ["a", "b"]);
        assert_eq!(c, ["x", "y"]);
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = parse_matrix_tsv("\tx\ty\na\t1\n", Path::new("m.tsv")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}

//! Class labels from NPY or CSV. A CSV holds one integer per field, any
//! layout; a non-numeric first row is taken as a header.

use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn read_class_labels(path: &Path) -> CliResult<Vec<usize>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("txt"));
    if !is_csv {
        return Ok(conceptkit::io::read_labels(path)?);
    }
    let bad = |message: String| CliError::Labels {
        path: path.to_path_buf(),
        message,
    };
    let file = std::fs::File::open(path).map_err(|e| conceptkit::Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(file);
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let parsed: Result<Vec<usize>, _> = record.iter().filter(|f| !f.is_empty()).map(str::parse::<usize>).collect();
        match parsed {
            Ok(values) => labels.extend(values),
            Err(_) if row == 0 => continue,
            Err(_) => return Err(bad(format!("row {} holds a value that is not a non-negative integer", row + 1))),
        }
    }
    if labels.is_empty() {
        return Err(bad("no labels".into()));
    }
    Ok(labels)
}

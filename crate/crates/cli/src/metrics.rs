//! Append-only metrics CSV.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const HEADER: [&str; 5] = ["sample_count", "accuracy", "capacity", "eligible", "no_prediction"];

/// One checkpoint. `accuracy` is a percentage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sample_count: usize,
    pub accuracy: f64,
    pub capacity: usize,
    pub eligible: f64,
    pub no_prediction: usize,
}

/// Appends `rows`, writing the header first when the file is new or empty.
pub fn append_rows(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<(), csv::Error> {
    let path = path.as_ref();
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(HEADER) {
        return Err(csv::Error::from(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("unexpected metrics header {headers:?}"),
        )));
    }
    r.deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> MetricsRow {
        MetricsRow {
            sample_count: n,
            accuracy: 12.5,
            capacity: 3,
            eligible: 0.25,
            no_prediction: 1,
        }
    }

    #[test]
    fn header_once_across_appends() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        append_rows(&p, &[row(1)]).unwrap();
        append_rows(&p, &[row(2), row(3)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sample_count,accuracy,capacity,eligible,no_prediction");
        assert_eq!(text.lines().count(), 4);
        let back = read_rows(&p).unwrap();
        assert_eq!(back, vec![row(1), row(2), row(3)]);
    }
}

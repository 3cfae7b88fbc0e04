use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Exploratory,
    Info,
}

/// One measured quantity with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub experiment: String,
    pub command: String,
    pub side_length: f64,
    pub sites_per_dim: usize,
    pub source: String,
    pub epsilon: Option<f64>,
    pub h: Option<f64>,
    pub n: Option<usize>,
    pub ghost_smearing: bool,
    pub workers: usize,
    pub metric: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub status: Status,
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn append(path: &Path, rows: &[ResultRow]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn read(path: &Path) -> csv::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, value: f64) -> ResultRow {
        ResultRow {
            schema_version: SCHEMA_VERSION,
            experiment: "t".into(),
            command: "eval-term".into(),
            side_length: 1.0,
            sites_per_dim: 6,
            source: "synthetic:seed=7:band=2".into(),
            epsilon: Some(0.2),
            h: None,
            n: Some(1),
            ghost_smearing: true,
            workers: 1,
            metric: metric.into(),
            value,
            tolerance: None,
            status: Status::Info,
        }
    }

    #[test]
    fn append_keeps_one_header_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        append(&path, &[row("a", 0.1)]).unwrap();
        append(&path, &[row("b", -2.5e-17)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.matches("schema_version").count(), 1);
        assert_eq!(read(&path).unwrap(), vec![row("a", 0.1), row("b", -2.5e-17)]);
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::rng::GENERATOR_NAME;
use crate::error::{Error, Result};

/// One line of the regret report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    /// Baseline horizon `T` of the sweep point.
    pub horizon: usize,
    pub protocol: String,
    pub static_regret: f64,
    pub dynamic_regret: f64,
    /// Static regret divided by the steps actually run.
    pub avg_regret: f64,
    /// Network path length of the dynamic comparator.
    pub pl: f64,
    pub bound: f64,
    pub self_nmse: f64,
    pub cross_nmse: Option<f64>,
    pub c_max: u64,
    pub seed: u64,
    /// Steps actually run (smaller than `horizon` for capacity-scaled runs).
    pub steps: usize,
    pub avg_dynamic_regret: f64,
    pub scaled_pl: f64,
    pub rho: Option<f64>,
    pub y0: Option<f64>,
    pub omega: Option<usize>,
}

pub fn report_to_csv(rows: &[RegretRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Emission(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Emission(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Emission(e.to_string()))
}

pub fn read_report(path: &Path) -> Result<Vec<RegretRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Hex SHA-256 of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Learning rates and gradient bounds used at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub protocol: String,
    pub horizon: usize,
    pub steps: usize,
    pub seed: u64,
    pub etas: Vec<f64>,
    pub grad_bounds: Vec<f64>,
}

/// Sidecar written next to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: String,
    pub prng: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub runs: Vec<RunRecord>,
}

impl RunMetadata {
    pub fn new(config: serde_json::Value, runs: Vec<RunRecord>) -> Self {
        let canonical = config.to_string();
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            prng: GENERATOR_NAME.to_string(),
            config_sha256: config_hash(&canonical),
            config,
            runs,
        }
    }
}

/// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`.
pub fn write_report(dir: &Path, stem: &str, rows: &[RegretRow], meta: &RunMetadata) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, report_to_csv(rows)?).map_err(|e| Error::io(&csv_path, e))?;
    let meta_path = dir.join(format!("{stem}.meta.json"));
    let text = serde_json::to_string_pretty(meta).map_err(|e| Error::Emission(e.to_string()))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(protocol: &str, cross: Option<f64>) -> RegretRow {
        RegretRow {
            horizon: 100,
            protocol: protocol.into(),
            static_regret: 1.5,
            dynamic_regret: 2.25,
            avg_regret: 0.015,
            pl: 0.0,
            bound: 10.0,
            self_nmse: 0.1,
            cross_nmse: cross,
            c_max: 2,
            seed: 7,
            steps: 100,
            avg_dynamic_regret: 0.0225,
            scaled_pl: 0.1,
            rho: Some(0.75),
            y0: None,
            omega: None,
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = vec![row("ogd", Some(0.2)), row("togd_star", None)];
        let dir = tempfile::tempdir().unwrap();
        let meta = RunMetadata::new(serde_json::json!({"a": 1}), vec![]);
        write_report(dir.path(), "r", &rows, &meta).unwrap();
        let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert!(text.starts_with(
            "horizon,protocol,static_regret,dynamic_regret,avg_regret,pl,bound,self_nmse,cross_nmse,c_max,seed,"
        ));
        assert_eq!(read_report(&dir.path().join("r.csv")).unwrap(), rows);
        let m: RunMetadata =
            serde_json::from_str(&fs::read_to_string(dir.path().join("r.meta.json")).unwrap()).unwrap();
        assert_eq!(m.prng, "ChaCha8");
        assert_eq!(m.config_sha256.len(), 64);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            config_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

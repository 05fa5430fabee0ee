//! CSV tables: learning curves, sweep records and figure data.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sobfno_core::scaling::SweepRecord;
use sobfno_core::train::LearningCurve;

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> csv::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> csv::Result<Vec<T>> {
    csv::Reader::from_path(path)?.deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub rel_err: f64,
    /// `ok` or `unstable`.
    pub flag: String,
}

/// Wall-clock times are left out so identical runs give identical files.
pub fn curve_rows(curve: &LearningCurve) -> Vec<CurveRow> {
    curve
        .records
        .iter()
        .map(|r| CurveRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            test_loss: r.test_loss,
            rel_err: r.test_relative_error,
            flag: if r.unstable { "unstable" } else { "ok" }.into(),
        })
        .collect()
}

pub fn write_curve(path: &Path, curve: &LearningCurve) -> csv::Result<()> {
    write_rows(path, curve_rows(curve))
}

/// One line of a sweep table. Only `params` and `best_test_loss` are needed
/// to fit, so hand-written tables may omit the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub width: Option<usize>,
    pub params: usize,
    pub best_test_loss: f64,
    #[serde(default)]
    pub final_test_loss: Option<f64>,
    #[serde(default)]
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub relative_error: Option<f64>,
    #[serde(default)]
    pub aborted: Option<bool>,
}

impl From<&SweepRecord> for RecordRow {
    fn from(r: &SweepRecord) -> Self {
        Self {
            modes: Some(r.config.modes),
            width: Some(r.config.width),
            params: r.params,
            best_test_loss: r.best_test_loss,
            final_test_loss: Some(r.final_test_loss),
            best_epoch: Some(r.best_epoch),
            relative_error: Some(r.relative_error),
            aborted: Some(!r.usable()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_record_tables_parse() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "params,best_test_loss\n74209,6.87e-7\n237137,6.01e-7\n").unwrap();
        let rows: Vec<RecordRow> = read_rows(&p).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].params, 237137);
        assert_eq!(rows[0].final_test_loss, None);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let rows = vec![CurveRow {
            epoch: 1,
            train_loss: 0.1 + 0.2,
            test_loss: 1.0 / 3.0,
            rel_err: f64::MIN_POSITIVE,
            flag: "ok".into(),
        }];
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_rows::<CurveRow>(&p).unwrap(), rows);
    }
}

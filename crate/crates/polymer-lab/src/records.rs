//! File outputs: CSV tables for grids and line-delimited JSON for
//! record streams. Every float prints at 17 significant digits, so a
//! rerun with the same seed diffs byte for byte and a parse of the text
//! recovers the exact bits.

use crate::{Error, Result};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

/// 17 significant digits: the shortest width that round-trips every f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// An in-memory CSV table with a fixed column schema.
///
/// The schema is set at construction and every row is checked against
/// it, which is what keeps the emitted column set a pure function of
/// the requested statistic list.
#[derive(Clone, Debug)]
pub struct CsvTable {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(columns: Vec<String>) -> CsvTable {
        CsvTable { columns, rows: Vec::new() }
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn push_row(&mut self, cells: Vec<String>) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(Error::Internal(format!(
                "row has {} cells, schema has {} columns",
                cells.len(),
                self.columns.len()
            )));
        }
        self.rows.push(cells);
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    /// Header line plus rows, newline-terminated.
    pub fn body(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.body())?;
        Ok(())
    }
}

/// Serializes each record to one JSON line and writes the whole file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Internal(format!("record serialization failed: {e}")))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Context wrapper giving every emitted record the experiment id and
/// sampler spec alongside the statistic payload.
#[derive(Clone, Debug, Serialize)]
pub struct StatRecord<T: Serialize> {
    pub experiment: String,
    pub sampler: String,
    #[serde(flatten)]
    pub body: T,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Serialize;
    use tempfile::tempdir;

    #[test]
    fn float_formatting_round_trips_exactly() {
        for &x in &[
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            1e-300,
            -2.2250738585072014e-308,
            9.007199254740993e15,
            0.1 + 0.2,
        ] {
            let printed = fmt_f64(x);
            let back: f64 = printed.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{printed}");
        }
    }

    #[test]
    fn csv_schema_is_enforced() {
        let mut table = CsvTable::new(vec!["a".into(), "b".into()]);
        table.push_row(vec!["1".into(), "2".into()]).unwrap();
        assert!(table.push_row(vec!["1".into()]).is_err());
        assert_eq!(table.body(), "a,b\n1,2\n");
        assert_eq!(table.row_count(), 1);
    }

    #[test]
    fn csv_write_creates_parent_dirs() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nested/out/results.csv");
        let mut table = CsvTable::new(vec!["x".into()]);
        table.push_row(vec![fmt_f64(0.5)]).unwrap();
        table.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x\n5.0000000000000000e-1"));
    }

    #[test]
    fn jsonl_is_one_record_per_line() {
        #[derive(Serialize)]
        struct Rec {
            id: u32,
            v: f64,
        }
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        write_jsonl(&path, &[Rec { id: 1, v: 0.5 }, Rec { id: 2, v: -1.0 }]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.trim_end().split('\n').collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("\"id\":1"));
        let parsed: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(parsed["v"], -1.0);
    }

    #[test]
    fn stat_record_flattens_the_body() {
        #[derive(Serialize)]
        struct Body {
            mean: f64,
        }
        let rec = StatRecord {
            experiment: "exp1".into(),
            sampler: "gw".into(),
            body: Body { mean: 1.0 },
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"experiment\":\"exp1\""));
        assert!(json.contains("\"mean\":1.0"));
    }
}

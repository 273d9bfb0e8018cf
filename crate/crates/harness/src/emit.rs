//! CSV and JSON artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back gives the exact logged values. Absent values are empty cells.

use std::fs;
use std::path::{Path, PathBuf};

use muonlab_core::diagnostics::{RecordFlags, StepRecord};
use muonlab_core::Matrix;
use serde::Serialize;

use crate::HarnessError;

pub const RECORD_HEADER: [&str; 13] = [
    "t", "f", "grad_F", "grad_nuc", "eta", "J_t", "L_t", "hatJ_t", "distF", "distOp", "ratio_lhs", "ratio_rhs", "flags",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Serializes rows to CSV bytes.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

pub fn records_csv(records: &[StepRecord]) -> Vec<u8> {
    csv_bytes(
        &RECORD_HEADER,
        records.iter().map(|r| {
            vec![
                r.t.to_string(),
                r.f.to_string(),
                r.grad_fro.to_string(),
                r.grad_nuc.to_string(),
                opt(r.eta),
                opt(r.j_t),
                opt(r.l_t),
                opt(r.hat_j_t),
                opt(r.dist_fro),
                opt(r.dist_op),
                opt(r.ratio_lhs),
                opt(r.ratio_rhs),
                r.flags.encode(),
            ]
        }),
    )
}

pub fn read_records(path: &Path) -> Result<Vec<StepRecord>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().ne(RECORD_HEADER) {
        return Err(csv_err(path, format!("unexpected header {:?}", header)));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let cell = |k: usize| row.get(k).unwrap_or("");
        let num = |k: usize| -> Result<f64, HarnessError> {
            cell(k)
                .parse::<f64>()
                .map_err(|_| csv_err(path, format!("row {}: bad number {:?}", i + 1, cell(k))))
        };
        let maybe = |k: usize| -> Result<Option<f64>, HarnessError> {
            if cell(k).is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        out.push(StepRecord {
            t: cell(0)
                .parse()
                .map_err(|_| csv_err(path, format!("row {}: bad step {:?}", i + 1, cell(0))))?,
            f: num(1)?,
            grad_fro: num(2)?,
            grad_nuc: num(3)?,
            eta: maybe(4)?,
            j_t: maybe(5)?,
            l_t: maybe(6)?,
            hat_j_t: maybe(7)?,
            dist_fro: maybe(8)?,
            dist_op: maybe(9)?,
            ratio_lhs: maybe(10)?,
            ratio_rhs: maybe(11)?,
            flags: RecordFlags::decode(cell(12)).map_err(|e| csv_err(path, e))?,
        });
    }
    Ok(out)
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn spectrum_csv(values: &[f64]) -> Vec<u8> {
    csv_bytes(
        &["index", "singular_value"],
        values.iter().enumerate().map(|(i, s)| vec![i.to_string(), s.to_string()]),
    )
}

/// One row per matrix: `id` followed by the row-major entries.
pub fn flattened_matrices_csv(ids: &[usize], mats: &[Matrix]) -> Vec<u8> {
    let width = mats.first().map_or(0, |m| m.rows() * m.cols());
    let mut header = vec!["sample".to_string()];
    header.extend((0..width).map(|k| format!("w{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(
        &header,
        ids.iter().zip(mats).map(|(id, m)| {
            std::iter::once(id.to_string())
                .chain(m.as_slice().iter().map(|v| v.to_string()))
                .collect::<Vec<_>>()
        }),
    )
}

/// Reads a CSV of numeric cells (header skipped) as rows of floats.
pub fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        rows.push(
            row.iter()
                .map(|c| c.parse::<f64>().map_err(|_| csv_err(path, format!("bad number {c:?}"))))
                .collect::<Result<Vec<_>, _>>()?,
        );
    }
    Ok(rows)
}

/// Tracks files written for one command and removes them unless committed.
#[derive(Debug, Default)]
pub struct OutputGuard {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates `dir` and any missing parents, remembering the ones created.
    pub fn create_dir_all(&mut self, dir: &Path) -> Result<(), HarnessError> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(p) = cur {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            cur = p.parent();
        }
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        missing.reverse();
        self.dirs.extend(missing);
        Ok(())
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
        if let Some(parent) = path.parent() {
            self.create_dir_all(parent)?;
        }
        self.files.push(path.to_path_buf());
        fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
    }
}

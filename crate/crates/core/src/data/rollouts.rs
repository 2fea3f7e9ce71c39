//! Rollout directories: one CSV per rollout, a header of column names and
//! one row per time step. Columns whose name starts with `act_` are
//! actions; every other column is an observation.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, Rollout};
use crate::tensor::Tensor;

pub const ACTION_PREFIX: &str = "act_";

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path, err: csv::Error) -> DataError {
    DataError::Csv {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

/// Loads every `*.csv` in `dir`, in file-name order.
pub fn load_rollouts(dir: &Path) -> Result<Vec<Rollout>, DataError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .map(|entry| entry.map(|e| e.path()).map_err(io_error(dir)))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"));
    files.sort();

    let mut out: Vec<Rollout> = Vec::with_capacity(files.len());
    let mut columns: Option<Vec<String>> = None;
    for path in &files {
        let (header, rollout) = load_one(path)?;
        match &columns {
            Some(expected) if *expected != header => {
                return Err(DataError::DimMismatch {
                    path: path.clone(),
                    expected: expected.clone(),
                    found: header,
                })
            }
            Some(_) => {}
            None => columns = Some(header),
        }
        out.push(rollout);
    }
    Ok(out)
}

fn load_one(path: &Path) -> Result<(Vec<String>, Rollout), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::Csv {
            path: path.to_path_buf(),
            message: "missing header row".into(),
        });
    }
    let is_action: Vec<bool> = header
        .iter()
        .map(|h| h.starts_with(ACTION_PREFIX))
        .collect();

    let mut features = Vec::new();
    let mut actions = Vec::new();
    let mut steps = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        // File line: the header is line 1.
        let row = record.position().map_or(steps + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(DataError::Ragged {
                path: path.to_path_buf(),
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                path: path.to_path_buf(),
                row,
                col: col + 1,
                cell: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    path: path.to_path_buf(),
                    row,
                    col: col + 1,
                });
            }
            if is_action[col] {
                actions.push(value);
            } else {
                features.push(value);
            }
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(DataError::Csv {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let names = |want: bool| -> Vec<String> {
        header
            .iter()
            .zip(&is_action)
            .filter(|(_, &a)| a == want)
            .map(|(h, _)| h.clone())
            .collect()
    };
    let (feature_names, action_names) = (names(false), names(true));
    let features = Tensor::new(steps, feature_names.len(), features).expect("rectangular rows");
    let actions = (!action_names.is_empty())
        .then(|| Tensor::new(steps, action_names.len(), actions).expect("rectangular rows"));
    Ok((
        header,
        Rollout {
            feature_names,
            features,
            action_names,
            actions,
        },
    ))
}

/// Writes `rollout_0000.csv`, `rollout_0001.csv`, … into `dir`.
pub fn save_rollouts(dir: &Path, rollouts: &[Rollout]) -> Result<Vec<PathBuf>, DataError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::with_capacity(rollouts.len());
    for (k, r) in rollouts.iter().enumerate() {
        let path = dir.join(format!("rollout_{k:04}.csv"));
        let mut writer = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        let header: Vec<&str> = r
            .feature_names
            .iter()
            .chain(&r.action_names)
            .map(String::as_str)
            .collect();
        writer
            .write_record(&header)
            .map_err(|e| csv_error(&path, e))?;
        for t in 0..r.steps() {
            let mut row: Vec<String> = r.features.row_slice(t).iter().map(f64::to_string).collect();
            if let Some(a) = &r.actions {
                row.extend(a.row_slice(t).iter().map(f64::to_string));
            }
            writer.write_record(&row).map_err(|e| csv_error(&path, e))?;
        }
        writer.flush().map_err(io_error(&path))?;
        written.push(path);
    }
    Ok(written)
}

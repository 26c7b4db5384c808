use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{usage, ExperimentError};
use crate::metrics::{fmt_float, MetricsReport, MetricsRow};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";

fn result_files(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    if !dir.is_dir() {
        return Err(usage(format!("results directory {} does not exist", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .filter(|p| p.file_name().is_some_and(|n| n != REPORT_CSV))
        .collect();
    files.sort();
    Ok(files)
}

fn same_values(a: &MetricsRow, b: &MetricsRow) -> bool {
    [(a.psnr_db, b.psnr_db), (a.ssim, b.ssim), (a.fid, b.fid)]
        .iter()
        .all(|(x, y)| fmt_float(*x) == fmt_float(*y))
}

/// Merges every `*.csv` result file in `dir` into one report. Identical
/// duplicates collapse; rows sharing a key but disagreeing on a metric are
/// an error that lists each offender with its file. Rows are sorted by
/// (train set, eval set, extractor, n, seed).
pub fn merge_reports(dir: &Path) -> Result<MetricsReport, ExperimentError> {
    type Key = (String, String, String, usize, u64);
    let mut merged: BTreeMap<Key, (MetricsRow, String)> = BTreeMap::new();
    let mut conflicts = Vec::new();
    for file in result_files(dir)? {
        let name = file.display().to_string();
        let text = std::fs::read_to_string(&file)?;
        for row in MetricsReport::from_csv(&text, &name)?.rows {
            let key = (
                row.train_set.clone(),
                row.eval_set.clone(),
                row.extractor.clone(),
                row.n,
                row.seed,
            );
            match merged.get(&key) {
                Some((prev, src)) if !same_values(prev, &row) => conflicts.push(format!(
                    "{}/{} (n={}, {}, seed {}) in {src} and {name}",
                    key.0, key.1, key.3, key.2, key.4
                )),
                Some(_) => {}
                None => {
                    merged.insert(key, (row, name.clone()));
                }
            }
        }
    }
    if !conflicts.is_empty() {
        return Err(usage(format!("conflicting duplicate rows: {}", conflicts.join("; "))));
    }
    Ok(MetricsReport {
        rows: merged.into_values().map(|(r, _)| r).collect(),
    })
}

/// Writes the merged report next to its inputs as CSV and JSON.
pub fn cmd_report(dir: &Path) -> Result<MetricsReport, ExperimentError> {
    let report = merge_reports(dir)?;
    std::fs::write(dir.join(REPORT_CSV), report.to_csv()?)?;
    std::fs::write(dir.join(REPORT_JSON), report.to_json()? + "\n")?;
    Ok(report)
}

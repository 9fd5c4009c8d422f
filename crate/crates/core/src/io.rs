//! Dataset directories: a `manifest.tsv` of `<relative_path>\t<label>` lines
//! plus one text file per series with one observation per line.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::series::{LabeledDataset, TimeSeries};

pub const MANIFEST: &str = "manifest.tsv";

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let manifest = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let malformed = |reason: String| Error::MalformedManifest { path: manifest_path.clone(), reason };

    let mut series = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (rel, label) = line
            .split_once('\t')
            .ok_or_else(|| malformed(format!("line {}: expected <path>\\t<label>", lineno + 1)))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| malformed(format!("line {}: bad label {label:?}", lineno + 1)))?;
        let path = dir.join(rel);
        if !path.is_file() {
            return Err(malformed(format!("line {}: missing series file {rel}", lineno + 1)));
        }
        series.push(load_series(&path)?);
        labels.push(label);
    }
    if series.is_empty() {
        return Err(Error::EmptyDataset);
    }
    LabeledDataset::new(series, labels)
}

pub fn load_series(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::MalformedFile { path: path.into(), reason };
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| malformed(format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            let first: &Vec<f64> = first;
            if first.len() != row.len() {
                return Err(malformed(format!(
                    "line {}: {} values, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(malformed("no observations".into()));
    }
    TimeSeries::from_observations(&rows)
}

pub fn save_series(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut out = String::new();
    for obs in series.values().column_iter() {
        let line: Vec<String> = obs.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes `series_<index>.txt` files and the manifest into `dir`, creating it if needed.
pub fn save_dataset(ds: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let width = ds.len().to_string().len().max(5);
    let mut manifest = String::new();
    for (i, (s, label)) in ds.series().iter().zip(ds.labels()).enumerate() {
        let name = format!("series_{i:0width$}.txt");
        save_series(s, &dir.join(&name))?;
        manifest.push_str(&format!("{name}\t{label}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

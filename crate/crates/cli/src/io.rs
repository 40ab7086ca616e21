//! File formats: headerless matrix CSV, two-column point CSV, TOML group
//! maps and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use muon_core::Matrix;

pub fn format_num(v: f64, precision: Option<usize>) -> String {
    match precision {
        Some(p) => format!("{v:.p$}"),
        None => format!("{v}"),
    }
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .with_context(|| format!("{}:{line}: not a number: {cell:?}", path.display()))?;
    ensure!(v.is_finite(), "{}:{line}: non-finite value {cell:?}", path.display());
    Ok(v)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        rows.push(rec.iter().map(|c| parse_cell(c, path, i + 1)).collect::<Result<_>>()?);
    }
    ensure!(!rows.is_empty(), "{}: empty matrix", path.display());
    Matrix::from_rows(&rows).with_context(|| format!("{}: ragged or empty rows", path.display()))
}

pub fn matrix_csv(m: &Matrix, precision: Option<usize>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| format_num(v, precision)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Two numeric columns after a header row.
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let width = reader.headers()?.len();
    ensure!(width == 2, "{}: expected 2 columns, header has {width}", path.display());
    let mut points = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let line = i + 2;
        points.push((parse_cell(&rec[0], path, line)?, parse_cell(&rec[1], path, line)?));
    }
    Ok(points)
}

/// Every `<name>.csv` in `dir`, keyed by file stem.
pub fn read_checkpoint(dir: &Path) -> Result<BTreeMap<String, Matrix>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let Some(name) = path.file_stem().and_then(|s| s.to_str()) else {
            bail!("non-UTF-8 file name {}", path.display());
        };
        out.insert(name.to_string(), read_matrix(&path)?);
    }
    ensure!(!out.is_empty(), "{}: no .csv matrices", dir.display());
    Ok(out)
}

pub fn read_groups(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing groups {}", path.display()))
}

/// Output directory handle. Created on first write.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: impl AsRef<Path>, contents: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        write_file(&path, contents)?;
        Ok(path)
    }

    pub fn write_json(&self, rel: impl AsRef<Path>, value: &impl Serialize) -> Result<PathBuf> {
        self.write(rel, &to_json(value)?)
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Rounds every float in `value` to `precision` decimals.
pub fn round_json(value: &mut serde_json::Value, precision: Option<usize>) {
    let Some(p) = precision else { return };
    match value {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                let mut s = String::new();
                let _ = write!(s, "{x:.p$}");
                if let Ok(r) = s.parse::<f64>() {
                    if let Some(num) = serde_json::Number::from_f64(r) {
                        *n = num;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(|v| round_json(v, precision)),
        serde_json::Value::Object(map) => map.values_mut().for_each(|v| round_json(v, precision)),
        _ => {}
    }
}

//! Evaluation reports: `key: value` lines plus an optional per-image CSV.
//!
//! ```text
//! images: 500
//! ap@2: 0.935
//! ar@2: 0.374
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use smc_core::metrics::EvalReport;

use crate::error::{io_err, parse_err, Error, Result};

pub fn format_reports(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    if let Some(first) = reports.first() {
        out.push_str(&format!("images: {}\n", first.images.len()));
    }
    for r in reports {
        out.push_str(&format!("ap@{}: {}\nar@{}: {}\n", r.n, r.ap, r.n, r.ar));
    }
    out
}

/// Parses `key: value` lines into a map; values must be numbers.
pub fn parse_report(text: &str, path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, n + 1, "expected `key: value`"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_err(path, n + 1, format!("`{}` is not a number", value.trim())))?;
        if map.insert(key.trim().to_owned(), value).is_some() {
            return Err(parse_err(path, n + 1, format!("duplicate key `{}`", key.trim())));
        }
    }
    Ok(map)
}

pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    fs::write(path, format_reports(reports)).map_err(io_err(path))
}

pub fn read_report(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_report(&text, path)
}

/// One row per evaluated image: `image,precision@N,recall@N,...`.
///
/// All reports must cover the same images.
pub fn write_per_image_csv(path: &Path, reports: &[EvalReport], image_ids: &[String]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["image".to_owned()];
    for r in reports {
        header.push(format!("precision@{}", r.n));
        header.push(format!("recall@{}", r.n));
    }
    w.write_record(&header).map_err(csv_err)?;
    let Some(first) = reports.first() else {
        return w.flush().map_err(io_err(path));
    };
    for (k, &image) in first.images.iter().enumerate() {
        let mut row = vec![image_ids.get(image).cloned().unwrap_or_else(|| image.to_string())];
        for r in reports {
            row.push(r.per_image_precision[k].to_string());
            row.push(r.per_image_recall[k].to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

//! Identifier lists: one UTF-8 identifier per line.

use std::fs;
use std::path::Path;

use crate::error::{io_err, parse_err, Result};

pub fn parse_ids(text: &str, path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let id = line.strip_suffix('\r').unwrap_or(line);
        if id.is_empty() {
            return Err(parse_err(path, n + 1, "empty identifier"));
        }
        ids.push(id.to_owned());
    }
    Ok(ids)
}

pub fn read_ids(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_ids(&text, path)
}

pub fn write_ids<S: AsRef<str>>(path: &Path, ids: &[S]) -> Result<()> {
    let mut text = String::new();
    for id in ids {
        text.push_str(id.as_ref());
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Labels or other integers, one per line.
pub fn read_usizes(path: &Path) -> Result<Vec<usize>> {
    read_ids(path)?
        .iter()
        .enumerate()
        .map(|(n, s)| s.trim().parse().map_err(|_| parse_err(path, n + 1, format!("`{s}` is not a count"))))
        .collect()
}

pub fn write_usizes(path: &Path, values: &[usize]) -> Result<()> {
    let strings: Vec<String> = values.iter().map(usize::to_string).collect();
    write_ids(path, &strings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_unicode() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.txt");
        let ids = ["img_001", "bäume", "猫"];
        write_ids(&path, &ids).unwrap();
        assert_eq!(read_ids(&path).unwrap(), ids);
    }

    #[test]
    fn crlf_and_empty_lines() {
        let p = Path::new("x");
        assert_eq!(parse_ids("a\r\nb\r\n", p).unwrap(), ["a", "b"]);
        assert!(parse_ids("a\n\nb\n", p).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        write_usizes(&path, &[0, 2, 1]).unwrap();
        assert_eq!(read_usizes(&path).unwrap(), [0, 2, 1]);
        std::fs::write(&path, "0\n-1\n").unwrap();
        assert!(read_usizes(&path).is_err());
    }
}

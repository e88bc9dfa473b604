//! Matrix Market files: `array` for dense matrices, `coordinate` for sparse
//! tag matrices. Only `real`/`integer` fields with `general` symmetry are
//! read. Values are written in shortest round-trip exponent notation, so a
//! write followed by a read reproduces every bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use smc_core::tagmat::TagMatrix;
use smc_core::DMatrix;

use crate::error::{io_err, parse_err, Error, Result};

/// Contents of a Matrix Market file.
#[derive(Debug, Clone, PartialEq)]
pub enum MtxData {
    Dense(DMatrix<f64>),
    Sparse {
        rows: usize,
        cols: usize,
        /// Zero-based `(row, col, value)` in file order.
        entries: Vec<(usize, usize, f64)>,
    },
}

impl MtxData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MtxData::Dense(m) => (m.nrows(), m.ncols()),
            MtxData::Sparse { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn into_dense(self) -> DMatrix<f64> {
        match self {
            MtxData::Dense(m) => m,
            MtxData::Sparse { rows, cols, entries } => {
                let mut m = DMatrix::zeros(rows, cols);
                for (i, j, v) in entries {
                    m[(i, j)] += v;
                }
                m
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Array,
    Coordinate,
}

fn parse_header(line: &str, path: &Path) -> Result<Layout> {
    let words: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "expected a `%%MatrixMarket matrix ...` header"));
    }
    let layout = match words[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(parse_err(path, 1, format!("unsupported format `{other}`"))),
    };
    if words[3] != "real" && words[3] != "integer" {
        return Err(parse_err(path, 1, format!("unsupported field `{}`", words[3])));
    }
    if words[4] != "general" {
        return Err(parse_err(path, 1, format!("unsupported symmetry `{}`", words[4])));
    }
    Ok(layout)
}

fn parse_value(token: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value `{token}`")));
    }
    Ok(v)
}

fn parse_index(token: &str, bound: usize, path: &Path, line: usize) -> Result<usize> {
    let i: usize = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{token}` is not an index")))?;
    if i == 0 || i > bound {
        return Err(parse_err(path, line, format!("index {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

/// Parses Matrix Market text; `path` only labels error messages.
pub fn parse<R: BufRead>(reader: R, path: &Path) -> Result<MtxData> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, l)) => l.map_err(io_err(path))?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let layout = parse_header(&header, path)?;
    let mut body = lines.filter_map(|(n, l)| match l {
        Ok(text) => {
            let t = text.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((n, t.to_owned())))
            }
        }
        Err(e) => Some(Err(io_err(path)(e))),
    });
    let (size_line, size) = body.next().ok_or_else(|| parse_err(path, 1, "missing size line"))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(path, size_line, format!("bad size `{t}`"))))
        .collect::<Result<_>>()?;
    match layout {
        Layout::Array => {
            let [rows, cols] = dims[..] else {
                return Err(parse_err(path, size_line, "array size line needs `rows cols`"));
            };
            let mut values = Vec::with_capacity(rows * cols);
            let mut last = size_line;
            for item in body {
                let (n, text) = item?;
                last = n;
                for token in text.split_whitespace() {
                    values.push(parse_value(token, path, n)?);
                }
            }
            if values.len() != rows * cols {
                return Err(parse_err(
                    path,
                    last,
                    format!("expected {} values, found {}", rows * cols, values.len()),
                ));
            }
            Ok(MtxData::Dense(DMatrix::from_column_slice(rows, cols, &values)))
        }
        Layout::Coordinate => {
            let [rows, cols, nnz] = dims[..] else {
                return Err(parse_err(path, size_line, "coordinate size line needs `rows cols entries`"));
            };
            let mut entries = Vec::with_capacity(nnz);
            let mut last = size_line;
            for item in body {
                let (n, text) = item?;
                last = n;
                let tokens: Vec<&str> = text.split_whitespace().collect();
                let [i, j, v] = tokens[..] else {
                    return Err(parse_err(path, n, "entry needs `row col value`"));
                };
                entries.push((
                    parse_index(i, rows, path, n)?,
                    parse_index(j, cols, path, n)?,
                    parse_value(v, path, n)?,
                ));
            }
            if entries.len() != nnz {
                return Err(parse_err(
                    path,
                    last,
                    format!("expected {nnz} entries, found {}", entries.len()),
                ));
            }
            Ok(MtxData::Sparse { rows, cols, entries })
        }
    }
}

pub fn read(path: &Path) -> Result<MtxData> {
    let file = File::open(path).map_err(io_err(path))?;
    parse(BufReader::new(file), path)
}

/// Reads a dense matrix; coordinate files are expanded.
pub fn read_dense(path: &Path) -> Result<DMatrix<f64>> {
    Ok(read(path)?.into_dense())
}

/// Reads a tag matrix; confidences must lie in `[0, 1]`.
pub fn read_tags(path: &Path) -> Result<TagMatrix> {
    let tags = match read(path)? {
        MtxData::Sparse { rows, cols, entries } => TagMatrix::from_triplets(rows, cols, entries),
        MtxData::Dense(m) => TagMatrix::from_dense(&m),
    };
    tags.map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_dense_to<W: Write>(mut w: W, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for v in m.iter() {
        writeln!(w, "{v:e}")?;
    }
    w.flush()
}

pub fn write_tags_to<W: Write>(mut w: W, tags: &TagMatrix) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", tags.n_images(), tags.n_tags(), tags.nnz())?;
    for (i, j, v) in tags.iter() {
        writeln!(w, "{} {} {v:e}", i + 1, j + 1)?;
    }
    w.flush()
}

pub fn write_dense(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_dense_to(BufWriter::new(file), m).map_err(io_err(path))
}

pub fn write_tags(path: &Path, tags: &TagMatrix) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_tags_to(BufWriter::new(file), tags).map_err(io_err(path))
}

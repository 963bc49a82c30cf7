//! Line-oriented delimited text helpers shared by every on-disk format.
//!
//! Lines starting with `#` carry `key=value` metadata, the first other
//! non-blank line is the column header, and the rest are records. Floats are
//! written with Rust's shortest round-trip formatting so parsing restores
//! the exact bits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub(crate) struct TextTable {
    pub path: PathBuf,
    pub meta: BTreeMap<String, String>,
    #[allow(dead_code)]
    pub header: Option<String>,
    /// (1-based line number, raw line)
    pub rows: Vec<(usize, String)>,
}

impl TextTable {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut meta = BTreeMap::new();
        let mut header = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(m) = line.strip_prefix('#') {
                if let Some((k, v)) = m.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if header.is_none() {
                header = Some(line.to_string());
                continue;
            }
            rows.push((i + 1, line.to_string()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            meta,
            header,
            rows,
        })
    }

    pub fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    /// Parse a row of exactly `arity` comma-separated floats.
    pub fn floats(&self, line: usize, raw: &str, arity: usize) -> Result<Vec<f64>> {
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != arity {
            return Err(self.err(
                line,
                format!("expected {arity} columns, found {}", fields.len()),
            ));
        }
        fields
            .iter()
            .map(|f| parse_f64(f).map_err(|m| self.err(line, m)))
            .collect()
    }

    pub fn meta_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.meta.get(key) {
            None => Ok(None),
            Some(v) => parse_f64(v)
                .map(Some)
                .map_err(|m| self.err(0, format!("metadata {key}: {m}"))),
        }
    }
}

pub(crate) fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("not a number: {:?}", s.trim()))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file = fs::File::create(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(BufWriter::new(file))
}

pub(crate) fn write_row<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")
}

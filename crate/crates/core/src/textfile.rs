//! Line-oriented text artifacts with a metadata header and a trailing
//! content hash.
//!
//! ```text
//! # cohi <kind>
//! # key value
//! ...
//! <data rows>
//! # sha256 <hex digest of everything above this line>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::hash::sha256_hex;
use crate::{Error, Result};

const HASH_KEY: &str = "sha256";

/// A parsed artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct TextDoc {
    pub kind: String,
    /// Header entries in file order.
    pub header: Vec<(String, String)>,
    /// Data rows with their 1-based line numbers.
    pub rows: Vec<(usize, String)>,
    pub hash: String,
}

impl TextDoc {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn map(&self) -> BTreeMap<&str, &str> {
        self.header.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}

/// Renders an artifact and returns the text and its hash.
pub fn render(kind: &str, header: &[(&str, String)], rows: &[String]) -> (String, String) {
    let mut body = format!("# cohi {kind}\n");
    for (k, v) in header {
        debug_assert!(!k.contains(char::is_whitespace));
        body.push_str(&format!("# {k} {v}\n"));
    }
    for r in rows {
        body.push_str(r);
        body.push('\n');
    }
    let hash = sha256_hex(body.as_bytes());
    body.push_str(&format!("# {HASH_KEY} {hash}\n"));
    (body, hash)
}

pub fn write(path: &Path, kind: &str, header: &[(&str, String)], rows: &[String]) -> Result<String> {
    let (text, hash) = render(kind, header, rows);
    fs::write(path, text)?;
    Ok(hash)
}

pub fn parse(path: &Path, text: &str, kind: &str) -> Result<TextDoc> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| perr(1, "file too short".into()))?;
    let (body, trailer) = text.split_at(body_end);
    let n_lines = body.lines().count() + 1;
    let found = trailer
        .trim_end()
        .strip_prefix(&format!("# {HASH_KEY} "))
        .ok_or_else(|| perr(n_lines, "missing hash trailer".into()))?;
    let expected = sha256_hex(body.as_bytes());
    if found != expected {
        return Err(Error::HashMismatch {
            what: path.display().to_string(),
            expected,
            found: found.to_string(),
        });
    }

    let mut lines = body.lines().enumerate();
    let first = lines.next().map(|(_, l)| l).unwrap_or_default();
    let got_kind = first
        .strip_prefix("# cohi ")
        .ok_or_else(|| perr(1, "not a cohi artifact".into()))?;
    if got_kind != kind {
        return Err(perr(1, format!("expected a {kind} file, found {got_kind}")));
    }
    let mut header = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines {
        if let Some(rest) = line.strip_prefix("# ") {
            if !rows.is_empty() {
                return Err(perr(i + 1, "header line after data".into()));
            }
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            header.push((k.to_string(), v.to_string()));
        } else if !line.trim().is_empty() {
            rows.push((i + 1, line.to_string()));
        }
    }
    Ok(TextDoc {
        kind: kind.to_string(),
        header,
        rows,
        hash: expected,
    })
}

pub fn read(path: &Path, kind: &str) -> Result<TextDoc> {
    let text = fs::read_to_string(path)?;
    parse(path, &text, kind)
}

/// Parses a whitespace-separated field, reporting the line on failure.
pub fn field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, tok: Option<&str>) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("missing field {name}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line,
        msg: format!("bad {name}: {tok:?}"),
    })
}

/// Required header value.
pub fn header_value<T: std::str::FromStr>(doc: &TextDoc, path: &Path, key: &str) -> Result<T> {
    field(path, 1, key, doc.get(key))
}

//! JSON-lines readers and writers shared by the corpus, annotation, and
//! prediction file formats.
//!
//! All files are UTF-8, one JSON object per line. Line numbers reported in
//! errors and rejects are 1-based. Blank (whitespace-only) lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A record that failed validation during a lenient load, with the 1-based
/// line number it came from. Serialized one per line to a rejects file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: usize,
    pub reason: String,
}

/// Reads a whole JSONL file, failing on the first malformed line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let item = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// Reads a JSONL file, collecting malformed lines as [`Reject`]s instead of
/// failing. Returns parsed records tagged with their line numbers.
pub fn read_jsonl_lenient<T: DeserializeOwned>(
    path: &Path,
) -> Result<(Vec<(usize, T)>, Vec<Reject>)> {
    let mut out = Vec::new();
    let mut rejects = Vec::new();
    for (line_no, line) in read_lines(path)? {
        match serde_json::from_str(&line) {
            Ok(item) => out.push((line_no, item)),
            Err(e) => rejects.push(Reject {
                line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok((out, rejects))
}

/// Writes records as one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(&item)
            .map_err(|e| Error::invalid(format!("serialization failed: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            lines.push((idx + 1, line));
        }
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("adappeal-io-{}-{}", std::process::id(), name));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join("data.jsonl")
    }

    #[test]
    fn round_trips_records() {
        let path = temp_path("roundtrip");
        let items: Vec<BTreeMap<String, u32>> = vec![
            BTreeMap::from([("a".into(), 1)]),
            BTreeMap::from([("b".into(), 2)]),
        ];
        write_jsonl(&path, &items).unwrap();
        let back: Vec<BTreeMap<String, u32>> = read_jsonl(&path).unwrap();
        assert_eq!(back, items);
    }

    #[test]
    fn lenient_read_collects_bad_lines() {
        let path = temp_path("lenient");
        std::fs::write(&path, "{\"a\":1}\nnot json\n\n{\"a\":3}\n").unwrap();
        let (ok, rejects) = read_jsonl_lenient::<BTreeMap<String, u32>>(&path).unwrap();
        assert_eq!(ok.len(), 2);
        assert_eq!(ok[0].0, 1);
        assert_eq!(ok[1].0, 4);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].line_no, 2);
    }

    #[test]
    fn missing_file_is_fatal() {
        let err = read_jsonl::<serde_json::Value>(Path::new("/nonexistent/x.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn reject_wire_format() {
        let r = Reject {
            line_no: 7,
            reason: "bad".into(),
        };
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"line_no":7,"reason":"bad"}"#
        );
    }
}

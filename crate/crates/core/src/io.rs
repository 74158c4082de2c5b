//! Line-delimited JSON files with a versioned header line, and atomic writes.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde_json::{json, Value};

pub const FORMAT_VERSION: u64 = 1;

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Header object: `{"format": .., "version": 1, ..extra}`.
pub fn header(format: &str, extra: Value) -> Value {
    let mut h = json!({ "format": format, "version": FORMAT_VERSION });
    if let (Some(obj), Value::Object(more)) = (h.as_object_mut(), extra) {
        obj.extend(more);
    }
    h
}

/// Serializes a header followed by one record per line.
pub fn render_jsonl(header: &Value, records: impl IntoIterator<Item = Value>) -> String {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses a header-prefixed JSONL text, checking the format tag and
/// version. Returns the header and the record values. A trailing partial
/// line (from an interrupted append) is ignored.
pub fn parse_jsonl(text: &str, format: &str) -> Result<(Value, Vec<Value>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let first = lines.next().ok_or("empty file")?;
    let header: Value = serde_json::from_str(first).map_err(|e| format!("bad header: {e}"))?;
    if header.get("format").and_then(Value::as_str) != Some(format) {
        return Err(format!("expected format `{format}`, found {}", header["format"]));
    }
    if header.get("version").and_then(Value::as_u64) != Some(FORMAT_VERSION) {
        return Err(format!("unsupported version {}", header["version"]));
    }
    let rest: Vec<&str> = lines.collect();
    let mut records = Vec::with_capacity(rest.len());
    for (i, line) in rest.iter().enumerate() {
        match serde_json::from_str(line) {
            Ok(v) => records.push(v),
            Err(_) if i + 1 == rest.len() && !text.ends_with('\n') => break,
            Err(e) => return Err(format!("line {}: {e}", i + 2)),
        }
    }
    Ok((header, records))
}

/// Appends one JSON line and flushes it to disk.
pub fn append_line(path: &Path, value: &Value) -> io::Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_string(value).expect("record serializes");
    line.push('\n');
    f.write_all(line.as_bytes())?;
    f.sync_data()
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_truncated_tail() {
        let h = header("demo", json!({"n": 2}));
        let text = render_jsonl(&h, [json!({"a": 1}), json!({"a": 2})]);
        let (hh, recs) = parse_jsonl(&text, "demo").unwrap();
        assert_eq!(hh["n"], 2);
        assert_eq!(recs.len(), 2);
        let cut = &text[..text.len() - 3];
        assert_eq!(parse_jsonl(cut, "demo").unwrap().1.len(), 1);
        assert!(parse_jsonl(&text, "other").is_err());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn sha_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

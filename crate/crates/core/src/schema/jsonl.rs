use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::Value;

use super::{SchemaError, VerificationExample};

const KEYS: [&str; 8] = ["id", "claim", "evidence", "label", "dataset", "domain", "split", "timestamp"];

/// One unified JSONL line, without the trailing newline. Key order is fixed.
pub fn serialize(ex: &VerificationExample) -> String {
    serde_json::to_string(ex).expect("VerificationExample always serializes")
}

/// Lenient parse: unknown top-level keys are ignored.
pub fn parse(line: &str) -> Result<VerificationExample, SchemaError> {
    parse_inner(line, false)
}

/// Strict parse: unknown top-level keys are a schema violation.
pub fn parse_strict(line: &str) -> Result<VerificationExample, SchemaError> {
    parse_inner(line, true)
}

fn parse_inner(line: &str, strict: bool) -> Result<VerificationExample, SchemaError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| SchemaError::SchemaViolation(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| SchemaError::SchemaViolation("line is not a JSON object".into()))?;
    for key in KEYS {
        if !obj.contains_key(key) {
            return Err(SchemaError::SchemaViolation(format!("missing key {key:?}")));
        }
    }
    if strict {
        if let Some(extra) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(SchemaError::SchemaViolation(format!("unknown key {extra:?}")));
        }
    }
    let ex: VerificationExample =
        serde_json::from_value(value).map_err(|e| SchemaError::SchemaViolation(e.to_string()))?;
    ex.validate()?;
    Ok(ex)
}

pub fn read_jsonl(path: &Path, strict: bool) -> Result<Vec<VerificationExample>, SchemaError> {
    let io_err = |source| SchemaError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = parse_inner(&line, strict).map_err(|e| match e {
            SchemaError::SchemaViolation(msg) => {
                SchemaError::SchemaViolation(format!("{}:{}: {msg}", path.display(), lineno + 1))
            }
            other => other,
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_jsonl<'a, I>(path: &Path, examples: I) -> Result<usize, SchemaError>
where
    I: IntoIterator<Item = &'a VerificationExample>,
{
    let io_err = |source| SchemaError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    let mut n = 0;
    for ex in examples {
        writeln!(w, "{}", serialize(ex)).map_err(io_err)?;
        n += 1;
    }
    w.flush().map_err(io_err)?;
    Ok(n)
}

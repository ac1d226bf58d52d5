//! CSV and JSON writers. JSON objects are emitted with sorted keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(AsRef::as_ref))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Pretty JSON with object keys in sorted order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> CliResult<String> {
    // serde_json's default map is ordered by key
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    fs::write(path, to_sorted_json(value)?).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn join_usize(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn json_keys_are_sorted() {
        let mut m = HashMap::new();
        for k in ["zeta", "alpha", "mid"] {
            m.insert(k, 1);
        }
        let s = to_sorted_json(&m).unwrap();
        let a = s.find("alpha").unwrap();
        let z = s.find("zeta").unwrap();
        assert!(a < s.find("mid").unwrap() && s.find("mid").unwrap() < z);
    }
}

//! Flat-file persistence for pipeline artifacts.
//!
//! Everything is JSON with stable key order (struct declaration order,
//! sorted maps), so identical inputs and seeds produce byte-identical
//! files. List-like artifacts are newline-delimited JSON; single-value
//! artifacts are one compact JSON document plus a trailing newline.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::CliError;

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut file = create(path)?;
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| CliError::Validation(format!("cannot serialize record: {e}")))?;
        writeln!(file, "{line}").map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut items = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            CliError::Validation(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_json_doc<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = create(path)?;
    let body = serde_json::to_string(value)
        .map_err(|e| CliError::Validation(format!("cannot serialize document: {e}")))?;
    writeln!(file, "{body}").map_err(|e| io_error(path, e))?;
    Ok(())
}

pub fn read_json_doc<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut file = create(path)?;
    file.write_all(text.as_bytes()).map_err(|e| io_error(path, e))
}

fn create(path: &Path) -> Result<std::fs::File, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
    }
    std::fs::File::create(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

//! Output document assembly.
//!
//! Every command emits either a human table or a single self-describing
//! JSON document (config echo, results, seeds, version stamp). Output is
//! fully assembled in memory before anything is written, so failures never
//! leave partial files behind.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Human-readable table.
    Table,
    /// Machine-readable JSON document.
    Json,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: serde_json::Value,
    result: &'a T,
}

/// Renders the chosen format and writes it to `output` (or stdout).
pub fn emit<T: Serialize>(
    command: &str,
    config: serde_json::Value,
    result: &T,
    table: String,
    format: Format,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let rendered = match format {
        Format::Table => table,
        Format::Json => {
            let doc = Document {
                command,
                version: env!("CARGO_PKG_VERSION"),
                config,
                result,
            };
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| CliError::input(format!("serialization failed: {e}")))?;
            s.push('\n');
            s
        }
    };
    match output {
        Some(path) => std::fs::write(path, rendered)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{rendered}");
            Ok(())
        }
    }
}

/// Writes CSV rows atomically-enough: content is built first, then written
/// in one call.
pub fn write_csv(path: &Path, header: &str, rows: Vec<String>) -> Result<(), CliError> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    std::fs::write(path, out)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

//! Output plumbing: directory resolution, schema-versioned CSV files and
//! the resolved-config provenance copy.
//!
//! Every CSV starts with a comment line `# fairreg <version> <schema-id>`.
//! Writers are append-safe: appending to an existing file first checks that
//! its schema line matches, then adds rows without repeating the header.

use crate::error::{CliError, Result};
use serde::Serialize;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// Version stamp written into CSV schema lines and model files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "FAIRREG_OUT_DIR";

/// Picks the output directory: explicit flag, then config field, then the
/// `FAIRREG_OUT_DIR` environment variable, then the current directory. The
/// directory is created if missing.
pub fn resolve_out_dir(flag: Option<&str>, config_field: Option<&str>) -> Result<PathBuf> {
    let dir = flag
        .map(PathBuf::from)
        .or_else(|| config_field.map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn schema_line(schema_id: &str) -> String {
    format!("# fairreg {TOOL_VERSION} {schema_id}")
}

/// Writes `rows` to `path` as CSV under the given schema id. A fresh file
/// gets the schema comment plus a header row; an existing file is verified
/// against the schema id and appended to.
pub fn write_csv<T: Serialize>(path: &Path, schema_id: &str, rows: &[T]) -> Result<()> {
    let expected = schema_line(schema_id);
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    if exists {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut first = String::new();
        BufReader::new(file).read_line(&mut first).map_err(|e| CliError::io(path, e))?;
        if first.trim_end() != expected {
            return Err(CliError::Config(format!(
                "{} already exists with schema line '{}', expected '{}'",
                path.display(),
                first.trim_end(),
                expected
            )));
        }
    }
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    if !exists {
        writeln!(file, "{expected}").map_err(|e| CliError::io(path, e))?;
    }
    let mut writer = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))?;
    Ok(())
}

/// Copies the fully resolved run configuration into the output directory as
/// `config.resolved.json`, wrapped with the command name and the effective
/// runtime flags.
pub fn write_resolved_config<T: Serialize>(
    out_dir: &Path,
    command: &str,
    jobs: usize,
    svg: bool,
    config: &T,
) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Resolved<'a, T> {
        command: &'a str,
        tool_version: &'a str,
        jobs: usize,
        svg: bool,
        config: &'a T,
    }
    let path = out_dir.join("config.resolved.json");
    let wrapped =
        Resolved { command, tool_version: TOOL_VERSION, jobs, svg, config };
    let text = serde_json::to_string_pretty(&wrapped)?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Runs `f` on a rayon pool with `jobs` threads (0 = rayon's default).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

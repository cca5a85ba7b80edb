//! Output plumbing: every artifact starts with a versioned header that
//! documents its columns and echoes the seed, so a result file is
//! self-describing and reproducible from its own metadata.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub const FORMAT_VERSION: u32 = 1;

pub struct CsvOut {
    writer: BufWriter<File>,
    pub path: PathBuf,
}

impl CsvOut {
    /// Opens `<out_dir>/<name>` and writes the standard header: format
    /// version, command, seed, extra metadata, and the column list.
    pub fn create(
        out_dir: &Path,
        name: &str,
        command: &str,
        seed: u64,
        metadata: &[(&str, String)],
        columns: &str,
    ) -> Result<Self, String> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
        let path = out_dir.join(name);
        let file =
            File::create(&path).map_err(|e| format!("cannot create {}: {e}", path.display()))?;
        let mut writer = BufWriter::new(file);
        let mut header = format!("# gwspine-csv v{FORMAT_VERSION} command={command} seed={seed}");
        for (key, value) in metadata {
            header.push_str(&format!(" {key}={value}"));
        }
        writeln!(writer, "{header}").map_err(|e| e.to_string())?;
        writeln!(writer, "# columns: {columns}").map_err(|e| e.to_string())?;
        writeln!(writer, "{columns}").map_err(|e| e.to_string())?;
        Ok(Self { writer, path })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), String> {
        writeln!(self.writer, "{}", fields.join(",")).map_err(|e| e.to_string())
    }

    pub fn finish(mut self) -> Result<PathBuf, String> {
        self.writer.flush().map_err(|e| e.to_string())?;
        Ok(self.path)
    }
}

/// Writes a JSON artifact wrapped with format version and seed.
pub fn write_json(
    out_dir: &Path,
    name: &str,
    command: &str,
    seed: u64,
    body: serde_json::Value,
) -> Result<PathBuf, String> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
    let path = out_dir.join(name);
    let document = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "command": command,
        "seed": seed,
        "result": body,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&document).unwrap())
        .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

/// Compact float formatting shared by all CSV rows.
pub fn fmt(value: f64) -> String {
    if value == value.trunc() && value.abs() < 1e15 {
        format!("{value:.1}")
    } else {
        format!("{value}")
    }
}

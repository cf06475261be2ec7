//! CSV output with a fixed dialect: comma separators, `.` decimals, one
//! header row, LF line endings, and a comment header recording tool version,
//! config hash, and seed.

use std::fs;
use std::io::Write;
use std::path::Path;

pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn new(config_hash: &str, seed: u64, columns: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(&format!("# pacoh-lab v{}\n", env!("CARGO_PKG_VERSION")));
        buf.push_str(&format!("# config_hash={config_hash}\n"));
        buf.push_str(&format!("# seed={seed}\n"));
        buf.push_str(columns);
        buf.push('\n');
        Self { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.buf.as_bytes())
    }
}

/// Formats a float with full round-trip precision and `.` decimal separator.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}

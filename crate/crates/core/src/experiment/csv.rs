use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Shortest decimal that parses back to the same value.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// One header line, then one line per row.
pub fn write(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    for line in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let cells: Vec<String> = line.iter().map(|c| field(c)).collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    super::write_file(path, &text)
}

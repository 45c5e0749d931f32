use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use bilinear_core::format::fmt17;
use bilinear_core::{GeometryError, Result};

/// One CSV line, LF-terminated. Cells are never quoted, so callers keep
/// commas out of them.
pub fn csv_line(out: &mut String, cells: impl IntoIterator<Item = String>) {
    let mut first = true;
    for cell in cells {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&cell);
    }
    out.push('\n');
}

pub fn csv_num(x: f64) -> String {
    fmt17(x)
}

/// Writes to `path`, or to standard output when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| GeometryError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    let _ = writeln!(s);
    s
}

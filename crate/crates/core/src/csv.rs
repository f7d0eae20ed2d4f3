//! CSV conventions shared by every artifact: `,` separator, `.` decimal
//! point, 17 significant digits, LF line endings, mandatory header.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

/// Formats a float with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Builds a CSV document from a header and rows of preformatted cells.
pub fn document<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: AsRef<[String]>,
{
    let mut out = String::with_capacity(64);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.as_ref().join(","));
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents.as_bytes())?;
    Ok(())
}

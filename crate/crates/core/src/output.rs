//! CSV helpers. Every float is printed with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Formats a float so that it round-trips exactly.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `header` followed by `rows`, one comma-joined line each.
pub fn write_rows<W: Write>(mut out: W, header: &str, rows: &[Vec<String>]) -> Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn num_round_trips() {
        for x in [
            0.1,
            -1.0 / 3.0,
            4.0 * std::f64::consts::PI.powi(2),
            1e-300,
            0.0,
        ] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }
}

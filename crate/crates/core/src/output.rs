//! Number formatting and small writers shared by the CSV/JSON exporters.

use std::path::Path;

use crate::Result;

/// Full double precision in scientific notation; `-0` is printed as `0`.
pub fn sci(v: f64) -> String {
    if v == 0.0 {
        return format!("{:.17e}", 0.0);
    }
    format!("{v:.17e}")
}

/// Writes a header row and numeric rows.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| sci(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exactly() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE] {
            assert_eq!(sci(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(sci(-0.0), sci(0.0));
    }
}

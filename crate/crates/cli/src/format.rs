//! CSV numbers and output routing.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use crate::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Shortest round-trip form, switching to an exponent for extreme magnitudes.
pub fn short(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn short_list(vs: &[f64]) -> String {
    let items: Vec<String> = vs.iter().map(|v| short(*v)).collect();
    format!("[{}]", items.join(", "))
}

/// CSV table built row by row.
#[derive(Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut csv = Self::default();
        csv.text.push_str(&header.join(","));
        csv.text.push('\n');
        csv
    }

    pub fn row(&mut self, cells: &[f64]) {
        let cells: Vec<String> = cells.iter().map(|v| num(*v)).collect();
        self.line(&cells.join(","));
    }

    pub fn line(&mut self, text: &str) {
        let _ = writeln!(self.text, "{text}");
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// What a command produced: an optional table and a human-readable report.
#[derive(Debug, Default)]
pub struct Output {
    pub table: Option<String>,
    pub report: String,
}

impl Output {
    pub fn say(&mut self, line: impl AsRef<str>) {
        self.report.push_str(line.as_ref());
        self.report.push('\n');
    }

    /// The table goes to `out` if given, else to stdout; the report goes to
    /// stdout unless the table is already there, in which case it goes to
    /// stderr.
    pub fn emit(self, out: Option<&Path>) -> Result<(), CliError> {
        let stdout = std::io::stdout();
        let stderr = std::io::stderr();
        let write_err = |e: std::io::Error| CliError::Malformed(format!("write failed: {e}"));
        match (&self.table, out) {
            (Some(table), Some(path)) => {
                std::fs::write(path, table).map_err(|e| {
                    CliError::Malformed(format!("cannot write {}: {e}", path.display()))
                })?;
                stdout
                    .lock()
                    .write_all(self.report.as_bytes())
                    .map_err(write_err)
            }
            (Some(table), None) => {
                stdout
                    .lock()
                    .write_all(table.as_bytes())
                    .map_err(write_err)?;
                stderr
                    .lock()
                    .write_all(self.report.as_bytes())
                    .map_err(write_err)
            }
            (None, _) => stdout
                .lock()
                .write_all(self.report.as_bytes())
                .map_err(write_err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [4.0, 4.375, 0.1, -1e-300, 1.0 / 3.0, 6.02e23] {
            let s = num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(4.0), "4.0000000000000000e0");
    }

    #[test]
    fn short_forms() {
        assert_eq!(short(4.0), "4");
        assert_eq!(short(4.375), "4.375");
        assert_eq!(short(3.6e-14), "3.6e-14");
        assert_eq!(short(2e20), "2e20");
        assert_eq!(short_list(&[1.5, 1e-9]), "[1.5, 1e-9]");
    }

    #[test]
    fn csv_rows() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&[1.0, 0.5]);
        csv.line("x,y");
        assert_eq!(
            csv.into_string(),
            "a,b\n1.0000000000000000e0,5.0000000000000000e-1\nx,y\n"
        );
    }
}

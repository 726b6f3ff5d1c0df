use std::path::Path;

use crate::error::{Error, Result};

/// Column excluded from determinism comparisons.
pub const WALLCLOCK_COLUMN: &str = "wallclock_ms";

/// An experiment result: `# key=value` metadata lines, a header and records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { metadata: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column parsed as floats (`NaN` for empty or unparseable cells).
    pub fn floats(&self, name: &str) -> Vec<f64> {
        let i = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        out.push_str(std::str::from_utf8(&body).map_err(|e| Error::Io(e.to_string()))?);
        Ok(out)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut metadata = Vec::new();
        let mut body_start = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let (k, v) = rest.trim_end_matches('\n').split_once('=').ok_or_else(|| Error::Parse(format!("bad metadata line {line:?}")))?;
            metadata.push((k.to_string(), v.to_string()));
            body_start += line.len();
        }
        let mut r = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body_start..]);
        let columns = r.headers()?.iter().map(str::to_string).collect();
        let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<std::result::Result<_, _>>()?;
        Ok(Table { metadata, columns, rows })
    }

    /// The CSV body with the wallclock column removed, for determinism checks.
    pub fn deterministic_body(&self) -> Result<String> {
        let mut t = self.clone();
        if let Some(i) = t.column(WALLCLOCK_COLUMN) {
            t.columns.remove(i);
            t.rows.iter_mut().for_each(|r| {
                r.remove(i);
            });
        }
        t.metadata.clear();
        t.to_csv_string()
    }
}

/// Writes the table, header first, newline-terminated.
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, table.to_csv_string()?)?;
    Ok(())
}

/// Shortest round-trip formatting; `NaN` for missing values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["eps", "note", WALLCLOCK_COLUMN]);
        t.meta("C1", 8);
        t.push(vec!["0.5".into(), "plain".into(), "12".into()]);
        t.push(vec!["0.25".into(), "has, comma \"and quote\"\nand newline".into(), "3".into()]);
        t
    }

    #[test]
    fn empty_rows_give_header_only() {
        let t = Table::new(&["a", "b"]);
        assert_eq!(t.to_csv_string().unwrap(), "a,b\n");
    }

    #[test]
    fn round_trip() {
        let t = sample();
        let text = t.to_csv_string().unwrap();
        assert!(text.starts_with("# C1=8\neps,note,wallclock_ms\n"));
        assert!(text.ends_with('\n'));
        assert_eq!(Table::from_csv_str(&text).unwrap(), t);
    }

    #[test]
    fn wallclock_excluded_from_body() {
        let a = sample();
        let mut b = sample();
        b.rows[0][2] = "999".into();
        assert_ne!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        assert_eq!(a.deterministic_body().unwrap(), b.deterministic_body().unwrap());
    }

    #[test]
    fn large_file_readable_by_csv_reader() {
        let mut t = Table::new(&["i", "x"]);
        for i in 0..10_000 {
            t.push(vec![i.to_string(), fmt_f64(i as f64 / 7.0)]);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        emit_csv(&t, &path).unwrap();
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 10_000);
        assert_eq!(rows[7][1].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn nan_formatting() {
        assert_eq!(fmt_f64(f64::NAN), "NaN");
        assert_eq!(fmt_f64(1253.0), "1253");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}

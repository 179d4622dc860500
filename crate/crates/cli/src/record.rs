use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Config;

/// Shortest round-trip decimal; `inf`, `-inf` and `NaN` spelled out.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing csv")
    }
}

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub version: String,
    pub config: Config,
    pub tables: Vec<Table>,
    /// One line per inequality or invariant that failed.
    pub violations: Vec<String>,
    /// Cells that could not be computed.
    pub errors: Vec<String>,
    pub summary: Vec<(String, String)>,
    /// Extra JSON payload, such as a solver solution.
    pub payload: Option<serde_json::Value>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn new(command: &str, config: &Config) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            tables: Vec::new(),
            violations: Vec::new(),
            errors: Vec::new(),
            summary: Vec::new(),
            payload: None,
            wall_time_s: 0.0,
        }
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn file_name(&self, table: &Table, first: bool) -> String {
        if first {
            format!("{}.csv", self.command)
        } else {
            format!("{}-{}.csv", self.command, table.name)
        }
    }

    /// Writes every table as CSV plus the full record as JSON into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, t) in self.tables.iter().enumerate() {
            let path = dir.join(self.file_name(t, i == 0));
            std::fs::write(&path, t.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
        }
        let path = dir.join(format!("{}.json", self.command));
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }

    /// Tables to `out`, separated by `# name` lines when there are several.
    pub fn print_tables(&self, out: &mut impl Write) -> Result<()> {
        for (i, t) in self.tables.iter().enumerate() {
            if self.tables.len() > 1 {
                if i > 0 {
                    writeln!(out)?;
                }
                writeln!(out, "# {}", t.name)?;
            }
            out.write_all(&t.to_csv()?)?;
        }
        Ok(())
    }

    pub fn print_summary(&self, out: &mut impl Write) -> Result<()> {
        for (k, v) in &self.summary {
            writeln!(out, "{k}: {v}")?;
        }
        for e in &self.errors {
            writeln!(out, "error: {e}")?;
        }
        for v in &self.violations {
            writeln!(out, "VIOLATION: {v}")?;
        }
        writeln!(
            out,
            "{}: {} violation(s), {} cell error(s), {:.2}s",
            self.command,
            self.violations.len(),
            self.errors.len(),
            self.wall_time_s
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn csv_quotes_only_when_needed() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1".into(), "x, y".into()]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,\"x, y\"\n");
    }
}

use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::Common;

/// Minutes with one decimal; `verbose` appends the seconds.
pub fn minutes(seconds: f64, verbose: bool) -> String {
    if verbose {
        format!("{:.1} min ({seconds:.1} s)", seconds / 60.0)
    } else {
        format!("{:.1} min", seconds / 60.0)
    }
}

/// Writes `value` as JSON with --json, otherwise the text from `text`,
/// to --out or stdout.
pub fn emit<T: Serialize>(common: &Common, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    let body = if common.json {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        s
    } else {
        text()
    };
    match &common.out {
        Some(path) => std::fs::write(path, body).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

/// Left-aligned plain-text table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn extend(&mut self, more: &[&str]) {
        self.header.extend(more.iter().map(|s| s.to_string()));
    }

    pub fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate() {
                if i < widths.len() {
                    widths[i] = widths[i].max(c.chars().count());
                }
            }
        }
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:<w$}", w = widths.get(i).copied().unwrap_or(0)))
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minutes_format() {
        assert_eq!(minutes(90.0, false), "1.5 min");
        assert_eq!(minutes(90.0, true), "1.5 min (90.0 s)");
    }

    #[test]
    fn table_aligns() {
        let mut t = Table::new(&["a", "long"]);
        t.row(vec!["xyz".into(), "1".into()]);
        assert_eq!(t.render(), "a    long\nxyz  1\n");
    }
}

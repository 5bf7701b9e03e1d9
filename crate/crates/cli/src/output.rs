use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use neqrad::Result;
use serde::Serialize;

use crate::Format;

/// Routes command results to files under `--out` or to stdout.
pub struct Output {
    dir: Option<PathBuf>,
    format: Format,
}

impl Output {
    pub fn new(dir: Option<&Path>, format: Format) -> Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir: dir.map(Path::to_path_buf),
            format,
        })
    }

    /// Writes `<stem>.json` and, when given, `<stem>.csv`. Without an output
    /// directory the one matching `--format` goes to stdout (JSON when no
    /// CSV form exists).
    pub fn emit<T: Serialize>(&self, stem: &str, json: &T, csv: Option<&str>) -> Result<()> {
        let text = serde_json::to_string_pretty(json)?;
        match &self.dir {
            Some(d) => {
                fs::write(d.join(format!("{stem}.json")), text + "\n")?;
                if let Some(c) = csv {
                    fs::write(d.join(format!("{stem}.csv")), c)?;
                }
            }
            None => {
                let mut out = std::io::stdout().lock();
                match (self.format, csv) {
                    (Format::Csv, Some(c)) => out.write_all(c.as_bytes())?,
                    _ => writeln!(out, "{text}")?,
                }
            }
        }
        Ok(())
    }

    /// Writes an extra file when an output directory is set.
    pub fn file(&self, name: &str, contents: &str) -> Result<()> {
        if let Some(d) = &self.dir {
            fs::write(d.join(name), contents)?;
        }
        Ok(())
    }
}

/// Python script that plots every CSV column against `t` on log-log axes.
pub fn plot_script(csv_name: &str, title: &str) -> String {
    format!(
        r#"#!/usr/bin/env python3
import csv
import matplotlib.pyplot as plt

with open("{csv_name}") as f:
    rows = list(csv.DictReader(f))
cols = [c for c in rows[0] if c != "t"]
t = [float(r["t"]) for r in rows]
fig, ax = plt.subplots()
for c in cols:
    ys = [abs(float(r[c])) for r in rows]
    pts = [(1.0 + a, b) for a, b in zip(t, ys) if b > 0.0]
    if pts:
        ax.loglog(*zip(*pts), label=c)
ax.set_xlabel("1 + t")
ax.set_title("{title}")
ax.legend()
fig.savefig("{csv_name}".rsplit(".", 1)[0] + ".png", dpi=150)
"#
    )
}

/// CSV text from a header and rows of numbers.
pub fn csv_table(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.17e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

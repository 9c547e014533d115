use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{StudyTable, SuiteReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::param("format", format!("expected csv or json, got `{s}`"))),
        }
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn report_json(report: &SuiteReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// One row per check: `suite,name,statistic,lower,upper,pass,attempts,property,detail`.
pub fn report_csv(report: &SuiteReport) -> String {
    let mut out = String::from("suite,name,statistic,lower,upper,pass,attempts,property,detail\n");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.suite,
            quote(&c.name),
            c.statistic,
            opt(c.lower),
            c.upper,
            c.pass,
            c.attempts,
            quote(&c.property),
            quote(&c.detail)
        );
    }
    out
}

/// Suite wall-clock times, kept apart from the deterministic report.
pub fn timings_csv(report: &SuiteReport) -> String {
    let mut out = String::from("suite,seconds\n");
    let mut last = None;
    for c in &report.checks {
        if last != Some(c.suite) {
            let _ = writeln!(out, "{},{:.3}", c.suite, c.runtime_s);
            last = Some(c.suite);
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn emit(report: &SuiteReport, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => write(path, &report_csv(report)),
        Format::Json => write(path, &report_json(report)),
    }
}

/// Columns `level,statistic,stderr,error`, then the fitted order as a comment.
pub fn study_csv(table: &StudyTable) -> String {
    let mut out = format!(
        "# axis {} statistic {}\nlevel,statistic,stderr,error\n",
        table.axis, table.statistic
    );
    for r in &table.rows {
        let _ = writeln!(out, "{},{},{},{}", r.level, r.statistic, r.stderr, r.error);
    }
    let _ = writeln!(out, "# order {} monotone {}", table.order, table.monotone);
    out
}

pub fn emit_study(table: &StudyTable, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => write(path, &study_csv(table)),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("table serializes");
            s.push('\n');
            write(path, &s)
        }
    }
}

//! Reports, tables and the single-writer artifact set.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// One inequality of a report: `value (relation) bound` up to `tol`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub relation: &'static str,
    pub value: f64,
    pub bound: f64,
    pub tol: f64,
    /// Distance to failure; negative when violated.
    pub margin: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, relation: &'static str, value: f64, bound: f64, tol: f64, margin: f64) -> Check {
        Check {
            name: name.into(),
            relation,
            value,
            bound,
            tol,
            margin,
            pass: margin >= 0.0,
        }
    }

    /// `value <= bound + tol`.
    pub fn le(name: impl Into<String>, value: f64, bound: f64, tol: f64) -> Check {
        Check::new(name, "<=", value, bound, tol, bound + tol - value)
    }

    /// `value >= bound - tol`.
    pub fn ge(name: impl Into<String>, value: f64, bound: f64, tol: f64) -> Check {
        Check::new(name, ">=", value, bound, tol, value - (bound - tol))
    }

    /// `value > bound` strictly.
    pub fn gt(name: impl Into<String>, value: f64, bound: f64) -> Check {
        let mut c = Check::new(name, ">", value, bound, 0.0, value - bound);
        c.pass = value > bound;
        c
    }

    /// `|value - target| <= tol`.
    pub fn near(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Check {
        Check::new(name, "~=", value, target, tol, tol - (value - target).abs())
    }

    /// `lo - tol <= value <= hi + tol`; `bound` records the violated side.
    pub fn between(name: impl Into<String>, value: f64, lo: f64, hi: f64, tol: f64) -> Check {
        let (m_lo, m_hi) = (value - (lo - tol), hi + tol - value);
        let bound = if m_lo < m_hi { lo } else { hi };
        Check::new(name, "in", value, bound, tol, m_lo.min(m_hi))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub config_hash: String,
    pub config: String,
    /// Counting frame of the estimates: `class`, `orbit` or `class+orbit`.
    pub frame: String,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, cfg: &RunConfig, frame: &str, results: impl Serialize, checks: Vec<Check>) -> Report {
        let passed = checks.iter().all(|c| c.pass);
        Report {
            command: command.to_string(),
            config_hash: cfg.hash(),
            config: cfg.echo(),
            frame: frame.to_string(),
            results: serde_json::to_value(results).expect("results serialize"),
            checks,
            passed,
        }
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// CSV text with a header row.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Shortest round-trip formatting, so tables are bit-stable.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Result of a command: the report plus files, written once at the end.
pub struct Output {
    pub report: Report,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Output {
    pub fn new(report: Report) -> Output {
        Output {
            report,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    /// Writes `<command>.json` and every artifact into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("output: creating {}", dir.display()))?;
        let mut written = Vec::new();
        let report_name = format!("{}.json", self.report.command.replace(' ', "-"));
        let all = std::iter::once((report_name.as_str(), self.report.to_json().into_bytes()))
            .chain(self.files.iter().map(|(n, b)| (n.as_str(), b.clone())));
        for (name, bytes) in all {
            let path = dir.join(name);
            std::fs::write(&path, bytes).with_context(|| format!("output: writing {}", path.display()))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margins_are_distances_to_failure() {
        let c = Check::le("x", 1.0, 0.9, 0.2);
        assert!(c.pass && (c.margin - 0.1).abs() < 1e-12);
        let c = Check::ge("x", 0.5, 0.8, 0.1);
        assert!(!c.pass && (c.margin + 0.2).abs() < 1e-12);
        let c = Check::near("x", 0.47, 0.5, 0.02);
        assert!(!c.pass && (c.margin + 0.01).abs() < 1e-12);
        assert!(!Check::gt("x", 0.3, 0.3).pass);
        assert!(Check::gt("x", 0.3, 0.29).pass);
    }

    #[test]
    fn between_records_the_violated_side() {
        let c = Check::between("x", 1.2, 0.0, 1.0, 0.05);
        assert!(!c.pass && c.bound == 1.0 && (c.margin + 0.15).abs() < 1e-12);
        let c = Check::between("x", -0.01, 0.0, 1.0, 0.05);
        assert!(c.pass && c.bound == 0.0 && (c.margin - 0.04).abs() < 1e-12);
    }

    #[test]
    fn tables_round_trip_numbers() {
        let t = csv_table(
            &["a", "b"],
            &[vec![num(0.1), num(1e-300)], vec![num(-2.5), "x,y".into()]],
        );
        let mut r = csv::Reader::from_reader(t.as_bytes());
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.1);
        assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1e-300);
        assert_eq!(&rows[1][1], "x,y");
    }
}

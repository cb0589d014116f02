//! Report files and the CSV tables derived from them.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sgwarm_core::driver::{savings, SCHEMA_VERSION};
use sgwarm_core::{ExperimentReport, Mode};

/// One `<name>_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub name: String,
    /// The key/value configuration after command-line overrides.
    pub config: BTreeMap<String, String>,
    pub reports: Vec<ExperimentReport>,
}

impl ReportFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: ReportFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            bail!("{}: schema version {} is not {}", path.display(), file.schema_version, SCHEMA_VERSION);
        }
        Ok(file)
    }
}

/// Six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if (-3..6).contains(&mag) {
        format!("{:.*}", (5 - mag) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Labels unique within a report list: the mode name, suffixed on repeats.
pub fn labels(reports: &[ExperimentReport]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    reports
        .iter()
        .map(|r| {
            let n = seen.entry(r.mode.name()).or_insert(0);
            *n += 1;
            if *n == 1 {
                r.mode.name().to_string()
            } else {
                format!("{}_{}", r.mode.name(), n)
            }
        })
        .collect()
}

fn error_at(reports: &[ExperimentReport], w: usize) -> String {
    let from = reports.iter().find(|r| r.mode == Mode::Accelerated && !r.errors.is_empty())
        .or_else(|| reports.iter().find(|r| !r.errors.is_empty()));
    from.and_then(|r| r.errors.get(w)).map(|e| sig6(e.error)).unwrap_or_default()
}

/// Per-level summary: cumulative `K` and level means for each mode, with
/// savings of every other mode against the zero-guess run.
pub fn level_table(reports: &[ExperimentReport]) -> Table {
    let labels = labels(reports);
    let base = reports.iter().position(|r| r.mode == Mode::Zero);
    let mut header: Vec<String> = ["level", "points", "new_points", "error"].iter().map(|s| s.to_string()).collect();
    header.extend(labels.iter().map(|l| format!("K_{l}")));
    header.extend(labels.iter().map(|l| format!("mean_{l}")));
    let others: Vec<usize> = match base {
        Some(b) => (0..reports.len()).filter(|&i| i != b).collect(),
        None => Vec::new(),
    };
    for &i in &others {
        header.push(format!("iter_savings_pct_{}", labels[i]));
        header.push(format!("cost_savings_pct_{}", labels[i]));
    }
    let first = &reports[0];
    let rows = (0..first.levels.len())
        .map(|w| {
            let lv = &first.levels[w];
            let mut row = vec![w.to_string(), lv.points.to_string(), lv.new_points.to_string(), error_at(reports, w)];
            row.extend(reports.iter().map(|r| r.prefix_totals(w).iterations.to_string()));
            row.extend(reports.iter().map(|r| sig6(r.levels[w].mean)));
            if let Some(b) = base {
                let zero = reports[b].prefix_totals(w);
                for &i in &others {
                    let s = savings(&zero, &reports[i].prefix_totals(w));
                    row.push(sig6(100.0 * s.iterations));
                    row.push(sig6(100.0 * s.cost));
                }
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Per-level and cumulative wall time for each mode.
pub fn timing_table(reports: &[ExperimentReport]) -> Table {
    let labels = labels(reports);
    let mut header = vec!["level".to_string(), "new_points".to_string()];
    header.extend(labels.iter().map(|l| format!("mean_{l}")));
    header.extend(labels.iter().map(|l| format!("seconds_{l}")));
    header.extend(labels.iter().map(|l| format!("cumulative_seconds_{l}")));
    let first = &reports[0];
    let rows = (0..first.levels.len())
        .map(|w| {
            let mut row = vec![w.to_string(), first.levels[w].new_points.to_string()];
            row.extend(reports.iter().map(|r| sig6(r.levels[w].mean)));
            row.extend(reports.iter().map(|r| sig6(r.levels[w].wall_seconds)));
            row.extend(reports.iter().map(|r| sig6(r.levels[..=w].iter().map(|l| l.wall_seconds).sum())));
            row
        })
        .collect();
    Table { header, rows }
}

/// Plot series against the first report: level means, errors and cumulative savings.
pub fn compare_table(reports: &[ExperimentReport]) -> Table {
    let labels = labels(reports);
    let mut header = vec!["level".to_string(), "points".to_string()];
    for l in &labels {
        header.push(format!("mean_{l}"));
        header.push(format!("error_{l}"));
        header.push(format!("cum_iter_savings_pct_{l}"));
        header.push(format!("cum_cost_savings_pct_{l}"));
    }
    let base = &reports[0];
    let rows = (0..base.levels.len())
        .map(|w| {
            let mut row = vec![w.to_string(), base.levels[w].points.to_string()];
            let b = base.prefix_totals(w);
            for r in reports {
                let s = savings(&b, &r.prefix_totals(w));
                row.push(sig6(r.levels[w].mean));
                row.push(r.errors.get(w).map(|e| sig6(e.error)).unwrap_or_default());
                row.push(sig6(100.0 * s.iterations));
                row.push(sig6(100.0 * s.cost));
            }
            row
        })
        .collect();
    Table { header, rows }
}
